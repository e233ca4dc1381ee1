use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stravg::solver::LambdaSchedule;
use stravg::{ExtrapolationRule, SolverConfig, Vector};
use stravg_cli::certify::{certify, CertifyOptions};
use stravg_cli::config::{ExperimentConfig, MethodSpec, NamedPlan, PlanKind, ProblemSource};
use stravg_cli::experiment::{generate_systems, load_system, run_experiment, validate_cell};
use stravg_cli::report::report_figure2;
use stravg_cli::CliError;

/// Experiment runner for string-averaging projection methods.
#[derive(Parser)]
#[command(name = "stravg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic phantom systems (COO triplets plus JSON headers).
    Generate(GenerateArgs),
    /// Solve one (problem, method) cell and write its trace.
    Solve(SolveArgs),
    /// Run the full benchmark grid.
    Bench(BenchArgs),
    /// Produce plot-ready curve data and ordering checks for a finished run.
    Report(ReportArgs),
    /// Certify the linear rate of one run against the theoretical bound.
    Certify(CertifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Image side length.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Number of equally spaced projection angles in [0, 180).
    #[arg(long, default_value_t = 10)]
    angles: usize,
    /// How many phantoms of the family to emit (up to 20).
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value = "stravg-systems")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct MethodArgs {
    /// Plan shape: `simultaneous`, `cyclic`, or `saN` for consecutive
    /// strings of length N.
    #[arg(long, default_value = "cyclic")]
    plan: String,
    /// `none`, `sigma1`..`sigma4`, or `tau`.
    #[arg(long, default_value = "none")]
    extrapolation: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

impl MethodArgs {
    fn to_spec(&self) -> Result<MethodSpec, CliError> {
        Ok(MethodSpec {
            plan: parse_plan(&self.plan)?,
            extrapolation: parse_rule(&self.extrapolation)?,
            lambda: self.lambda,
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    /// JSON header of a stored system (sibling `.coo` file expected).
    #[arg(long, conflicts_with = "theta")]
    system: Option<PathBuf>,
    /// Two-lines-in-the-plane problem at this angle (degrees).
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    /// Residual stopping threshold; omit to run the full budget.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value = "stravg-solve")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment configuration file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    phantoms: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// A finished experiment directory.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long, conflicts_with = "theta")]
    system: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long, default_value_t = 50_000)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-12)]
    threshold: f64,
    /// Analytic family regularity constant; estimated when omitted.
    #[arg(long)]
    kappa: Option<f64>,
    /// Deterministic estimation grid (points per axis, dimension <= 3).
    #[arg(long)]
    grid: Option<usize>,
    /// Random sample count when no grid is given.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial point entries (comma separated); defaults to a deterministic
    /// off-axis point.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_plan(text: &str) -> Result<PlanKind, CliError> {
    match text {
        "simultaneous" => Ok(PlanKind::Named(NamedPlan::Simultaneous)),
        "cyclic" => Ok(PlanKind::Named(NamedPlan::Cyclic)),
        other => {
            if let Some(len) = other.strip_prefix("sa") {
                let string_len: usize = len.parse().map_err(|_| {
                    CliError::Config(format!("unknown plan `{other}`; use simultaneous, cyclic or saN"))
                })?;
                Ok(PlanKind::StringAveraging { string_len })
            } else {
                Err(CliError::Config(format!(
                    "unknown plan `{other}`; use simultaneous, cyclic or saN"
                )))
            }
        }
    }
}

fn parse_rule(text: &str) -> Result<ExtrapolationRule, CliError> {
    match text {
        "none" => Ok(ExtrapolationRule::None),
        "sigma1" => Ok(ExtrapolationRule::Sigma1),
        "sigma2" => Ok(ExtrapolationRule::Sigma2),
        "sigma3" => Ok(ExtrapolationRule::Sigma3),
        "sigma4" => Ok(ExtrapolationRule::Sigma4),
        "tau" => Ok(ExtrapolationRule::Tau),
        other => Err(CliError::Config(format!(
            "unknown extrapolation `{other}`; use none, sigma1..sigma4 or tau"
        ))),
    }
}

fn single_problem(
    system: &Option<PathBuf>,
    theta: &Option<f64>,
) -> Result<(String, stravg::FeasibilityProblem), CliError> {
    match (system, theta) {
        (Some(path), None) => {
            let loaded = load_system(path)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "system".into());
            Ok((id, loaded.to_problem()?))
        }
        (None, Some(theta)) => Ok((
            format!("theta{theta}"),
            stravg::problem::plane_angle_problem(*theta)?,
        )),
        _ => Err(CliError::Config(
            "exactly one of --system or --theta is required".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => {
            let written = generate_systems(args.n, args.angles, args.count, &args.out)?;
            println!(
                "wrote {} systems under {}",
                written.len(),
                args.out.display()
            );
        }
        Command::Solve(args) => {
            let (problem_id, problem) = single_problem(&args.system, &args.theta)?;
            let method = args.method.to_spec()?;
            let cfg = ExperimentConfig {
                iterations: args.iterations,
                residual_threshold: args.threshold,
                ..ExperimentConfig::default()
            };
            let schedule = validate_cell(&method, &problem, &cfg)?;
            let solver_cfg = method.solver_config(&cfg);
            let x0 = Vector::zeros(problem.dim());
            let result = stravg::solve(&problem, &schedule, &solver_cfg, &x0)?;

            fs::create_dir_all(&args.out)?;
            let trace_path = args
                .out
                .join(format!("{}__{}.csv", method.id(), problem_id));
            let mut file = fs::File::create(&trace_path)?;
            result.trace.write_csv(&mut file)?;
            fs::write(
                args.out.join(format!("{}__{}.json", method.id(), problem_id)),
                serde_json::to_string_pretty(&result.summary())?,
            )?;
            println!(
                "{}: {} iterations, final residual {:.3e} ({})",
                trace_path.display(),
                result.iterations,
                result.final_residual_max,
                serde_json::to_string(&result.termination)?
            );
        }
        Command::Bench(args) => {
            let mut cfg = match &args.config {
                Some(path) => serde_json::from_str::<ExperimentConfig>(&fs::read_to_string(path)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(out) = args.out {
                cfg.output_dir = out;
            }
            if let Some(iterations) = args.iterations {
                cfg.iterations = iterations;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if args.n.is_some() || args.angles.is_some() || args.phantoms.is_some() {
                let (mut n, mut angle_count, mut phantom_count) = match cfg.problems {
                    ProblemSource::Tomography {
                        n,
                        angle_count,
                        phantom_count,
                    } => (n, angle_count, phantom_count),
                    _ => (16, 10, 20),
                };
                if let Some(v) = args.n {
                    n = v;
                }
                if let Some(v) = args.angles {
                    angle_count = v;
                }
                if let Some(v) = args.phantoms {
                    phantom_count = v;
                }
                cfg.problems = ProblemSource::Tomography {
                    n,
                    angle_count,
                    phantom_count,
                };
            }
            let summary = run_experiment(&cfg)?;
            println!(
                "ran {} cells ({} failures) into {}",
                summary.rows.len() + summary.failures.len(),
                summary.failures.len(),
                cfg.output_dir.display()
            );
            for failure in &summary.failures {
                eprintln!(
                    "warning: {}__{} failed: {}",
                    failure.method, failure.problem, failure.error
                );
            }
        }
        Command::Report(args) => {
            let checks = report_figure2(&args.dir)?;
            println!("{}", serde_json::to_string_pretty(&checks)?);
        }
        Command::Certify(args) => {
            let (_, problem) = single_problem(&args.system, &args.theta)?;
            let method = args.method.to_spec()?;
            let cfg = ExperimentConfig {
                iterations: args.iterations,
                residual_threshold: Some(args.threshold),
                ..ExperimentConfig::default()
            };
            let schedule = validate_cell(&method, &problem, &cfg)?;
            let solver_cfg = SolverConfig {
                lambda: LambdaSchedule::Constant(method.lambda),
                rule: method.extrapolation,
                max_iterations: args.iterations,
                residual_threshold: Some(args.threshold),
                ..SolverConfig::default()
            };
            let x0 = match &args.x0 {
                Some(values) => Vector::new(values.clone())?,
                None => {
                    // Deterministic, mildly off-axis start.
                    let mut v = vec![0.0; problem.dim()];
                    for (i, entry) in v.iter_mut().enumerate() {
                        *entry = 1.0 + 0.37 * ((i % 7) as f64) - 0.11 * ((i % 3) as f64);
                    }
                    Vector::new(v)?
                }
            };
            let opts = CertifyOptions {
                kappa: args.kappa,
                grid_per_axis: args.grid,
                samples: args.samples,
                seed: args.seed,
                ..CertifyOptions::default()
            };
            let report = certify(&problem, &schedule, &solver_cfg, &x0, &opts)?;
            let text = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(path) => {
                    fs::write(path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
