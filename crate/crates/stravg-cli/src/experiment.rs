//! Benchmark-grid execution: every (method, problem) cell is solved in a
//! work pool, each cell writing only its own trace file; curves and the
//! summary are assembled after all cells finish. Reruns with the same
//! configuration produce byte-identical CSV output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stravg::analysis::fit_empirical_rate;
use stravg::problem::plane_angle_problem;
use stravg::solver::Termination;
use stravg::tomography::{build_problem, equally_spaced_angles, make_phantoms, RadonSystem, SystemHeader};
use stravg::{solve, ExtrapolationRule, FeasibilityProblem, Schedule};

use crate::config::{ExperimentConfig, MethodSpec, ProblemSource};
use crate::CliError;

#[derive(Clone, Debug)]
pub struct NamedProblem {
    pub id: String,
    pub problem: FeasibilityProblem,
}

/// Loads a stored system from its JSON header path; the COO triplets live in
/// a sibling file with the `.coo` extension.
pub fn load_system(header_path: &Path) -> Result<RadonSystem, CliError> {
    let header: SystemHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    let coo_path = header_path.with_extension("coo");
    let coo = fs::read_to_string(&coo_path)
        .map_err(|e| CliError::Missing(format!("{}: {e}", coo_path.display())))?;
    Ok(RadonSystem::from_parts(header, &coo)?)
}

pub fn build_problems(source: &ProblemSource) -> Result<Vec<NamedProblem>, CliError> {
    match source {
        ProblemSource::Tomography {
            n,
            angle_count,
            phantom_count,
        } => {
            let phantoms = make_phantoms(*n)?;
            if *phantom_count == 0 || *phantom_count > phantoms.len() {
                return Err(CliError::Config(format!(
                    "phantom_count must be in 1..={}, got {phantom_count}",
                    phantoms.len()
                )));
            }
            let angles = equally_spaced_angles(*angle_count);
            phantoms[..*phantom_count]
                .iter()
                .map(|phantom| {
                    let (_, problem) = build_problem(phantom, &angles)?;
                    Ok(NamedProblem {
                        id: phantom.name.clone(),
                        problem,
                    })
                })
                .collect()
        }
        ProblemSource::SystemFiles { paths } => {
            if paths.is_empty() {
                return Err(CliError::Config("no system files given".into()));
            }
            paths
                .iter()
                .map(|path| {
                    let system = load_system(path)?;
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "system".into());
                    Ok(NamedProblem {
                        id,
                        problem: system.to_problem()?,
                    })
                })
                .collect()
        }
        ProblemSource::PlaneAngles { thetas_deg } => {
            if thetas_deg.is_empty() {
                return Err(CliError::Config("no angles given".into()));
            }
            thetas_deg
                .iter()
                .map(|&theta| {
                    Ok(NamedProblem {
                        id: format!("theta{theta}"),
                        problem: plane_angle_problem(theta)?,
                    })
                })
                .collect()
        }
    }
}

/// Checks one grid cell without running it: the schedule must build, cover
/// the problem, match the extrapolation shape and satisfy the solver
/// invariants.
pub fn validate_cell(
    method: &MethodSpec,
    problem: &FeasibilityProblem,
    cfg: &ExperimentConfig,
) -> Result<Schedule, CliError> {
    let schedule = method.plan.to_schedule(problem.len())?;
    schedule.validate_indices(problem.len())?;
    let solver_cfg = method.solver_config(cfg);
    solver_cfg.validate(schedule.max_string_len())?;
    let shape_ok = match method.extrapolation {
        ExtrapolationRule::Sigma1 => schedule.steps().iter().all(|s| s.all_singletons()),
        ExtrapolationRule::Sigma2 => schedule.steps().iter().all(|s| s.is_single_string()),
        _ => true,
    };
    if !shape_ok {
        return Err(CliError::Config(format!(
            "extrapolation {} does not match the plan shape of method {}",
            method.extrapolation.name(),
            method.id()
        )));
    }
    Ok(schedule)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub problem: String,
    /// Final value of the averaged-residual measurement
    /// `log10(max_i d(x^k, C_i) / max_i d(x^0, C_i))`.
    pub final_measurement: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub wall_ms: f64,
    /// Empirical per-iteration rate fitted on the residual curve, when the
    /// trace is long enough.
    pub q_emp: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureRow {
    pub method: String,
    pub problem: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub methods: Vec<String>,
    pub problems: Vec<String>,
    pub iterations: usize,
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<FailureRow>,
}

struct CellOutcome {
    row: Option<SummaryRow>,
    failure: Option<FailureRow>,
    curve: Option<Vec<f64>>,
}

/// Runs the full grid. Returns the summary; all artifacts are written under
/// `cfg.output_dir`:
///
/// * `config_echo.json` — the effective configuration,
/// * `traces/<method>__<problem>.csv` — per-cell iteration traces,
/// * `curves/<method>.csv` — measurement curves averaged over problems,
/// * `summary.json` — one row per cell plus recorded failures.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, CliError> {
    let methods = cfg.method_cells()?;
    let problems = build_problems(&cfg.problems)?;

    // Fail fast on any invalid cell before running the grid.
    for method in &methods {
        for named in &problems {
            validate_cell(method, &named.problem, cfg)?;
        }
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("traces"))?;
    fs::create_dir_all(out.join("curves"))?;

    // Echo the effective configuration, methods materialized.
    let mut echo = cfg.clone();
    echo.methods = Some(methods.clone());
    echo.grid = None;
    fs::write(
        out.join("config_echo.json"),
        serde_json::to_string_pretty(&echo)?,
    )?;

    let cells: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|mi| (0..problems.len()).map(move |pi| (mi, pi)))
        .collect();

    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(mi, pi)| run_cell(cfg, &methods[mi], &problems[pi], out))
        .collect();

    // Averaged curve per method, problems extended to a common length by
    // repeating their final measurement.
    let columns = cfg.iterations + 1;
    for (mi, method) in methods.iter().enumerate() {
        let method_curves: Vec<&Vec<f64>> = outcomes
            .iter()
            .enumerate()
            .filter(|(idx, o)| idx / problems.len() == mi && o.curve.is_some())
            .map(|(_, o)| o.curve.as_ref().expect("filtered"))
            .collect();
        if method_curves.is_empty() {
            continue;
        }
        let mut file = fs::File::create(out.join("curves").join(format!("{}.csv", method.id())))?;
        writeln!(file, "k,mean_log10_ratio")?;
        for k in 0..columns {
            let mean: f64 = method_curves
                .iter()
                .map(|c| *c.get(k).or_else(|| c.last()).expect("nonempty curve"))
                .sum::<f64>()
                / method_curves.len() as f64;
            writeln!(file, "{k},{mean}")?;
        }
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        if let Some(row) = outcome.row {
            rows.push(row);
        }
        if let Some(failure) = outcome.failure {
            failures.push(failure);
        }
    }
    let summary = ExperimentSummary {
        methods: methods.iter().map(MethodSpec::id).collect(),
        problems: problems.iter().map(|p| p.id.clone()).collect(),
        iterations: cfg.iterations,
        rows,
        failures,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn run_cell(
    cfg: &ExperimentConfig,
    method: &MethodSpec,
    named: &NamedProblem,
    out: &Path,
) -> CellOutcome {
    let started = Instant::now();
    let result = (|| -> Result<(SummaryRow, Vec<f64>), CliError> {
        let schedule = validate_cell(method, &named.problem, cfg)?;
        let solver_cfg = method.solver_config(cfg);
        let x0 = cfg.x0.materialize(named.problem.dim())?;
        let result = solve(&named.problem, &schedule, &solver_cfg, &x0)?;

        let trace_path = out
            .join("traces")
            .join(format!("{}__{}.csv", method.id(), named.id));
        let mut file = fs::File::create(trace_path)?;
        result.trace.write_csv(&mut file)?;

        let residuals: Vec<f64> = result
            .trace
            .records
            .iter()
            .map(|r| r.residual_max)
            .collect();
        let q_emp = fit_empirical_rate(&residuals).ok().map(|fit| fit.q);
        let row = SummaryRow {
            method: method.id(),
            problem: named.id.clone(),
            final_measurement: result.final_log10_ratio,
            iterations: result.iterations,
            termination: result.termination,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            q_emp,
        };
        Ok((row, result.curve()))
    })();
    match result {
        Ok((row, curve)) => CellOutcome {
            row: Some(row),
            failure: None,
            curve: Some(curve),
        },
        Err(e) => CellOutcome {
            row: None,
            failure: Some(FailureRow {
                method: method.id(),
                problem: named.id.clone(),
                error: e.to_string(),
            }),
            curve: None,
        },
    }
}

/// Writes the systems induced by the synthetic phantom family: one
/// `<name>.coo` plus `<name>.json` header per phantom.
pub fn generate_systems(
    n: usize,
    angle_count: usize,
    phantom_count: usize,
    out: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let phantoms = make_phantoms(n)?;
    if phantom_count == 0 || phantom_count > phantoms.len() {
        return Err(CliError::Config(format!(
            "phantom_count must be in 1..={}, got {phantom_count}",
            phantoms.len()
        )));
    }
    fs::create_dir_all(out)?;
    let angles = equally_spaced_angles(angle_count);
    let mut written = Vec::new();
    for phantom in &phantoms[..phantom_count] {
        let (system, _) = build_problem(phantom, &angles)?;
        let coo_path = out.join(format!("{}.coo", phantom.name));
        let mut coo = fs::File::create(&coo_path)?;
        system.write_coo(&mut coo)?;
        let header_path = out.join(format!("{}.json", phantom.name));
        fs::write(
            &header_path,
            serde_json::to_string_pretty(&system.header())?,
        )?;
        written.push(header_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlanKind;

    fn tiny_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            problems: ProblemSource::Tomography {
                n: 8,
                angle_count: 4,
                phantom_count: 2,
            },
            iterations: 10,
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn tiny_grid_produces_all_artifacts() {
        let dir = std::env::temp_dir().join("stravg_test_tiny_grid");
        let _ = fs::remove_dir_all(&dir);
        let cfg = tiny_config(&dir);
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.rows.len(), 7 * 2);
        assert!(summary.failures.is_empty());
        assert!(dir.join("config_echo.json").exists());
        assert!(dir.join("summary.json").exists());
        assert!(dir.join("traces/simultaneous__disc.csv").exists());
        assert!(dir.join("curves/cyclic_sigma2.csv").exists());

        let curve = fs::read_to_string(dir.join("curves/simultaneous.csv")).unwrap();
        assert_eq!(curve.lines().count(), cfg.iterations + 2); // header + k rows
        let first_row = curve.lines().nth(1).unwrap();
        assert_eq!(first_row, "0,0"); // measurement at k = 0 is 0 by definition

        // Rerunning reproduces the trace bytes.
        let before = fs::read(dir.join("traces/cyclic__disc.csv")).unwrap();
        run_experiment(&cfg).unwrap();
        let after = fs::read(dir.join("traces/cyclic__disc.csv")).unwrap();
        assert_eq!(before, after);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn invalid_cells_fail_before_any_run() {
        let dir = std::env::temp_dir().join("stravg_test_invalid_grid");
        let _ = fs::remove_dir_all(&dir);
        let mut cfg = tiny_config(&dir);
        cfg.methods = Some(vec![MethodSpec::new(
            PlanKind::simultaneous(),
            ExtrapolationRule::Sigma2,
        )]);
        assert!(run_experiment(&cfg).is_err());
        assert!(!dir.exists());

        cfg.methods = Some(vec![]);
        assert!(matches!(run_experiment(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn single_cell_single_iteration() {
        let dir = std::env::temp_dir().join("stravg_test_single_cell");
        let _ = fs::remove_dir_all(&dir);
        let mut cfg = tiny_config(&dir);
        cfg.problems = ProblemSource::Tomography {
            n: 8,
            angle_count: 4,
            phantom_count: 1,
        };
        cfg.methods = Some(vec![MethodSpec::new(
            PlanKind::cyclic(),
            ExtrapolationRule::None,
        )]);
        cfg.iterations = 1;
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.rows.len(), 1);
        let trace = fs::read_to_string(dir.join("traces/cyclic__disc.csv")).unwrap();
        assert_eq!(trace.lines().count(), 2); // header + one executed iteration
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn measurement_column_recomputes_from_residuals() {
        // log10_ratio must equal log10(residual_max_k / residual_max_0)
        // recomputed from the raw residual column.
        let dir = std::env::temp_dir().join("stravg_test_measurement");
        let _ = fs::remove_dir_all(&dir);
        let mut cfg = tiny_config(&dir);
        cfg.iterations = 25;
        run_experiment(&cfg).unwrap();
        let text = fs::read_to_string(dir.join("traces/sa10_sigma4__disc.csv")).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let res_col = header.iter().position(|c| *c == "residual_max").unwrap();
        let ratio_col = header.iter().position(|c| *c == "log10_ratio").unwrap();
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        let r0 = rows[0][res_col];
        for row in &rows {
            let expected = (row[res_col] / r0).log10();
            assert!((row[ratio_col] - expected).abs() <= 1e-12);
        }
        assert_eq!(rows[0][ratio_col], 0.0);
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn generated_systems_reload_identically() {
        let dir = std::env::temp_dir().join("stravg_test_generate");
        let _ = fs::remove_dir_all(&dir);
        let written = generate_systems(8, 4, 3, &dir).unwrap();
        assert_eq!(written.len(), 3);
        let system = load_system(&written[0]).unwrap();
        assert!(system
            .ground_truth_residuals()
            .iter()
            .all(|r| r.abs() <= 1e-9));

        let problems = build_problems(&ProblemSource::SystemFiles {
            paths: written.clone(),
        })
        .unwrap();
        assert_eq!(problems.len(), 3);
        assert!(problems[0].problem.is_affine());
        let _ = fs::remove_dir_all(&dir);
    }
}
