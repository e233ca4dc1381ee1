//! End-to-end acceptance suite. Each test prints one PASS/FAIL line with
//! its runtime; the whole suite is serialized through a mutex so the wall
//! clock budgets are meaningful.

use std::sync::Mutex;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use stravg::analysis::{
    check_rate_certificate, estimate_kappa_grid, fit_empirical_rate, rate_bound,
    rate_inputs_from_run, RateInputs,
};
use stravg::extrapolation::{
    evaluate_sigma, tau_cyclic, tau_simultaneous, tau_string_averaging, theta_lower_bound,
    NumericGuard,
};
use stravg::operators::{Ball, Cutter, Halfspace, Hyperplane, SubgradientProjector};
use stravg::plans::{apply_plan_step, partition_consecutive, PlanStep};
use stravg::problem::plane_angle_problem;
use stravg::solver::{certify_iteration, solve, SolverConfig, Termination};
use stravg::tomography::{build_problem, equally_spaced_angles, make_phantoms};
use stravg::{
    ExtrapolationRule, FeasibilityProblem, LambdaSchedule, Schedule, Vector,
};
use stravg_cli::config::{ExperimentConfig, ProblemSource};
use stravg_cli::experiment::run_experiment;
use stravg_cli::report::report_figure2;

static SERIAL: Mutex<()> = Mutex::new(());

struct Criterion {
    name: &'static str,
    started: Instant,
    budget_s: f64,
}

impl Criterion {
    fn begin(name: &'static str, budget_s: f64) -> Self {
        Criterion {
            name,
            started: Instant::now(),
            budget_s,
        }
    }

    fn finish(self, ok: bool, detail: String) {
        let elapsed = self.started.elapsed().as_secs_f64();
        let within = elapsed < self.budget_s;
        let verdict = if ok && within { "PASS" } else { "FAIL" };
        println!(
            "[{verdict}] {} ({elapsed:.2}s / budget {:.0}s): {detail}",
            self.name, self.budget_s
        );
        assert!(ok, "{}: {detail}", self.name);
        assert!(
            within,
            "{}: exceeded runtime budget ({elapsed:.2}s >= {:.0}s)",
            self.name, self.budget_s
        );
    }
}

fn random_vector(rng: &mut StdRng, dim: usize, half_range: f64) -> Vector {
    Vector::new(
        (0..dim)
            .map(|_| rng.gen_range(-half_range..half_range))
            .collect(),
    )
    .expect("finite")
}

fn random_unit_normal(rng: &mut StdRng, dim: usize) -> Vector {
    let mut entries: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let boost = rng.gen_range(0..dim);
    entries[boost] += if entries[boost] >= 0.0 { 0.7 } else { -0.7 };
    Vector::new(entries).expect("finite")
}

/// A random cutter together with a point of its fixed set.
fn random_cutter_with_fixed_point(rng: &mut StdRng, dim: usize) -> (Cutter, Vector) {
    match rng.gen_range(0..5) {
        0 => {
            let h = Hyperplane::new(random_unit_normal(rng, dim), rng.gen_range(-2.0..2.0))
                .expect("nonzero normal");
            let z = h.project(&random_vector(rng, dim, 4.0));
            (Cutter::Hyperplane(h), z)
        }
        1 => {
            let h = Halfspace::new(random_unit_normal(rng, dim), rng.gen_range(-2.0..2.0))
                .expect("nonzero normal");
            let boundary = h.project(&random_vector(rng, dim, 4.0));
            let depth = rng.gen_range(0.0..2.0) / h.normal().norm();
            let z = boundary.add_scaled(-depth, h.normal());
            (Cutter::Halfspace(h), z)
        }
        2 => {
            let center = random_vector(rng, dim, 2.0);
            let radius = rng.gen_range(0.2..2.5);
            let dir = random_unit_normal(rng, dim);
            let z = center.add_scaled(rng.gen_range(0.0..radius) / dir.norm(), &dir);
            (
                Cutter::Ball(Ball::new(center, radius).expect("radius")),
                z,
            )
        }
        3 => {
            // Max-affine level set built around a strictly feasible point.
            let z0 = random_vector(rng, dim, 2.0);
            let pieces = rng.gen_range(1..=4);
            let normals: Vec<Vector> =
                (0..pieces).map(|_| random_unit_normal(rng, dim)).collect();
            let offsets: Vec<f64> = normals
                .iter()
                .map(|a| a.dot(&z0) + rng.gen_range(0.1..1.0))
                .collect();
            (
                Cutter::Subgradient(
                    SubgradientProjector::max_affine(normals, offsets).expect("valid"),
                ),
                z0,
            )
        }
        _ => {
            let center = random_vector(rng, dim, 2.0);
            let radius = rng.gen_range(0.2..2.5);
            let dir = random_unit_normal(rng, dim);
            let z = center.add_scaled(rng.gen_range(0.0..radius) / dir.norm(), &dir);
            (
                Cutter::Subgradient(
                    SubgradientProjector::ball_distance(center, radius).expect("radius"),
                ),
                z,
            )
        }
    }
}

/// Metric projections only (for nonexpansiveness and idempotence).
fn random_metric_projection(rng: &mut StdRng, dim: usize) -> Cutter {
    match rng.gen_range(0..3) {
        0 => Cutter::Hyperplane(
            Hyperplane::new(random_unit_normal(rng, dim), rng.gen_range(-2.0..2.0)).unwrap(),
        ),
        1 => Cutter::Halfspace(
            Halfspace::new(random_unit_normal(rng, dim), rng.gen_range(-2.0..2.0)).unwrap(),
        ),
        _ => Cutter::Ball(
            Ball::new(random_vector(rng, dim, 2.0), rng.gen_range(0.2..2.5)).unwrap(),
        ),
    }
}

#[test]
fn acceptance_operator_laws() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("operator law suite", 10.0);
    const CASES: usize = 10_000;
    const TOL: f64 = 1e-10;
    let mut rng = StdRng::seed_from_u64(1729);

    // Cutter inequality <x - Ux, z - Ux> <= 0 for z in Fix U.
    let mut worst_cut = f64::NEG_INFINITY;
    for _ in 0..CASES {
        let dim = rng.gen_range(2..=64);
        let (op, z) = random_cutter_with_fixed_point(&mut rng, dim);
        let x = random_vector(&mut rng, dim, 4.0);
        let ux = op.apply(&x);
        worst_cut = worst_cut.max((&x - &ux).dot(&(&z - &ux)));
    }

    // Idempotence of projections. For the subgradient projector this holds
    // for single-piece and distance-form oracles (the exact-branch cases);
    // multi-piece max-affine projections legitimately move twice.
    let mut worst_idem = f64::NEG_INFINITY;
    for _ in 0..CASES {
        let dim = rng.gen_range(2..=64);
        let op = match rng.gen_range(0..5) {
            0..=2 => random_metric_projection(&mut rng, dim),
            3 => {
                let a = random_unit_normal(&mut rng, dim);
                let b = rng.gen_range(-2.0..2.0);
                Cutter::Subgradient(SubgradientProjector::max_affine(vec![a], vec![b]).unwrap())
            }
            _ => Cutter::Subgradient(
                SubgradientProjector::ball_distance(
                    random_vector(&mut rng, dim, 2.0),
                    rng.gen_range(0.2..2.5),
                )
                .unwrap(),
            ),
        };
        let x = random_vector(&mut rng, dim, 4.0);
        let px = op.apply(&x);
        let ppx = op.apply(&px);
        worst_idem = worst_idem.max(ppx.dist(&px) - 1e-12 * (1.0 + px.norm()));
    }

    // Nonexpansiveness of metric projections.
    let mut worst_nonexp = f64::NEG_INFINITY;
    for _ in 0..CASES {
        let dim = rng.gen_range(2..=64);
        let op = random_metric_projection(&mut rng, dim);
        let x = random_vector(&mut rng, dim, 4.0);
        let y = random_vector(&mut rng, dim, 4.0);
        worst_nonexp = worst_nonexp.max(op.apply(&x).dist(&op.apply(&y)) - x.dist(&y));
    }

    // Generalized relaxation inequality for cutters (rho = 1) with a
    // state-dependent alpha in (0, 2):
    // ||U_a x - z||^2 <= ||x - z||^2 - (1/a + (1-a)/a) ||U_a x - x||^2.
    let mut worst_relax = f64::NEG_INFINITY;
    for _ in 0..CASES {
        let dim = rng.gen_range(2..=64);
        let (op, z) = random_cutter_with_fixed_point(&mut rng, dim);
        let x = random_vector(&mut rng, dim, 4.0);
        let alpha = rng.gen_range(0.05..1.95);
        let ux = op.apply(&x);
        let uax = x.step_toward(&ux, alpha);
        let modulus = 1.0 / alpha + (1.0 - alpha) / alpha;
        let lhs = uax.dist_sq(&z);
        let rhs = x.dist_sq(&z) - modulus * uax.dist_sq(&x);
        worst_relax = worst_relax.max(lhs - rhs);
    }

    let ok = worst_cut <= TOL && worst_idem <= TOL && worst_nonexp <= TOL && worst_relax <= TOL;
    c.finish(
        ok,
        format!(
            "{CASES} cases/law; worst slacks: cutter {worst_cut:.2e}, idempotence \
             {worst_idem:.2e}, nonexpansive {worst_nonexp:.2e}, relaxation {worst_relax:.2e}"
        ),
    );
}

fn random_hyperplane_family(
    rng: &mut StdRng,
    dim: usize,
    count: usize,
) -> (Vec<Cutter>, Vector) {
    let z = random_vector(rng, dim, 2.0);
    let cutters = (0..count)
        .map(|_| {
            let a = random_unit_normal(rng, dim);
            let b = a.dot(&z);
            Cutter::Hyperplane(Hyperplane::new(a, b).expect("nonzero"))
        })
        .collect();
    (cutters, z)
}

#[test]
fn acceptance_envelope_suite() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("envelope suite", 30.0);
    const STATES: usize = 1_000;
    let guard = NumericGuard::default();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut checked_variants = 0usize;
    let mut ok = true;
    let mut detail = String::new();

    for state in 0..STATES {
        let dim = rng.gen_range(2..=32);
        let m_ops = rng.gen_range(2..=10);
        let (ops, _z) = random_hyperplane_family(&mut rng, dim, m_ops);
        let x = random_vector(&mut rng, dim, 4.0);

        // Three plan shapes share the state: a random partition, the
        // all-singleton reduction and the single full string.
        let partition = PlanStep::uniform(partition_consecutive(
            m_ops,
            rng.gen_range(1..=m_ops),
        ))
        .expect("valid partition");
        let singles = PlanStep::simultaneous(m_ops).expect("valid");
        let full = PlanStep::cyclic(m_ops).expect("valid");

        for (step, applicable) in [
            (&partition, vec![ExtrapolationRule::Sigma3, ExtrapolationRule::Sigma4, ExtrapolationRule::Tau]),
            (&singles, vec![ExtrapolationRule::Sigma1, ExtrapolationRule::Sigma3, ExtrapolationRule::Sigma4]),
            (&full, vec![ExtrapolationRule::Sigma2, ExtrapolationRule::Sigma4]),
        ] {
            let app = apply_plan_step(step, &ops, &x);
            let tau = tau_string_averaging(&app, step, &guard).expect("consistent family");
            for rule in applicable {
                let eval = evaluate_sigma(rule, &app, step, &guard).expect("shape matches");
                checked_variants += 1;
                // Envelope ordering on the delivered value.
                if !(eval.sigma >= 1.0 && eval.sigma <= eval.tau.max(1.0) * (1.0 + 1e-10)) {
                    ok = false;
                    detail = format!(
                        "state {state}: sigma {} escapes [1, tau {}] for {:?}",
                        eval.sigma, eval.tau, rule
                    );
                }
                // Exact algebraic identity: sigma4 = (m+1)/(2m) tau,
                // before clamping.
                if rule == ExtrapolationRule::Sigma4 {
                    let m = step.max_string_len() as f64;
                    let expect = (m + 1.0) / (2.0 * m) * tau;
                    if (eval.sigma_raw - expect).abs() > 1e-10 * expect.max(1.0) {
                        ok = false;
                        detail = format!(
                            "state {state}: sigma4 {} != (m+1)/(2m) tau {}",
                            eval.sigma_raw, expect
                        );
                    }
                }
            }
        }

        // Reduction consistency between the three tau routes.
        let app = apply_plan_step(&singles, &ops, &x);
        let a = tau_string_averaging(&app, &singles, &guard).unwrap();
        let b = tau_simultaneous(&app, &singles, &guard).unwrap();
        if (a - b).abs() > 1e-10 * b.max(1.0) {
            ok = false;
            detail = format!("state {state}: singleton tau {a} vs simultaneous {b}");
        }
        let app = apply_plan_step(&full, &ops, &x);
        let a = tau_string_averaging(&app, &full, &guard).unwrap();
        let b = tau_cyclic(&app, &full, &guard).unwrap();
        if (a - b).abs() > 1e-10 * b.max(1.0) {
            ok = false;
            detail = format!("state {state}: full-string tau {a} vs cyclic {b}");
        }
    }
    if ok {
        detail = format!("{STATES} states, {checked_variants} variant evaluations");
    }
    c.finish(ok, detail);
}

fn benchmark_methods() -> Vec<(&'static str, ExtrapolationRule)> {
    vec![
        ("simultaneous", ExtrapolationRule::None),
        ("simultaneous", ExtrapolationRule::Sigma1),
        ("cyclic", ExtrapolationRule::None),
        ("cyclic", ExtrapolationRule::Sigma2),
        ("sa", ExtrapolationRule::None),
        ("sa", ExtrapolationRule::Sigma3),
        ("sa", ExtrapolationRule::Sigma4),
    ]
}

fn schedule_for(kind: &str, operator_count: usize) -> Schedule {
    match kind {
        "simultaneous" => Schedule::static_plan(PlanStep::simultaneous(operator_count).unwrap()),
        "cyclic" => Schedule::static_plan(PlanStep::cyclic(operator_count).unwrap()),
        _ => Schedule::static_plan(
            PlanStep::uniform(partition_consecutive(operator_count, 10)).unwrap(),
        ),
    }
}

#[test]
fn acceptance_iteration_certificates() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("per-iteration certificates", 120.0);
    let mut runs = 0usize;
    let mut iterations_checked = 0usize;
    let mut worst_cert = f64::INFINITY;
    let mut worst_fejer = f64::INFINITY;
    let mut worst_theta_low = f64::INFINITY;
    let mut ok = true;
    let mut detail = String::new();

    // Benchmark grid at reduced scale plus the known-constant plane
    // problems.
    let angles = equally_spaced_angles(8);
    let mut problems: Vec<(FeasibilityProblem, Option<f64>)> = make_phantoms(12)
        .unwrap()
        .into_iter()
        .take(6)
        .map(|ph| (build_problem(&ph, &angles).unwrap().1, None))
        .collect();
    for theta in [30.0, 60.0] {
        let kappa = 1.0 / ((theta / 2.0f64).to_radians()).sin();
        problems.push((plane_angle_problem(theta).unwrap(), Some(kappa)));
    }

    'outer: for (problem, kappa) in &problems {
        for (kind, rule) in benchmark_methods() {
            // Two-operator plane problems only support the simultaneous and
            // cyclic shapes meaningfully; sa with strings of 10 collapses
            // to cyclic there, which is fine.
            let schedule = schedule_for(kind, problem.len());
            let cfg = SolverConfig {
                rule,
                residual_threshold: None,
                max_iterations: 100,
                iterate_stride: Some(1),
                ..SolverConfig::default()
            };
            let z = problem.feasible_point().unwrap().clone();
            let result = solve(problem, &schedule, &cfg, &Vector::zeros(problem.dim()))
                .unwrap_or_else(|e| panic!("{kind}/{}: {e}", rule.name()));
            runs += 1;
            for record in &result.trace.records {
                iterations_checked += 1;
                let fejer = record.fejer_slack.unwrap();
                worst_fejer = worst_fejer.min(fejer);
                if fejer < -1e-10 {
                    ok = false;
                    detail = format!("Fejer slack {fejer} at k={} ({kind})", record.k);
                    break 'outer;
                }
                let low = record.theta
                    - (theta_lower_bound(record.lambda, record.max_string_len) - 1e-12);
                worst_theta_low = worst_theta_low.min(low);
                if low < 0.0 {
                    ok = false;
                    detail = format!("theta {} below bound at k={}", record.theta, record.k);
                    break 'outer;
                }
                if let Some(kappa) = kappa {
                    let m = record.max_string_len as f64;
                    let omega = schedule.min_weight();
                    let cap = m * kappa * kappa / omega + 1e-9;
                    if record.theta > cap {
                        ok = false;
                        detail = format!("theta {} above cap {cap} at k={}", record.theta, record.k);
                        break 'outer;
                    }
                }
                let cert = certify_iteration(problem, &schedule, &result, record.k, &z)
                    .expect("iterates retained");
                worst_cert = worst_cert.min(cert.slack);
                if cert.slack < -1e-9 {
                    ok = false;
                    detail = format!(
                        "certificate slack {} at k={} ({kind}/{})",
                        cert.slack,
                        record.k,
                        rule.name()
                    );
                    break 'outer;
                }
            }
        }
    }
    if ok {
        detail = format!(
            "{runs} runs, {iterations_checked} iterations; worst slacks: certificate \
             {worst_cert:.2e}, Fejer {worst_fejer:.2e}, theta-lower {worst_theta_low:.2e}"
        );
    }
    c.finish(ok, detail);
}

#[test]
fn acceptance_rate_certification() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("rate certification", 60.0);
    let mut ok = true;
    let mut detail = String::new();
    let mut certified = 0usize;
    let x0 = Vector::new(vec![1.7, 0.3]).unwrap();

    'outer: for theta_deg in [15.0, 30.0, 60.0, 90.0] {
        let problem = plane_angle_problem(theta_deg).unwrap();
        let d0 = x0.norm(); // the intersection is the origin
        let estimate = estimate_kappa_grid(&problem, &Vector::zeros(2), d0, 1000).unwrap();

        for (kind, rule) in [
            ("simultaneous", ExtrapolationRule::None),
            ("simultaneous", ExtrapolationRule::Sigma1),
            ("cyclic", ExtrapolationRule::None),
            ("cyclic", ExtrapolationRule::Sigma2),
        ] {
            let schedule = schedule_for(kind, 2);
            let cfg = SolverConfig {
                rule,
                residual_threshold: Some(5e-14),
                max_iterations: 50_000,
                record_dist_c: true,
                iterate_stride: Some(1),
                ..SolverConfig::default()
            };
            let result = solve(&problem, &schedule, &cfg, &x0).unwrap();
            if result.termination != Termination::ResidualMet {
                ok = false;
                detail = format!("{kind}/{} at {theta_deg}deg did not converge", rule.name());
                break 'outer;
            }
            let inputs =
                rate_inputs_from_run(&schedule, &cfg, &result, 1.0, estimate.kappa_hat);
            let bound = rate_bound(inputs).unwrap();
            let report =
                check_rate_certificate(&result, &result.final_point, d0, &bound, 1e-9);
            if report.violations != 0 {
                ok = false;
                detail = format!(
                    "{} envelope violations for {kind}/{} at {theta_deg}deg (max {:.2e})",
                    report.violations,
                    rule.name(),
                    report.max_violation
                );
                break 'outer;
            }
            let dist: Vec<f64> = result.trace.records.iter().filter_map(|r| r.dist_c).collect();
            match fit_empirical_rate(&dist) {
                Ok(fit) => {
                    if fit.q > bound.q {
                        ok = false;
                        detail = format!(
                            "empirical rate {} exceeds theoretical {} for {kind}/{} at {theta_deg}deg",
                            fit.q,
                            bound.q,
                            rule.name()
                        );
                        break 'outer;
                    }
                }
                Err(_) => {
                    // Converged too quickly for a fit; the envelope check
                    // above still applies.
                }
            }
            certified += 1;

            // Orthogonal lines with the extrapolated simultaneous method:
            // exact solution in one iteration.
            if theta_deg == 90.0 && kind == "simultaneous" && rule == ExtrapolationRule::Sigma1
                && (result.iterations != 1 || result.final_residual_max > 1e-12) {
                    ok = false;
                    detail = format!(
                        "expected one-step convergence, got {} iterations, residual {:.2e}",
                        result.iterations, result.final_residual_max
                    );
                    break 'outer;
                }
        }
    }
    if ok {
        detail = format!("{certified} certified runs across 4 angles, grid-sampled kappa");
    }
    c.finish(ok, detail);
}

#[test]
fn acceptance_rate_bound_specialization() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("non-extrapolated rate specialization", 10.0);
    let omegas = [0.02, 0.1, 0.25, 0.5, 1.0];
    let ms = [1usize, 2, 5, 10, 20];
    let ss = [1usize, 2, 3, 5];
    let kappas = [1.0, 1.3, 2.0, 5.0, 10.0];
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (i, &omega) in omegas.iter().enumerate() {
        for (j, &m) in ms.iter().enumerate() {
            for (k, &s) in ss.iter().enumerate() {
                let kappa = kappas[(i + j + k) % kappas.len()];
                let q = rate_bound(RateInputs {
                    omega,
                    lambda_bar: 1.0,
                    m,
                    delta: 1.0,
                    kappa,
                    s,
                    inf_theta: 1.0,
                })
                .unwrap()
                .q;
                let reference =
                    (1.0 - omega / (m as f64 * s as f64 * kappa * kappa)).powf(1.0 / (2.0 * s as f64));
                worst = worst.max((q - reference).abs());
                count += 1;
            }
        }
    }
    let ok = worst <= 1e-14 && count == 100;
    c.finish(
        ok,
        format!("{count} parameter combinations, worst deviation {worst:.2e}"),
    );
}

#[test]
fn acceptance_benchmark_orderings() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("benchmark qualitative orderings", 300.0);
    let dir = std::env::temp_dir().join("stravg_acceptance_bench");
    let _ = std::fs::remove_dir_all(&dir);
    let cfg = ExperimentConfig {
        problems: ProblemSource::Tomography {
            n: 16,
            angle_count: 10,
            phantom_count: 20,
        },
        iterations: 300,
        residual_threshold: None,
        output_dir: dir.clone(),
        ..ExperimentConfig::default()
    };
    let summary = run_experiment(&cfg).expect("grid runs");
    let checks = report_figure2(&dir).expect("curves present");

    let mut failures = Vec::new();
    if !summary.failures.is_empty() {
        failures.push(format!("{} cell failures", summary.failures.len()));
    }
    if checks.simultaneous_slowest != Some(true) {
        failures.push("simultaneous not slowest".into());
    }
    if checks.cyclic_variants_lowest != Some(true) {
        failures.push("cyclic variants not lowest".into());
    }
    if checks.sigma1_gain_at_least_half != Some(true) {
        failures.push(format!(
            "sigma1 gain {:?} below 0.5 log10",
            checks.sigma1_gain_log10
        ));
    }
    if checks.sa_extrapolation_ordered != Some(true) {
        failures.push("sigma4 <= sigma3 <= plain ordering broken".into());
    }
    if checks.sigma2_within_half != Some(true) {
        failures.push(format!(
            "sigma2 gap {:?} above 0.5 log10",
            checks.sigma2_gap_log10
        ));
    }
    let ok = failures.is_empty();
    let finals = checks
        .final_values
        .iter()
        .map(|(k, v)| format!("{k} {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    let detail = if ok {
        format!("finals: {finals}")
    } else {
        format!("{}; finals: {finals}", failures.join("; "))
    };
    let _ = std::fs::remove_dir_all(&dir);
    c.finish(ok, detail);
}

#[test]
fn acceptance_tomography_consistency() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("tomography consistency and determinism", 60.0);
    let angles = equally_spaced_angles(10);
    let phantoms = make_phantoms(16).unwrap();
    let mut worst_residual = 0.0f64;
    let mut deterministic = true;
    for phantom in &phantoms {
        let (system1, problem) = build_problem(phantom, &angles).unwrap();
        let (system2, _) = build_problem(phantom, &angles).unwrap();
        for r in system1.ground_truth_residuals() {
            worst_residual = worst_residual.max(r.abs());
        }
        worst_residual =
            worst_residual.max(problem.max_residual(&system1.ground_truth));

        let mut coo1 = Vec::new();
        system1.write_coo(&mut coo1).unwrap();
        let mut coo2 = Vec::new();
        system2.write_coo(&mut coo2).unwrap();
        let header1 = serde_json::to_vec(&system1.header()).unwrap();
        let header2 = serde_json::to_vec(&system2.header()).unwrap();
        if coo1 != coo2 || header1 != header2 {
            deterministic = false;
        }
    }
    let ok = worst_residual <= 1e-12 && deterministic;
    c.finish(
        ok,
        format!(
            "{} systems; worst ground-truth residual {worst_residual:.2e}; byte-identical: {deterministic}",
            phantoms.len()
        ),
    );
}

/// Direct implementation of the extrapolated simultaneous iteration, written
/// against raw slices: x' = x + sigma(x) (mean of projections - x) with
/// sigma = sum_i w_i ||P_i x - x||^2 / ||Tx - x||^2.
fn oracle_simultaneous_sigma1(
    normals: &[Vec<f64>],
    offsets: &[f64],
    x0: &[f64],
    iterations: usize,
) -> Vec<Vec<f64>> {
    let m = normals.len() as f64;
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut tx = vec![0.0; d];
        let mut num = 0.0;
        for (a, &b) in normals.iter().zip(offsets) {
            let dot: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
            let norm_sq: f64 = a.iter().map(|v| v * v).sum();
            let t = (dot - b) / norm_sq;
            let mut disp_sq = 0.0;
            for j in 0..d {
                let pj = x[j] + (-t) * a[j];
                tx[j] += pj / m;
                disp_sq += (pj - x[j]) * (pj - x[j]);
            }
            num += disp_sq / m;
        }
        let den: f64 = tx.iter().zip(&x).map(|(t, xi)| (t - xi) * (t - xi)).sum();
        let x_norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let sigma = if den < 1e-24 * (1.0 + x_norm_sq) {
            1.0
        } else {
            (num / den).max(1.0)
        };
        for j in 0..d {
            x[j] += sigma * (tx[j] - x[j]);
        }
        out.push(x.clone());
    }
    out
}

#[test]
fn acceptance_reduction_oracle() {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let c = Criterion::begin("reduction equivalence oracle", 30.0);
    let mut rng = StdRng::seed_from_u64(808);
    let mut worst = 0.0f64;
    const INSTANCES: usize = 50;
    const ITERS: usize = 100;
    for _ in 0..INSTANCES {
        let dim = rng.gen_range(2..=8);
        let m_ops = rng.gen_range(2..=6);
        let (cutters, _z) = random_hyperplane_family(&mut rng, dim, m_ops);
        let normals: Vec<Vec<f64>> = cutters
            .iter()
            .map(|c| match c {
                Cutter::Hyperplane(h) => h.normal().as_slice().to_vec(),
                _ => unreachable!(),
            })
            .collect();
        let offsets: Vec<f64> = cutters
            .iter()
            .map(|c| match c {
                Cutter::Hyperplane(h) => h.offset(),
                _ => unreachable!(),
            })
            .collect();
        let problem = FeasibilityProblem::new(cutters).unwrap();
        let x0 = random_vector(&mut rng, dim, 3.0);

        let schedule = Schedule::static_plan(PlanStep::simultaneous(m_ops).unwrap());
        let cfg = SolverConfig {
            lambda: LambdaSchedule::Constant(1.0),
            rule: ExtrapolationRule::Sigma1,
            residual_threshold: None,
            max_iterations: ITERS,
            iterate_stride: Some(1),
            check_ball: false,
            ..SolverConfig::default()
        };
        let result = solve(&problem, &schedule, &cfg, &x0).unwrap();
        let expected = oracle_simultaneous_sigma1(&normals, &offsets, x0.as_slice(), ITERS);
        for (k, oracle_x) in expected.iter().enumerate() {
            let solver_x = result.trace.iterate(k + 1).expect("stride 1");
            let diff = solver_x
                .as_slice()
                .iter()
                .zip(oracle_x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    let ok = worst <= 1e-12;
    c.finish(
        ok,
        format!("{INSTANCES} instances x {ITERS} iterations; max deviation {worst:.2e}"),
    );
}
