//! Linear-rate certification pipeline: run a method on a problem with a
//! distance oracle, estimate (or accept) the regularity constants, form the
//! theoretical contraction factor and verify it against the recorded
//! iterates and the fitted empirical rate.

use serde::{Deserialize, Serialize};
use stravg::analysis::{
    check_rate_certificate, estimate_kappa, estimate_kappa_grid, fit_empirical_rate, rate_bound,
    rate_inputs_from_run, RateInputs,
};
use stravg::distance::project_intersection;
use stravg::solver::Termination;
use stravg::{solve, FeasibilityProblem, Schedule, SolverConfig, Vector};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Analytic family regularity constant; skips estimation when given.
    pub kappa: Option<f64>,
    /// Deterministic grid resolution per axis (dimension <= 3 only).
    pub grid_per_axis: Option<usize>,
    /// Random sample count when no grid is requested.
    pub samples: usize,
    pub seed: u64,
    /// Additive tolerance for the per-iterate envelope check.
    pub tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            kappa: None,
            grid_per_axis: None,
            samples: 100_000,
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// Rate certificate for one run. The theoretical factor is an upper
/// envelope for the empirical one; `violations` counts iterates escaping
/// `2 d(x^0, C) q^(k - s + 1)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyReport {
    pub q_theory: f64,
    pub q_emp: Option<f64>,
    pub kappa_hat: f64,
    pub violations: usize,
    pub fit_r2: Option<f64>,
    pub details: CertifyDetails,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertifyDetails {
    /// "analytic" when supplied by the caller, "sampled_lower_bound" when
    /// estimated; estimates can only bound kappa from below, making the
    /// certificate optimistic.
    pub kappa_source: String,
    pub d0: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub checked_iterates: usize,
    pub max_violation: f64,
    pub q_emp_le_q_theory: Option<bool>,
    pub inputs: RateInputs,
    pub rho: f64,
}

/// Runs `schedule`/`cfg` from `x0` and certifies the linear rate. The
/// problem must expose exact per-set distances (for the regularity
/// estimate) and an intersection oracle.
pub fn certify(
    problem: &FeasibilityProblem,
    schedule: &Schedule,
    cfg: &SolverConfig,
    x0: &Vector,
    opts: &CertifyOptions,
) -> Result<CertifyReport, CliError> {
    let mut cfg = cfg.clone();
    cfg.record_dist_c = true;
    cfg.iterate_stride = Some(1);

    let result = solve(problem, schedule, &cfg, x0)?;

    let center = project_intersection(problem, x0)?;
    let d0 = center.dist(x0);

    let (kappa_hat, kappa_source) = match opts.kappa {
        Some(k) => (k, "analytic".to_string()),
        None => {
            let radius = if d0 > 0.0 { d0 } else { 1.0 };
            let estimate = match opts.grid_per_axis {
                Some(per_axis) if problem.dim() <= 3 => {
                    estimate_kappa_grid(problem, &center, radius, per_axis)?
                }
                _ => estimate_kappa(problem, &center, radius, opts.samples, opts.seed)?,
            };
            (estimate.kappa_hat, "sampled_lower_bound".to_string())
        }
    };

    let delta = problem.min_delta().ok_or_else(|| {
        CliError::Config("rate certification needs per-operator regularity constants".into())
    })?;
    let inputs = rate_inputs_from_run(schedule, &cfg, &result, delta, kappa_hat);
    let bound = rate_bound(inputs)?;

    let x_inf = result.final_point.clone();
    let report = check_rate_certificate(&result, &x_inf, d0, &bound, opts.tol);

    let dist_curve: Vec<f64> = result
        .trace
        .records
        .iter()
        .filter_map(|r| r.dist_c)
        .collect();
    let fit = fit_empirical_rate(&dist_curve).ok();

    Ok(CertifyReport {
        q_theory: bound.q,
        q_emp: fit.map(|f| f.q),
        kappa_hat,
        violations: report.violations,
        fit_r2: fit.map(|f| f.r_squared),
        details: CertifyDetails {
            kappa_source,
            d0,
            iterations: result.iterations,
            termination: result.termination,
            checked_iterates: report.checked,
            max_violation: report.max_violation,
            q_emp_le_q_theory: fit.map(|f| f.q <= bound.q),
            inputs,
            rho: bound.rho,
        },
    })
}
