//! Rate analysis: regularity-constant estimation, theoretical rate bounds,
//! empirical rate fits and certificate checks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::distance::distance_to_intersection;
use crate::error::{Error, Result};
use crate::problem::FeasibilityProblem;
use crate::solver::{SolveResult, SolverConfig};
use crate::plans::Schedule;
use crate::vector::Vector;

/// Sampled lower bound on the family linear-regularity constant
/// `kappa` with `d(x, C) <= kappa max_i d(x, C_i)`, plus per-operator
/// regularity ratios. Sampling can only certify a lower bound on the true
/// constant; certificates built from it are optimistic unless an analytic
/// `kappa` is supplied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularityEstimate {
    pub kappa_hat: f64,
    /// Per-operator `min ||U_i x - x|| / d(x, C_i)` over the samples; for
    /// metric projections this is identically 1.
    pub delta_hat: Vec<f64>,
    pub samples_used: usize,
    pub samples_excluded: usize,
    pub center: Vector,
    pub radius: f64,
}

const SAMPLE_EXCLUSION_TOL: f64 = 1e-9;

fn kappa_from_samples<I>(problem: &FeasibilityProblem, points: I, center: &Vector, radius: f64) -> Result<RegularityEstimate>
where
    I: Iterator<Item = Vector>,
{
    let m = problem.len();
    let mut kappa_hat: f64 = 1.0;
    let mut delta_hat = vec![f64::INFINITY; m];
    let mut used = 0usize;
    let mut excluded = 0usize;
    for x in points {
        let dists: Vec<f64> = problem
            .cutters()
            .iter()
            .enumerate()
            .map(|(i, c)| c.exact_distance(&x).ok_or(Error::NoDistanceOracle(i)))
            .collect::<Result<_>>()?;
        let max_d = dists.iter().copied().fold(0.0, f64::max);
        if max_d <= SAMPLE_EXCLUSION_TOL * (1.0 + x.norm()) {
            excluded += 1;
            continue;
        }
        let d_c = distance_to_intersection(problem, &x)?;
        kappa_hat = kappa_hat.max(d_c / max_d);
        for (i, (c, di)) in problem.cutters().iter().zip(&dists).enumerate() {
            if *di > SAMPLE_EXCLUSION_TOL * (1.0 + x.norm()) {
                delta_hat[i] = delta_hat[i].min(c.residual(&x) / di);
            }
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::AllSamplesFeasible);
    }
    // Operators never activated by the sample set report delta = 1.
    for d in &mut delta_hat {
        if !d.is_finite() {
            *d = 1.0;
        }
    }
    Ok(RegularityEstimate {
        kappa_hat,
        delta_hat,
        samples_used: used,
        samples_excluded: excluded,
        center: center.clone(),
        radius,
    })
}

/// Estimates `kappa` over the ball `B(center, radius)` from uniformly
/// sampled points. Requires an exact distance oracle on every operator.
pub fn estimate_kappa(
    problem: &FeasibilityProblem,
    center: &Vector,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RegularityEstimate> {
    let d = problem.dim();
    if center.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: center.dim(),
        });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let samples = (0..n_samples).map(move |_| {
        // Uniform in the ball: normalized Gaussian direction scaled by
        // radius * U^(1/d).
        let g: Vec<f64> = (0..d).map(|_| sample_normal(&mut rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let u: f64 = rng.gen_range(0.0..1.0f64);
        let scale = radius * u.powf(1.0 / d as f64) / norm;
        center.add_scaled(scale, &Vector::new(g).expect("finite"))
    });
    kappa_from_samples(problem, samples, center, radius)
}

fn sample_normal(rng: &mut StdRng) -> f64 {
    // Box-Muller; avoids pulling in a distributions crate for one use.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Deterministic grid variant for low dimensions: `per_axis` points per
/// coordinate over the bounding box of the ball, keeping points inside it.
pub fn estimate_kappa_grid(
    problem: &FeasibilityProblem,
    center: &Vector,
    radius: f64,
    per_axis: usize,
) -> Result<RegularityEstimate> {
    let d = problem.dim();
    if d > 3 {
        return Err(Error::InvalidConfig(format!(
            "grid estimation is intended for dimension <= 3, problem has {d}"
        )));
    }
    if per_axis < 2 {
        return Err(Error::InvalidConfig("need at least 2 points per axis".into()));
    }
    let axis: Vec<f64> = (0..per_axis)
        .map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64)
        .collect();
    let mut points = Vec::new();
    let mut index = vec![0usize; d];
    loop {
        let offset: Vec<f64> = index.iter().map(|&i| axis[i]).collect();
        if offset.iter().map(|v| v * v).sum::<f64>() <= radius * radius {
            points.push(center.add_scaled(1.0, &Vector::new(offset).expect("finite")));
        }
        // Odometer increment over the d-dimensional grid.
        let mut carry = true;
        for slot in index.iter_mut() {
            if carry {
                *slot += 1;
                if *slot == per_axis {
                    *slot = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }
    kappa_from_samples(problem, points.into_iter(), center, radius)
}

/// Inputs for the linear-rate bound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateInputs {
    /// Lower bound on the string weights.
    pub omega: f64,
    /// Upper relaxation bound (at least 1).
    pub lambda_bar: f64,
    /// Longest string length.
    pub m: usize,
    /// Operator linear-regularity constant `min_i delta_i`.
    pub delta: f64,
    /// Family linear-regularity constant.
    pub kappa: f64,
    /// Intermittency of the control.
    pub s: usize,
    /// Infimum of the observed step decrease factors.
    pub inf_theta: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateBound {
    /// Per-iteration contraction factor of the distance to the
    /// intersection: `q = (1 - omega rho delta^2 / (s kappa^2)
    /// * min(1/(omega delta^2), inf_theta))^(1/(2s))`.
    pub q: f64,
    /// `rho = 1/(m lambda_bar) + (1 - lambda_bar)/lambda_bar`.
    pub rho: f64,
    pub inputs: RateInputs,
}

pub fn rate_bound(inputs: RateInputs) -> Result<RateBound> {
    let RateInputs {
        omega,
        lambda_bar,
        m,
        delta,
        kappa,
        s,
        inf_theta,
    } = inputs;
    let m_f = m as f64;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InconsistentConstants(format!(
            "omega {omega} outside (0, 1]"
        )));
    }
    if !(lambda_bar >= 1.0 && lambda_bar < 1.0 + 1.0 / m_f) {
        return Err(Error::InconsistentConstants(format!(
            "lambda_bar {lambda_bar} outside [1, 1 + 1/{m})"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InconsistentConstants(format!(
            "delta {delta} outside (0, 1]"
        )));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InconsistentConstants(format!("kappa {kappa} < 1")));
    }
    if s == 0 {
        return Err(Error::InconsistentConstants("s must be >= 1".into()));
    }
    if !(inf_theta > 0.0 && inf_theta.is_finite()) {
        return Err(Error::InconsistentConstants(format!(
            "inf_theta {inf_theta} must be positive"
        )));
    }
    // The step decrease factor is capped by m kappa^2 / (omega delta^2)
    // whenever kappa and delta really are regularity constants; a larger
    // observed value means the constants are wrong.
    let theta_cap = m_f * kappa * kappa / (omega * delta * delta);
    if inf_theta > theta_cap + 1e-9 {
        return Err(Error::InconsistentConstants(format!(
            "inf_theta {inf_theta} exceeds the admissible envelope {theta_cap}"
        )));
    }
    let rho = 1.0 / (m_f * lambda_bar) + (1.0 - lambda_bar) / lambda_bar;
    let s_f = s as f64;
    let contribution = omega * rho * delta * delta / (s_f * kappa * kappa)
        * (1.0 / (omega * delta * delta)).min(inf_theta);
    let base = 1.0 - contribution;
    if base < 0.0 {
        return Err(Error::InconsistentConstants(format!(
            "rate root argument {base} is negative; the supplied theta \
             exceeds the admissible envelope m kappa^2 / (omega delta^2)"
        )));
    }
    let q = base.powf(1.0 / (2.0 * s_f));
    debug_assert!(q < 1.0);
    Ok(RateBound { q, rho, inputs })
}

/// Assembles the rate inputs realized by a finite run: the weight and string
/// bounds come from the (fully known, periodic) schedule, the relaxation
/// bound from the configuration, and `inf_theta` is the minimum observed
/// value over the trace. A finite trace can only witness the infimum, so
/// certificates built from these inputs describe the executed run.
pub fn rate_inputs_from_run(
    schedule: &Schedule,
    cfg: &SolverConfig,
    result: &SolveResult,
    delta: f64,
    kappa: f64,
) -> RateInputs {
    RateInputs {
        omega: schedule.min_weight(),
        lambda_bar: cfg.lambda_bar(),
        m: schedule.max_string_len(),
        delta,
        kappa,
        s: result.intermittency,
        inf_theta: result.min_theta(),
    }
}

/// Least-squares fit of a geometric decay rate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted per-iteration factor `10^slope`.
    pub q: f64,
    pub slope_log10: f64,
    pub r_squared: f64,
    /// Half-open fit window in iteration indices.
    pub window: (usize, usize),
    /// The quantity hit zero (or went negative) before the end of the
    /// trace; the fit used the positive prefix.
    pub truncated: bool,
}

/// Fits `log10(values[k]) ~ slope * k + intercept` over the tail half of the
/// positive prefix and reports `q = 10^slope`. Needs at least 20 usable
/// points.
pub fn fit_empirical_rate(values: &[f64]) -> Result<RateFit> {
    let usable = values.iter().position(|&v| v <= 0.0).unwrap_or(values.len());
    let truncated = usable < values.len();
    if usable < 20 {
        return Err(Error::TooFewPoints {
            have: usable,
            need: 20,
        });
    }
    let start = usable / 2;
    let window = &values[start..usable];
    let n = window.len() as f64;
    let mean_k = (start..usable).map(|k| k as f64).sum::<f64>() / n;
    let logs: Vec<f64> = window.iter().map(|v| v.log10()).collect();
    let mean_y = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (k, y) in (start..usable).zip(&logs) {
        let dx = k as f64 - mean_k;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::TooFewPoints {
            have: window.len(),
            need: 20,
        });
    }
    let slope = sxy / sxx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(RateFit {
        q: 10f64.powf(slope),
        slope_log10: slope,
        r_squared,
        window: (start, usable),
        truncated,
    })
}

/// Outcome of checking `||x^k - x_inf|| <= 2 d0 q^(k - s + 1) + tol` over
/// the retained iterates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub checked: usize,
    pub violations: usize,
    pub max_violation: f64,
}

pub fn check_rate_certificate(
    result: &SolveResult,
    x_inf: &Vector,
    d0: f64,
    bound: &RateBound,
    tol: f64,
) -> CertificateReport {
    let s = bound.inputs.s as i64;
    let mut violations = 0;
    let mut max_violation: f64 = 0.0;
    let mut checked = 0;
    for (k, x) in &result.trace.iterates {
        let exponent = *k as i64 - s + 1;
        let envelope = 2.0 * d0 * powi_saturating(bound.q, exponent);
        let excess = x.dist(x_inf) - envelope - tol;
        if excess > 0.0 {
            violations += 1;
            max_violation = max_violation.max(excess);
        }
        checked += 1;
    }
    CertificateReport {
        checked,
        violations,
        max_violation,
    }
}

fn powi_saturating(q: f64, e: i64) -> f64 {
    if q == 0.0 && e <= 0 {
        f64::INFINITY
    } else {
        q.powi(e.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }
}

/// Post-hoc check of the residual sandwich on a linearly regular instance:
/// `delta/(2 kappa) ||x^k - x_inf|| <= max_i ||U_i x^k - x^k||
/// <= ||x^k - x_inf||` over the retained iterates, with `x_inf` the final
/// iterate at tight residual.
pub fn check_sandwich(
    result: &SolveResult,
    problem: &FeasibilityProblem,
    delta: f64,
    kappa: f64,
    tol: f64,
) -> CertificateReport {
    let x_inf = &result.final_point;
    let mut violations = 0;
    let mut max_violation: f64 = 0.0;
    let mut checked = 0;
    for (_, x) in &result.trace.iterates {
        let max_residual = problem
            .cutters()
            .iter()
            .map(|c| c.residual(x))
            .fold(0.0, f64::max);
        let error = x.dist(x_inf);
        let lower_excess = delta / (2.0 * kappa) * error - max_residual - tol;
        let upper_excess = max_residual - error - tol;
        let excess = lower_excess.max(upper_excess);
        if excess > 0.0 {
            violations += 1;
            max_violation = max_violation.max(excess);
        }
        checked += 1;
    }
    CertificateReport {
        checked,
        violations,
        max_violation,
    }
}
