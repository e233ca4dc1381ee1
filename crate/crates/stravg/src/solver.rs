//! The extrapolated string-averaging iteration
//! `x^{k+1} = x^k + lambda_k sigma_k(x^k) (T_k x^k - x^k)` with full
//! per-iteration diagnostics.
//!
//! One solve is sequential in `k`; the recursion is inherently serial.
//! Within an iteration the plan-step reduction runs in a fixed order, so a
//! run is exactly reproducible. Solves over different problems share no
//! mutable state and may run concurrently.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distance::{distance_to_intersection, project_intersection};
use crate::error::{Error, Result};
use crate::extrapolation::{
    evaluate_sigma, theta, ExtrapolationRule, NumericGuard, SigmaEval,
};
use crate::plans::{apply_plan_step, PlanStep, Schedule};
use crate::problem::FeasibilityProblem;
use crate::vector::Vector;

/// Relaxation parameters per iteration. A list shorter than the run repeats
/// its last entry.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSchedule {
    Constant(f64),
    PerIteration(Vec<f64>),
}

impl LambdaSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::PerIteration(ls) => {
                *ls.get(k).or_else(|| ls.last()).expect("nonempty list")
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::PerIteration(ls) => {
                ls.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            LambdaSchedule::Constant(l) => *l,
            LambdaSchedule::PerIteration(ls) => {
                ls.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: LambdaSchedule,
    /// Declared relaxation bounds. When present they must bracket every
    /// lambda_k and satisfy `0 < lower <= 1 <= upper < 1 + 1/m`; when absent
    /// the bounds are derived from the schedule itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bounds: Option<(f64, f64)>,
    pub rule: ExtrapolationRule,
    pub max_iterations: usize,
    /// Stop once `max_i ||U_i x - x||` (or the exact distance profile) falls
    /// below this; `None` runs the full iteration budget.
    pub residual_threshold: Option<f64>,
    /// Record `d(x^k, C)` via the distance oracle each iteration. Off by
    /// default: it costs an inner solve per iteration.
    #[serde(default)]
    pub record_dist_c: bool,
    /// Retain every `stride`-th iterate in the trace. Default: every iterate
    /// for dimension <= 4096, every 10th above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterate_stride: Option<usize>,
    /// For affine problems, verify that iterates stay inside the ball
    /// `B(P_C x^0, d(x^0, C))`.
    #[serde(default = "default_true")]
    pub check_ball: bool,
    #[serde(default)]
    pub guard: NumericGuard,
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: LambdaSchedule::Constant(1.0),
            lambda_bounds: None,
            rule: ExtrapolationRule::None,
            max_iterations: 10_000,
            residual_threshold: Some(1e-8),
            record_dist_c: false,
            iterate_stride: None,
            check_ball: true,
            guard: NumericGuard::default(),
        }
    }
}

impl SolverConfig {
    /// Validates the relaxation schedule against the longest string length.
    pub fn validate(&self, max_string_len: usize) -> Result<()> {
        let upper = 1.0 + 1.0 / max_string_len as f64;
        let (lo, hi) = (self.lambda.min(), self.lambda.max());
        if !(lo.is_finite() && lo > 0.0 && hi < upper) {
            return Err(Error::LambdaOutOfRange {
                lambda: if lo <= 0.0 { lo } else { hi },
                upper,
                m: max_string_len,
            });
        }
        if let Some((lb, ub)) = self.lambda_bounds {
            if !(lb > 0.0 && lb <= 1.0 && ub >= 1.0 && ub < upper) {
                return Err(Error::InvalidConfig(format!(
                    "lambda bounds ({lb}, {ub}) must satisfy 0 < lower <= 1 <= upper < {upper}"
                )));
            }
            if lo < lb || hi > ub {
                return Err(Error::InvalidConfig(format!(
                    "lambda schedule range [{lo}, {hi}] escapes declared bounds ({lb}, {ub})"
                )));
            }
        }
        if let Some(thr) = self.residual_threshold {
            if !(thr.is_finite() && thr >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "residual threshold {thr} must be nonnegative"
                )));
            }
        }
        if let Some(stride) = self.iterate_stride {
            if stride == 0 {
                return Err(Error::InvalidConfig("iterate stride must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Effective upper relaxation bound for rate certification,
    /// `max(1, sup_k lambda_k)`.
    pub fn lambda_bar(&self) -> f64 {
        match self.lambda_bounds {
            Some((_, ub)) => ub,
            None => self.lambda.max().max(1.0),
        }
    }
}

/// Per-operator residual view of a state: exact distances when every
/// operator carries a distance oracle, cutter residuals otherwise.
#[derive(Clone, Debug)]
pub struct ResidualProfile {
    pub values: Vec<f64>,
    pub max: f64,
    /// Whether `values` are exact distances.
    pub exact: bool,
}

pub fn residual_profile(problem: &FeasibilityProblem, x: &Vector) -> ResidualProfile {
    let exact = problem.all_exact_distance();
    let values: Vec<f64> = if exact {
        problem
            .cutters()
            .iter()
            .map(|c| c.exact_distance(x).expect("probed above"))
            .collect()
    } else {
        problem.residuals(x)
    };
    let max = values.iter().copied().fold(0.0, f64::max);
    ResidualProfile { values, max, exact }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualMet,
    BudgetExhausted,
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SolverEvent {
    SigmaClamped { k: usize, raw: f64, tau: f64 },
    FeasibleBranch { k: usize },
    DegenerateExtrapolation { k: usize, denominator: f64, residual: f64 },
    NonFiniteIterate { k: usize },
}

/// Diagnostics for one executed iteration. State quantities
/// (`residual_max`, `dist_c`, `log10_ratio`) describe `x^k`; the remaining
/// fields describe the step from `x^k` to `x^{k+1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub residual_max: f64,
    /// Per-operator residual profile at `x^k` (exact distances when
    /// available).
    pub residuals: Vec<f64>,
    /// `||T_k x^k - x^k||`
    pub residual_t: f64,
    pub sigma: f64,
    pub sigma_raw: f64,
    pub tau: f64,
    pub theta: f64,
    pub lambda: f64,
    /// `lambda sigma / tau`: the internal relaxation of the envelope view
    /// `x + lambda' tau (Tx - x)`.
    pub lambda_internal: f64,
    pub step_norm: f64,
    pub dist_c: Option<f64>,
    /// `log10(residual_max(x^k) / residual_max(x^0))`
    pub log10_ratio: f64,
    /// `sum_n w_n ||Q_n x - x||^2`
    pub sum_w_disp_sq: f64,
    /// `sum_n w_n sum_l ||Q_{n,l} x - Q_{n,l-1} x||^2`
    pub sum_w_inc_sq: f64,
    /// `||x^k - z|| - ||x^{k+1} - z||` against the known feasible point.
    pub fejer_slack: Option<f64>,
    pub max_string_len: usize,
    pub clamped: bool,
    pub feasible_branch: bool,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    /// Retained iterates `(k, x^k)` at the configured stride; the initial
    /// and final points are always present.
    pub iterates: Vec<(usize, Vector)>,
    pub residual0: f64,
    /// Whether residual_max columns are exact distances.
    pub exact_residuals: bool,
}

impl Trace {
    pub fn iterate(&self, k: usize) -> Option<&Vector> {
        self.iterates
            .binary_search_by_key(&k, |(i, _)| *i)
            .ok()
            .map(|pos| &self.iterates[pos].1)
    }

    /// Writes the pinned CSV layout: `k, residual_max, residual_T, sigma,
    /// tau, theta, lambda, step_norm[, dist_C], log10_ratio`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let with_dist = self.records.iter().any(|r| r.dist_c.is_some());
        if with_dist {
            writeln!(
                w,
                "k,residual_max,residual_T,sigma,tau,theta,lambda,step_norm,dist_C,log10_ratio"
            )?;
        } else {
            writeln!(
                w,
                "k,residual_max,residual_T,sigma,tau,theta,lambda,step_norm,log10_ratio"
            )?;
        }
        for r in &self.records {
            if with_dist {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    r.k,
                    r.residual_max,
                    r.residual_t,
                    r.sigma,
                    r.tau,
                    r.theta,
                    r.lambda,
                    r.step_norm,
                    r.dist_c.map(|d| d.to_string()).unwrap_or_default(),
                    r.log10_ratio
                )?;
            } else {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    r.k,
                    r.residual_max,
                    r.residual_t,
                    r.sigma,
                    r.tau,
                    r.theta,
                    r.lambda,
                    r.step_norm,
                    r.log10_ratio
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub final_point: Vector,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Trace,
    pub events: Vec<SolverEvent>,
    pub final_residual_max: f64,
    pub final_log10_ratio: f64,
    /// Smallest intermittency constant of the schedule.
    pub intermittency: usize,
    /// Largest observed `||x^k - P_C x^0|| - d(x^0, C)` when the ball check
    /// ran (affine problems only).
    pub max_ball_violation: Option<f64>,
}

impl SolveResult {
    /// Measurement curve `log10(residual_max(x^k) / residual_max(x^0))` for
    /// `k = 0..=iterations`, final state included.
    pub fn curve(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.trace.records.iter().map(|r| r.log10_ratio).collect();
        out.push(self.final_log10_ratio);
        out
    }

    /// Smallest step decrease factor observed along the run.
    pub fn min_theta(&self) -> f64 {
        self.trace
            .records
            .iter()
            .map(|r| r.theta)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            iterations: self.iterations,
            termination: self.termination,
            final_residual_max: self.final_residual_max,
            final_log10_ratio: self.final_log10_ratio,
            residual0: self.trace.residual0,
            exact_residuals: self.trace.exact_residuals,
            min_theta: self.min_theta(),
            clamp_events: self
                .events
                .iter()
                .filter(|e| matches!(e, SolverEvent::SigmaClamped { .. }))
                .count(),
            feasible_branch_events: self
                .events
                .iter()
                .filter(|e| matches!(e, SolverEvent::FeasibleBranch { .. }))
                .count(),
            max_ball_violation: self.max_ball_violation,
            intermittency: self.intermittency,
        }
    }
}

/// JSON-facing summary of a solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub termination: Termination,
    pub final_residual_max: f64,
    pub final_log10_ratio: f64,
    pub residual0: f64,
    pub exact_residuals: bool,
    pub min_theta: f64,
    pub clamp_events: usize,
    pub feasible_branch_events: usize,
    pub max_ball_violation: Option<f64>,
    pub intermittency: usize,
}

fn log10_ratio(value: f64, reference: f64) -> f64 {
    if reference <= 0.0 {
        0.0
    } else {
        (value.max(1e-300) / reference).log10()
    }
}

/// Runs the iteration. The schedule must cover every operator within its
/// period (s-intermittence); the initial point must match the problem
/// dimension.
pub fn solve(
    problem: &FeasibilityProblem,
    schedule: &Schedule,
    cfg: &SolverConfig,
    x0: &Vector,
) -> Result<SolveResult> {
    schedule.validate_indices(problem.len())?;
    let m = schedule.max_string_len();
    cfg.validate(m)?;
    if x0.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x0.dim(),
        });
    }
    let s = schedule
        .intermittency(problem.len())
        .ok_or(Error::NotIntermittent {
            period: schedule.period(),
            s: schedule.period(),
        })?;

    let stride = cfg
        .iterate_stride
        .unwrap_or(if problem.dim() <= 4096 { 1 } else { 10 });

    // Containment ball B(P_C x^0, d(x^0, C)), checked whenever an
    // intersection oracle is available (least-norm solve for affine
    // families, Dykstra for other metric projections).
    let ball = if cfg.check_ball && problem.all_exact_distance() {
        project_intersection(problem, x0).ok().map(|center| {
            let r = center.dist(x0);
            (center, r)
        })
    } else {
        None
    };
    let mut max_ball_violation = ball.as_ref().map(|_| 0.0f64);

    let z = problem.feasible_point();
    let mut x = x0.clone();
    let mut prof = residual_profile(problem, &x);
    let residual0 = prof.max;
    let exact_residuals = prof.exact;

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut iterates: Vec<(usize, Vector)> = vec![(0, x.clone())];
    let mut events: Vec<SolverEvent> = Vec::new();
    let mut termination = Termination::BudgetExhausted;
    let mut iterations = cfg.max_iterations;

    for k in 0..cfg.max_iterations {
        if let Some(threshold) = cfg.residual_threshold {
            if prof.max <= threshold {
                termination = Termination::ResidualMet;
                iterations = k;
                break;
            }
        }
        let step: &PlanStep = schedule.step_at(k);
        let app = apply_plan_step(step, problem.cutters(), &x);
        let eval: SigmaEval = match evaluate_sigma(cfg.rule, &app, step, &cfg.guard) {
            Ok(eval) => eval,
            Err(Error::DegenerateExtrapolation {
                denominator,
                residual,
            }) => {
                events.push(SolverEvent::DegenerateExtrapolation {
                    k,
                    denominator,
                    residual,
                });
                termination = Termination::Degenerate;
                iterations = k;
                break;
            }
            Err(e) => return Err(e),
        };
        let lambda = cfg.lambda.at(k);
        let m_k = step.max_string_len();
        let theta_k = theta(lambda, eval.sigma, eval.tau, m_k)?;

        let next = x.step_toward(&app.tx, lambda * eval.sigma);
        if !next.is_finite() {
            events.push(SolverEvent::NonFiniteIterate { k });
            termination = Termination::Degenerate;
            iterations = k;
            break;
        }

        if let (Some((center, r)), Some(viol)) = (&ball, max_ball_violation.as_mut()) {
            *viol = viol.max(next.dist(center) - *r);
        }

        let dist_c = if cfg.record_dist_c {
            distance_to_intersection(problem, &x).ok()
        } else {
            None
        };

        if eval.clamped {
            events.push(SolverEvent::SigmaClamped {
                k,
                raw: eval.sigma_raw,
                tau: eval.tau,
            });
        }
        if eval.feasible {
            events.push(SolverEvent::FeasibleBranch { k });
        }

        records.push(IterationRecord {
            k,
            residual_max: prof.max,
            residuals: prof.values.clone(),
            residual_t: app.residual_sq().sqrt(),
            sigma: eval.sigma,
            sigma_raw: eval.sigma_raw,
            tau: eval.tau,
            theta: theta_k,
            lambda,
            lambda_internal: lambda * eval.sigma / eval.tau,
            step_norm: next.dist(&x),
            dist_c,
            log10_ratio: log10_ratio(prof.max, residual0),
            sum_w_disp_sq: app.weighted_displacement_sq(step.weights()),
            sum_w_inc_sq: app.weighted_increments_sq(step.weights()),
            fejer_slack: z.map(|z| x.dist(z) - next.dist(z)),
            max_string_len: m_k,
            clamped: eval.clamped,
            feasible_branch: eval.feasible,
        });

        x = next;
        if (k + 1) % stride == 0 {
            iterates.push((k + 1, x.clone()));
        }
        prof = residual_profile(problem, &x);
    }

    if iterates.last().map(|(k, _)| *k) != Some(iterations) {
        // Keep the final point even when the stride skipped it; certificate
        // checks want the last state.
        if iterates.last().map(|(k, _)| *k) < Some(iterations) {
            iterates.push((iterations, x.clone()));
        }
    }

    Ok(SolveResult {
        final_log10_ratio: log10_ratio(prof.max, residual0),
        final_residual_max: prof.max,
        final_point: x,
        iterations,
        termination,
        trace: Trace {
            records,
            iterates,
            residual0,
            exact_residuals,
        },
        events,
        intermittency: s,
        max_ball_violation,
    })
}

/// Which decrease inequality a certificate instantiates. Simultaneous steps
/// admit the stronger `lambda (2 - lambda) sigma` form; single strings use
/// the cyclic form; everything else the general string-averaging form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Simultaneous,
    Cyclic,
    StringAveraging,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationCertificate {
    pub k: usize,
    pub kind: CertificateKind,
    /// Certified decrease, e.g. `Theta * sum_n w_n sum_l ||increment||^2`.
    pub lhs: f64,
    /// Realized decrease `||x^k - z||^2 - ||x^{k+1} - z||^2`.
    pub rhs: f64,
    /// `rhs - lhs`; negative beyond tolerance flags a violation.
    pub slack: f64,
    pub theta: f64,
}

/// Evaluates the applicable decrease certificate at iteration `k` against a
/// feasible point `z`. Requires iterates `k` and `k+1` retained in the
/// trace.
pub fn certify_iteration(
    problem: &FeasibilityProblem,
    schedule: &Schedule,
    result: &SolveResult,
    k: usize,
    z: &Vector,
) -> Result<IterationCertificate> {
    let record = result
        .trace
        .records
        .get(k)
        .ok_or(Error::IterateNotRetained(k))?;
    let xk = result
        .trace
        .iterate(k)
        .ok_or(Error::IterateNotRetained(k))?;
    let xk1 = result
        .trace
        .iterate(k + 1)
        .ok_or(Error::IterateNotRetained(k + 1))?;
    for c in problem.cutters() {
        let r = c.residual(z);
        if !crate::operators::is_zero_residual(r, z) {
            return Err(Error::NotFixedPoint {
                residual: r,
                tol: crate::operators::FEASIBILITY_TOL * (1.0 + z.norm()),
            });
        }
    }

    let step = schedule.step_at(k);
    let (kind, lhs) = if step.all_singletons() {
        let factor = record.lambda * (2.0 - record.lambda) * record.sigma;
        (CertificateKind::Simultaneous, factor * record.sum_w_disp_sq)
    } else if step.is_single_string() {
        (CertificateKind::Cyclic, record.theta * record.sum_w_inc_sq)
    } else {
        (
            CertificateKind::StringAveraging,
            record.theta * record.sum_w_inc_sq,
        )
    };
    let rhs = xk.dist_sq(z) - xk1.dist_sq(z);
    Ok(IterationCertificate {
        k,
        kind,
        lhs,
        rhs,
        slack: rhs - lhs,
        theta: record.theta,
    })
}
