//! Extrapolation functionals.
//!
//! For a string-averaging step `T = sum_n w_n Q_n` evaluated at `x`, the
//! envelope
//!
//! ```text
//!           m/(m+1) * sum_n w_n ( ||Q_n x - x||^2 + sum_l ||Q_{n,l}x - Q_{n,l-1}x||^2 )
//! tau(x) = ---------------------------------------------------------------------------
//!                                   ||Tx - x||^2
//! ```
//!
//! (with `tau(x) = 1` on the feasible branch) is the largest step multiplier
//! for which the decrease certificates and rate guarantees hold. The
//! practical functionals `sigma1..sigma4` are cheaper surrogates bounded by
//! the envelope:
//!
//! * `sigma1` — simultaneous shape: weighted displacement over `||Tx-x||^2`,
//! * `sigma2` — cyclic shape: `1/2 + increments / (2 ||Tx-x||^2)`,
//! * `sigma3` — weighted string displacements over `||Tx-x||^2`,
//! * `sigma4` — `(displacements + increments) / (2 ||Tx-x||^2)`; identically
//!   equal to `(m+1)/(2m) * tau`.
//!
//! Evaluated sigma values are clamped into `[1, tau]`; clamp events are
//! reported so traces can log them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::FEASIBILITY_TOL;
use crate::plans::{PlanStep, StepApplication};

/// Which step multiplier to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrapolationRule {
    /// Plain relaxation, `sigma = 1`.
    None,
    Sigma1,
    Sigma2,
    Sigma3,
    Sigma4,
    /// Use the full envelope itself.
    Tau,
}

impl ExtrapolationRule {
    pub fn name(&self) -> &'static str {
        match self {
            ExtrapolationRule::None => "none",
            ExtrapolationRule::Sigma1 => "sigma1",
            ExtrapolationRule::Sigma2 => "sigma2",
            ExtrapolationRule::Sigma3 => "sigma3",
            ExtrapolationRule::Sigma4 => "sigma4",
            ExtrapolationRule::Tau => "tau",
        }
    }
}

/// Denominator and residual guards for the feasible branch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NumericGuard {
    /// The state is declared feasible when
    /// `||Tx - x||^2 < eps_den_coeff * (1 + ||x||^2)`.
    pub eps_den_coeff: f64,
    /// A string residual above `residual_tol * (1 + ||x||)` while the
    /// averaged displacement vanishes signals a degenerate extrapolation.
    pub residual_tol: f64,
}

impl Default for NumericGuard {
    fn default() -> Self {
        NumericGuard {
            eps_den_coeff: 1e-24,
            residual_tol: FEASIBILITY_TOL,
        }
    }
}

enum Branch {
    /// Denominator `||Tx - x||^2` is usable.
    Normal(f64),
    Feasible,
}

fn branch(app: &StepApplication, guard: &NumericGuard) -> Result<Branch> {
    let den = app.residual_sq();
    let eps_den = guard.eps_den_coeff * (1.0 + app.x.norm_sq());
    if den >= eps_den {
        return Ok(Branch::Normal(den));
    }
    let max_residual = app.max_string_residual();
    if max_residual > guard.residual_tol * (1.0 + app.x.norm()) {
        // The strings still move but their average cancels; any
        // extrapolated step would blow up.
        return Err(Error::DegenerateExtrapolation {
            denominator: den,
            residual: max_residual,
        });
    }
    Ok(Branch::Feasible)
}

/// The string-averaging envelope; `1` on the feasible branch.
pub fn tau_string_averaging(
    app: &StepApplication,
    step: &PlanStep,
    guard: &NumericGuard,
) -> Result<f64> {
    match branch(app, guard)? {
        Branch::Feasible => Ok(1.0),
        Branch::Normal(den) => {
            let m = step.max_string_len() as f64;
            let num = app.weighted_displacement_sq(step.weights())
                + app.weighted_increments_sq(step.weights());
            Ok(m / (m + 1.0) * num / den)
        }
    }
}

/// The simultaneous envelope `sum_i w_i ||U_i x - x||^2 / ||Tx - x||^2`.
/// Requires an all-singleton step.
pub fn tau_simultaneous(
    app: &StepApplication,
    step: &PlanStep,
    guard: &NumericGuard,
) -> Result<f64> {
    if !step.all_singletons() {
        return Err(Error::ShapeMismatch {
            rule: "tau_simultaneous",
            expected: "all-singleton",
        });
    }
    match branch(app, guard)? {
        Branch::Feasible => Ok(1.0),
        Branch::Normal(den) => Ok(app.weighted_displacement_sq(step.weights()) / den),
    }
}

/// The cyclic envelope
/// `M/(M+1) * (1 + sum increments / ||Tx - x||^2)`.
/// Requires a single-string step.
pub fn tau_cyclic(app: &StepApplication, step: &PlanStep, guard: &NumericGuard) -> Result<f64> {
    if !step.is_single_string() {
        return Err(Error::ShapeMismatch {
            rule: "tau_cyclic",
            expected: "single-string",
        });
    }
    match branch(app, guard)? {
        Branch::Feasible => Ok(1.0),
        Branch::Normal(den) => {
            let m = step.max_string_len() as f64;
            let increments = app.strings[0].increments_sq();
            Ok(m / (m + 1.0) * (1.0 + increments / den))
        }
    }
}

/// One evaluated step multiplier together with its envelope.
#[derive(Clone, Copy, Debug)]
pub struct SigmaEval {
    /// The value the solver applies: raw sigma clamped into `[1, tau]`.
    pub sigma: f64,
    /// The functional's value before clamping. `sigma4` satisfies
    /// `sigma4 = (m+1)/(2m) * tau` exactly, which may fall below 1 or
    /// (by rounding) fractionally above `tau`.
    pub sigma_raw: f64,
    /// The envelope matching the rule's shape.
    pub tau: f64,
    pub clamped: bool,
    /// Feasible branch: the state is fixed for the current block and
    /// `sigma = tau = 1`.
    pub feasible: bool,
}

/// Evaluates the chosen rule on a step application. Shape preconditions:
/// `sigma1` needs an all-singleton step, `sigma2` a single string.
pub fn evaluate_sigma(
    rule: ExtrapolationRule,
    app: &StepApplication,
    step: &PlanStep,
    guard: &NumericGuard,
) -> Result<SigmaEval> {
    match rule {
        ExtrapolationRule::Sigma1 if !step.all_singletons() => {
            return Err(Error::ShapeMismatch {
                rule: "sigma1",
                expected: "all-singleton",
            })
        }
        ExtrapolationRule::Sigma2 if !step.is_single_string() => {
            return Err(Error::ShapeMismatch {
                rule: "sigma2",
                expected: "single-string",
            })
        }
        _ => {}
    }

    let tau = match rule {
        ExtrapolationRule::Sigma1 => tau_simultaneous(app, step, guard)?,
        ExtrapolationRule::Sigma2 => tau_cyclic(app, step, guard)?,
        _ => tau_string_averaging(app, step, guard)?,
    };

    if let Branch::Feasible = branch(app, guard)? {
        return Ok(SigmaEval {
            sigma: 1.0,
            sigma_raw: 1.0,
            tau: 1.0,
            clamped: false,
            feasible: true,
        });
    }
    let den = app.residual_sq();

    let raw = match rule {
        ExtrapolationRule::None => 1.0,
        ExtrapolationRule::Sigma1 | ExtrapolationRule::Sigma3 => {
            app.weighted_displacement_sq(step.weights()) / den
        }
        ExtrapolationRule::Sigma2 => {
            0.5 + app.strings[0].increments_sq() / (2.0 * den)
        }
        ExtrapolationRule::Sigma4 => {
            (app.weighted_displacement_sq(step.weights())
                + app.weighted_increments_sq(step.weights()))
                / (2.0 * den)
        }
        ExtrapolationRule::Tau => tau,
    };

    let sigma = raw.clamp(1.0, tau.max(1.0));
    Ok(SigmaEval {
        sigma,
        sigma_raw: raw,
        tau,
        clamped: sigma != raw,
        feasible: false,
    })
}

/// The per-step decrease factor
/// `Theta = lambda sigma (1 + m - m lambda sigma/tau) / (1 + m - m/tau)`.
/// Requires `lambda` in `(0, 1 + 1/m)` and `1 <= sigma <= tau`.
pub fn theta(lambda: f64, sigma: f64, tau: f64, m: usize) -> Result<f64> {
    let m_f = m as f64;
    let upper = 1.0 + 1.0 / m_f;
    if !(lambda.is_finite() && lambda > 0.0 && lambda < upper) {
        return Err(Error::LambdaOutOfRange {
            lambda,
            upper,
            m,
        });
    }
    if !(sigma >= 1.0 - 1e-9 && sigma <= tau * (1.0 + 1e-9)) {
        return Err(Error::InvalidConfig(format!(
            "theta requires 1 <= sigma <= tau, got sigma = {sigma}, tau = {tau}"
        )));
    }
    let ls = lambda * sigma;
    Ok(ls * (1.0 + m_f - m_f * ls / tau) / (1.0 + m_f - m_f / tau))
}

/// Lower bound `lambda (1 - lambda m / (1 + m))`, valid whenever
/// `1 <= sigma <= tau`.
pub fn theta_lower_bound(lambda: f64, m: usize) -> f64 {
    let m_f = m as f64;
    lambda * (1.0 - lambda * m_f / (1.0 + m_f))
}
