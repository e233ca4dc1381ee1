//! Convex-feasibility solvers built from cutter operators.
//!
//! The crate implements string-averaging projection methods with
//! extrapolated step sizes: an iteration applies a convex combination of
//! operator compositions ("strings") and stretches the resulting
//! displacement by a state-dependent multiplier bounded by a certified
//! envelope. Alongside the solver it ships
//!
//! * cutter operators (hyperplane / half-space / ball / subgradient
//!   projections, relaxations) with runtime law checks ([`operators`]),
//! * plan and schedule machinery including block controls ([`plans`]),
//! * the extrapolation envelopes and practical functionals
//!   ([`extrapolation`]),
//! * the iteration itself with per-step decrease certificates and Fejer
//!   witnesses ([`solver`]),
//! * regularity-constant estimation, linear-rate bounds and empirical rate
//!   fits ([`analysis`]),
//! * a discrete Radon problem generator with synthetic phantoms
//!   ([`tomography`]).
//!
//! ```
//! use stravg::operators::{Cutter, Hyperplane};
//! use stravg::{solve, ExtrapolationRule, FeasibilityProblem, PlanStep,
//!              Schedule, SolverConfig, Vector};
//!
//! # fn main() -> stravg::Result<()> {
//! // Two orthogonal lines through the origin.
//! let problem = FeasibilityProblem::new(vec![
//!     Cutter::Hyperplane(Hyperplane::new(Vector::new(vec![1.0, 0.0])?, 0.0)?),
//!     Cutter::Hyperplane(Hyperplane::new(Vector::new(vec![0.0, 1.0])?, 0.0)?),
//! ])?
//! .with_feasible_point(Vector::zeros(2))?;
//!
//! // Average both projections each iteration and extrapolate.
//! let schedule = Schedule::static_plan(PlanStep::simultaneous(2)?);
//! let cfg = SolverConfig {
//!     rule: ExtrapolationRule::Sigma1,
//!     ..SolverConfig::default()
//! };
//! let result = solve(&problem, &schedule, &cfg, &Vector::new(vec![2.0, 2.0])?)?;
//!
//! // For an orthogonal pair the extrapolated step is exact.
//! assert_eq!(result.iterations, 1);
//! assert!(result.final_residual_max <= 1e-12);
//! # Ok(())
//! # }
//! ```

pub mod analysis;
pub mod distance;
pub mod error;
pub mod extrapolation;
pub mod operators;
pub mod plans;
pub mod problem;
pub mod solver;
pub mod tomography;
pub mod vector;

pub use error::{Error, Result};
pub use extrapolation::{ExtrapolationRule, NumericGuard};
pub use operators::{Cutter, CutterSpec, Halfspace, Hyperplane, FEASIBILITY_TOL};
pub use plans::{PlanStep, Schedule, StringSpec};
pub use problem::{FeasibilityProblem, ProblemSpec};
pub use solver::{solve, LambdaSchedule, SolveResult, SolverConfig, Termination};
pub use vector::Vector;
