//! Feasibility problems: a family of cutters whose fixed-point sets should
//! intersect, plus optional metadata (a known feasible point, a family
//! linear-regularity constant).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{is_zero_residual, Cutter, CutterSpec, Hyperplane};
use crate::vector::Vector;

#[derive(Clone, Debug)]
pub struct FeasibilityProblem {
    cutters: Vec<Cutter>,
    feasible_point: Option<Vector>,
    kappa: Option<f64>,
    all_exact: bool,
}

impl FeasibilityProblem {
    pub fn new(cutters: Vec<Cutter>) -> Result<Self> {
        if cutters.is_empty() {
            return Err(Error::EmptyProblem);
        }
        let dim = cutters[0].dim();
        for c in &cutters {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
        }
        // Distance-oracle availability is structural; probe it once.
        let probe = Vector::zeros(dim);
        let all_exact = cutters.iter().all(|c| c.exact_distance(&probe).is_some());
        Ok(FeasibilityProblem {
            cutters,
            feasible_point: None,
            kappa: None,
            all_exact,
        })
    }

    /// Attaches a known point of the intersection. The point must be fixed
    /// by every operator (within the zero-residual guard).
    pub fn with_feasible_point(mut self, z: Vector) -> Result<Self> {
        if z.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.dim(),
            });
        }
        for c in &self.cutters {
            let r = c.residual(&z);
            if !is_zero_residual(r, &z) {
                return Err(Error::NotFixedPoint {
                    residual: r,
                    tol: crate::operators::FEASIBILITY_TOL * (1.0 + z.norm()),
                });
            }
        }
        self.feasible_point = Some(z);
        Ok(self)
    }

    /// Declares a family linear-regularity constant
    /// `d(x, C) <= kappa * max_i d(x, C_i)`.
    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 1.0) {
            return Err(Error::InconsistentConstants(format!(
                "kappa must be >= 1, got {kappa}"
            )));
        }
        self.kappa = Some(kappa);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.cutters[0].dim()
    }

    pub fn len(&self) -> usize {
        self.cutters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutters.is_empty()
    }

    pub fn cutters(&self) -> &[Cutter] {
        &self.cutters
    }

    pub fn feasible_point(&self) -> Option<&Vector> {
        self.feasible_point.as_ref()
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn residuals(&self, x: &Vector) -> Vec<f64> {
        self.cutters.iter().map(|c| c.residual(x)).collect()
    }

    pub fn max_residual(&self, x: &Vector) -> f64 {
        self.cutters
            .iter()
            .map(|c| c.residual(x))
            .fold(0.0, f64::max)
    }

    pub fn all_exact_distance(&self) -> bool {
        self.all_exact
    }

    /// `min_i delta_i` when every operator declares a linear-regularity
    /// constant.
    pub fn min_delta(&self) -> Option<f64> {
        self.cutters
            .iter()
            .map(Cutter::linear_regularity)
            .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
    }

    /// All operators are hyperplane projections, i.e. the intersection is an
    /// affine subspace.
    pub fn is_affine(&self) -> bool {
        self.cutters
            .iter()
            .all(|c| matches!(c, Cutter::Hyperplane(_)))
    }

    pub fn hyperplanes(&self) -> Option<Vec<&Hyperplane>> {
        self.cutters
            .iter()
            .map(|c| match c {
                Cutter::Hyperplane(h) => Some(h),
                _ => None,
            })
            .collect()
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            cutters: self
                .cutters
                .iter()
                .map(Cutter::to_spec)
                .collect::<Result<_>>()?,
            feasible_point: self.feasible_point.clone(),
            kappa: self.kappa,
        })
    }

    pub fn from_spec(spec: ProblemSpec) -> Result<Self> {
        let cutters = spec
            .cutters
            .into_iter()
            .map(Cutter::from_spec)
            .collect::<Result<Vec<_>>>()?;
        let mut problem = FeasibilityProblem::new(cutters)?;
        if let Some(z) = spec.feasible_point {
            problem = problem.with_feasible_point(z)?;
        }
        if let Some(k) = spec.kappa {
            problem = problem.with_kappa(k)?;
        }
        Ok(problem)
    }
}

/// Storable description of a problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub cutters: Vec<CutterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_point: Option<Vector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

/// Two lines through the origin in the plane: the horizontal axis and a line
/// at `theta_deg` degrees. A standard small certification family; its exact
/// regularity constant is `1 / sin(theta/2)`.
pub fn plane_angle_problem(theta_deg: f64) -> Result<FeasibilityProblem> {
    let theta = theta_deg.to_radians();
    let cutters = vec![
        Cutter::Hyperplane(Hyperplane::new(Vector::new(vec![0.0, 1.0])?, 0.0)?),
        Cutter::Hyperplane(Hyperplane::new(
            Vector::new(vec![-theta.sin(), theta.cos()])?,
            0.0,
        )?),
    ];
    FeasibilityProblem::new(cutters)?.with_feasible_point(Vector::zeros(2))
}
