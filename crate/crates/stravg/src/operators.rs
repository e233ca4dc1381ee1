//! Cutter operators.
//!
//! A *cutter* is an operator `U` with a nonempty fixed-point set satisfying
//! `<x - Ux, z - Ux> <= 0` for every `x` and every `z` in `Fix U`; metric
//! projections and subgradient projections are the standard examples. All
//! operators here are immutable value transformations: `apply` never mutates
//! internal state, so they can be shared freely across threads.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Absolute tolerance on residuals and inequality slacks. Double precision
/// with modest headroom for accumulation.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// A point counts as fixed when its residual is below `tol * (1 + ||x||)`.
pub fn is_zero_residual(residual: f64, x: &Vector) -> bool {
    residual <= FEASIBILITY_TOL * (1.0 + x.norm())
}

/// The hyperplane `{x | <a, x> = b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperplaneRaw", into = "HyperplaneRaw")]
pub struct Hyperplane {
    normal: Vector,
    offset: f64,
    norm_sq: f64,
}

#[derive(Serialize, Deserialize)]
struct HyperplaneRaw {
    normal: Vector,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        let norm_sq = normal.norm_sq();
        if norm_sq <= 0.0 {
            return Err(Error::ZeroNormal);
        }
        if !offset.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Hyperplane {
            normal,
            offset,
            norm_sq,
        })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    /// Metric projection `x - (<a,x> - b) / ||a||^2 * a`.
    pub fn project(&self, x: &Vector) -> Vector {
        let t = (self.normal.dot(x) - self.offset) / self.norm_sq;
        x.add_scaled(-t, &self.normal)
    }

    /// Point-to-hyperplane distance `|<a,x> - b| / ||a||`.
    pub fn distance(&self, x: &Vector) -> f64 {
        (self.normal.dot(x) - self.offset).abs() / self.norm_sq.sqrt()
    }
}

impl TryFrom<HyperplaneRaw> for Hyperplane {
    type Error = Error;
    fn try_from(raw: HyperplaneRaw) -> Result<Self> {
        Hyperplane::new(raw.normal, raw.offset)
    }
}

impl From<Hyperplane> for HyperplaneRaw {
    fn from(h: Hyperplane) -> Self {
        HyperplaneRaw {
            normal: h.normal,
            offset: h.offset,
        }
    }
}

/// The half-space `{x | <a, x> <= b}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HyperplaneRaw", into = "HyperplaneRaw")]
pub struct Halfspace {
    normal: Vector,
    offset: f64,
    norm_sq: f64,
}

impl Halfspace {
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        let norm_sq = normal.norm_sq();
        if norm_sq <= 0.0 {
            return Err(Error::ZeroNormal);
        }
        if !offset.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Halfspace {
            normal,
            offset,
            norm_sq,
        })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.dim()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.normal.dot(x) <= self.offset
    }

    /// Identity on the half-space, hyperplane projection outside of it.
    pub fn project(&self, x: &Vector) -> Vector {
        let excess = self.normal.dot(x) - self.offset;
        if excess <= 0.0 {
            x.clone()
        } else {
            x.add_scaled(-excess / self.norm_sq, &self.normal)
        }
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        (self.normal.dot(x) - self.offset).max(0.0) / self.norm_sq.sqrt()
    }
}

impl TryFrom<HyperplaneRaw> for Halfspace {
    type Error = Error;
    fn try_from(raw: HyperplaneRaw) -> Result<Self> {
        Halfspace::new(raw.normal, raw.offset)
    }
}

impl From<Halfspace> for HyperplaneRaw {
    fn from(h: Halfspace) -> Self {
        HyperplaneRaw {
            normal: h.normal,
            offset: h.offset,
        }
    }
}

/// The closed ball `{x | ||x - c|| <= r}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BallRaw", into = "BallRaw")]
pub struct Ball {
    center: Vector,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct BallRaw {
    center: Vector,
    radius: f64,
}

impl Ball {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::NegativeRadius(radius));
        }
        Ok(Ball { center, radius })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        let d = x.dist(&self.center);
        if d <= self.radius {
            x.clone()
        } else {
            self.center.step_toward(x, self.radius / d)
        }
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        (x.dist(&self.center) - self.radius).max(0.0)
    }
}

impl TryFrom<BallRaw> for Ball {
    type Error = Error;
    fn try_from(raw: BallRaw) -> Result<Self> {
        Ball::new(raw.center, raw.radius)
    }
}

impl From<Ball> for BallRaw {
    fn from(b: Ball) -> Self {
        BallRaw {
            center: b.center,
            radius: b.radius,
        }
    }
}

/// Parametric convex functions whose subgradient projectors can be stored
/// in a problem file. Custom closures are supported through
/// [`SubgradientProjector::from_oracles`] but cannot be serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SubgradientForm {
    /// `f(x) = max_i (<a_i, x> - b_i)`; ties pick the lowest index so that
    /// traces are reproducible.
    MaxAffine {
        normals: Vec<Vector>,
        offsets: Vec<f64>,
    },
    /// `f(x) = ||x - c|| - r`, the signed distance beyond a ball.
    BallDistance { center: Vector, radius: f64 },
}

type ValueFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type SubgradientFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Subgradient projection for a continuous convex `f` with `{f <= 0}`
/// nonempty: identity where `f(x) <= 0`, otherwise
/// `x - f(x) / ||g(x)||^2 * g(x)` for the fixed subgradient `g(x)`.
#[derive(Clone)]
pub struct SubgradientProjector {
    value: ValueFn,
    subgradient: SubgradientFn,
    dim: usize,
    form: Option<SubgradientForm>,
}

impl SubgradientProjector {
    /// Wraps caller-supplied oracles. The resulting operator cannot be
    /// serialized; use the parametric constructors for storable problems.
    pub fn from_oracles<F, G>(dim: usize, value: F, subgradient: G) -> Self
    where
        F: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        SubgradientProjector {
            value: Arc::new(value),
            subgradient: Arc::new(subgradient),
            dim,
            form: None,
        }
    }

    /// `f(x) = max_i (<a_i, x> - b_i)` with the lowest maximizing index
    /// supplying the subgradient.
    pub fn max_affine(normals: Vec<Vector>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(Error::InvalidWeights(
                "max_affine requires matching, nonempty normals and offsets".into(),
            ));
        }
        let dim = normals[0].dim();
        for a in &normals {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.dim(),
                });
            }
            if a.norm_sq() <= 0.0 {
                return Err(Error::ZeroNormal);
            }
        }
        let form = SubgradientForm::MaxAffine {
            normals: normals.clone(),
            offsets: offsets.clone(),
        };
        let normals2 = normals.clone();
        let offsets2 = offsets.clone();
        Ok(SubgradientProjector {
            value: Arc::new(move |x: &Vector| {
                normals
                    .iter()
                    .zip(&offsets)
                    .map(|(a, b)| a.dot(x) - b)
                    .fold(f64::NEG_INFINITY, f64::max)
            }),
            subgradient: Arc::new(move |x: &Vector| {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, (a, b)) in normals2.iter().zip(&offsets2).enumerate() {
                    let v = a.dot(x) - b;
                    if v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
                normals2[best].clone()
            }),
            dim,
            form: Some(form),
        })
    }

    /// `f(x) = ||x - c|| - r`.
    pub fn ball_distance(center: Vector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::NegativeRadius(radius));
        }
        let dim = center.dim();
        let form = SubgradientForm::BallDistance {
            center: center.clone(),
            radius,
        };
        let c1 = center.clone();
        let c2 = center;
        Ok(SubgradientProjector {
            value: Arc::new(move |x: &Vector| x.dist(&c1) - radius),
            subgradient: Arc::new(move |x: &Vector| {
                let d = x.dist(&c2);
                if d > 0.0 {
                    (x - &c2).scale(1.0 / d)
                } else {
                    Vector::zeros(x.dim())
                }
            }),
            dim,
            form: Some(form),
        })
    }

    pub fn from_form(form: SubgradientForm) -> Result<Self> {
        match form {
            SubgradientForm::MaxAffine { normals, offsets } => {
                SubgradientProjector::max_affine(normals, offsets)
            }
            SubgradientForm::BallDistance { center, radius } => {
                SubgradientProjector::ball_distance(center, radius)
            }
        }
    }

    pub fn form(&self) -> Option<&SubgradientForm> {
        self.form.as_ref()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn subgradient_at(&self, x: &Vector) -> Vector {
        (self.subgradient)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Panics if the oracle returns a zero subgradient at a point with
    /// `f(x) > 0`, which violates the subgradient inequality for any
    /// function with a nonempty sublevel set.
    pub fn project(&self, x: &Vector) -> Vector {
        let fx = (self.value)(x);
        if fx <= 0.0 {
            return x.clone();
        }
        let g = (self.subgradient)(x);
        let g_norm_sq = g.norm_sq();
        assert!(
            g_norm_sq > 0.0,
            "invalid subgradient oracle: zero subgradient where f(x) = {fx} > 0"
        );
        x.add_scaled(-fx / g_norm_sq, &g)
    }

    /// Exact distance to the fixed-point set, available only for the ball
    /// distance form where `f` already is that distance.
    pub fn exact_distance(&self, x: &Vector) -> Option<f64> {
        match &self.form {
            Some(SubgradientForm::BallDistance { .. }) => Some(self.value(x).max(0.0)),
            _ => None,
        }
    }
}

impl fmt::Debug for SubgradientProjector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubgradientProjector")
            .field("dim", &self.dim)
            .field("form", &self.form)
            .finish()
    }
}

/// A cutter operator together with its fixed-point-set metadata.
#[derive(Clone, Debug)]
pub enum Cutter {
    Hyperplane(Hyperplane),
    Halfspace(Halfspace),
    Ball(Ball),
    Subgradient(SubgradientProjector),
    /// Generalized relaxation `x + alpha (Ux - x)`. For `alpha` in `(0, 2)`
    /// the fixed-point set is unchanged; outside `(0, 2)` the operator is
    /// kept but its fixed-set metadata is dropped.
    Relaxed { alpha: f64, inner: Box<Cutter> },
}

impl Cutter {
    pub fn kind(&self) -> &'static str {
        match self {
            Cutter::Hyperplane(_) => "hyperplane",
            Cutter::Halfspace(_) => "halfspace",
            Cutter::Ball(_) => "ball",
            Cutter::Subgradient(_) => "subgradient",
            Cutter::Relaxed { .. } => "relaxed",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cutter::Hyperplane(h) => h.dim(),
            Cutter::Halfspace(h) => h.dim(),
            Cutter::Ball(b) => b.dim(),
            Cutter::Subgradient(p) => p.dim(),
            Cutter::Relaxed { inner, .. } => inner.dim(),
        }
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        assert_eq!(self.dim(), x.dim(), "apply: dimension mismatch");
        match self {
            Cutter::Hyperplane(h) => h.project(x),
            Cutter::Halfspace(h) => h.project(x),
            Cutter::Ball(b) => b.project(x),
            Cutter::Subgradient(p) => p.project(x),
            Cutter::Relaxed { alpha, inner } => {
                let ux = inner.apply(x);
                x.step_toward(&ux, *alpha)
            }
        }
    }

    pub fn residual(&self, x: &Vector) -> f64 {
        self.apply(x).dist(x)
    }

    /// Exact distance to the fixed-point set, when the geometry admits one.
    pub fn exact_distance(&self, x: &Vector) -> Option<f64> {
        match self {
            Cutter::Hyperplane(h) => Some(h.distance(x)),
            Cutter::Halfspace(h) => Some(h.distance(x)),
            Cutter::Ball(b) => Some(b.distance(x)),
            Cutter::Subgradient(p) => p.exact_distance(x),
            Cutter::Relaxed { alpha, inner } => {
                if *alpha > 0.0 && *alpha < 2.0 {
                    inner.exact_distance(x)
                } else {
                    None
                }
            }
        }
    }

    /// Linear-regularity constant `delta` with
    /// `delta * d(x, Fix U) <= ||Ux - x||`. Metric projections are exactly
    /// 1-linearly regular; a constant relaxation scales the constant.
    pub fn linear_regularity(&self) -> Option<f64> {
        match self {
            Cutter::Hyperplane(_) | Cutter::Halfspace(_) | Cutter::Ball(_) => Some(1.0),
            Cutter::Subgradient(p) => match p.form {
                Some(SubgradientForm::BallDistance { .. }) => Some(1.0),
                _ => None,
            },
            Cutter::Relaxed { alpha, inner } => {
                if *alpha > 0.0 && *alpha < 2.0 {
                    inner.linear_regularity().map(|d| alpha * d)
                } else {
                    None
                }
            }
        }
    }

    /// `alpha`-relaxation `x + alpha (Ux - x)`. Requires `alpha > 0`.
    pub fn relax(self, alpha: f64) -> Result<Cutter> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidRelaxation(alpha));
        }
        Ok(Cutter::Relaxed {
            alpha,
            inner: Box::new(self),
        })
    }

    pub fn is_fixed(&self, x: &Vector) -> bool {
        is_zero_residual(self.residual(x), x)
    }

    pub fn to_spec(&self) -> Result<CutterSpec> {
        Ok(match self {
            Cutter::Hyperplane(h) => CutterSpec::Hyperplane {
                normal: h.normal.clone(),
                offset: h.offset,
            },
            Cutter::Halfspace(h) => CutterSpec::Halfspace {
                normal: h.normal.clone(),
                offset: h.offset,
            },
            Cutter::Ball(b) => CutterSpec::Ball {
                center: b.center.clone(),
                radius: b.radius,
            },
            Cutter::Subgradient(p) => match &p.form {
                Some(form) => CutterSpec::Subgradient { form: form.clone() },
                None => {
                    return Err(Error::NotSerializable(
                        "subgradient projector built from custom oracles".into(),
                    ))
                }
            },
            Cutter::Relaxed { alpha, inner } => CutterSpec::Relaxed {
                alpha: *alpha,
                inner: Box::new(inner.to_spec()?),
            },
        })
    }

    pub fn from_spec(spec: CutterSpec) -> Result<Cutter> {
        Ok(match spec {
            CutterSpec::Hyperplane { normal, offset } => {
                Cutter::Hyperplane(Hyperplane::new(normal, offset)?)
            }
            CutterSpec::Halfspace { normal, offset } => {
                Cutter::Halfspace(Halfspace::new(normal, offset)?)
            }
            CutterSpec::Ball { center, radius } => Cutter::Ball(Ball::new(center, radius)?),
            CutterSpec::Subgradient { form } => {
                Cutter::Subgradient(SubgradientProjector::from_form(form)?)
            }
            CutterSpec::Relaxed { alpha, inner } => {
                Cutter::from_spec(*inner)?.relax(alpha)?
            }
        })
    }
}

/// Storable description of a cutter: a kind tag plus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutterSpec {
    Hyperplane { normal: Vector, offset: f64 },
    Halfspace { normal: Vector, offset: f64 },
    Ball { center: Vector, radius: f64 },
    Subgradient { form: SubgradientForm },
    Relaxed { alpha: f64, inner: Box<CutterSpec> },
}

/// Per-sample slacks of the two equivalent strong-quasi-nonexpansiveness
/// inequalities. Nonnegative slack (up to tolerance) means the inequality
/// holds for that sample.
#[derive(Clone, Debug)]
pub struct SqneSample {
    /// `||x-z||^2 - rho ||Ux-x||^2 - ||Ux-z||^2`
    pub slack_sqne: f64,
    /// `<z-x, Ux-x> - (1+rho)/2 ||Ux-x||^2`
    pub slack_inner: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct SqneReport {
    pub rho: f64,
    pub samples: Vec<SqneSample>,
    pub min_slack_sqne: f64,
    pub min_slack_inner: f64,
    /// Samples whose slack falls below `-tol`.
    pub violations: usize,
}

/// Checks the modulus-`rho` strong quasi-nonexpansiveness of `op` on the
/// given `(x, z)` samples. Every `z` must lie in the fixed-point set (within
/// the zero-residual guard), otherwise the sample set is rejected.
pub fn check_sqne(
    op: &Cutter,
    rho: f64,
    samples: &[(Vector, Vector)],
    tol: f64,
) -> Result<SqneReport> {
    let mut out = Vec::with_capacity(samples.len());
    let mut min_sqne = f64::INFINITY;
    let mut min_inner = f64::INFINITY;
    let mut violations = 0;
    for (x, z) in samples {
        let z_residual = op.residual(z);
        if !is_zero_residual(z_residual, z) {
            return Err(Error::NotFixedPoint {
                residual: z_residual,
                tol: FEASIBILITY_TOL * (1.0 + z.norm()),
            });
        }
        let ux = op.apply(x);
        let residual_sq = ux.dist_sq(x);
        let slack_sqne = x.dist_sq(z) - rho * residual_sq - ux.dist_sq(z);
        let inner = (z - x).dot(&(&ux - x));
        let slack_inner = inner - 0.5 * (1.0 + rho) * residual_sq;
        if slack_sqne < -tol || slack_inner < -tol {
            violations += 1;
        }
        min_sqne = min_sqne.min(slack_sqne);
        min_inner = min_inner.min(slack_inner);
        out.push(SqneSample {
            slack_sqne,
            slack_inner,
            residual: residual_sq.sqrt(),
        });
    }
    Ok(SqneReport {
        rho,
        samples: out,
        min_slack_sqne: min_sqne,
        min_slack_inner: min_inner,
        violations,
    })
}
