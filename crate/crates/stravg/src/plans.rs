//! String-averaging plans and periodic controls.
//!
//! A *string* is an ordered list of operator indices; the string operator is
//! the composition of the operators along it. A plan step is a convex
//! combination of string operators `T = sum_n w_n Q_n`. A schedule supplies
//! one plan step per iteration and is periodic by construction. Operator
//! indices are 0-based everywhere, including configuration files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Cutter;
use crate::vector::Vector;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Ordered, nonempty list of operator indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct StringSpec(Vec<usize>);

impl StringSpec {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidString("a string must be nonempty".into()));
        }
        Ok(StringSpec(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for StringSpec {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        StringSpec::new(v)
    }
}

impl From<StringSpec> for Vec<usize> {
    fn from(s: StringSpec) -> Self {
        s.0
    }
}

/// One iteration's family of strings with convex weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanStepRaw", into = "PlanStepRaw")]
pub struct PlanStep {
    strings: Vec<StringSpec>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlanStepRaw {
    strings: Vec<StringSpec>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

impl PlanStep {
    pub fn new(strings: Vec<StringSpec>, weights: Vec<f64>) -> Result<Self> {
        if strings.is_empty() {
            return Err(Error::InvalidString(
                "a plan step needs at least one string".into(),
            ));
        }
        if weights.len() != strings.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} strings",
                weights.len(),
                strings.len()
            )));
        }
        let mut sum = 0.0;
        for &w in &weights {
            if !(w.is_finite() && w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidWeights(format!(
                    "weight {w} outside (0, 1]"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(PlanStep { strings, weights })
    }

    /// Uniform weights `1/N`.
    pub fn uniform(strings: Vec<StringSpec>) -> Result<Self> {
        let n = strings.len();
        if n == 0 {
            return Err(Error::InvalidString(
                "a plan step needs at least one string".into(),
            ));
        }
        // Make the weights sum to exactly 1.0: assign 1/n everywhere and
        // absorb the rounding remainder into the last entry.
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let partial: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - partial;
        PlanStep::new(strings, weights)
    }

    /// All-singleton strings `(0), (1), ..., (M-1)`: the simultaneous shape.
    pub fn simultaneous(operator_count: usize) -> Result<Self> {
        let strings = (0..operator_count)
            .map(|i| StringSpec::new(vec![i]))
            .collect::<Result<Vec<_>>>()?;
        PlanStep::uniform(strings)
    }

    /// One full-length string `(0, 1, ..., M-1)`: the cyclic shape.
    pub fn cyclic(operator_count: usize) -> Result<Self> {
        let s = StringSpec::new((0..operator_count).collect())?;
        PlanStep::new(vec![s], vec![1.0])
    }

    pub fn strings(&self) -> &[StringSpec] {
        &self.strings
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The block `I_k`: sorted union of all string indices.
    pub fn block(&self) -> Vec<usize> {
        let mut block: Vec<usize> = self
            .strings
            .iter()
            .flat_map(|s| s.indices().iter().copied())
            .collect();
        block.sort_unstable();
        block.dedup();
        block
    }

    /// `m_k`, the longest string length in this step.
    pub fn max_string_len(&self) -> usize {
        self.strings.iter().map(StringSpec::len).max().unwrap_or(0)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_single_string(&self) -> bool {
        self.strings.len() == 1
    }

    pub fn all_singletons(&self) -> bool {
        self.strings.iter().all(|s| s.len() == 1)
    }

    pub fn validate_indices(&self, operator_count: usize) -> Result<()> {
        for s in &self.strings {
            for &i in s.indices() {
                if i >= operator_count {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        count: operator_count,
                    });
                }
            }
        }
        Ok(())
    }
}

impl TryFrom<PlanStepRaw> for PlanStep {
    type Error = Error;
    fn try_from(raw: PlanStepRaw) -> Result<Self> {
        match raw.weights {
            Some(w) => PlanStep::new(raw.strings, w),
            None => PlanStep::uniform(raw.strings),
        }
    }
}

impl From<PlanStep> for PlanStepRaw {
    fn from(step: PlanStep) -> Self {
        PlanStepRaw {
            strings: step.strings,
            weights: Some(step.weights),
        }
    }
}

/// Splits `0..operator_count` into `ceil(M/m)` consecutive strings with
/// lengths as equal as possible, longer strings first. For 835 operators and
/// target length 10 this yields 79 strings of length 10 followed by 5 of
/// length 9.
pub fn partition_consecutive(operator_count: usize, target_len: usize) -> Vec<StringSpec> {
    assert!(operator_count >= 1 && target_len >= 1);
    let n = operator_count.div_ceil(target_len);
    let base = operator_count / n;
    let longer = operator_count % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for k in 0..n {
        let len = if k < longer { base + 1 } else { base };
        out.push(StringSpec::new((start..start + len).collect()).expect("nonempty"));
        start += len;
    }
    debug_assert_eq!(start, operator_count);
    out
}

/// Evaluation of one string at a point: all intermediate prefix points
/// `Q_{n,0} x = x, Q_{n,1} x, ..., Q_{n,m_n} x`. Every extrapolation variant
/// consumes the increments, so the prefixes are always materialized.
#[derive(Clone, Debug)]
pub struct StringApplication {
    pub prefixes: Vec<Vector>,
}

impl StringApplication {
    pub fn endpoint(&self) -> &Vector {
        self.prefixes.last().expect("nonempty prefixes")
    }

    /// `||Q_n x - x||^2`
    pub fn displacement_sq(&self) -> f64 {
        self.endpoint().dist_sq(&self.prefixes[0])
    }

    /// `sum_l ||Q_{n,l} x - Q_{n,l-1} x||^2`
    pub fn increments_sq(&self) -> f64 {
        self.prefixes
            .windows(2)
            .map(|w| w[1].dist_sq(&w[0]))
            .sum()
    }

    pub fn string_len(&self) -> usize {
        self.prefixes.len() - 1
    }
}

/// Applies the string operator `Q = U_{i_m} ... U_{i_1}` and records all
/// prefix points.
pub fn apply_string(string: &StringSpec, ops: &[Cutter], x: &Vector) -> StringApplication {
    let mut prefixes = Vec::with_capacity(string.len() + 1);
    prefixes.push(x.clone());
    for &i in string.indices() {
        let next = ops[i].apply(prefixes.last().expect("nonempty"));
        prefixes.push(next);
    }
    StringApplication { prefixes }
}

/// Evaluation of a full plan step: `Tx` plus per-string results.
#[derive(Clone, Debug)]
pub struct StepApplication {
    pub x: Vector,
    pub tx: Vector,
    pub strings: Vec<StringApplication>,
}

impl StepApplication {
    /// `||Tx - x||^2`
    pub fn residual_sq(&self) -> f64 {
        self.tx.dist_sq(&self.x)
    }

    /// `sum_n w_n ||Q_n x - x||^2`
    pub fn weighted_displacement_sq(&self, weights: &[f64]) -> f64 {
        self.strings
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s.displacement_sq())
            .sum()
    }

    /// `sum_n w_n sum_l ||Q_{n,l} x - Q_{n,l-1} x||^2`
    pub fn weighted_increments_sq(&self, weights: &[f64]) -> f64 {
        self.strings
            .iter()
            .zip(weights)
            .map(|(s, w)| w * s.increments_sq())
            .sum()
    }

    /// Largest plain (unweighted) string residual; used by the degeneracy
    /// guard.
    pub fn max_string_residual(&self) -> f64 {
        self.strings
            .iter()
            .map(|s| s.displacement_sq().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Applies `T = sum_n w_n Q_n`. The reduction runs in ascending string
/// order, so the result does not depend on how the strings were evaluated.
pub fn apply_plan_step(step: &PlanStep, ops: &[Cutter], x: &Vector) -> StepApplication {
    let strings: Vec<StringApplication> = step
        .strings()
        .iter()
        .map(|s| apply_string(s, ops, x))
        .collect();
    let mut tx = Vector::zeros(x.dim());
    for (app, &w) in strings.iter().zip(step.weights()) {
        tx = tx.add_scaled(w, app.endpoint());
    }
    StepApplication {
        x: x.clone(),
        tx,
        strings,
    }
}

/// How a schedule was declared; purely descriptive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Static,
    CyclicBlocks,
    Explicit,
}

/// A periodic control: one plan step per iteration, repeating with the
/// declared period. Built through the validating constructors; nonempty by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    kind: ControlKind,
    steps: Vec<PlanStep>,
}

impl Schedule {
    /// The same step at every iteration.
    pub fn static_plan(step: PlanStep) -> Self {
        Schedule {
            kind: ControlKind::Static,
            steps: vec![step],
        }
    }

    /// Rotates through the given blocks.
    pub fn cyclic_blocks(steps: Vec<PlanStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig("empty block list".into()));
        }
        Ok(Schedule {
            kind: ControlKind::CyclicBlocks,
            steps,
        })
    }

    /// Explicit periodic step list. When `period` is given it must match the
    /// list length.
    pub fn explicit(steps: Vec<PlanStep>, period: Option<usize>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidConfig("empty step list".into()));
        }
        if let Some(p) = period {
            if p != steps.len() {
                return Err(Error::InvalidConfig(format!(
                    "declared period {p} does not match {} steps",
                    steps.len()
                )));
            }
        }
        Ok(Schedule {
            kind: ControlKind::Explicit,
            steps,
        })
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn period(&self) -> usize {
        self.steps.len()
    }

    pub fn step_at(&self, k: usize) -> &PlanStep {
        &self.steps[k % self.steps.len()]
    }

    pub fn steps(&self) -> &[PlanStep] {
        &self.steps
    }

    /// `m = sup_k m_k` over one period.
    pub fn max_string_len(&self) -> usize {
        self.steps
            .iter()
            .map(PlanStep::max_string_len)
            .max()
            .unwrap_or(0)
    }

    /// `w = min_k min_n w_n^k` over one period. Exact for periodic
    /// schedules since the whole control is known.
    pub fn min_weight(&self) -> f64 {
        self.steps
            .iter()
            .map(PlanStep::min_weight)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate_indices(&self, operator_count: usize) -> Result<()> {
        for step in &self.steps {
            step.validate_indices(operator_count)?;
        }
        Ok(())
    }

    /// True iff every window of `s` consecutive blocks covers all of
    /// `0..operator_count`. Windows wrap around the period.
    pub fn is_intermittent(&self, operator_count: usize, s: usize) -> bool {
        if s == 0 {
            return false;
        }
        let p = self.steps.len();
        let blocks: Vec<Vec<usize>> = self.steps.iter().map(PlanStep::block).collect();
        (0..p).all(|k| {
            let mut covered = vec![false; operator_count];
            for l in 0..s.min(p) {
                for &i in &blocks[(k + l) % p] {
                    if i < operator_count {
                        covered[i] = true;
                    }
                }
            }
            covered.iter().all(|&c| c)
        })
    }

    /// Smallest `s` (at most the period) for which the control is
    /// `s`-intermittent, if any.
    pub fn intermittency(&self, operator_count: usize) -> Option<usize> {
        (1..=self.steps.len()).find(|&s| self.is_intermittent(operator_count, s))
    }
}

/// Free-function form of [`Schedule::is_intermittent`].
pub fn validate_intermittent(schedule: &Schedule, operator_count: usize, s: usize) -> bool {
    schedule.is_intermittent(operator_count, s)
}
