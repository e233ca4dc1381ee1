//! Experiment configuration: a single JSON document describing problems,
//! the method grid and budgets. Every field has a default; the effective
//! configuration (defaults merged with the file and any flag overrides) is
//! echoed into the output directory so runs are self-describing.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stravg::plans::{partition_consecutive, PlanStep};
use stravg::{ExtrapolationRule, LambdaSchedule, Schedule, SolverConfig, Vector};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problems: ProblemSource,
    /// Explicit method cells. When absent and no `grid` is given, the
    /// default benchmark set is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<MethodSpec>>,
    /// Cross-product alternative to `methods`; every combination must be a
    /// valid cell (e.g. `sigma2` only combines with cyclic plans).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<MethodGrid>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Residual stopping threshold; `null` runs the full budget.
    #[serde(default)]
    pub residual_threshold: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Initial point; the zero vector by default.
    #[serde(default)]
    pub x0: InitialPoint,
}

fn default_iterations() -> usize {
    300
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("stravg-out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problems: ProblemSource::default(),
            methods: None,
            grid: None,
            iterations: default_iterations(),
            residual_threshold: None,
            output_dir: default_output_dir(),
            seed: 0,
            x0: InitialPoint::default(),
        }
    }
}

impl ExperimentConfig {
    /// The method cells this configuration describes: explicit list, grid
    /// cross product, or the default benchmark set.
    pub fn method_cells(&self) -> Result<Vec<MethodSpec>, CliError> {
        if let Some(methods) = &self.methods {
            if methods.is_empty() {
                return Err(CliError::Config("empty method list".into()));
            }
            return Ok(methods.clone());
        }
        if let Some(grid) = &self.grid {
            return grid.expand();
        }
        Ok(default_benchmark_methods())
    }
}

/// The standard benchmark grid: simultaneous, cyclic and string-averaging
/// plans, each plain and with its matching extrapolation(s).
pub fn default_benchmark_methods() -> Vec<MethodSpec> {
    let sa = PlanKind::StringAveraging { string_len: 10 };
    vec![
        MethodSpec::new(PlanKind::simultaneous(), ExtrapolationRule::None),
        MethodSpec::new(PlanKind::simultaneous(), ExtrapolationRule::Sigma1),
        MethodSpec::new(PlanKind::cyclic(), ExtrapolationRule::None),
        MethodSpec::new(PlanKind::cyclic(), ExtrapolationRule::Sigma2),
        MethodSpec::new(sa.clone(), ExtrapolationRule::None),
        MethodSpec::new(sa.clone(), ExtrapolationRule::Sigma3),
        MethodSpec::new(sa, ExtrapolationRule::Sigma4),
    ]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    /// Synthetic phantoms through the discrete Radon transform.
    Tomography {
        n: usize,
        angle_count: usize,
        phantom_count: usize,
    },
    /// Stored systems: each path names the JSON header, with the COO
    /// triplets in a sibling `.coo` file.
    SystemFiles { paths: Vec<PathBuf> },
    /// Two lines through the origin in the plane, one problem per angle.
    PlaneAngles { thetas_deg: Vec<f64> },
}

impl Default for ProblemSource {
    fn default() -> Self {
        ProblemSource::Tomography {
            n: 16,
            angle_count: 10,
            phantom_count: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPlan {
    Simultaneous,
    Cyclic,
}

/// Plan selection for one method cell. Accepts the two named shapes, a
/// consecutive-string partition, or a full control description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanKind {
    Named(NamedPlan),
    StringAveraging {
        #[serde(rename = "string_len")]
        string_len: usize,
    },
    Control(ControlConfig),
}

impl PlanKind {
    pub fn simultaneous() -> PlanKind {
        PlanKind::Named(NamedPlan::Simultaneous)
    }

    pub fn cyclic() -> PlanKind {
        PlanKind::Named(NamedPlan::Cyclic)
    }

    pub fn to_schedule(&self, operator_count: usize) -> Result<Schedule, CliError> {
        Ok(match self {
            PlanKind::Named(NamedPlan::Simultaneous) => {
                Schedule::static_plan(PlanStep::simultaneous(operator_count)?)
            }
            PlanKind::Named(NamedPlan::Cyclic) => {
                Schedule::static_plan(PlanStep::cyclic(operator_count)?)
            }
            PlanKind::StringAveraging { string_len } => {
                if *string_len == 0 {
                    return Err(CliError::Config("string_len must be >= 1".into()));
                }
                let strings = partition_consecutive(operator_count, *string_len);
                Schedule::static_plan(PlanStep::uniform(strings)?)
            }
            PlanKind::Control(cfg) => cfg.to_schedule()?,
        })
    }

    pub fn id_fragment(&self) -> String {
        match self {
            PlanKind::Named(NamedPlan::Simultaneous) => "simultaneous".into(),
            PlanKind::Named(NamedPlan::Cyclic) => "cyclic".into(),
            PlanKind::StringAveraging { string_len } => format!("sa{string_len}"),
            PlanKind::Control(_) => "custom".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Static,
    CyclicBlocks,
    Explicit,
}

/// Schedule description in configuration files:
/// `{"control": "static", "strings": [[0,1],[2]], "weights": [0.5, 0.5]}`,
/// `{"control": "cyclic_blocks", "blocks": [...]}` or
/// `{"control": "explicit", "steps": [...], "period": n}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub control: ControlMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strings: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<PlanStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<PlanStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
}

impl ControlConfig {
    pub fn to_schedule(&self) -> Result<Schedule, CliError> {
        match self.control {
            ControlMode::Static => {
                let strings = self
                    .strings
                    .clone()
                    .ok_or_else(|| CliError::Config("static control needs `strings`".into()))?
                    .into_iter()
                    .map(stravg::StringSpec::new)
                    .collect::<Result<Vec<_>, _>>()?;
                let step = match &self.weights {
                    Some(w) => PlanStep::new(strings, w.clone())?,
                    None => PlanStep::uniform(strings)?,
                };
                Ok(Schedule::static_plan(step))
            }
            ControlMode::CyclicBlocks => {
                let blocks = self
                    .blocks
                    .clone()
                    .ok_or_else(|| CliError::Config("cyclic_blocks control needs `blocks`".into()))?;
                Ok(Schedule::cyclic_blocks(blocks)?)
            }
            ControlMode::Explicit => {
                let steps = self
                    .steps
                    .clone()
                    .ok_or_else(|| CliError::Config("explicit control needs `steps`".into()))?;
                Ok(Schedule::explicit(steps, self.period)?)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub plan: PlanKind,
    #[serde(default = "default_rule")]
    pub extrapolation: ExtrapolationRule,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_rule() -> ExtrapolationRule {
    ExtrapolationRule::None
}

fn default_lambda() -> f64 {
    1.0
}

impl MethodSpec {
    pub fn new(plan: PlanKind, extrapolation: ExtrapolationRule) -> Self {
        MethodSpec {
            plan,
            extrapolation,
            lambda: 1.0,
        }
    }

    pub fn id(&self) -> String {
        let mut id = self.plan.id_fragment();
        if self.extrapolation != ExtrapolationRule::None {
            id.push('_');
            id.push_str(self.extrapolation.name());
        }
        if self.lambda != 1.0 {
            id.push_str(&format!("_l{}", self.lambda));
        }
        id
    }

    pub fn solver_config(&self, base: &ExperimentConfig) -> SolverConfig {
        SolverConfig {
            lambda: LambdaSchedule::Constant(self.lambda),
            rule: self.extrapolation,
            max_iterations: base.iterations,
            residual_threshold: base.residual_threshold,
            ..SolverConfig::default()
        }
    }
}

/// Cross-product grid: every plan is combined with every extrapolation and
/// every lambda. Invalid combinations (shape mismatches) are configuration
/// errors caught during validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodGrid {
    pub plans: Vec<PlanKind>,
    pub extrapolations: Vec<ExtrapolationRule>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

fn default_lambdas() -> Vec<f64> {
    vec![1.0]
}

impl MethodGrid {
    pub fn expand(&self) -> Result<Vec<MethodSpec>, CliError> {
        if self.plans.is_empty() || self.extrapolations.is_empty() || self.lambdas.is_empty() {
            return Err(CliError::Config("empty grid dimension".into()));
        }
        let mut out = Vec::new();
        for plan in &self.plans {
            for &extrapolation in &self.extrapolations {
                for &lambda in &self.lambdas {
                    out.push(MethodSpec {
                        plan: plan.clone(),
                        extrapolation,
                        lambda,
                    });
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    #[default]
    Zero,
    #[serde(untagged)]
    Point(Vec<f64>),
}

impl InitialPoint {
    pub fn materialize(&self, dim: usize) -> Result<Vector, CliError> {
        match self {
            InitialPoint::Zero => Ok(Vector::zeros(dim)),
            InitialPoint::Point(values) => {
                if values.len() != dim {
                    return Err(CliError::Config(format!(
                        "initial point has {} entries, problem dimension is {dim}",
                        values.len()
                    )));
                }
                Ok(Vector::new(values.clone())?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_expand_to_benchmark_grid() {
        let cfg = ExperimentConfig::default();
        let cells = cfg.method_cells().unwrap();
        assert_eq!(cells.len(), 7);
        let ids: Vec<String> = cells.iter().map(MethodSpec::id).collect();
        assert_eq!(
            ids,
            vec![
                "simultaneous",
                "simultaneous_sigma1",
                "cyclic",
                "cyclic_sigma2",
                "sa10",
                "sa10_sigma3",
                "sa10_sigma4"
            ]
        );
    }

    #[test]
    fn plan_kinds_parse_from_json() {
        let m: MethodSpec = serde_json::from_str(
            r#"{"plan": "cyclic", "extrapolation": "sigma2"}"#,
        )
        .unwrap();
        assert_eq!(m.id(), "cyclic_sigma2");
        assert_eq!(m.lambda, 1.0);

        let m: MethodSpec =
            serde_json::from_str(r#"{"plan": {"string_len": 5}, "lambda": 0.8}"#).unwrap();
        assert_eq!(m.id(), "sa5_l0.8");

        let m: MethodSpec = serde_json::from_str(
            r#"{"plan": {"control": "static", "strings": [[0,1],[2]]}}"#,
        )
        .unwrap();
        let schedule = m.plan.to_schedule(3).unwrap();
        assert_eq!(schedule.period(), 1);
        assert_eq!(schedule.max_string_len(), 2);
    }

    #[test]
    fn grid_cross_product() {
        let grid = MethodGrid {
            plans: vec![PlanKind::simultaneous(), PlanKind::cyclic()],
            extrapolations: vec![ExtrapolationRule::None],
            lambdas: vec![1.0, 0.5],
        };
        assert_eq!(grid.expand().unwrap().len(), 4);
    }

    #[test]
    fn config_round_trip_with_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.iterations, 300);
        assert!(matches!(
            cfg.problems,
            ProblemSource::Tomography {
                n: 16,
                angle_count: 10,
                phantom_count: 20
            }
        ));
        let echoed = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&echoed).unwrap();
        assert_eq!(back.iterations, cfg.iterations);

        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"unknown_key": 1}"#).is_err());
    }

    #[test]
    fn explicit_control_with_period() {
        let cfg: ControlConfig = serde_json::from_str(
            r#"{
                "control": "explicit",
                "steps": [
                    {"strings": [[0, 1]]},
                    {"strings": [[2]]}
                ],
                "period": 2
            }"#,
        )
        .unwrap();
        let schedule = cfg.to_schedule().unwrap();
        assert_eq!(schedule.period(), 2);
        assert!(schedule.is_intermittent(3, 2));
    }
}
