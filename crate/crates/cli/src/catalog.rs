//! Check ids, suites, and the typed options behind each id.

use driftlab::fields::{Background, DriftFamily};
use driftlab::hydro::{
    build_swirl_problem, check_axis_lower_bound, check_dirac_divergence, check_swirl_liouville,
    AxisOptions, DiracOptions, SwirlLiouvilleOptions, SwirlProblem,
};
use driftlab::report::EstimateReport;
use driftlab::verify::*;
use driftlab::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Execution stage. Checks run stage by stage, in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Grids,
    Fields,
    Solves,
    Checks,
}

/// The `[swirl]` table: background velocity and an optional fixed sign.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwirlSection {
    pub background: Option<Background>,
    /// `±1`. Left out, each hydro check uses the sign it is about.
    pub epsilon: Option<f64>,
}

impl SwirlSection {
    fn problem(&self, required: Option<f64>, check: &str) -> Result<SwirlProblem, PlanError> {
        let epsilon = match (self.epsilon, required) {
            (Some(e), Some(r)) if e != r => {
                return Err(PlanError::field(
                    "epsilon",
                    format!("{check} needs epsilon = {r}, the config sets {e}"),
                ))
            }
            (Some(e), _) => e,
            (None, Some(r)) => r,
            (None, None) => 1.0,
        };
        let background = self.background.clone().unwrap_or(Background::Zero);
        build_swirl_problem(background, epsilon).map_err(PlanError::from)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanError {
    pub field: Option<String>,
    pub message: String,
}

impl PlanError {
    fn field(name: &str, message: String) -> Self {
        PlanError {
            field: Some(name.to_string()),
            message,
        }
    }
}

impl From<Error> for PlanError {
    fn from(e: Error) -> Self {
        let field = match &e {
            Error::InvalidParameter { name, .. } => Some(name.to_string()),
            Error::InadmissibleExponents(_) => Some("q".to_string()),
            Error::NodeBudget { .. } => Some("node_budget".to_string()),
            _ => None,
        };
        PlanError {
            field,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for PlanError {
    fn from(e: serde_json::Error) -> Self {
        let message = e.to_string();
        // serde names the offending key in backticks.
        let field = message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("field"))
            .map(str::to_string);
        PlanError { field, message }
    }
}

type Runner = Box<dyn Fn(u64) -> driftlab::Result<EstimateReport> + Send + Sync>;

/// A check with its options resolved and validated, ready to run.
pub struct PlannedCheck {
    pub id: &'static str,
    pub stage: Stage,
    /// The resolved options, as they will appear in the report.
    pub options: Value,
    run: Runner,
}

impl PlannedCheck {
    pub fn run(&self, seed: u64) -> driftlab::Result<EstimateReport> {
        (self.run)(seed)
    }
}

impl std::fmt::Debug for PlannedCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.debug_struct("PlannedCheck")
            .field("id", &self.id)
            .field("stage", &self.stage)
            .finish()
    }
}

type Planner = fn(&Value, &SwirlSection) -> Result<(Value, Runner), PlanError>;

struct CheckSpec {
    id: &'static str,
    stage: Stage,
    plan: Planner,
}

/// Presets overlaid by the user's table, key by key.
fn resolve<O>(preset: O, user: &Value) -> Result<O, PlanError>
where
    O: Serialize + DeserializeOwned,
{
    let mut merged = serde_json::to_value(&preset)?;
    if let (Value::Object(base), Value::Object(over)) = (&mut merged, user) {
        for (k, v) in over {
            base.insert(k.clone(), v.clone());
        }
    }
    Ok(serde_json::from_value(merged)?)
}

fn plan_with<O, V, F>(
    preset: O,
    user: &Value,
    validate: V,
    run: F,
) -> Result<(Value, Runner), PlanError>
where
    O: Serialize + DeserializeOwned + Send + Sync + 'static,
    V: Fn(&O) -> driftlab::Result<()>,
    F: Fn(&O, u64) -> driftlab::Result<EstimateReport> + Send + Sync + 'static,
{
    let opts = resolve(preset, user)?;
    validate(&opts)?;
    let shown = serde_json::to_value(&opts)?;
    Ok((shown, Box::new(move |seed| run(&opts, seed))))
}

fn inward_radial_preset() -> HarnackOptions {
    HarnackOptions {
        coefficients: Coefficients::fixed(
            3,
            Some(DriftFamily::Radial {
                kappa: -2.0,
                center: vec![0.0; 3],
            }),
        ),
        data: DataKind::Mixture,
        trials: 4,
        ladder: vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
        ..Default::default()
    }
}

const CATALOG: &[CheckSpec] = &[
    CheckSpec {
        id: "chain",
        stage: Stage::Grids,
        plan: |u, _| {
            plan_with(
                ChainOptions::default(),
                u,
                ChainOptions::validate,
                check_chain_propagation,
            )
        },
    },
    CheckSpec {
        id: "parabolic-chain",
        stage: Stage::Grids,
        plan: |u, _| {
            plan_with(
                ParabolicChainOptions::default(),
                u,
                ParabolicChainOptions::validate,
                check_parabolic_chain,
            )
        },
    },
    CheckSpec {
        id: "dirac-divergence",
        stage: Stage::Fields,
        plan: |u, swirl| {
            let problem = swirl.problem(None, "dirac-divergence")?;
            plan_with(
                DiracOptions::default(),
                u,
                DiracOptions::validate,
                move |o, _| check_dirac_divergence(&problem, o),
            )
        },
    },
    CheckSpec {
        id: "max-principle",
        stage: Stage::Solves,
        plan: |u, _| {
            plan_with(
                MaxPrincipleOptions::default(),
                u,
                MaxPrincipleOptions::validate,
                check_max_principle,
            )
        },
    },
    CheckSpec {
        id: "parabolic-max-principle",
        stage: Stage::Solves,
        plan: |u, _| {
            plan_with(
                ParabolicMaxPrincipleOptions::default(),
                u,
                ParabolicMaxPrincipleOptions::validate,
                check_parabolic_max_principle,
            )
        },
    },
    CheckSpec {
        id: "slant-frame",
        stage: Stage::Solves,
        plan: |u, _| {
            plan_with(
                SlantFrameOptions::default(),
                u,
                SlantFrameOptions::validate,
                check_slant_frame,
            )
        },
    },
    CheckSpec {
        id: "local-max",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                LocalMaxOptions::default(),
                u,
                LocalMaxOptions::validate,
                check_local_max,
            )
        },
    },
    CheckSpec {
        id: "growth",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                GrowthOptions::default(),
                u,
                GrowthOptions::validate,
                check_growth_lemma,
            )
        },
    },
    CheckSpec {
        id: "oscillation-decay",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                OscillationOptions::default(),
                u,
                OscillationOptions::validate,
                check_oscillation_decay,
            )
        },
    },
    CheckSpec {
        id: "harnack",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                HarnackOptions::default(),
                u,
                HarnackOptions::validate,
                check_harnack,
            )
        },
    },
    CheckSpec {
        id: "harnack-counterexample",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                CounterexampleOptions::default(),
                u,
                CounterexampleOptions::validate,
                check_harnack_counterexample,
            )
        },
    },
    CheckSpec {
        id: "harnack-inward-radial",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                inward_radial_preset(),
                u,
                HarnackOptions::validate,
                check_harnack,
            )
        },
    },
    CheckSpec {
        id: "liouville",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                LiouvilleOptions::default(),
                u,
                LiouvilleOptions::validate,
                liouville_probe,
            )
        },
    },
    CheckSpec {
        id: "parabolic-local-max",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                ParabolicLocalMaxOptions::default(),
                u,
                ParabolicLocalMaxOptions::validate,
                check_parabolic_local_max,
            )
        },
    },
    CheckSpec {
        id: "parabolic-growth",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                ParabolicGrowthOptions::default(),
                u,
                ParabolicGrowthOptions::validate,
                check_parabolic_growth,
            )
        },
    },
    CheckSpec {
        id: "parabolic-oscillation",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                ParabolicOscillationOptions::default(),
                u,
                ParabolicOscillationOptions::validate,
                check_parabolic_oscillation,
            )
        },
    },
    CheckSpec {
        id: "parabolic-harnack",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                ParabolicHarnackOptions::default(),
                u,
                ParabolicHarnackOptions::validate,
                check_parabolic_harnack,
            )
        },
    },
    CheckSpec {
        id: "measure-propagation",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                MeasurePropagationOptions::default(),
                u,
                MeasurePropagationOptions::validate,
                check_measure_propagation,
            )
        },
    },
    CheckSpec {
        id: "parabolic-liouville",
        stage: Stage::Checks,
        plan: |u, _| {
            plan_with(
                ParabolicLiouvilleOptions::default(),
                u,
                ParabolicLiouvilleOptions::validate,
                parabolic_liouville_probe,
            )
        },
    },
    CheckSpec {
        id: "swirl-liouville",
        stage: Stage::Checks,
        plan: |u, swirl| {
            let problem = swirl.problem(Some(-1.0), "swirl-liouville")?;
            plan_with(
                SwirlLiouvilleOptions::default(),
                u,
                SwirlLiouvilleOptions::validate,
                move |o, seed| check_swirl_liouville(&problem, o, seed),
            )
        },
    },
    CheckSpec {
        id: "axis-lower-bound",
        stage: Stage::Checks,
        plan: |u, swirl| {
            let problem = swirl.problem(Some(1.0), "axis-lower-bound")?;
            plan_with(
                AxisOptions::default(),
                u,
                AxisOptions::validate,
                move |o, seed| check_axis_lower_bound(&problem, o, seed),
            )
        },
    },
];

pub const SUITES: &[(&str, &[&str])] = &[
    (
        "elliptic-core",
        &[
            "local-max",
            "growth",
            "oscillation-decay",
            "harnack",
            "max-principle",
        ],
    ),
    (
        "counterexample-radial",
        &["harnack-counterexample", "harnack-inward-radial"],
    ),
    (
        "parabolic-core",
        &[
            "parabolic-local-max",
            "parabolic-growth",
            "parabolic-oscillation",
            "parabolic-harnack",
            "parabolic-max-principle",
            "measure-propagation",
        ],
    ),
    ("chains", &["chain", "parabolic-chain", "slant-frame"]),
    ("liouville", &["liouville", "parabolic-liouville"]),
    (
        "hydro",
        &["dirac-divergence", "swirl-liouville", "axis-lower-bound"],
    ),
];

pub fn check_ids() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|c| c.id)
}

pub fn suite(name: &str) -> Option<&'static [&'static str]> {
    if name == "all" {
        return None;
    }
    SUITES.iter().find(|(n, _)| *n == name).map(|(_, ids)| *ids)
}

pub fn is_suite(name: &str) -> bool {
    name == "all" || suite(name).is_some()
}

fn spec(id: &str) -> Option<(usize, &'static CheckSpec)> {
    CATALOG.iter().enumerate().find(|(_, c)| c.id == id)
}

pub fn is_check(id: &str) -> bool {
    spec(id).is_some()
}

/// Resolve and validate one check. `user` is the `[options.<id>]` table as JSON.
pub fn plan(id: &str, user: &Value, swirl: &SwirlSection) -> Result<PlannedCheck, PlanError> {
    let (_, spec) = spec(id).ok_or_else(|| PlanError {
        field: None,
        message: format!("unknown check `{id}`"),
    })?;
    let (options, run) = (spec.plan)(user, swirl)?;
    Ok(PlannedCheck {
        id: spec.id,
        stage: spec.stage,
        options,
        run,
    })
}

/// Position of a check in the execution order.
pub fn order_key(id: &str) -> (Stage, usize) {
    spec(id)
        .map(|(i, s)| (s.stage, i))
        .unwrap_or((Stage::Checks, usize::MAX))
}
