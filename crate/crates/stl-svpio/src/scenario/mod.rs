//! Declarative task definitions: dynamics, geometry, predicate bindings, and
//! the STL formula, loaded from TOML configs. Five canonical tasks ship as
//! built-ins (`reach_avoid`, `long_horizon`, `button_order`, `sync_goals`,
//! `corridor`); the config schema is documented in the annotated files under
//! `scenarios/`.

mod builder;

use std::collections::BTreeSet;
use std::path::Path;

use crate::baselines::{FdSvgdConfig, GdConfig, MppiConfig};
use crate::optimizer::SvpioConfig;
use crate::semantics::{Bindings, CompiledFormula, SmoothingConfig, Trace};
use crate::stl::{parse_formula, pretty_print, validate, Formula, PredicateDef};
use crate::{DynamicsSpec, Error, Result};

pub use builder::{audit_structure, build_formula, BuiltFormula, TaskKind};

/// Circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Axis-aligned rectangle (used for walls).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

/// A named region of interest. Zones with an `agent` are that agent's goal;
/// agentless zones (like a shared corridor) apply to everyone.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Zone {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    pub center: [f64; 2],
    #[serde(flatten)]
    pub shape: ZoneShape,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ZoneShape {
    Circle { radius: f64 },
    Box { half_extents: [f64; 2] },
}

/// Plot- and cost-facing geometry lists.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    #[serde(default)]
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub walls: Vec<Rect>,
}

/// Per-method default configurations carried by a scenario. These are the
/// swept values a benchmark run uses when the caller does not override them.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct MethodDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svpio: Option<SvpioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mppi: Option<MppiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd: Option<GdConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_svgd: Option<FdSvgdConfig>,
}

/// On-disk scenario schema. See the annotated built-in files for the field
/// reference.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_radius: Option<f64>,
    pub initial_state: Vec<f64>,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub obstacles: Vec<Circle>,
    #[serde(default)]
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub walls: Vec<Rect>,
    pub predicates: Vec<PredicateDef>,
    pub formula: String,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub methods: MethodDefaults,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DynamicsConfig {
    pub kind: crate::dynamics::DynamicsKind,
    pub agents: usize,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<Vec<f64>>,
}

impl DynamicsConfig {
    fn build(&self) -> Result<DynamicsSpec> {
        let dim = self.agents * 2;
        let (u_min, u_max) = match (&self.u_min, &self.u_max, self.accel_limit) {
            (Some(lo), Some(hi), _) => (lo.clone(), hi.clone()),
            (None, None, Some(a)) => (vec![-a; dim], vec![a; dim]),
            _ => {
                return Err(Error::InvalidConfig(
                    "dynamics needs either accel_limit or both u_min and u_max".into(),
                ))
            }
        };
        let spec = DynamicsSpec {
            kind: self.kind,
            agents: self.agents,
            dt: self.dt,
            u_min,
            u_max,
        };
        spec.check()?;
        Ok(spec)
    }
}

/// A fully validated task: everything an optimizer run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub dynamics: DynamicsSpec,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub bindings: Bindings,
    pub formula: Formula,
    pub formula_text: String,
    pub geometry: Geometry,
    pub smoothing: SmoothingConfig,
    pub delta: Option<usize>,
    pub collision_radius: Option<f64>,
    pub methods: MethodDefaults,
    config: ScenarioConfig,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let dynamics = config.dynamics.build()?;
        let mut bindings = Bindings::new();
        for p in &config.predicates {
            p.check()?;
            if bindings.insert(p.name.clone(), p.clone()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate predicate `{}`",
                    p.name
                )));
            }
        }
        let formula = parse_formula(&config.formula)?;
        let scenario = Scenario {
            name: config.name.clone(),
            dynamics,
            x0: config.initial_state.clone(),
            horizon: config.horizon,
            bindings,
            formula,
            formula_text: config.formula.clone(),
            geometry: Geometry {
                obstacles: config.obstacles.clone(),
                zones: config.zones.clone(),
                walls: config.walls.clone(),
            },
            smoothing: config.smoothing,
            delta: config.delta,
            collision_radius: config.collision_radius,
            methods: config.methods.clone(),
            config,
        };
        scenario.check()?;
        Ok(scenario)
    }

    /// Parses and validates a TOML scenario description.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text)?;
        Self::from_config(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| Error::Scenario {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    /// The on-disk form of this scenario.
    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.config).expect("scenario config serializes")
    }

    /// Full structural validation: dynamics invariants, state dimensions,
    /// predicate agent ranges, formula bindings, and the horizon bound.
    pub fn check(&self) -> Result<()> {
        self.dynamics.check()?;
        self.smoothing.check()?;
        if self.x0.len() != self.dynamics.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dynamics.state_dim(),
                got: self.x0.len(),
                context: format!("initial state of scenario `{}`", self.name),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scenario `{}` has a non-finite initial state",
                self.name
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig(format!(
                "scenario `{}` needs a positive horizon",
                self.name
            )));
        }
        for p in self.bindings.values() {
            for agent in p.agents() {
                if agent >= self.dynamics.agents {
                    return Err(Error::InvalidConfig(format!(
                        "predicate `{}` references agent {agent} but the scenario has {} agents",
                        p.name, self.dynamics.agents
                    )));
                }
            }
        }
        let names: BTreeSet<String> = self.bindings.keys().cloned().collect();
        validate(&self.formula, &names, self.horizon)?;
        Ok(())
    }

    /// Names of the five built-in tasks.
    pub fn builtin_names() -> [&'static str; 5] {
        ["reach_avoid", "long_horizon", "button_order", "sync_goals", "corridor"]
    }

    /// Loads one of the built-in tasks shipped with the crate.
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "reach_avoid" => include_str!("../../scenarios/reach_avoid.toml"),
            "long_horizon" => include_str!("../../scenarios/long_horizon.toml"),
            "button_order" => include_str!("../../scenarios/button_order.toml"),
            "sync_goals" => include_str!("../../scenarios/sync_goals.toml"),
            "corridor" => include_str!("../../scenarios/corridor.toml"),
            other => {
                return Err(Error::Scenario {
                    path: format!("builtin:{other}"),
                    msg: format!(
                        "unknown built-in (available: {})",
                        Self::builtin_names().join(", ")
                    ),
                })
            }
        };
        Self::from_toml(text).map_err(|e| Error::Scenario {
            path: format!("builtin:{name}"),
            msg: e.to_string(),
        })
    }

    /// Resolves a scenario reference: a built-in name or a path to a config.
    pub fn resolve(reference: &str) -> Result<Self> {
        if Self::builtin_names().contains(&reference) {
            Self::builtin(reference)
        } else {
            Self::load(reference)
        }
    }
}

/// Hard robustness of the top formula plus per-conjunct breakdown: which
/// requirement binds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckReport {
    pub total: f64,
    pub conjuncts: Vec<ConjunctRobustness>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConjunctRobustness {
    pub formula: String,
    pub robustness: f64,
}

/// Monitors a recorded trajectory against the scenario's specification.
pub fn check_trajectory(scenario: &Scenario, trace: &Trace) -> Result<CheckReport> {
    if trace.len() != scenario.horizon + 1 {
        return Err(Error::DimensionMismatch {
            expected: scenario.horizon + 1,
            got: trace.len(),
            context: "trace length".into(),
        });
    }
    if trace.dim() != scenario.dynamics.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: scenario.dynamics.state_dim(),
            got: trace.dim(),
            context: "trace state dimension".into(),
        });
    }
    let compiled = CompiledFormula::compile(&scenario.formula, &scenario.bindings)?;
    let total = compiled.robustness_hard(trace, 0)?;
    let tops: Vec<&Formula> = match &scenario.formula {
        Formula::And(children) => children.iter().collect(),
        other => vec![other],
    };
    let mut conjuncts = Vec::with_capacity(tops.len());
    for child in tops {
        let c = CompiledFormula::compile(child, &scenario.bindings)?;
        conjuncts.push(ConjunctRobustness {
            formula: pretty_print(child),
            robustness: c.robustness_hard(trace, 0)?,
        });
    }
    Ok(CheckReport { total, conjuncts })
}
