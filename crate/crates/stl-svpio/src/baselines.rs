//! Comparison optimizers sharing the scenario/semantics/dynamics stack:
//! MPPI with handcrafted Euclidean costs, plain gradient ascent on smooth
//! robustness, and SVGD driven by finite-difference gradients of the hard
//! robustness. All of them report hard STL robustness through the same
//! evaluator as the main optimizer.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{rollout, ControlSequence};
use crate::exec;
use crate::optimizer::{
    run_svgd_core, EvalCounts, GradientMode, IterationDiag, RunResult, SvpioConfig,
};
use crate::scenario::Scenario;
use crate::semantics::{CompiledFormula, Trace};
use crate::{Error, Result};

/// MPPI parameters: importance sampling with diagonal Gaussian exploration
/// noise around a nominal sequence.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MppiConfig {
    pub samples: usize,
    pub iterations: usize,
    pub temperature: f64,
    /// Exploration noise standard deviation; scalar broadcasts across all
    /// control dimensions.
    pub noise_std: NoiseStd,
    pub seed: u64,
    pub cost: HeuristicCost,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            iterations: 200,
            temperature: 1.0,
            noise_std: NoiseStd::Scalar(0.5),
            seed: 0,
            cost: HeuristicCost::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum NoiseStd {
    Scalar(f64),
    PerDim(Vec<f64>),
}

impl NoiseStd {
    fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        let out = match self {
            NoiseStd::Scalar(s) => vec![*s; dim],
            NoiseStd::PerDim(v) => v.clone(),
        };
        if out.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: out.len(),
                context: "mppi noise std".into(),
            });
        }
        if out.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig(
                "mppi noise std must be positive".into(),
            ));
        }
        Ok(out)
    }
}

/// Handcrafted stage/terminal cost weights for tasks with one goal zone:
/// stage obstacle penetration + stage goal distance, plus a terminal goal
/// distance term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HeuristicCost {
    pub obstacle_weight: f64,
    pub goal_weight: f64,
    pub terminal_weight: f64,
}

impl Default for HeuristicCost {
    fn default() -> Self {
        Self {
            obstacle_weight: 100.0,
            goal_weight: 1.0,
            terminal_weight: 10.0,
        }
    }
}

/// Gradient-ascent ablation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step_size: 0.02,
            seed: 0,
        }
    }
}

/// Finite-difference SVGD ablation: the main optimizer's transport with the
/// exact gradients replaced by central differences of hard robustness.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct FdSvgdConfig {
    #[serde(flatten)]
    pub svgd: SvpioConfig,
    /// Finite-difference step δ.
    pub fd_delta: f64,
}

impl Default for FdSvgdConfig {
    fn default() -> Self {
        Self {
            svgd: SvpioConfig::default(),
            fd_delta: 1e-4,
        }
    }
}

/// Softmax weights `w_k ∝ exp(−J_k/λ)`, min-shifted for overflow safety.
/// The weights sum to one.
pub fn mppi_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs
        .iter()
        .map(|j| (-(j - min) / temperature).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Iterative importance sampling around a nominal control sequence, scored
/// by the handcrafted geometric cost. The returned result reports the hard
/// STL robustness of the final nominal so methods stay comparable.
pub fn run_mppi(scenario: &Scenario, cfg: &MppiConfig) -> Result<RunResult> {
    if cfg.samples == 0 {
        return Err(Error::InvalidConfig("mppi needs at least one sample".into()));
    }
    if !(cfg.temperature > 0.0) {
        return Err(Error::InvalidConfig("mppi temperature must be positive".into()));
    }
    scenario.check()?;
    let start = Instant::now();
    let compiled = CompiledFormula::compile(&scenario.formula, &scenario.bindings)?;
    let dim = scenario.dynamics.control_dim();
    let steps = scenario.horizon;
    let sigma = cfg.noise_std.resolve(dim)?;
    let goal = single_goal(scenario)?;
    let mut counts = EvalCounts::default();

    // Nominal starts at the center of the control box.
    let mut nominal = ControlSequence::from_flat(
        (0..steps * dim)
            .map(|d| 0.5 * (scenario.dynamics.u_min[d % dim] + scenario.dynamics.u_max[d % dim]))
            .collect(),
        dim,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut diags = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let iter_start = Instant::now();
        // Sequential sampling keeps the random stream independent of the
        // worker count; rollouts and costs run in the parallel map below.
        let samples: Vec<ControlSequence> = (0..cfg.samples)
            .map(|_| {
                let mut flat = nominal.as_flat().to_vec();
                for (d, u) in flat.iter_mut().enumerate() {
                    *u += sigma[d % dim] * normal.sample(&mut rng);
                }
                let mut seq = ControlSequence::from_flat(flat, dim).expect("dims fixed");
                seq.clamp_to(&scenario.dynamics);
                seq
            })
            .collect();
        let costs = exec::map_items(&samples, |seq| -> Result<f64> {
            let trace = rollout(&scenario.dynamics, &scenario.x0, seq)?;
            Ok(heuristic_cost(scenario, &goal, &cfg.cost, &trace))
        });
        let mut cost_vals = Vec::with_capacity(cfg.samples);
        for c in costs {
            cost_vals.push(c?);
        }
        counts.rollouts += cfg.samples as u64;

        let weights = mppi_weights(&cost_vals, cfg.temperature);
        let mut next = vec![0.0; steps * dim];
        for (w, seq) in weights.iter().zip(&samples) {
            for (acc, u) in next.iter_mut().zip(seq.as_flat()) {
                *acc += w * u;
            }
        }
        nominal = ControlSequence::from_flat(next, dim)?;

        let trace = rollout(&scenario.dynamics, &scenario.x0, &nominal)?;
        let hard = compiled.robustness_hard(&trace, 0)?;
        counts.rollouts += 1;
        counts.hard_evals += 1;
        diags.push(IterationDiag {
            iteration,
            best: hard,
            mean: hard,
            min: hard,
            mean_pairwise_distance: 0.0,
            bandwidth: 0.0,
            wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let trace = rollout(&scenario.dynamics, &scenario.x0, &nominal)?;
    let hard = compiled.robustness_hard(&trace, 0)?;
    counts.rollouts += 1;
    counts.hard_evals += 1;
    Ok(RunResult {
        scenario: scenario.name.clone(),
        method: "mppi".to_string(),
        seed: cfg.seed,
        best_index: 0,
        best_robustness: hard,
        best_controls: nominal,
        best_trace: trace,
        iterations: diags,
        evaluations: counts,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

struct GoalGeometry {
    center: [f64; 2],
    agent: usize,
}

/// The heuristic cost reads geometry directly and is only defined for
/// scenarios with a single unambiguous goal zone.
fn single_goal(scenario: &Scenario) -> Result<GoalGeometry> {
    let mut goals = scenario
        .geometry
        .zones
        .iter()
        .filter(|z| z.agent.is_some());
    let goal = goals.next().ok_or_else(|| {
        Error::InvalidConfig("mppi heuristic cost requires a goal zone".into())
    })?;
    if goals.next().is_some() {
        return Err(Error::InvalidConfig(
            "mppi heuristic cost requires a single unambiguous goal zone".into(),
        ));
    }
    Ok(GoalGeometry {
        center: goal.center,
        agent: goal.agent.unwrap_or(0),
    })
}

fn heuristic_cost(
    scenario: &Scenario,
    goal: &GoalGeometry,
    weights: &HeuristicCost,
    trace: &Trace,
) -> f64 {
    let mut cost = 0.0;
    let h = trace.horizon();
    for t in 0..=h {
        let (px, py) = trace.agent_position(goal.agent, t);
        let goal_dist = (px - goal.center[0]).hypot(py - goal.center[1]);
        cost += weights.goal_weight * goal_dist;
        for obs in &scenario.geometry.obstacles {
            let d = (px - obs.center[0]).hypot(py - obs.center[1]);
            cost += weights.obstacle_weight * (obs.radius - d).max(0.0);
        }
    }
    let (px, py) = trace.agent_position(goal.agent, h);
    cost += weights.terminal_weight * (px - goal.center[0]).hypot(py - goal.center[1]);
    cost
}

/// Plain gradient ascent on smooth robustness: a single uniformly
/// initialized control sequence ascending `∇_u ρ_smooth` with a fixed step
/// and bound clamping.
///
/// Internally this is the degenerate single-particle case of the main
/// optimizer (where the kernel is 1 and repulsion vanishes) with the
/// temperature fixed at 1, so `run_svpio` with `N = 1`, `λ = 1` and matched
/// ε produces bit-identical iterates.
pub fn run_gradient_ascent(scenario: &Scenario, cfg: &GdConfig) -> Result<RunResult> {
    let svgd = SvpioConfig {
        particles: 1,
        iterations: cfg.iterations,
        step_size: cfg.step_size,
        temperature: 1.0,
        seed: cfg.seed,
        ..SvpioConfig::default()
    };
    run_svgd_core(scenario, &svgd, GradientMode::SmoothExact, "gd")
}

/// SVGD transport with finite-difference gradients of the hard robustness
/// in place of the exact smooth gradients.
pub fn run_fd_svgd(scenario: &Scenario, cfg: &FdSvgdConfig) -> Result<RunResult> {
    if !(cfg.fd_delta > 0.0) {
        return Err(Error::InvalidConfig("fd delta must be positive".into()));
    }
    run_svgd_core(
        scenario,
        &cfg.svgd,
        GradientMode::FiniteDifference {
            delta: cfg.fd_delta,
        },
        "fd-svgd",
    )
}

/// Central differences of hard robustness per control coordinate; what a
/// black-box method can query.
pub fn fd_gradient(scenario: &Scenario, u: &ControlSequence, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig("fd delta must be positive".into()));
    }
    let compiled = CompiledFormula::compile(&scenario.formula, &scenario.bindings)?;
    crate::optimizer::fd_hard_gradient(scenario, &compiled, u, delta).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_costs_give_uniform_weights() {
        let w = mppi_weights(&[3.5, 3.5, 3.5, 3.5], 0.7);
        for x in &w {
            assert_relative_eq!(*x, 0.25, max_relative = 1e-15);
        }
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_temperature_selects_best_sample() {
        let w = mppi_weights(&[2.0, 0.5, 1.0], 1e-9);
        assert_relative_eq!(w[1], 1.0, epsilon = 1e-12);
        assert!(w[0] < 1e-12 && w[2] < 1e-12);
    }

    #[test]
    fn weights_normalize_across_scales() {
        for lambda in [1e-3, 0.1, 1.0, 50.0] {
            let w = mppi_weights(&[1e4, -2e3, 0.0, 17.0], lambda);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
