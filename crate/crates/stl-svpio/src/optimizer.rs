//! Stein variational path-integral optimization of control particles.
//!
//! A population of control sequences is transported toward high-robustness
//! regions by the SVGD update
//!
//! ```text
//! φ*(u_i) = (1/N) Σ_j [ (1/λ)·K(u_j,u_i)·∇_{u_j} ρ(x_{j,0:H}) + ∇_{u_j} K(u_j,u_i) ]
//! u_i ← clamp(u_i + ε·φ*(u_i))
//! ```
//!
//! with an RBF kernel whose bandwidth follows the pairwise-distance median
//! heuristic. The attraction term follows the smoothed robustness gradient;
//! the kernel-gradient term repels particles from one another, which is what
//! keeps the population spread over distinct basins instead of collapsing
//! into a single local optimum.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{backprop_controls, rollout, rollout_jacobians, ControlSequence};
use crate::exec;
use crate::scenario::Scenario;
use crate::semantics::{CompiledFormula, Trace};
use crate::{Error, Result};

/// Optimizer parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SvpioConfig {
    /// Particle count N.
    pub particles: usize,
    /// Optimization iterations M.
    pub iterations: usize,
    /// Step size ε.
    pub step_size: f64,
    /// Temperature λ scaling the attraction term.
    pub temperature: f64,
    pub seed: u64,
    /// Lower bound for the kernel bandwidth before the 1/ln N scaling.
    pub bandwidth_floor: f64,
    /// Project controls back into the box after every update.
    pub clamp_after_step: bool,
}

impl Default for SvpioConfig {
    fn default() -> Self {
        Self {
            particles: 32,
            iterations: 100,
            // 0.05 · (u_max − u_min) for the default ±2 m/s² box.
            step_size: 0.2,
            temperature: 0.1,
            seed: 0,
            bandwidth_floor: 1e-6,
            clamp_after_step: true,
        }
    }
}

impl SvpioConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidConfig("particle count must be at least 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig("step size must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        if !(self.bandwidth_floor > 0.0) {
            return Err(Error::InvalidConfig("bandwidth floor must be positive".into()));
        }
        Ok(())
    }
}

/// RBF kernel over flattened particles: `K_ij = exp(−‖u_i − u_j‖² / h)`.
#[derive(Debug, Clone)]
pub struct RbfKernel {
    n: usize,
    values: Vec<f64>,
    pub bandwidth: f64,
    pub mean_pairwise_distance: f64,
}

impl RbfKernel {
    /// Bandwidth from the median heuristic over the population:
    /// `h = max(med², floor) / ln N` with `med` the median of the
    /// `N(N−1)/2` pairwise Euclidean distances. A single particle gets
    /// `h = floor` and the trivial kernel.
    pub fn compute(particles: &[ControlSequence], bandwidth_floor: f64) -> Self {
        let n = particles.len();
        if n <= 1 {
            return Self {
                n,
                values: vec![1.0; n * n],
                bandwidth: bandwidth_floor,
                mean_pairwise_distance: 0.0,
            };
        }
        let mut dists = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                dists.push(sq_dist(particles[i].as_flat(), particles[j].as_flat()).sqrt());
            }
        }
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let mut sorted = dists;
        sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let med = sorted[sorted.len() / 2];
        let bandwidth = (med * med).max(bandwidth_floor) / (n as f64).ln();
        let mut kernel = Self::with_bandwidth(particles, bandwidth);
        kernel.mean_pairwise_distance = mean;
        kernel
    }

    /// Kernel with an explicitly chosen bandwidth.
    pub fn with_bandwidth(particles: &[ControlSequence], bandwidth: f64) -> Self {
        let n = particles.len();
        let mut values = vec![1.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let k = (-sq_dist(particles[i].as_flat(), particles[j].as_flat()) / bandwidth)
                    .exp();
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Self {
            n,
            values,
            bandwidth,
            mean_pairwise_distance: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `K(u_j, u_i)`.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.n + i]
    }

    /// `∇_{u_j} K(u_j, u_i) = −2 (u_j − u_i) / h · K(u_j, u_i)`.
    pub fn grad(&self, particles: &[ControlSequence], j: usize, i: usize) -> Vec<f64> {
        let k = self.value(j, i);
        let scale = -2.0 / self.bandwidth * k;
        particles[j]
            .as_flat()
            .iter()
            .zip(particles[i].as_flat())
            .map(|(uj, ui)| scale * (uj - ui))
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// The optimal perturbation direction φ* for every particle, given the
/// per-particle robustness gradients (ascent direction) and the kernel.
pub fn svgd_directions(
    particles: &[ControlSequence],
    grads: &[Vec<f64>],
    kernel: &RbfKernel,
    temperature: f64,
) -> Vec<Vec<f64>> {
    let n = particles.len();
    assert_eq!(grads.len(), n);
    let dim = particles[0].as_flat().len();
    let inv_n = 1.0 / n as f64;
    exec::map_indices(n, |i| {
        let mut phi = vec![0.0; dim];
        let ui = particles[i].as_flat();
        for j in 0..n {
            let k = kernel.value(j, i);
            let attraction = k / temperature;
            let uj = particles[j].as_flat();
            let rep_scale = -2.0 / kernel.bandwidth * k;
            for d in 0..dim {
                phi[d] += attraction * grads[j][d] + rep_scale * (uj[d] - ui[d]);
            }
        }
        for p in &mut phi {
            *p *= inv_n;
        }
        phi
    })
}

/// One synchronous SVGD update over the whole population, with optional
/// projection back into the control box.
pub fn svgd_step(
    particles: &mut [ControlSequence],
    grads: &[Vec<f64>],
    kernel: &RbfKernel,
    epsilon: f64,
    temperature: f64,
    bounds: Option<&crate::dynamics::DynamicsSpec>,
    iteration: usize,
) -> Result<()> {
    let directions = svgd_directions(particles, grads, kernel, temperature);
    for (i, (p, phi)) in particles.iter_mut().zip(&directions).enumerate() {
        for (u, d) in p.as_flat_mut().iter_mut().zip(phi) {
            *u += epsilon * d;
        }
        if p.as_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteUpdate {
                particle: i,
                iteration,
            });
        }
        if let Some(spec) = bounds {
            p.clamp_to(spec);
        }
    }
    Ok(())
}

/// The particle population with its cached evaluations. Caches refer to the
/// current `particles`; they are refreshed after every update.
#[derive(Debug, Clone)]
pub struct Population {
    pub particles: Vec<ControlSequence>,
    pub traces: Vec<Trace>,
    pub hard: Vec<f64>,
    pub smooth: Vec<f64>,
    pub control_grads: Vec<Vec<f64>>,
}

/// Per-iteration observability record. Robustness statistics describe the
/// population after the iteration's update; bandwidth and mean pairwise
/// distance describe the kernel that produced the update.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterationDiag {
    pub iteration: usize,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    pub mean_pairwise_distance: f64,
    pub bandwidth: f64,
    pub wall_ms: f64,
}

/// Work counters for honest cost comparisons across methods.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct EvalCounts {
    pub rollouts: u64,
    pub hard_evals: u64,
    pub gradient_evals: u64,
}

/// Outcome of one optimizer run: the hard-robustness-maximizing particle,
/// its trajectory, and per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub best_index: usize,
    pub best_robustness: f64,
    pub best_controls: ControlSequence,
    pub best_trace: Trace,
    pub iterations: Vec<IterationDiag>,
    pub evaluations: EvalCounts,
    pub wall_ms: f64,
}

/// How the attraction gradients are produced.
pub(crate) enum GradientMode {
    /// Reverse-mode gradients of the smoothed robustness (exact).
    SmoothExact,
    /// Central finite differences of the hard robustness per control
    /// coordinate.
    FiniteDifference { delta: f64 },
}

/// Runs the full optimizer on a scenario.
///
/// Particles are initialized i.i.d. uniform over the control box from the
/// seeded generator. Each iteration evaluates all particles in a data-parallel
/// map, assembles the kernel, applies the SVGD update, and re-evaluates. The
/// returned particle maximizes *hard* robustness (ties broken by lowest
/// index); the smooth semantics is used only inside gradients.
pub fn run_svpio(scenario: &Scenario, cfg: &SvpioConfig) -> Result<RunResult> {
    run_svgd_core(scenario, cfg, GradientMode::SmoothExact, "svpio")
}

pub(crate) fn run_svgd_core(
    scenario: &Scenario,
    cfg: &SvpioConfig,
    mode: GradientMode,
    method: &'static str,
) -> Result<RunResult> {
    cfg.check()?;
    scenario.check()?;
    let start = Instant::now();
    let compiled = CompiledFormula::compile(&scenario.formula, &scenario.bindings)?;
    let jac = rollout_jacobians(&scenario.dynamics);
    let dim = scenario.dynamics.control_dim();
    let steps = scenario.horizon;
    let mut counts = EvalCounts::default();

    // Seeded uniform initialization over the control box, drawn in fixed
    // particle-major order so the stream is independent of thread count.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut particles: Vec<ControlSequence> = (0..cfg.particles)
        .map(|_| {
            let flat: Vec<f64> = (0..steps * dim)
                .map(|d| {
                    let lo = scenario.dynamics.u_min[d % dim];
                    let hi = scenario.dynamics.u_max[d % dim];
                    lo + (hi - lo) * rng.gen::<f64>()
                })
                .collect();
            ControlSequence::from_flat(flat, dim).expect("dimension is positive")
        })
        .collect();

    let evaluate = |particles: &[ControlSequence]| -> Result<(Vec<Trace>, Vec<f64>)> {
        let evals = exec::map_items(particles, |p| -> Result<(Trace, f64)> {
            let trace = rollout(&scenario.dynamics, &scenario.x0, p)?;
            let hard = compiled.robustness_hard(&trace, 0)?;
            Ok((trace, hard))
        });
        let mut traces = Vec::with_capacity(particles.len());
        let mut hard = Vec::with_capacity(particles.len());
        for e in evals {
            let (t, h) = e?;
            traces.push(t);
            hard.push(h);
        }
        Ok((traces, hard))
    };

    let (mut traces, mut hard) = evaluate(&particles)?;
    counts.rollouts += particles.len() as u64;
    counts.hard_evals += particles.len() as u64;

    let mut diags = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let iter_start = Instant::now();
        let grads: Vec<Result<(Vec<f64>, u64)>> = match &mode {
            GradientMode::SmoothExact => exec::map_indices(particles.len(), |i| {
                let smooth = compiled.robustness_smooth(&traces[i], &scenario.smoothing)?;
                Ok((backprop_controls(&jac, &smooth.per_state_grad), 0))
            }),
            GradientMode::FiniteDifference { delta } => {
                let delta = *delta;
                exec::map_indices(particles.len(), |i| {
                    fd_hard_gradient(scenario, &compiled, &particles[i], delta)
                })
            }
        };
        let mut grad_vecs = Vec::with_capacity(particles.len());
        for g in grads {
            let (g, extra_rollouts) = g?;
            counts.rollouts += extra_rollouts;
            counts.hard_evals += extra_rollouts;
            grad_vecs.push(g);
        }
        counts.gradient_evals += particles.len() as u64;

        let kernel = RbfKernel::compute(&particles, cfg.bandwidth_floor);
        svgd_step(
            &mut particles,
            &grad_vecs,
            &kernel,
            cfg.step_size,
            cfg.temperature,
            cfg.clamp_after_step.then_some(&scenario.dynamics),
            iteration,
        )?;

        let (new_traces, new_hard) = evaluate(&particles)?;
        counts.rollouts += particles.len() as u64;
        counts.hard_evals += particles.len() as u64;
        traces = new_traces;
        hard = new_hard;

        let best = hard.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = hard.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = hard.iter().sum::<f64>() / hard.len() as f64;
        diags.push(IterationDiag {
            iteration,
            best,
            mean,
            min,
            mean_pairwise_distance: kernel.mean_pairwise_distance,
            bandwidth: kernel.bandwidth,
            wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
        });
    }

    // Hard-robustness argmax; ties go to the lowest particle index.
    let mut best_index = 0;
    for (i, h) in hard.iter().enumerate() {
        if *h > hard[best_index] {
            best_index = i;
        }
    }
    Ok(RunResult {
        scenario: scenario.name.clone(),
        method: method.to_string(),
        seed: cfg.seed,
        best_index,
        best_robustness: hard[best_index],
        best_controls: particles[best_index].clone(),
        best_trace: traces[best_index].clone(),
        iterations: diags,
        evaluations: counts,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Central finite differences of hard robustness per control coordinate.
/// Returns the gradient estimate and the number of rollouts consumed.
pub(crate) fn fd_hard_gradient(
    scenario: &Scenario,
    compiled: &CompiledFormula,
    particle: &ControlSequence,
    delta: f64,
) -> Result<(Vec<f64>, u64)> {
    let flat = particle.as_flat();
    let dim = particle.dim();
    let mut grad = vec![0.0; flat.len()];
    let mut work = flat.to_vec();
    let mut rollouts = 0u64;
    for k in 0..flat.len() {
        let orig = work[k];
        work[k] = orig + delta;
        let plus = eval_hard_flat(scenario, compiled, &work, dim)?;
        work[k] = orig - delta;
        let minus = eval_hard_flat(scenario, compiled, &work, dim)?;
        work[k] = orig;
        grad[k] = (plus - minus) / (2.0 * delta);
        rollouts += 2;
    }
    Ok((grad, rollouts))
}

fn eval_hard_flat(
    scenario: &Scenario,
    compiled: &CompiledFormula,
    flat: &[f64],
    dim: usize,
) -> Result<f64> {
    let seq = ControlSequence::from_flat(flat.to_vec(), dim)?;
    let trace = rollout(&scenario.dynamics, &scenario.x0, &seq)?;
    compiled.robustness_hard(&trace, 0)
}
