//! Differentiable discrete-time dynamics: semi-implicit Euler rollouts of
//! (multi-agent) double integrators, their constant Jacobians, and the
//! adjoint pass that turns per-state robustness gradients into control
//! gradients.
//!
//! The joint state stacks `[px, py, vx, vy]` per agent; the joint control
//! stacks `[ax, ay]` per agent. One step per agent:
//!
//! ```text
//! v_{t+1} = v_t + a_t · dt
//! p_{t+1} = p_t + v_{t+1} · dt
//! ```

use crate::semantics::Trace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    #[serde(rename = "double_integrator_2d")]
    DoubleIntegrator2d,
    MultiAgentDoubleIntegrator,
}

/// Point-mass dynamics with acceleration inputs and a box control constraint.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DynamicsSpec {
    pub kind: DynamicsKind,
    pub agents: usize,
    pub dt: f64,
    /// Per-dimension lower control bounds, length `2 · agents`.
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

impl DynamicsSpec {
    /// Single- or multi-agent double integrator with symmetric acceleration
    /// bounds `±accel_limit`.
    pub fn double_integrator(agents: usize, dt: f64, accel_limit: f64) -> Self {
        let kind = if agents == 1 {
            DynamicsKind::DoubleIntegrator2d
        } else {
            DynamicsKind::MultiAgentDoubleIntegrator
        };
        Self {
            kind,
            agents,
            dt,
            u_min: vec![-accel_limit; agents * 2],
            u_max: vec![accel_limit; agents * 2],
        }
    }

    pub fn state_dim(&self) -> usize {
        self.agents * 4
    }

    pub fn control_dim(&self) -> usize {
        self.agents * 2
    }

    pub fn check(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::InvalidConfig("at least one agent required".into()));
        }
        if matches!(self.kind, DynamicsKind::DoubleIntegrator2d) && self.agents != 1 {
            return Err(Error::InvalidConfig(
                "double_integrator_2d is single-agent; use multi_agent_double_integrator".into(),
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if self.u_min.len() != self.control_dim() || self.u_max.len() != self.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.control_dim(),
                got: self.u_min.len().min(self.u_max.len()),
                context: "control bounds".into(),
            });
        }
        if self
            .u_min
            .iter()
            .zip(&self.u_max)
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::InvalidConfig(
                "control bounds must satisfy u_min < u_max componentwise".into(),
            ));
        }
        Ok(())
    }
}

/// A control sequence `u_{0:H-1}`: the particle transported by the optimizer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ControlSequence {
    controls: Vec<f64>,
    dim: usize,
}

impl ControlSequence {
    pub fn from_flat(controls: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || controls.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim.max(1),
                got: controls.len(),
                context: "flat control storage".into(),
            });
        }
        Ok(Self { controls, dim })
    }

    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self {
            controls: vec![0.0; steps * dim],
            dim,
        }
    }

    /// Number of control steps `H`.
    pub fn steps(&self) -> usize {
        self.controls.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.controls[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.controls
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.controls
    }

    /// Componentwise projection onto the control box.
    pub fn clamp_to(&mut self, spec: &DynamicsSpec) {
        for step in self.controls.chunks_mut(self.dim) {
            for (u, (lo, hi)) in step.iter_mut().zip(spec.u_min.iter().zip(&spec.u_max)) {
                *u = u.clamp(*lo, *hi);
            }
        }
    }

    pub fn within_bounds(&self, spec: &DynamicsSpec) -> bool {
        self.controls.chunks(self.dim).all(|step| {
            step.iter()
                .zip(spec.u_min.iter().zip(&spec.u_max))
                .all(|(u, (lo, hi))| *u >= *lo && *u <= *hi)
        })
    }
}

/// Constant step Jacobians of the semi-implicit double integrator:
/// `A = [[I, dt·I], [0, I]]` and `B = [[dt²·I], [dt·I]]` per agent block,
/// block-diagonal across agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutJacobians {
    pub agents: usize,
    pub dt: f64,
}

impl RolloutJacobians {
    /// Dense `∂x_{t+1}/∂x_t` (n × n, row-major).
    pub fn a_dense(&self) -> Vec<f64> {
        let n = self.agents * 4;
        let mut a = vec![0.0; n * n];
        for agent in 0..self.agents {
            let b = agent * 4;
            for i in 0..4 {
                a[(b + i) * n + b + i] = 1.0;
            }
            a[b * n + b + 2] = self.dt;
            a[(b + 1) * n + b + 3] = self.dt;
        }
        a
    }

    /// Dense `∂x_{t+1}/∂u_t` (n × 2m, row-major).
    pub fn b_dense(&self) -> Vec<f64> {
        let n = self.agents * 4;
        let mu = self.agents * 2;
        let dt2 = self.dt * self.dt;
        let mut bm = vec![0.0; n * mu];
        for agent in 0..self.agents {
            let bs = agent * 4;
            let bu = agent * 2;
            bm[bs * mu + bu] = dt2;
            bm[(bs + 1) * mu + bu + 1] = dt2;
            bm[(bs + 2) * mu + bu] = self.dt;
            bm[(bs + 3) * mu + bu + 1] = self.dt;
        }
        bm
    }
}

/// Forward integration: `H` semi-implicit Euler steps from `x0`.
pub fn rollout(spec: &DynamicsSpec, x0: &[f64], u: &ControlSequence) -> Result<Trace> {
    let n = spec.state_dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
            context: "initial state".into(),
        });
    }
    if u.dim() != spec.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.control_dim(),
            got: u.dim(),
            context: "control dimension".into(),
        });
    }
    let steps = u.steps();
    let dt = spec.dt;
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(x0);
    let mut current = x0.to_vec();
    for t in 0..steps {
        let a = u.at(t);
        for agent in 0..spec.agents {
            let b = agent * 4;
            let (ax, ay) = (a[agent * 2], a[agent * 2 + 1]);
            current[b + 2] += ax * dt;
            current[b + 3] += ay * dt;
            current[b] += current[b + 2] * dt;
            current[b + 1] += current[b + 3] * dt;
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: t + 1 });
        }
        states.extend_from_slice(&current);
    }
    Trace::from_flat(states, n, dt)
}

pub fn rollout_jacobians(spec: &DynamicsSpec) -> RolloutJacobians {
    RolloutJacobians {
        agents: spec.agents,
        dt: spec.dt,
    }
}

/// Adjoint (backward) recursion turning `∂ρ/∂x_{0:H}` into `∂ρ/∂u_{0:H-1}`:
///
/// ```text
/// λ_H = ∂ρ/∂x_H
/// for t = H−1 .. 0:   g_u[t] = Bᵀ λ_{t+1};   λ_t = ∂ρ/∂x_t + Aᵀ λ_{t+1}
/// ```
///
/// `per_state_grad` is flat `(H+1) × n`, step-major. Returns flat `H × 2m`.
pub fn backprop_controls(jac: &RolloutJacobians, per_state_grad: &[f64]) -> Vec<f64> {
    let n = jac.agents * 4;
    assert!(
        per_state_grad.len() % n == 0 && !per_state_grad.is_empty(),
        "per-state gradient shape mismatch"
    );
    let len = per_state_grad.len() / n;
    let steps = len - 1;
    let dt = jac.dt;
    let dt2 = dt * dt;
    let mu = jac.agents * 2;
    let mut g_u = vec![0.0; steps * mu];
    // λ initialized from the final state's gradient.
    let mut lambda = per_state_grad[steps * n..(steps + 1) * n].to_vec();
    for t in (0..steps).rev() {
        for agent in 0..jac.agents {
            let b = agent * 4;
            let (lp_x, lp_y, lv_x, lv_y) =
                (lambda[b], lambda[b + 1], lambda[b + 2], lambda[b + 3]);
            g_u[t * mu + agent * 2] = dt2 * lp_x + dt * lv_x;
            g_u[t * mu + agent * 2 + 1] = dt2 * lp_y + dt * lv_y;
            // λ_t = g_t + Aᵀ λ_{t+1}; Aᵀ = [[I, 0], [dt·I, I]].
            let g = &per_state_grad[t * n..(t + 1) * n];
            lambda[b] = g[b] + lp_x;
            lambda[b + 1] = g[b + 1] + lp_y;
            lambda[b + 2] = g[b + 2] + dt * lp_x + lv_x;
            lambda[b + 3] = g[b + 3] + dt * lp_y + lv_y;
        }
    }
    g_u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::{robustness_smooth, Bindings, SmoothingConfig};
    use crate::stl::{Formula, Interval, PredicateDef, PredicateKind};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn spec1(dt: f64) -> DynamicsSpec {
        DynamicsSpec::double_integrator(1, dt, 2.0)
    }

    #[test]
    fn single_step_semi_implicit() {
        let spec = spec1(0.1);
        let u = ControlSequence::from_flat(vec![1.0, 0.0], 2).unwrap();
        let trace = rollout(&spec, &[0.0, 0.0, 0.0, 0.0], &u).unwrap();
        let s = trace.state(1);
        assert_relative_eq!(s[2], 0.1, max_relative = 1e-15);
        assert_relative_eq!(s[0], 0.01, max_relative = 1e-15);
    }

    #[test]
    fn zero_controls_hold_equilibrium() {
        let spec = spec1(0.1);
        let u = ControlSequence::zeros(5, 2);
        let trace = rollout(&spec, &[1.0, -2.0, 0.0, 0.0], &u).unwrap();
        for t in 0..=5 {
            assert_eq!(trace.state(t), &[1.0, -2.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn constant_velocity_advances_linearly() {
        let spec = spec1(0.1);
        let u = ControlSequence::zeros(10, 2);
        let trace = rollout(&spec, &[0.0, 0.0, 1.0, 0.0], &u).unwrap();
        assert_relative_eq!(trace.state(10)[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn jacobian_blocks() {
        let jac = rollout_jacobians(&spec1(0.1));
        let b = jac.b_dense();
        // Velocity rows respond with dt, position rows with dt².
        assert_relative_eq!(b[2 * 2], 0.1, max_relative = 1e-15);
        assert_relative_eq!(b[0], 0.01, max_relative = 1e-15);
    }

    #[test]
    fn cross_agent_blocks_are_zero() {
        let spec = DynamicsSpec::double_integrator(2, 0.1, 2.0);
        let jac = rollout_jacobians(&spec);
        let n = 8;
        let a = jac.a_dense();
        let b = jac.b_dense();
        for i in 0..4 {
            for j in 4..8 {
                assert_eq!(a[i * n + j], 0.0);
                assert_eq!(a[j * n + i], 0.0);
            }
        }
        for i in 0..4 {
            for j in 2..4 {
                assert_eq!(b[i * 4 + j], 0.0);
                assert_eq!(b[(i + 4) * 4 + j - 2], 0.0);
            }
        }
    }

    #[test]
    fn zero_state_gradient_gives_zero_control_gradient() {
        let jac = RolloutJacobians { agents: 1, dt: 0.1 };
        let g = backprop_controls(&jac, &vec![0.0; 4 * 6]);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adjoint_locality() {
        let jac = RolloutJacobians { agents: 1, dt: 0.1 };
        let mut per_state = vec![0.0; 4 * 4];
        // Gradient only at x_1 (position x).
        per_state[4] = 2.0;
        let g = backprop_controls(&jac, &per_state);
        assert_relative_eq!(g[0], 0.01 * 2.0, max_relative = 1e-15);
        assert_eq!(g[1], 0.0);
        assert!(g[2..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rollout_is_linear_in_controls() {
        let spec = DynamicsSpec::double_integrator(2, 0.1, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 12;
        let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..h * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let du: Vec<f64> = (0..h * 4).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let base = rollout(
            &spec,
            &x0,
            &ControlSequence::from_flat(u.clone(), 4).unwrap(),
        )
        .unwrap();
        let shifted = rollout(
            &spec,
            &x0,
            &ControlSequence::from_flat(
                u.iter().zip(&du).map(|(a, b)| a + b).collect(),
                4,
            )
            .unwrap(),
        )
        .unwrap();
        // Propagate δu through the Jacobians and compare.
        let jac = rollout_jacobians(&spec);
        let n = 8;
        let a = jac.a_dense();
        let b = jac.b_dense();
        let mut dx = vec![0.0; n];
        for t in 0..h {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[i] += a[i * n + j] * dx[j];
                }
                for j in 0..4 {
                    next[i] += b[i * 4 + j] * du[t * 4 + j];
                }
            }
            dx = next;
            for i in 0..n {
                let diff = shifted.state(t + 1)[i] - base.state(t + 1)[i];
                assert_relative_eq!(diff, dx[i], epsilon = 1e-12, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn agents_are_decoupled_bitwise() {
        let spec = DynamicsSpec::double_integrator(2, 0.1, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let h = 10;
        let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut u: Vec<f64> = (0..h * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = rollout(
            &spec,
            &x0,
            &ControlSequence::from_flat(u.clone(), 4).unwrap(),
        )
        .unwrap();
        // Perturb agent 0's controls only.
        for t in 0..h {
            u[t * 4] += 0.3;
            u[t * 4 + 1] -= 0.2;
        }
        let perturbed =
            rollout(&spec, &x0, &ControlSequence::from_flat(u, 4).unwrap()).unwrap();
        for t in 0..=h {
            assert_eq!(&base.state(t)[4..8], &perturbed.state(t)[4..8]);
        }
    }

    /// End-to-end oracle: the adjoint pass composed with the smooth evaluator
    /// matches central finite differences of the full map u ↦ ρ(rollout(u)).
    #[test]
    fn control_gradient_matches_finite_differences() {
        let spec = spec1(0.1);
        let mut bindings = Bindings::new();
        bindings.insert(
            "near_goal".into(),
            PredicateDef::new(
                "near_goal",
                PredicateKind::CircleIn {
                    agent: 0,
                    center: [0.4, -0.2],
                    radius: 0.5,
                },
            ),
        );
        bindings.insert(
            "clear".into(),
            PredicateDef::new(
                "clear",
                PredicateKind::CircleAvoid {
                    agent: 0,
                    center: [0.1, 0.1],
                    radius: 0.2,
                },
            ),
        );
        let formula = Formula::and(vec![
            Formula::always(Interval { lo: 0, hi: 5 }, Formula::pred("clear")),
            Formula::eventually(Interval { lo: 0, hi: 5 }, Formula::pred("near_goal")),
        ]);
        let cfg = SmoothingConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let h = 5;
        let x0 = [-0.4, 0.3, 0.1, 0.0];
        let u: Vec<f64> = (0..h * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = |flat: &[f64]| -> f64 {
            let seq = ControlSequence::from_flat(flat.to_vec(), 2).unwrap();
            let trace = rollout(&spec, &x0, &seq).unwrap();
            robustness_smooth(&formula, &trace, &cfg, &bindings)
                .unwrap()
                .value
        };
        let trace = rollout(
            &spec,
            &x0,
            &ControlSequence::from_flat(u.clone(), 2).unwrap(),
        )
        .unwrap();
        let smooth = robustness_smooth(&formula, &trace, &cfg, &bindings).unwrap();
        let jac = rollout_jacobians(&spec);
        let g = backprop_controls(&jac, &smooth.per_state_grad);
        let delta = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..u.len() {
            let mut plus = u.clone();
            plus[k] += delta;
            let mut minus = u.clone();
            minus[k] -= delta;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * delta);
            num += (g[k] - fd) * (g[k] - fd);
            den += fd * fd;
        }
        assert!(num.sqrt() <= 1e-4 * den.sqrt().max(1e-6), "rel err too large");
    }
}
