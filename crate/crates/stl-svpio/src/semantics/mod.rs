//! Quantitative STL semantics over discrete traces: hard (exact min/max)
//! robustness and smooth (LogSumExp) robustness with reverse-mode gradients.

mod eval;
pub mod predicates;

pub use eval::{
    robustness_hard, robustness_smooth, Bindings, CompiledFormula, DEFAULT_TOP_SENTINEL,
};
pub use predicates::{predicate_value_grad, Softness};

use crate::{Error, Result};

/// A state trajectory `x_{0:H}`: `H + 1` states of fixed dimension sampled
/// every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    states: Vec<f64>,
    dim: usize,
    dt: f64,
}

impl Trace {
    pub fn new(states: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidConfig("trace must contain at least one state".into()));
        }
        let dim = states[0].len();
        let mut flat = Vec::with_capacity(states.len() * dim);
        for (t, s) in states.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.len(),
                    context: format!("trace state {t}"),
                });
            }
            flat.extend_from_slice(s);
        }
        Self::from_flat(flat, dim, dt)
    }

    /// Builds a trace from row-major flat storage (step-major).
    pub fn from_flat(states: Vec<f64>, dim: usize, dt: f64) -> Result<Self> {
        if dim == 0 || states.is_empty() || states.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim.max(1),
                got: states.len(),
                context: "flat trace storage".into(),
            });
        }
        if let Some(bad) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: bad / dim });
        }
        Ok(Self { states, dim, dt })
    }

    /// Number of states (`H + 1`).
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of control steps `H`.
    pub fn horizon(&self) -> usize {
        self.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    /// Position `(px, py)` of one agent at step `t` (agents own 4-wide
    /// state blocks).
    pub fn agent_position(&self, agent: usize, t: usize) -> (f64, f64) {
        let s = self.state(t);
        (s[agent * 4], s[agent * 4 + 1])
    }
}

/// Sharpness and sentinel for LogSumExp smoothing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    /// Smoothing sharpness β; larger values track the hard semantics more
    /// closely at the cost of flatter gradients far from the optimum.
    pub beta: f64,
    /// Finite stand-in for the infinite robustness of `TRUE`.
    pub top_sentinel: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            top_sentinel: DEFAULT_TOP_SENTINEL,
        }
    }
}

impl SmoothingConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidConfig("smoothing beta must be positive".into()));
        }
        if !self.top_sentinel.is_finite() || self.top_sentinel <= 0.0 {
            return Err(Error::InvalidConfig(
                "top sentinel must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Robustness value and, for smooth evaluation, the gradient with respect to
/// every trace state (flat `(H+1) × n`, step-major).
#[derive(Debug, Clone)]
pub struct RobustnessResult {
    pub value: f64,
    pub per_state_grad: Vec<f64>,
    pub state_dim: usize,
}

impl RobustnessResult {
    pub fn grad_at(&self, t: usize) -> &[f64] {
        &self.per_state_grad[t * self.state_dim..(t + 1) * self.state_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{Formula, Interval, PredicateDef, PredicateKind};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval { lo, hi }
    }

    /// One affine predicate per named sequence value lets tests pin exact
    /// per-step robustness numbers: predicate `k<i>` reads state component i.
    fn component_bindings(dim: usize) -> Bindings {
        let mut b = BTreeMap::new();
        for i in 0..dim {
            let mut coeffs = vec![0.0; dim];
            coeffs[i] = 1.0;
            b.insert(
                format!("k{i}"),
                PredicateDef::new(format!("k{i}"), PredicateKind::CustomAffine { coeffs, offset: 0.0 }),
            );
        }
        b
    }

    fn trace_from_rows(rows: &[&[f64]]) -> Trace {
        Trace::new(rows.iter().map(|r| r.to_vec()).collect(), 0.1).unwrap()
    }

    #[test]
    fn negation_flips_sign_exactly() {
        let b = component_bindings(1);
        let t = trace_from_rows(&[&[0.5]]);
        let f = Formula::pred("k0");
        let v = robustness_hard(&f, &t, 0, &b).unwrap();
        let nv = robustness_hard(&Formula::not(f), &t, 0, &b).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(nv, -0.5);
    }

    #[test]
    fn conjunction_takes_min() {
        let b = component_bindings(2);
        let t = trace_from_rows(&[&[0.3, -0.1]]);
        let f = Formula::and(vec![Formula::pred("k0"), Formula::pred("k1")]);
        assert_eq!(robustness_hard(&f, &t, 0, &b).unwrap(), -0.1);
    }

    /// Frozen from a by-hand enumeration of the max–min recursion over
    /// t' ∈ {0,1,2}: candidates min(−1,1) = −1, min(0.4, min(1, 0.2)) = 0.2,
    /// min(0.9, min(1, 0.2, 0.5)) = 0.2, so the result is 0.2.
    #[test]
    fn until_matches_enumeration() {
        let b = component_bindings(2);
        let t = trace_from_rows(&[&[1.0, -1.0], &[0.2, 0.4], &[0.5, 0.9]]);
        let f = Formula::until(iv(0, 2), Formula::pred("k0"), Formula::pred("k1"));
        assert_eq!(robustness_hard(&f, &t, 0, &b).unwrap(), 0.2);
    }

    #[test]
    fn until_empty_window_errors() {
        let b = component_bindings(1);
        let t = trace_from_rows(&[&[1.0], &[1.0]]);
        let f = Formula::until(iv(3, 5), Formula::pred("k0"), Formula::pred("k0"));
        let err = robustness_hard(&f, &t, 0, &b).unwrap_err();
        assert!(matches!(err, Error::EmptyWindow { .. }));
    }

    #[test]
    fn smooth_softmin_closed_form() {
        // softmin(0, 0) at β = 1 is −ln 2.
        let b = component_bindings(2);
        let t = trace_from_rows(&[&[0.0, 0.0]]);
        let f = Formula::and(vec![Formula::pred("k0"), Formula::pred("k1")]);
        let cfg = SmoothingConfig::with_beta(1.0);
        let r = robustness_smooth(&f, &t, &cfg, &b).unwrap();
        assert_relative_eq!(r.value, -(2f64.ln()), max_relative = 1e-12);
    }

    #[test]
    fn smooth_tracks_hard_at_large_beta() {
        let b = component_bindings(2);
        let t = trace_from_rows(&[&[1.0, -1.0], &[0.2, 0.4], &[0.5, 0.9]]);
        let f = Formula::until(iv(0, 2), Formula::pred("k0"), Formula::pred("k1"));
        let cfg = SmoothingConfig::with_beta(100.0);
        let smooth = robustness_smooth(&f, &t, &cfg, &b).unwrap().value;
        assert!((smooth - 0.2).abs() <= 3.0f64.ln() / 100.0 * 3.0);
    }

    #[test]
    fn smooth_negation_antisymmetric() {
        let b = component_bindings(2);
        let t = trace_from_rows(&[&[0.4, -0.2], &[0.1, 0.3]]);
        let f = Formula::eventually(
            iv(0, 1),
            Formula::and(vec![Formula::pred("k0"), Formula::pred("k1")]),
        );
        let cfg = SmoothingConfig::default();
        let plain = robustness_smooth(&f, &t, &cfg, &b).unwrap();
        let negated = robustness_smooth(&Formula::not(f), &t, &cfg, &b).unwrap();
        assert_eq!(negated.value, -plain.value);
        for (g, ng) in plain.per_state_grad.iter().zip(&negated.per_state_grad) {
            assert_eq!(*ng, -*g);
        }
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let b = component_bindings(2);
        let rows: Vec<Vec<f64>> = vec![
            vec![0.3, -0.4],
            vec![-0.1, 0.2],
            vec![0.5, 0.1],
            vec![0.05, -0.3],
        ];
        let f = Formula::until(
            iv(0, 2),
            Formula::or(vec![Formula::pred("k0"), Formula::pred("k1")]),
            Formula::and(vec![Formula::pred("k0"), Formula::not(Formula::pred("k1"))]),
        );
        let cfg = SmoothingConfig::with_beta(3.0);
        let base = Trace::new(rows.clone(), 0.1).unwrap();
        let r = robustness_smooth(&f, &base, &cfg, &b).unwrap();
        let eps = 1e-6;
        for t in 0..rows.len() {
            for i in 0..2 {
                let mut plus = rows.clone();
                plus[t][i] += eps;
                let mut minus = rows.clone();
                minus[t][i] -= eps;
                let vp = robustness_smooth(&f, &Trace::new(plus, 0.1).unwrap(), &cfg, &b)
                    .unwrap()
                    .value;
                let vm = robustness_smooth(&f, &Trace::new(minus, 0.1).unwrap(), &cfg, &b)
                    .unwrap()
                    .value;
                let fd = (vp - vm) / (2.0 * eps);
                assert_relative_eq!(r.grad_at(t)[i], fd, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn true_uses_sentinel_and_has_zero_gradient() {
        let b = component_bindings(1);
        let t = trace_from_rows(&[&[0.7]]);
        let f = Formula::and(vec![Formula::True, Formula::pred("k0")]);
        assert_eq!(robustness_hard(&f, &t, 0, &b).unwrap(), 0.7);
        let r = robustness_smooth(&f, &t, &SmoothingConfig::default(), &b).unwrap();
        // The sentinel branch underflows out of the softmin entirely.
        assert_relative_eq!(r.value, 0.7, max_relative = 1e-12);
        assert_relative_eq!(r.per_state_grad[0], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_trace_rejected() {
        assert!(Trace::new(vec![vec![f64::NAN]], 0.1).is_err());
        assert!(Trace::new(vec![vec![1.0], vec![f64::INFINITY]], 0.1).is_err());
    }
}
