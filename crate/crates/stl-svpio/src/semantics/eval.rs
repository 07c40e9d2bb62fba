//! Compiled robustness evaluation.
//!
//! A [`Formula`] is compiled once into a flat node arena with predicate
//! bindings resolved. Evaluation then memoizes one value per (node, step)
//! pair, computing only the steps actually reachable from the query instant;
//! the recursion for `Until` keeps a running prefix accumulator so a single
//! left-to-right scan covers the nested min.
//!
//! Smooth evaluation replaces min/max with LogSumExp softmin/softmax
//! (max-shifted) and carries an exact reverse pass: adjoints flow from the
//! root through the softmax-weight vectors of every reduction down to the
//! analytic predicate gradients, yielding `∂ρ/∂x_t` for every trace state.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::stl::{pretty_print, Formula, PredicateDef};
use crate::{Error, Result};

use super::predicates::{self, softmin2, Softness};
use super::{RobustnessResult, SmoothingConfig, Trace};

/// Finite stand-in for the infinite robustness of `TRUE`. Must dominate any
/// achievable predicate margin in a scenario.
pub const DEFAULT_TOP_SENTINEL: f64 = 1e6;

pub type Bindings = BTreeMap<String, PredicateDef>;

#[derive(Debug, Clone)]
enum Op {
    True,
    Pred(usize),
    Not(usize),
    /// n-ary conjunction (min / softmin over children).
    Min(Vec<usize>),
    /// n-ary disjunction (max / softmax over children).
    Max(Vec<usize>),
    /// max(−lhs, rhs).
    Implies(usize, usize),
    /// Always: min over the window `[t+lo, min(t+hi, H)]`.
    WindowMin { child: usize, lo: usize, hi: usize },
    /// Eventually: max over the same window.
    WindowMax { child: usize, lo: usize, hi: usize },
    Until {
        lhs: usize,
        rhs: usize,
        lo: usize,
        hi: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    label: String,
}

/// A formula with resolved predicate bindings, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledFormula {
    nodes: Vec<Node>,
    preds: Vec<PredicateDef>,
    root: usize,
}

impl CompiledFormula {
    pub fn compile(formula: &Formula, bindings: &Bindings) -> Result<Self> {
        let mut c = Compiler {
            nodes: Vec::new(),
            preds: Vec::new(),
            pred_index: HashMap::new(),
            bindings,
        };
        let root = c.add(formula)?;
        Ok(CompiledFormula {
            nodes: c.nodes,
            preds: c.preds,
            root,
        })
    }

    pub fn predicates(&self) -> &[PredicateDef] {
        &self.preds
    }

    /// Marks, per node, the steps whose value the root query transitively
    /// needs.
    fn needed_times(&self, len: usize, t0: usize) -> Vec<bool> {
        let h = len - 1;
        let mut needed = vec![false; self.nodes.len() * len];
        needed[self.root * len + t0] = true;
        for idx in (0..self.nodes.len()).rev() {
            for t in 0..len {
                if !needed[idx * len + t] {
                    continue;
                }
                match &self.nodes[idx].op {
                    Op::True | Op::Pred(_) => {}
                    Op::Not(c) => needed[c * len + t] = true,
                    Op::Min(cs) | Op::Max(cs) => {
                        for &c in cs {
                            needed[c * len + t] = true;
                        }
                    }
                    Op::Implies(l, r) => {
                        needed[l * len + t] = true;
                        needed[r * len + t] = true;
                    }
                    Op::WindowMin { child, lo, hi } | Op::WindowMax { child, lo, hi } => {
                        for tp in (t + lo)..=(t + hi).min(h) {
                            needed[child * len + tp] = true;
                        }
                    }
                    Op::Until { lhs, rhs, lo, hi } => {
                        let end = (t + hi).min(h);
                        for tp in t..=end {
                            needed[lhs * len + tp] = true;
                        }
                        for tp in (t + lo)..=end {
                            needed[rhs * len + tp] = true;
                        }
                    }
                }
            }
        }
        needed
    }

    /// Exact min/max robustness of the formula on `trace` starting at `t0`.
    pub fn robustness_hard(&self, trace: &Trace, t0: usize) -> Result<f64> {
        self.robustness_hard_with_sentinel(trace, t0, DEFAULT_TOP_SENTINEL)
    }

    pub fn robustness_hard_with_sentinel(
        &self,
        trace: &Trace,
        t0: usize,
        sentinel: f64,
    ) -> Result<f64> {
        let len = trace.len();
        let h = len - 1;
        if t0 > h {
            return Err(Error::EmptyWindow {
                subformula: self.nodes[self.root].label.clone(),
                t: t0,
            });
        }
        let needed = self.needed_times(len, t0);
        let mut values = vec![f64::NAN; self.nodes.len() * len];
        for (idx, node) in self.nodes.iter().enumerate() {
            for t in 0..len {
                if !needed[idx * len + t] {
                    continue;
                }
                let v = match &node.op {
                    Op::True => sentinel,
                    Op::Pred(p) => {
                        predicates::margin(&self.preds[*p], trace.state(t), Softness::Hard)?
                    }
                    Op::Not(c) => -values[c * len + t],
                    Op::Min(cs) => cs
                        .iter()
                        .map(|&c| values[c * len + t])
                        .fold(f64::INFINITY, f64::min),
                    Op::Max(cs) => cs
                        .iter()
                        .map(|&c| values[c * len + t])
                        .fold(f64::NEG_INFINITY, f64::max),
                    Op::Implies(l, r) => (-values[l * len + t]).max(values[r * len + t]),
                    Op::WindowMin { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        values[child * len + start..=child * len + end]
                            .iter()
                            .fold(f64::INFINITY, |a, &b| a.min(b))
                    }
                    Op::WindowMax { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        values[child * len + start..=child * len + end]
                            .iter()
                            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                    }
                    Op::Until { lhs, rhs, lo, hi } => {
                        let (_, end) = self.window(node, t, *lo, *hi, h)?;
                        let mut prefix = f64::INFINITY;
                        let mut best = f64::NEG_INFINITY;
                        for tp in t..=end {
                            prefix = prefix.min(values[lhs * len + tp]);
                            if tp >= t + lo {
                                best = best.max(values[rhs * len + tp].min(prefix));
                            }
                        }
                        best
                    }
                };
                values[idx * len + t] = v;
            }
        }
        Ok(values[self.root * len + t0])
    }

    fn window(&self, node: &Node, t: usize, lo: usize, hi: usize, h: usize) -> Result<(usize, usize)> {
        let start = t + lo;
        if start > h {
            return Err(Error::EmptyWindow {
                subformula: node.label.clone(),
                t,
            });
        }
        Ok((start, (t + hi).min(h)))
    }

    /// LogSumExp-smoothed robustness at step 0 together with the exact
    /// gradient with respect to every state in the trace.
    pub fn robustness_smooth(
        &self,
        trace: &Trace,
        cfg: &SmoothingConfig,
    ) -> Result<RobustnessResult> {
        self.robustness_smooth_at(trace, 0, cfg)
    }

    pub fn robustness_smooth_at(
        &self,
        trace: &Trace,
        t0: usize,
        cfg: &SmoothingConfig,
    ) -> Result<RobustnessResult> {
        cfg.check()?;
        let len = trace.len();
        let h = len - 1;
        if t0 > h {
            return Err(Error::EmptyWindow {
                subformula: self.nodes[self.root].label.clone(),
                t: t0,
            });
        }
        let beta = cfg.beta;
        let soft = Softness::Smooth { beta };
        let needed = self.needed_times(len, t0);
        let mut values = vec![f64::NAN; self.nodes.len() * len];

        // Forward pass.
        for (idx, node) in self.nodes.iter().enumerate() {
            for t in 0..len {
                if !needed[idx * len + t] {
                    continue;
                }
                let v = match &node.op {
                    Op::True => cfg.top_sentinel,
                    Op::Pred(p) => predicates::margin(&self.preds[*p], trace.state(t), soft)?,
                    Op::Not(c) => -values[c * len + t],
                    Op::Min(cs) => {
                        softmin_slice(cs.iter().map(|&c| values[c * len + t]), beta)
                    }
                    Op::Max(cs) => {
                        softmax_slice(cs.iter().map(|&c| values[c * len + t]), beta)
                    }
                    Op::Implies(l, r) => softmax_slice(
                        [-values[l * len + t], values[r * len + t]].into_iter(),
                        beta,
                    ),
                    Op::WindowMin { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        softmin_slice(
                            values[child * len + start..=child * len + end]
                                .iter()
                                .copied(),
                            beta,
                        )
                    }
                    Op::WindowMax { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        softmax_slice(
                            values[child * len + start..=child * len + end]
                                .iter()
                                .copied(),
                            beta,
                        )
                    }
                    Op::Until { lhs, rhs, lo, hi } => {
                        let (_, end) = self.window(node, t, *lo, *hi, h)?;
                        let mut pre = RunningSoftmin::new(beta);
                        let mut inner = Vec::with_capacity(end + 1 - t);
                        for tp in t..=end {
                            pre.push(values[lhs * len + tp]);
                            if tp >= t + lo {
                                let (v, _) = softmin2(values[rhs * len + tp], pre.value(), beta);
                                inner.push(v);
                            }
                        }
                        softmax_slice(inner.iter().copied(), beta)
                    }
                };
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        subformula: node.label.clone(),
                    });
                }
                values[idx * len + t] = v;
            }
        }

        // Reverse pass: adjoints of every (node, step) value, distributed via
        // the softmax weight vectors recomputed from the stored child values.
        let n = trace.dim();
        let mut adj = vec![0.0; self.nodes.len() * len];
        let mut grad = vec![0.0; len * n];
        adj[self.root * len + t0] = 1.0;
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            for t in 0..len {
                let a = adj[idx * len + t];
                if a == 0.0 || !needed[idx * len + t] {
                    continue;
                }
                match &node.op {
                    Op::True => {}
                    Op::Pred(p) => {
                        predicates::accumulate_grad(
                            &self.preds[*p],
                            trace.state(t),
                            soft,
                            a,
                            &mut grad[t * n..(t + 1) * n],
                        )?;
                    }
                    Op::Not(c) => adj[c * len + t] -= a,
                    Op::Min(cs) => {
                        backprop_softmin(
                            cs.iter().map(|&c| values[c * len + t]),
                            beta,
                            |k, w| adj[cs[k] * len + t] += a * w,
                        );
                    }
                    Op::Max(cs) => {
                        backprop_softmax(
                            cs.iter().map(|&c| values[c * len + t]),
                            beta,
                            |k, w| adj[cs[k] * len + t] += a * w,
                        );
                    }
                    Op::Implies(l, r) => {
                        let (l, r) = (*l, *r);
                        backprop_softmax(
                            [-values[l * len + t], values[r * len + t]].into_iter(),
                            beta,
                            |k, w| {
                                if k == 0 {
                                    adj[l * len + t] -= a * w;
                                } else {
                                    adj[r * len + t] += a * w;
                                }
                            },
                        );
                    }
                    Op::WindowMin { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        let child = *child;
                        backprop_softmin(
                            values[child * len + start..=child * len + end]
                                .iter()
                                .copied(),
                            beta,
                            |k, w| adj[child * len + start + k] += a * w,
                        );
                    }
                    Op::WindowMax { child, lo, hi } => {
                        let (start, end) = self.window(node, t, *lo, *hi, h)?;
                        let child = *child;
                        backprop_softmax(
                            values[child * len + start..=child * len + end]
                                .iter()
                                .copied(),
                            beta,
                            |k, w| adj[child * len + start + k] += a * w,
                        );
                    }
                    Op::Until { lhs, rhs, lo, hi } => {
                        let (lhs, rhs) = (*lhs, *rhs);
                        let (_, end) = self.window(node, t, *lo, *hi, h)?;
                        // Recompute inner structure: prefix softmin states and
                        // the pairwise weights per candidate step.
                        let mut pre = RunningSoftmin::new(beta);
                        let mut inner = Vec::new();
                        let mut pair_w = Vec::new();
                        let mut pre_states = Vec::new();
                        for tp in t..=end {
                            pre.push(values[lhs * len + tp]);
                            if tp >= t + lo {
                                let (v, w) = softmin2(values[rhs * len + tp], pre.value(), beta);
                                inner.push(v);
                                pair_w.push(w);
                                pre_states.push(pre.clone());
                            }
                        }
                        let mut outer_w = vec![0.0; inner.len()];
                        backprop_softmax(inner.iter().copied(), beta, |k, w| outer_w[k] = w);
                        for (k, ((w_out, (w_rhs, w_pre)), pre_k)) in outer_w
                            .iter()
                            .zip(pair_w.iter())
                            .zip(pre_states.iter())
                            .enumerate()
                        {
                            let tp = t + lo + k;
                            adj[rhs * len + tp] += a * w_out * w_rhs;
                            let gp = a * w_out * w_pre;
                            if gp != 0.0 {
                                for tq in t..=tp {
                                    adj[lhs * len + tq] +=
                                        gp * pre_k.weight_of(values[lhs * len + tq]);
                                }
                            }
                        }
                    }
                }
            }
        }

        for g in &grad {
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    subformula: self.nodes[self.root].label.clone(),
                });
            }
        }
        Ok(RobustnessResult {
            value: values[self.root * len + t0],
            per_state_grad: grad,
            state_dim: n,
        })
    }

    /// Upper bound `depth · ln(max fan-in) / β` on the gap between smooth and
    /// hard robustness, from the LogSumExp sandwich applied along the deepest
    /// reduction path of the evaluation DAG.
    pub fn lse_error_bound(&self, horizon: usize, beta: f64) -> f64 {
        let depth = self.smoothing_depth();
        let fanin = self.max_fanin(horizon);
        if depth == 0 || fanin < 2 {
            return 0.0;
        }
        depth as f64 * (fanin as f64).ln() / beta
    }

    /// Number of softmin/softmax levels along the deepest path, counting the
    /// internal two-sided min of box predicates and the three stacked
    /// reductions performed by `Until`.
    pub fn smoothing_depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            depth[idx] = match &node.op {
                Op::True => 0,
                Op::Pred(p) => match self.preds[*p].kind {
                    crate::stl::PredicateKind::BoxIn { .. } => 1,
                    _ => 0,
                },
                Op::Not(c) => depth[*c],
                Op::Min(cs) | Op::Max(cs) => 1 + cs.iter().map(|&c| depth[c]).max().unwrap_or(0),
                Op::Implies(l, r) => 1 + depth[*l].max(depth[*r]),
                Op::WindowMin { child, .. } | Op::WindowMax { child, .. } => 1 + depth[*child],
                Op::Until { lhs, rhs, .. } => 3 + depth[*lhs].max(depth[*rhs]),
            };
        }
        depth[self.root]
    }

    /// Largest reduction fan-in anywhere in the DAG for traces of the given
    /// horizon.
    pub fn max_fanin(&self, horizon: usize) -> usize {
        let cap = horizon + 1;
        let mut max = 0usize;
        for node in &self.nodes {
            let f = match &node.op {
                Op::True => 0,
                Op::Pred(p) => match self.preds[*p].kind {
                    crate::stl::PredicateKind::BoxIn { .. } => 2,
                    _ => 0,
                },
                Op::Not(_) => 0,
                Op::Min(cs) | Op::Max(cs) => cs.len(),
                Op::Implies(..) => 2,
                Op::WindowMin { lo, hi, .. } | Op::WindowMax { lo, hi, .. } => {
                    (hi - lo + 1).min(cap)
                }
                Op::Until { hi, .. } => (hi + 1).min(cap).max(2),
            };
            max = max.max(f);
        }
        max
    }
}

struct Compiler<'a> {
    nodes: Vec<Node>,
    preds: Vec<PredicateDef>,
    pred_index: HashMap<String, usize>,
    bindings: &'a Bindings,
}

impl<'a> Compiler<'a> {
    fn add(&mut self, f: &Formula) -> Result<usize> {
        let op = match f {
            Formula::True => Op::True,
            Formula::Pred(name) => {
                let idx = match self.pred_index.get(name) {
                    Some(&i) => i,
                    None => {
                        let def =
                            self.bindings
                                .get(name)
                                .ok_or_else(|| Error::UnboundPredicate {
                                    name: name.clone(),
                                })?;
                        def.check()?;
                        let i = self.preds.len();
                        self.preds.push(def.clone());
                        self.pred_index.insert(name.clone(), i);
                        i
                    }
                };
                Op::Pred(idx)
            }
            Formula::Not(c) => Op::Not(self.add(c)?),
            Formula::And(cs) => Op::Min(
                cs.iter()
                    .map(|c| self.add(c))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Formula::Or(cs) => Op::Max(
                cs.iter()
                    .map(|c| self.add(c))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Formula::Implies(l, r) => {
                let l = self.add(l)?;
                let r = self.add(r)?;
                Op::Implies(l, r)
            }
            Formula::Until(iv, l, r) => {
                let l = self.add(l)?;
                let r = self.add(r)?;
                Op::Until {
                    lhs: l,
                    rhs: r,
                    lo: iv.lo,
                    hi: iv.hi,
                }
            }
            Formula::Eventually(iv, c) => Op::WindowMax {
                child: self.add(c)?,
                lo: iv.lo,
                hi: iv.hi,
            },
            Formula::Always(iv, c) => Op::WindowMin {
                child: self.add(c)?,
                lo: iv.lo,
                hi: iv.hi,
            },
        };
        self.nodes.push(Node {
            op,
            label: pretty_print(f),
        });
        Ok(self.nodes.len() - 1)
    }
}

/// Streaming LogSumExp accumulator for `softmin` over a growing prefix.
#[derive(Clone)]
struct RunningSoftmin {
    beta: f64,
    /// Running max of `−β·v` over pushed values.
    m: f64,
    /// `Σ exp(−β·v − m)`.
    s: f64,
}

impl RunningSoftmin {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            m: f64::NEG_INFINITY,
            s: 0.0,
        }
    }

    fn push(&mut self, v: f64) {
        let x = -self.beta * v;
        if x <= self.m {
            self.s += (x - self.m).exp();
        } else {
            self.s = self.s * (self.m - x).exp() + 1.0;
            self.m = x;
        }
    }

    fn value(&self) -> f64 {
        -(self.m + self.s.ln()) / self.beta
    }

    /// Softmin weight of a previously pushed value.
    fn weight_of(&self, v: f64) -> f64 {
        (-self.beta * v - self.m).exp() / self.s
    }
}

fn softmax_slice(vals: impl Iterator<Item = f64> + Clone, beta: f64) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = vals.map(|v| ((v - m) * beta).exp()).sum();
    m + s.ln() / beta
}

fn softmin_slice(vals: impl Iterator<Item = f64> + Clone, beta: f64) -> f64 {
    -softmax_slice(vals.map(|v| -v), beta)
}

fn backprop_softmax(
    vals: impl Iterator<Item = f64> + Clone,
    beta: f64,
    mut sink: impl FnMut(usize, f64),
) {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = vals.map(|v| ((v - m) * beta).exp()).collect();
    let s: f64 = exps.iter().sum();
    for (k, e) in exps.iter().enumerate() {
        sink(k, e / s);
    }
}

fn backprop_softmin(
    vals: impl Iterator<Item = f64> + Clone,
    beta: f64,
    sink: impl FnMut(usize, f64),
) {
    // ∂softmin/∂v_k equals the softmax weight of the negated value.
    backprop_softmax(vals.map(|v| -v), beta, sink)
}

/// Convenience wrapper: compile and evaluate hard robustness at `t`.
pub fn robustness_hard(
    formula: &Formula,
    trace: &Trace,
    t: usize,
    bindings: &Bindings,
) -> Result<f64> {
    CompiledFormula::compile(formula, bindings)?.robustness_hard(trace, t)
}

/// Convenience wrapper: compile and evaluate smooth robustness at step 0.
pub fn robustness_smooth(
    formula: &Formula,
    trace: &Trace,
    cfg: &SmoothingConfig,
    bindings: &Bindings,
) -> Result<RobustnessResult> {
    CompiledFormula::compile(formula, bindings)?.robustness_smooth(trace, cfg)
}
