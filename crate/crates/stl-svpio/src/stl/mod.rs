//! STL formula representation, textual parser, and structural validation.
//!
//! Formulas follow the discrete-time grammar
//!
//! ```text
//! phi ::= "TRUE" | IDENT | "not" phi | phi "and" phi | phi "or" phi
//!       | phi "implies" phi | phi "U" "[" INT "," INT "]" phi
//!       | "F" "[" INT "," INT "]" phi | "G" "[" INT "," INT "]" phi
//!       | "(" phi ")"
//! ```
//!
//! Precedence, tightest first: `not`/`F`/`G`, `U`, `and`, `or`, `implies`.
//! `and`/`or` are left-associative (flattened to n-ary nodes), `implies` and
//! `U` are right-associative. Interval bounds are discrete step counts.

mod parser;
mod print;

use std::collections::BTreeSet;

use crate::{Error, Result};

pub use parser::parse_formula;

/// Closed discrete-time window `[lo, hi]` attached to a temporal operator,
/// measured in steps relative to the evaluation instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::IntervalOrder {
                lo,
                hi,
                line: 0,
                col: 0,
            });
        }
        Ok(Self { lo, hi })
    }
}

/// STL abstract syntax tree.
///
/// `And`/`Or` are n-ary; the derived operators (`Or`, `Implies`,
/// `Eventually`, `Always`) are kept as distinct variants rather than being
/// desugared so that evaluation can apply their min/max rules directly and
/// printing stays readable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Pred(String),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn pred(name: impl Into<String>) -> Self {
        Formula::Pred(name.into())
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// N-ary conjunction. Panics if fewer than two conjuncts; use the variant
    /// directly for degenerate trees.
    pub fn and(children: Vec<Formula>) -> Self {
        assert!(children.len() >= 2, "And requires at least two children");
        Formula::And(children)
    }

    pub fn or(children: Vec<Formula>) -> Self {
        assert!(children.len() >= 2, "Or requires at least two children");
        Formula::Or(children)
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn until(interval: Interval, lhs: Formula, rhs: Formula) -> Self {
        Formula::Until(interval, Box::new(lhs), Box::new(rhs))
    }

    pub fn eventually(interval: Interval, child: Formula) -> Self {
        Formula::Eventually(interval, Box::new(child))
    }

    pub fn always(interval: Interval, child: Formula) -> Self {
        Formula::Always(interval, Box::new(child))
    }

    /// Number of future steps the formula can reach past its evaluation
    /// instant: the maximum over root-to-leaf paths of the sum of interval
    /// upper bounds. A trace of `required_horizon() + 1` states suffices to
    /// evaluate the formula at step 0.
    pub fn required_horizon(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::Not(c) => c.required_horizon(),
            Formula::And(cs) | Formula::Or(cs) => {
                cs.iter().map(|c| c.required_horizon()).max().unwrap_or(0)
            }
            Formula::Implies(l, r) => l.required_horizon().max(r.required_horizon()),
            Formula::Until(iv, l, r) => {
                iv.hi + l.required_horizon().max(r.required_horizon())
            }
            Formula::Eventually(iv, c) | Formula::Always(iv, c) => iv.hi + c.required_horizon(),
        }
    }

    /// Names of all predicates referenced by the formula.
    pub fn predicate_names(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Formula::True => {}
            Formula::Pred(name) => {
                out.insert(name.as_str());
            }
            Formula::Not(c) | Formula::Eventually(_, c) | Formula::Always(_, c) => {
                c.collect_names(out)
            }
            Formula::And(cs) | Formula::Or(cs) => {
                for c in cs {
                    c.collect_names(out);
                }
            }
            Formula::Implies(l, r) | Formula::Until(_, l, r) => {
                l.collect_names(out);
                r.collect_names(out);
            }
        }
    }
}

/// Checks that every predicate is bound and that the formula fits within a
/// trace of `horizon + 1` states when evaluated at step 0.
///
/// The horizon check is monotone: a formula accepted at `horizon` is
/// accepted at every larger horizon.
pub fn validate(formula: &Formula, bindings: &BTreeSet<String>, horizon: usize) -> Result<()> {
    for name in formula.predicate_names() {
        if !bindings.contains(name) {
            return Err(Error::UnboundPredicate {
                name: name.to_string(),
            });
        }
    }
    check_horizon(formula, horizon)
}

fn check_horizon(formula: &Formula, horizon: usize) -> Result<()> {
    let required = formula.required_horizon();
    if required > horizon {
        // Report the deepest subformula that overflows the horizon on its own.
        let offender = find_overflow(formula, horizon).unwrap_or(formula);
        return Err(Error::HorizonOverflow {
            subformula: print::pretty_print(offender),
            required: offender.required_horizon() + 1,
            horizon,
            available: horizon + 1,
        });
    }
    Ok(())
}

fn find_overflow(formula: &Formula, horizon: usize) -> Option<&Formula> {
    if formula.required_horizon() <= horizon {
        return None;
    }
    let children: Vec<&Formula> = match formula {
        Formula::True | Formula::Pred(_) => vec![],
        Formula::Not(c) => vec![c],
        Formula::And(cs) | Formula::Or(cs) => cs.iter().collect(),
        Formula::Implies(l, r) => vec![l, r],
        Formula::Until(_, l, r) => vec![l, r],
        Formula::Eventually(_, c) | Formula::Always(_, c) => vec![c],
    };
    for c in children {
        if let Some(sub) = find_overflow(c, horizon) {
            return Some(sub);
        }
    }
    Some(formula)
}

pub use print::pretty_print;

/// A parametric predicate over the joint state vector.
///
/// The joint state stacks one `[px, py, vx, vy]` block per agent; agent `i`
/// occupies components `4i..4i+4`. Margins are positive exactly when the
/// predicate holds, and gradients are analytic.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredicateDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: PredicateKind,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredicateKind {
    /// `‖p_i − c‖₂ − r`: stay outside a circular obstacle.
    CircleAvoid {
        agent: usize,
        center: [f64; 2],
        radius: f64,
    },
    /// `r − ‖p_i − c‖₂`: be inside a circular zone.
    CircleIn {
        agent: usize,
        center: [f64; 2],
        radius: f64,
    },
    /// `min(h_x − |x − c_x|, h_y − |y − c_y|)`: be inside an axis-aligned box
    /// with half-extents `h`.
    BoxIn {
        agent: usize,
        center: [f64; 2],
        half_extents: [f64; 2],
    },
    /// `x_i − threshold`: agent's x-coordinate at or beyond a vertical line.
    HalfspaceXGe { agent: usize, threshold: f64 },
    /// `‖p_i − p_j‖₂ − 2·r_col`: two agents keep a safety separation.
    PairwiseSeparation {
        agent_a: usize,
        agent_b: usize,
        collision_radius: f64,
    },
    /// `aᵀx + b` over the full joint state; the extension escape hatch.
    CustomAffine { coeffs: Vec<f64>, offset: f64 },
}

impl PredicateDef {
    pub fn new(name: impl Into<String>, kind: PredicateKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    /// Checks geometric parameter invariants.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::InvalidConfig(format!(
                "predicate `{}`: {msg}",
                self.name
            )))
        };
        match &self.kind {
            PredicateKind::CircleAvoid { radius, .. } | PredicateKind::CircleIn { radius, .. } => {
                if *radius <= 0.0 {
                    return bad("radius must be positive");
                }
            }
            PredicateKind::BoxIn { half_extents, .. } => {
                if half_extents.iter().any(|h| *h <= 0.0) {
                    return bad("half-extents must be positive componentwise");
                }
            }
            PredicateKind::PairwiseSeparation {
                collision_radius, ..
            } => {
                if *collision_radius <= 0.0 {
                    return bad("collision radius must be positive");
                }
            }
            PredicateKind::HalfspaceXGe { .. } => {}
            PredicateKind::CustomAffine { coeffs, .. } => {
                if coeffs.is_empty() {
                    return bad("affine predicate needs at least one coefficient");
                }
            }
        }
        Ok(())
    }

    /// Agent indices the predicate reads.
    pub fn agents(&self) -> Vec<usize> {
        match &self.kind {
            PredicateKind::CircleAvoid { agent, .. }
            | PredicateKind::CircleIn { agent, .. }
            | PredicateKind::BoxIn { agent, .. }
            | PredicateKind::HalfspaceXGe { agent, .. } => vec![*agent],
            PredicateKind::PairwiseSeparation {
                agent_a, agent_b, ..
            } => vec![*agent_a, *agent_b],
            PredicateKind::CustomAffine { .. } => vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binds(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn validate_bound_predicate_ok() {
        let f = Formula::pred("p");
        assert!(validate(&f, &binds(&["p"]), 10).is_ok());
    }

    #[test]
    fn validate_unbound_predicate_named() {
        let f = Formula::pred("q");
        let err = validate(&f, &binds(&["p"]), 10).unwrap_err();
        match err {
            Error::UnboundPredicate { name } => assert_eq!(name, "q"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn validate_horizon_overflow() {
        let f = Formula::always(Interval::new(0, 20).unwrap(), Formula::pred("p"));
        let err = validate(&f, &binds(&["p"]), 10).unwrap_err();
        match err {
            Error::HorizonOverflow {
                required, horizon, ..
            } => {
                assert_eq!(required, 21);
                assert_eq!(horizon, 10);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn validate_monotone_in_horizon() {
        let f = Formula::until(
            Interval::new(2, 7).unwrap(),
            Formula::pred("p"),
            Formula::eventually(Interval::new(0, 3).unwrap(), Formula::pred("q")),
        );
        assert_eq!(f.required_horizon(), 10);
        assert!(validate(&f, &binds(&["p", "q"]), 9).is_err());
        for h in 10..20 {
            assert!(validate(&f, &binds(&["p", "q"]), h).is_ok());
        }
    }

    #[test]
    fn overflow_reports_offending_subformula() {
        let inner = Formula::always(Interval::new(0, 20).unwrap(), Formula::pred("p"));
        let f = Formula::and(vec![Formula::pred("p"), inner]);
        let err = validate(&f, &binds(&["p"]), 10).unwrap_err();
        match err {
            Error::HorizonOverflow { subformula, .. } => {
                assert_eq!(subformula, "G[0,20] p");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn predicate_invariants_checked() {
        let p = PredicateDef::new(
            "bad",
            PredicateKind::CircleAvoid {
                agent: 0,
                center: [0.0, 0.0],
                radius: 0.0,
            },
        );
        assert!(p.check().is_err());
        let q = PredicateDef::new(
            "ok",
            PredicateKind::BoxIn {
                agent: 1,
                center: [1.0, 2.0],
                half_extents: [0.5, 0.5],
            },
        );
        assert!(q.check().is_ok());
        assert_eq!(q.agents(), vec![1]);
    }
}
