//! Programmatic construction of the canonical task formulas from geometry,
//! plus the structural audit tying geometry and formula together.

use std::collections::HashMap;

use crate::stl::{Formula, Interval, PredicateDef, PredicateKind};
use crate::{Error, Result};

use super::{Geometry, Scenario, Zone, ZoneShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    ReachAvoid,
    LongHorizon,
    ButtonOrder,
    SyncGoals,
    Corridor,
}

impl TaskKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "reach_avoid" => Some(TaskKind::ReachAvoid),
            "long_horizon" => Some(TaskKind::LongHorizon),
            "button_order" => Some(TaskKind::ButtonOrder),
            "sync_goals" => Some(TaskKind::SyncGoals),
            "corridor" => Some(TaskKind::Corridor),
            _ => None,
        }
    }
}

/// A formula together with the predicate bindings it references.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltFormula {
    pub formula: Formula,
    pub predicates: Vec<PredicateDef>,
}

fn iv(lo: usize, hi: usize) -> Interval {
    Interval { lo, hi }
}

fn avoid_pred(agent: usize, k: usize, obs: &super::Circle) -> PredicateDef {
    PredicateDef::new(
        format!("avoid_a{agent}_o{k}"),
        PredicateKind::CircleAvoid {
            agent,
            center: obs.center,
            radius: obs.radius,
        },
    )
}

fn zone_pred(agent: usize, zone: &Zone) -> PredicateDef {
    match zone.shape {
        ZoneShape::Circle { radius } => PredicateDef::new(
            format!("in_a{agent}_{}", zone.name),
            PredicateKind::CircleIn {
                agent,
                center: zone.center,
                radius,
            },
        ),
        ZoneShape::Box { half_extents } => PredicateDef::new(
            format!("inbox_a{agent}_{}", zone.name),
            PredicateKind::BoxIn {
                agent,
                center: zone.center,
                half_extents,
            },
        ),
    }
}

fn wall_pred(agent: usize, k: usize, wall: &super::Rect) -> PredicateDef {
    PredicateDef::new(
        format!("inbox_a{agent}_w{k}"),
        PredicateKind::BoxIn {
            agent,
            center: wall.center,
            half_extents: wall.half_extents,
        },
    )
}

fn sep_pred(i: usize, j: usize, collision_radius: f64) -> PredicateDef {
    PredicateDef::new(
        format!("sep_a{i}_a{j}"),
        PredicateKind::PairwiseSeparation {
            agent_a: i,
            agent_b: j,
            collision_radius,
        },
    )
}

fn xplus_pred(agent: usize) -> PredicateDef {
    PredicateDef::new(
        format!("xplus_a{agent}"),
        PredicateKind::HalfspaceXGe {
            agent,
            threshold: 0.0,
        },
    )
}

fn conjoin(mut conjuncts: Vec<Formula>) -> Result<Formula> {
    match conjuncts.len() {
        0 => Err(Error::InvalidConfig("task produced an empty formula".into())),
        1 => Ok(conjuncts.pop().expect("one conjunct")),
        _ => Ok(Formula::And(conjuncts)),
    }
}

fn goal_zone_for<'a>(geometry: &'a Geometry, agent: usize) -> Result<&'a Zone> {
    geometry
        .zones
        .iter()
        .find(|z| z.agent == Some(agent))
        .ok_or_else(|| {
            Error::InvalidConfig(format!("no goal zone assigned to agent {agent}"))
        })
}

/// Emits the canonical formula for a task kind over concrete geometry,
/// together with the predicates it binds.
pub fn build_formula(
    kind: TaskKind,
    geometry: &Geometry,
    agents: usize,
    horizon: usize,
    delta: Option<usize>,
    collision_radius: Option<f64>,
) -> Result<BuiltFormula> {
    let h = horizon;
    let mut preds: Vec<PredicateDef> = Vec::new();
    let mut conjuncts: Vec<Formula> = Vec::new();
    let mut bind = |p: PredicateDef| -> Formula {
        let f = Formula::pred(p.name.clone());
        if !preds.iter().any(|q| q.name == p.name) {
            preds.push(p);
        }
        f
    };

    let need_rcol = || {
        collision_radius.ok_or_else(|| {
            Error::InvalidConfig("multi-agent task needs a collision radius".into())
        })
    };

    match kind {
        TaskKind::ReachAvoid => {
            if agents != 1 {
                return Err(Error::InvalidConfig("reach_avoid is single-agent".into()));
            }
            for (k, obs) in geometry.obstacles.iter().enumerate() {
                let p = bind(avoid_pred(0, k, obs));
                conjuncts.push(Formula::always(iv(0, h), p));
            }
            let goal = goal_zone_for(geometry, 0)?;
            let p = bind(zone_pred(0, goal));
            conjuncts.push(Formula::eventually(iv(0, h), p));
        }
        TaskKind::LongHorizon => {
            if agents != 1 {
                return Err(Error::InvalidConfig("long_horizon is single-agent".into()));
            }
            for (k, obs) in geometry.obstacles.iter().enumerate() {
                let p = bind(avoid_pred(0, k, obs));
                conjuncts.push(Formula::always(iv(0, h), p));
            }
            for zone in geometry.zones.iter().filter(|z| z.agent == Some(0)) {
                let p = bind(zone_pred(0, zone));
                conjuncts.push(Formula::eventually(iv(0, h), p));
            }
        }
        TaskKind::ButtonOrder => {
            if agents != 2 {
                return Err(Error::InvalidConfig("button_order is a two-agent task".into()));
            }
            for agent in 0..2 {
                for (k, obs) in geometry.obstacles.iter().enumerate() {
                    let p = bind(avoid_pred(agent, k, obs));
                    conjuncts.push(Formula::always(iv(0, h), p));
                }
            }
            let button = geometry
                .zones
                .iter()
                .find(|z| z.name == "button")
                .ok_or_else(|| Error::InvalidConfig("button_order needs a `button` zone".into()))?;
            let goal0 = goal_zone_for(geometry, 0)?;
            let goal1 = goal_zone_for(geometry, 1)?;
            let p_goal0 = bind(zone_pred(0, goal0));
            let p_goal1 = bind(zone_pred(1, goal1));
            // Agent 0 presses the button; agent 1's goal entry is gated on it.
            let p_button = bind(zone_pred(0, button));
            conjuncts.push(Formula::eventually(iv(0, h), p_goal0));
            conjuncts.push(Formula::eventually(iv(0, h), p_goal1.clone()));
            conjuncts.push(Formula::until(iv(0, h), Formula::not(p_goal1), p_button));
        }
        TaskKind::SyncGoals => {
            if agents < 2 {
                return Err(Error::InvalidConfig("sync_goals needs multiple agents".into()));
            }
            let delta = delta.ok_or_else(|| {
                Error::InvalidConfig("sync_goals needs a window half-width delta".into())
            })?;
            if 2 * delta >= h {
                return Err(Error::InvalidConfig(format!(
                    "sync window 2·delta = {} leaves an empty outer window for horizon {h}",
                    2 * delta
                )));
            }
            let r = need_rcol()?;
            for i in 0..agents {
                for j in (i + 1)..agents {
                    let p = bind(sep_pred(i, j, r));
                    conjuncts.push(Formula::always(iv(0, h), p));
                }
            }
            let mut inner = Vec::with_capacity(agents);
            for i in 0..agents {
                let zone = goal_zone_for(geometry, i)?;
                let p = bind(zone_pred(i, zone));
                inner.push(Formula::eventually(iv(0, 2 * delta), p));
            }
            let shared = conjoin(inner)?;
            conjuncts.push(Formula::eventually(iv(0, h - 2 * delta), shared));
        }
        TaskKind::Corridor => {
            if geometry.walls.is_empty() {
                return Err(Error::InvalidConfig("corridor needs wall rectangles".into()));
            }
            let corridor = geometry
                .zones
                .iter()
                .find(|z| {
                    z.agent.is_none() && matches!(z.shape, ZoneShape::Box { .. })
                })
                .ok_or_else(|| {
                    Error::InvalidConfig("corridor needs a shared box zone".into())
                })?;
            if agents >= 2 {
                let r = need_rcol()?;
                for i in 0..agents {
                    for j in (i + 1)..agents {
                        let p = bind(sep_pred(i, j, r));
                        conjuncts.push(Formula::always(iv(0, h), p));
                    }
                }
            }
            for agent in 0..agents {
                for (k, wall) in geometry.walls.iter().enumerate() {
                    let p = bind(wall_pred(agent, k, wall));
                    conjuncts.push(Formula::always(iv(0, h), Formula::not(p)));
                }
            }
            for agent in 0..agents {
                let p = bind(zone_pred(agent, corridor));
                conjuncts.push(Formula::eventually(iv(0, h), p));
            }
            for agent in 0..agents {
                let p = bind(xplus_pred(agent));
                conjuncts.push(Formula::eventually(iv(0, h), p));
            }
            // Exclusive occupancy: no two agents inside the corridor at once.
            for i in 0..agents {
                for j in (i + 1)..agents {
                    let pi = bind(zone_pred(i, corridor));
                    let pj = bind(zone_pred(j, corridor));
                    conjuncts.push(Formula::always(
                        iv(0, h),
                        Formula::not(Formula::and(vec![pi, pj])),
                    ));
                }
            }
        }
    }

    Ok(BuiltFormula {
        formula: conjoin(conjuncts)?,
        predicates: preds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum TemporalContext {
    None,
    Always,
    Eventually,
    Until,
}

fn count_contexts(
    f: &Formula,
    ctx: TemporalContext,
    out: &mut HashMap<(String, TemporalContext), usize>,
) {
    match f {
        Formula::True => {}
        Formula::Pred(name) => {
            *out.entry((name.clone(), ctx)).or_insert(0) += 1;
        }
        Formula::Not(c) => count_contexts(c, ctx, out),
        Formula::And(cs) | Formula::Or(cs) => {
            for c in cs {
                count_contexts(c, ctx, out);
            }
        }
        Formula::Implies(l, r) => {
            count_contexts(l, ctx, out);
            count_contexts(r, ctx, out);
        }
        Formula::Until(_, l, r) => {
            count_contexts(l, TemporalContext::Until, out);
            count_contexts(r, TemporalContext::Until, out);
        }
        Formula::Eventually(_, c) => count_contexts(c, TemporalContext::Eventually, out),
        Formula::Always(_, c) => count_contexts(c, TemporalContext::Always, out),
    }
}

/// Structural agreement between geometry and formula: every obstacle is
/// covered by exactly one `Always`-avoid conjunct per referencing agent, and
/// every agent-assigned goal zone by exactly one `Eventually`-reach conjunct.
pub fn audit_structure(scenario: &Scenario) -> Result<()> {
    let mut contexts = HashMap::new();
    count_contexts(&scenario.formula, TemporalContext::None, &mut contexts);
    let occurrences = |name: &str, ctx: TemporalContext| -> usize {
        contexts.get(&(name.to_string(), ctx)).copied().unwrap_or(0)
    };
    let total = |name: &str| -> usize {
        contexts
            .iter()
            .filter(|((n, _), _)| n == name)
            .map(|(_, c)| *c)
            .sum()
    };

    for (k, obs) in scenario.geometry.obstacles.iter().enumerate() {
        let mut covered = false;
        for p in scenario.bindings.values() {
            if let PredicateKind::CircleAvoid { center, radius, .. } = &p.kind {
                if *center == obs.center && *radius == obs.radius && total(&p.name) > 0 {
                    covered = true;
                    if occurrences(&p.name, TemporalContext::Always) != 1
                        || total(&p.name) != 1
                    {
                        return Err(Error::InvalidConfig(format!(
                            "obstacle {k}: predicate `{}` must appear in exactly one avoid conjunct",
                            p.name
                        )));
                    }
                }
            }
        }
        if !covered {
            return Err(Error::InvalidConfig(format!(
                "obstacle {k} has no avoid conjunct in the formula"
            )));
        }
    }

    for zone in &scenario.geometry.zones {
        let Some(agent) = zone.agent else { continue };
        let mut reached = 0usize;
        for p in scenario.bindings.values() {
            let matches_zone = match (&p.kind, &zone.shape) {
                (
                    PredicateKind::CircleIn {
                        agent: a,
                        center,
                        radius,
                    },
                    ZoneShape::Circle { radius: zr },
                ) => *a == agent && *center == zone.center && radius == zr,
                (
                    PredicateKind::BoxIn {
                        agent: a,
                        center,
                        half_extents,
                    },
                    ZoneShape::Box { half_extents: zh },
                ) => *a == agent && *center == zone.center && half_extents == zh,
                _ => false,
            };
            if matches_zone {
                reached += occurrences(&p.name, TemporalContext::Eventually);
            }
        }
        if reached != 1 {
            return Err(Error::InvalidConfig(format!(
                "goal zone `{}` of agent {agent} must appear in exactly one reach conjunct (found {reached})",
                zone.name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Circle;
    use crate::stl::{parse_formula, pretty_print};

    fn circle_zone(name: &str, agent: Option<usize>, center: [f64; 2], radius: f64) -> Zone {
        Zone {
            name: name.into(),
            agent,
            center,
            shape: ZoneShape::Circle { radius },
        }
    }

    fn sync_geometry(agents: usize) -> Geometry {
        Geometry {
            obstacles: vec![],
            zones: (0..agents)
                .map(|i| {
                    circle_zone(
                        &format!("goal{i}"),
                        Some(i),
                        [i as f64, -(i as f64)],
                        0.3,
                    )
                })
                .collect(),
            walls: vec![],
        }
    }

    #[test]
    fn sync_goals_outer_window_matches_delta() {
        let built = build_formula(
            TaskKind::SyncGoals,
            &sync_geometry(2),
            2,
            100,
            Some(5),
            Some(0.15),
        )
        .unwrap();
        let text = pretty_print(&built.formula);
        assert!(
            text.contains("F[0,90] (F[0,10] in_a0_goal0 and F[0,10] in_a1_goal1)"),
            "got: {text}"
        );
    }

    #[test]
    fn sync_goals_rejects_oversized_delta() {
        let err = build_formula(
            TaskKind::SyncGoals,
            &sync_geometry(2),
            2,
            100,
            Some(50),
            Some(0.15),
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty outer window"), "{err}");
    }

    #[test]
    fn button_order_contains_gated_until() {
        let geometry = Geometry {
            obstacles: vec![Circle {
                center: [0.0, 0.0],
                radius: 0.5,
            }],
            zones: vec![
                circle_zone("goal_a", Some(0), [2.0, 1.0], 0.3),
                circle_zone("button", None, [0.5, -1.5], 0.3),
                circle_zone("goal_c", Some(1), [2.0, -1.0], 0.3),
            ],
            walls: vec![],
        };
        let built =
            build_formula(TaskKind::ButtonOrder, &geometry, 2, 120, None, None).unwrap();
        let text = pretty_print(&built.formula);
        assert!(
            text.contains("not in_a1_goal_c U[0,120] in_a0_button"),
            "got: {text}"
        );
    }

    #[test]
    fn corridor_single_agent_has_no_pair_terms() {
        let geometry = Geometry {
            obstacles: vec![],
            zones: vec![Zone {
                name: "corridor".into(),
                agent: None,
                center: [0.0, 0.0],
                shape: ZoneShape::Box {
                    half_extents: [0.3, 0.35],
                },
            }],
            walls: vec![Rect {
                center: [0.0, 2.0],
                half_extents: [0.15, 1.65],
            }],
        };
        let built = build_formula(TaskKind::Corridor, &geometry, 1, 80, None, None).unwrap();
        let text = pretty_print(&built.formula);
        assert!(!text.contains("sep_"), "got: {text}");
        assert_eq!(
            text,
            "G[0,80] not inbox_a0_w0 and F[0,80] inbox_a0_corridor and F[0,80] xplus_a0"
        );
    }

    use crate::scenario::Rect;

    #[test]
    fn built_formulas_round_trip_through_text() {
        let built = build_formula(
            TaskKind::SyncGoals,
            &sync_geometry(3),
            3,
            100,
            Some(5),
            Some(0.15),
        )
        .unwrap();
        let text = pretty_print(&built.formula);
        assert_eq!(parse_formula(&text).unwrap(), built.formula);
    }

    #[test]
    fn builtin_formulas_match_builder_output() {
        for name in Scenario::builtin_names() {
            let s = Scenario::builtin(name).unwrap();
            let kind = TaskKind::from_name(name).unwrap();
            let built = build_formula(
                kind,
                &s.geometry,
                s.dynamics.agents,
                s.horizon,
                s.delta,
                s.collision_radius,
            )
            .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(
                built.formula, s.formula,
                "{name}: built formula differs from config formula\nbuilt: {}\nconfig: {}",
                pretty_print(&built.formula),
                s.formula_text
            );
            for p in &built.predicates {
                assert_eq!(
                    s.bindings.get(&p.name),
                    Some(p),
                    "{name}: predicate `{}` differs between builder and config",
                    p.name
                );
            }
        }
    }

    #[test]
    fn builtin_geometry_agrees_with_formula() {
        for name in Scenario::builtin_names() {
            let s = Scenario::builtin(name).unwrap();
            audit_structure(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
