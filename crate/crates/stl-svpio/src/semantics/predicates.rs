//! Atomic predicate margins and their analytic gradients.
//!
//! Margins are positive exactly when the predicate holds. Each agent owns a
//! `[px, py, vx, vy]` block of the joint state; predicate gradients touch
//! only position components (and whatever `custom_affine` names).

use crate::stl::{PredicateDef, PredicateKind};
use crate::{Error, Result};

/// Below this separation, Euclidean-norm gradients are replaced by a fixed
/// unit vector along the x axis so coincident points still receive a
/// deterministic push direction.
pub const NORM_SINGULARITY_EPS: f64 = 1e-9;

fn agent_pos(x: &[f64], agent: usize, name: &str) -> Result<(f64, f64)> {
    let base = agent * 4;
    if base + 3 >= x.len() {
        return Err(Error::DimensionMismatch {
            expected: base + 4,
            got: x.len(),
            context: format!("predicate `{name}` reads agent {agent}"),
        });
    }
    Ok((x[base], x[base + 1]))
}

/// Direction of `d` with the coincident-point fallback.
fn safe_unit(dx: f64, dy: f64) -> (f64, f64, f64) {
    let norm = (dx * dx + dy * dy).sqrt();
    if norm < NORM_SINGULARITY_EPS {
        (1.0, 0.0, norm)
    } else {
        (dx / norm, dy / norm, norm)
    }
}

/// How `box_in`'s internal two-sided min is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum Softness {
    Hard,
    /// LogSumExp softmin at the given sharpness.
    Smooth { beta: f64 },
}

/// Margin of a predicate at one joint state.
pub fn margin(p: &PredicateDef, x: &[f64], softness: Softness) -> Result<f64> {
    Ok(eval(p, x, softness, None)?.0)
}

/// Margin plus dense gradient with respect to the full joint state.
pub fn predicate_value_grad(p: &PredicateDef, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; x.len()];
    let (value, _) = eval(p, x, Softness::Hard, Some((&mut grad, 1.0)))?;
    Ok((value, grad))
}

/// Adds `scale · ∂margin/∂x` into `grad_out`, returning the margin. Used by
/// the smooth evaluator's reverse pass to avoid allocating dense gradients.
pub fn accumulate_grad(
    p: &PredicateDef,
    x: &[f64],
    softness: Softness,
    scale: f64,
    grad_out: &mut [f64],
) -> Result<f64> {
    Ok(eval(p, x, softness, Some((grad_out, scale)))?.0)
}

fn eval(
    p: &PredicateDef,
    x: &[f64],
    softness: Softness,
    grad: Option<(&mut [f64], f64)>,
) -> Result<(f64, ())> {
    let name = p.name.as_str();
    match &p.kind {
        PredicateKind::CircleAvoid {
            agent,
            center,
            radius,
        } => {
            let (px, py) = agent_pos(x, *agent, name)?;
            let (ux, uy, norm) = safe_unit(px - center[0], py - center[1]);
            if let Some((g, s)) = grad {
                g[agent * 4] += s * ux;
                g[agent * 4 + 1] += s * uy;
            }
            Ok((norm - radius, ()))
        }
        PredicateKind::CircleIn {
            agent,
            center,
            radius,
        } => {
            let (px, py) = agent_pos(x, *agent, name)?;
            let (ux, uy, norm) = safe_unit(px - center[0], py - center[1]);
            if let Some((g, s)) = grad {
                g[agent * 4] -= s * ux;
                g[agent * 4 + 1] -= s * uy;
            }
            Ok((radius - norm, ()))
        }
        PredicateKind::BoxIn {
            agent,
            center,
            half_extents,
        } => {
            let (px, py) = agent_pos(x, *agent, name)?;
            let dx = px - center[0];
            let dy = py - center[1];
            let mx = half_extents[0] - dx.abs();
            let my = half_extents[1] - dy.abs();
            // d(mx)/d(px) = -sign(dx); sign(0) taken as +1.
            let sx = if dx < 0.0 { 1.0 } else { -1.0 };
            let sy = if dy < 0.0 { 1.0 } else { -1.0 };
            let (value, wx, wy) = match softness {
                Softness::Hard => {
                    if mx <= my {
                        (mx, 1.0, 0.0)
                    } else {
                        (my, 0.0, 1.0)
                    }
                }
                Softness::Smooth { beta } => {
                    let (v, w) = softmin2(mx, my, beta);
                    (v, w.0, w.1)
                }
            };
            if let Some((g, s)) = grad {
                g[agent * 4] += s * (wx * sx);
                g[agent * 4 + 1] += s * (wy * sy);
            }
            Ok((value, ()))
        }
        PredicateKind::HalfspaceXGe { agent, threshold } => {
            let (px, _) = agent_pos(x, *agent, name)?;
            if let Some((g, s)) = grad {
                g[agent * 4] += s;
            }
            Ok((px - threshold, ()))
        }
        PredicateKind::PairwiseSeparation {
            agent_a,
            agent_b,
            collision_radius,
        } => {
            let (ax, ay) = agent_pos(x, *agent_a, name)?;
            let (bx, by) = agent_pos(x, *agent_b, name)?;
            let (ux, uy, norm) = safe_unit(ax - bx, ay - by);
            if let Some((g, s)) = grad {
                g[agent_a * 4] += s * ux;
                g[agent_a * 4 + 1] += s * uy;
                g[agent_b * 4] -= s * ux;
                g[agent_b * 4 + 1] -= s * uy;
            }
            Ok((norm - 2.0 * collision_radius, ()))
        }
        PredicateKind::CustomAffine { coeffs, offset } => {
            if coeffs.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: coeffs.len(),
                    got: x.len(),
                    context: format!("predicate `{name}` affine coefficients"),
                });
            }
            let value: f64 = coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>() + offset;
            if let Some((g, s)) = grad {
                for (gi, c) in g.iter_mut().zip(coeffs) {
                    *gi += s * c;
                }
            }
            Ok((value, ()))
        }
    }
}

/// Two-element LogSumExp softmin and its weights.
pub(crate) fn softmin2(a: f64, b: f64, beta: f64) -> (f64, (f64, f64)) {
    // softmin(a,b) = -softmax(-a,-b); weights are the softmax weights of the
    // negated pair.
    let na = -beta * a;
    let nb = -beta * b;
    let m = na.max(nb);
    let ea = (na - m).exp();
    let eb = (nb - m).exp();
    let s = ea + eb;
    let value = -(m + s.ln()) / beta;
    (value, (ea / s, eb / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state1(px: f64, py: f64) -> Vec<f64> {
        vec![px, py, 0.0, 0.0]
    }

    #[test]
    fn circle_avoid_margin_and_radial_gradient() {
        let p = PredicateDef::new(
            "avoid",
            PredicateKind::CircleAvoid {
                agent: 0,
                center: [0.0, 0.0],
                radius: 2.0,
            },
        );
        let (value, grad) = predicate_value_grad(&p, &state1(3.0, 4.0)).unwrap();
        assert_relative_eq!(value, 3.0, max_relative = 1e-15);
        assert_relative_eq!(grad[0], 0.6, max_relative = 1e-15);
        assert_relative_eq!(grad[1], 0.8, max_relative = 1e-15);
        assert_eq!(&grad[2..], &[0.0, 0.0]);
    }

    #[test]
    fn pairwise_separation_at_coincidence() {
        let p = PredicateDef::new(
            "sep",
            PredicateKind::PairwiseSeparation {
                agent_a: 0,
                agent_b: 1,
                collision_radius: 0.5,
            },
        );
        let x = vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let (value, grad) = predicate_value_grad(&p, &x).unwrap();
        assert_relative_eq!(value, -1.0, max_relative = 1e-15);
        // Coincident points fall back to the fixed x-axis direction.
        assert_eq!(grad[0], 1.0);
        assert_eq!(grad[1], 0.0);
        assert_eq!(grad[4], -1.0);
        assert_eq!(grad[5], 0.0);
    }

    #[test]
    fn box_in_matches_boundary_distance_oracle() {
        let p = PredicateDef::new(
            "inbox",
            PredicateKind::BoxIn {
                agent: 0,
                center: [0.0, 0.0],
                half_extents: [1.0, 1.0],
            },
        );
        let (value, _) = predicate_value_grad(&p, &state1(0.25, -0.5)).unwrap();
        assert_relative_eq!(value, 0.5, max_relative = 1e-15);

        // Grid-sampled oracle: for a point inside the box, the margin is the
        // distance to the nearest boundary point.
        let mut best = f64::INFINITY;
        let steps = 4000;
        for k in 0..=steps {
            let s = -1.0 + 2.0 * k as f64 / steps as f64;
            for (bx, by) in [(s, -1.0), (s, 1.0), (-1.0, s), (1.0, s)] {
                let d = ((0.25 - bx) as f64).hypot(-0.5 - by);
                best = best.min(d);
            }
        }
        assert_relative_eq!(value, best, epsilon = 1e-3);
    }

    #[test]
    fn halfspace_reads_x_component() {
        let p = PredicateDef::new(
            "xplus",
            PredicateKind::HalfspaceXGe {
                agent: 1,
                threshold: 0.0,
            },
        );
        let x = vec![9.0, 9.0, 0.0, 0.0, -0.75, 2.0, 0.0, 0.0];
        let (value, grad) = predicate_value_grad(&p, &x).unwrap();
        assert_eq!(value, -0.75);
        assert_eq!(grad[4], 1.0);
        assert!(grad.iter().enumerate().all(|(i, g)| i == 4 || *g == 0.0));
    }

    #[test]
    fn affine_dimension_mismatch() {
        let p = PredicateDef::new(
            "aff",
            PredicateKind::CustomAffine {
                coeffs: vec![1.0, 2.0],
                offset: 0.5,
            },
        );
        assert!(predicate_value_grad(&p, &state1(0.0, 0.0)).is_err());
        let (value, grad) = predicate_value_grad(&p, &[2.0, -1.0]).unwrap();
        assert_relative_eq!(value, 0.5, max_relative = 1e-15);
        assert_eq!(grad, vec![1.0, 2.0]);
    }

    #[test]
    fn smooth_box_softens_internal_min() {
        let p = PredicateDef::new(
            "inbox",
            PredicateKind::BoxIn {
                agent: 0,
                center: [0.0, 0.0],
                half_extents: [1.0, 1.0],
            },
        );
        // At the center both sides tie at 1.0; softmin dips below the hard min.
        let hard = margin(&p, &state1(0.0, 0.0), Softness::Hard).unwrap();
        let smooth = margin(&p, &state1(0.0, 0.0), Softness::Smooth { beta: 1.0 }).unwrap();
        assert_eq!(hard, 1.0);
        assert_relative_eq!(smooth, 1.0 - 2f64.ln(), max_relative = 1e-12);
    }
}
