//! Standalone SVG rendering: 2-D trajectory plots (geometry plus per-agent
//! polylines) and grouped bar charts of robustness and satisfaction rate.

use std::fmt::Write;

use crate::scenario::{Scenario, ZoneShape};
use crate::semantics::Trace;

use super::ReportGroup;

const AGENT_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Frame {
    min_x: f64,
    max_y: f64,
    scale: f64,
    width: f64,
    height: f64,
}

impl Frame {
    /// Bounding frame over (x, y, pad) extents, mapped to pixels.
    fn fit(extents: impl Iterator<Item = (f64, f64, f64)>, target_width: f64) -> Frame {
        let mut min_x = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for (x, y, pad) in extents {
            min_x = min_x.min(x - pad);
            max_x = max_x.max(x + pad);
            min_y = min_y.min(y - pad);
            max_y = max_y.max(y + pad);
        }
        if !min_x.is_finite() {
            (min_x, max_x, min_y, max_y) = (-1.0, 1.0, -1.0, 1.0);
        }
        let margin = 0.3;
        min_x -= margin;
        max_x += margin;
        min_y -= margin;
        max_y += margin;
        let scale = target_width / (max_x - min_x);
        Frame {
            min_x,
            max_y,
            scale,
            width: target_width,
            height: (max_y - min_y) * scale,
        }
    }

    fn px(&self, x: f64) -> f64 {
        (x - self.min_x) * self.scale
    }

    /// World y grows upward, SVG y grows downward.
    fn py(&self, y: f64) -> f64 {
        (self.max_y - y) * self.scale
    }

    fn len(&self, d: f64) -> f64 {
        d * self.scale
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders the scenario geometry and one trajectory (every agent's polyline
/// with start/end markers).
pub fn trajectory_svg(scenario: &Scenario, trace: &Trace) -> String {
    let agents = scenario.dynamics.agents;
    let geom = &scenario.geometry;
    let mut extents: Vec<(f64, f64, f64)> = Vec::new();
    for o in &geom.obstacles {
        extents.push((o.center[0], o.center[1], o.radius));
    }
    for w in &geom.walls {
        extents.push((
            w.center[0],
            w.center[1],
            w.half_extents[0].max(w.half_extents[1]),
        ));
    }
    for z in &geom.zones {
        let pad = match z.shape {
            ZoneShape::Circle { radius } => radius,
            ZoneShape::Box { half_extents } => half_extents[0].max(half_extents[1]),
        };
        extents.push((z.center[0], z.center[1], pad));
    }
    for t in 0..trace.len() {
        for a in 0..agents {
            let (px, py) = trace.agent_position(a, t);
            extents.push((px, py, 0.05));
        }
    }
    let frame = Frame::fit(extents.into_iter(), 640.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns='http://www.w3.org/2000/svg' width='{w:.0}' height='{h:.0}' viewBox='0 0 {w:.2} {h:.2}'>"#,
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(
        svg,
        r#"<rect x='0' y='0' width='{}' height='{}' fill='#ffffff'/>"#,
        fmt(frame.width),
        fmt(frame.height)
    );
    for w in &geom.walls {
        let _ = writeln!(
            svg,
            r#"<rect x='{}' y='{}' width='{}' height='{}' fill='#4d4d4d' class='wall'/>"#,
            fmt(frame.px(w.center[0] - w.half_extents[0])),
            fmt(frame.py(w.center[1] + w.half_extents[1])),
            fmt(frame.len(2.0 * w.half_extents[0])),
            fmt(frame.len(2.0 * w.half_extents[1])),
        );
    }
    for z in &geom.zones {
        match z.shape {
            ZoneShape::Circle { radius } => {
                let _ = writeln!(
                    svg,
                    r#"<circle cx='{}' cy='{}' r='{}' fill='#2ca02c' fill-opacity='0.25' stroke='#2ca02c' class='zone'/>"#,
                    fmt(frame.px(z.center[0])),
                    fmt(frame.py(z.center[1])),
                    fmt(frame.len(radius)),
                );
            }
            ZoneShape::Box { half_extents } => {
                let _ = writeln!(
                    svg,
                    r#"<rect x='{}' y='{}' width='{}' height='{}' fill='#2ca02c' fill-opacity='0.25' stroke='#2ca02c' class='zone'/>"#,
                    fmt(frame.px(z.center[0] - half_extents[0])),
                    fmt(frame.py(z.center[1] + half_extents[1])),
                    fmt(frame.len(2.0 * half_extents[0])),
                    fmt(frame.len(2.0 * half_extents[1])),
                );
            }
        }
    }
    for o in &geom.obstacles {
        let _ = writeln!(
            svg,
            r#"<circle cx='{}' cy='{}' r='{}' fill='#bdbdbd' stroke='#7f7f7f' class='obstacle'/>"#,
            fmt(frame.px(o.center[0])),
            fmt(frame.py(o.center[1])),
            fmt(frame.len(o.radius)),
        );
    }
    for a in 0..agents {
        let color = AGENT_COLORS[a % AGENT_COLORS.len()];
        let mut pts = String::new();
        for t in 0..trace.len() {
            let (px, py) = trace.agent_position(a, t);
            let _ = write!(pts, "{},{} ", fmt(frame.px(px)), fmt(frame.py(py)));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points='{}' fill='none' stroke='{color}' stroke-width='1.5' class='agent'/>"#,
            pts.trim_end(),
        );
        let (sx, sy) = trace.agent_position(a, 0);
        let (ex, ey) = trace.agent_position(a, trace.len() - 1);
        let _ = writeln!(
            svg,
            r#"<circle cx='{}' cy='{}' r='4' fill='{color}' class='start'/>"#,
            fmt(frame.px(sx)),
            fmt(frame.py(sy)),
        );
        let _ = writeln!(
            svg,
            r#"<rect x='{}' y='{}' width='8' height='8' fill='{color}' class='end'/>"#,
            fmt(frame.px(ex) - 4.0),
            fmt(frame.py(ey) - 4.0),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bar chart over (scenario, method) groups: one bar per metric
/// (mean robustness, satisfaction rate) per group.
pub fn bar_chart_svg(groups: &[ReportGroup]) -> String {
    let bar_w = 22.0;
    let gap = 10.0;
    let group_gap = 28.0;
    let chart_h = 220.0;
    let label_h = 70.0;
    let base_y = 30.0 + chart_h;
    let n = groups.len();
    let width = 60.0 + n as f64 * (2.0 * bar_w + gap + group_gap);
    let height = base_y + label_h;

    let max_rob = groups
        .iter()
        .map(|g| g.mean_robustness.abs())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns='http://www.w3.org/2000/svg' width='{width:.0}' height='{height:.0}' viewBox='0 0 {width:.2} {height:.2}'>"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x='0' y='0' width='{}' height='{}' fill='#ffffff'/>"#,
        fmt(width),
        fmt(height)
    );
    let _ = writeln!(
        svg,
        r#"<line x1='40' y1='{y}' x2='{x2}' y2='{y}' stroke='#333333'/>"#,
        y = fmt(base_y),
        x2 = fmt(width - 10.0)
    );
    for (i, g) in groups.iter().enumerate() {
        let x0 = 50.0 + i as f64 * (2.0 * bar_w + gap + group_gap);
        let rob = if g.mean_robustness.is_finite() {
            g.mean_robustness
        } else {
            0.0
        };
        let rob_h = (rob.abs() / max_rob) * (chart_h * 0.9);
        let rob_y = if rob >= 0.0 { base_y - rob_h } else { base_y };
        let _ = writeln!(
            svg,
            r#"<rect x='{}' y='{}' width='{}' height='{}' fill='#1f77b4' class='bar-robustness'><title>{} {} mean robustness {:.4}</title></rect>"#,
            fmt(x0),
            fmt(rob_y),
            fmt(bar_w),
            fmt(rob_h.max(0.5)),
            g.scenario,
            g.method,
            rob,
        );
        let sat_h = g.satisfaction_rate.clamp(0.0, 1.0) * (chart_h * 0.9);
        let _ = writeln!(
            svg,
            r#"<rect x='{}' y='{}' width='{}' height='{}' fill='#ff7f0e' class='bar-satisfaction'><title>{} {} satisfaction {:.2}</title></rect>"#,
            fmt(x0 + bar_w + gap),
            fmt(base_y - sat_h),
            fmt(bar_w),
            fmt(sat_h.max(0.5)),
            g.scenario,
            g.method,
            g.satisfaction_rate,
        );
        let _ = writeln!(
            svg,
            r#"<text x='{x}' y='{y}' font-size='10' text-anchor='middle' transform='rotate(35 {x} {y})'>{}/{}</text>"#,
            g.scenario,
            g.method,
            x = fmt(x0 + bar_w),
            y = fmt(base_y + 14.0),
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x='10' y='20' font-size='12'>mean robustness (blue) and satisfaction rate (orange)</text>"#
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::EvalCounts;

    fn group(scenario: &str, method: &str) -> ReportGroup {
        ReportGroup {
            scenario: scenario.into(),
            method: method.into(),
            seeds: 5,
            errors: 0,
            mean_robustness: 0.1,
            median_robustness: 0.12,
            satisfaction_rate: 0.8,
            iterations_per_run: 10,
            evaluations: EvalCounts::default(),
            best_seed: 0,
            best_robustness: 0.2,
            best_trace: String::new(),
        }
    }

    #[test]
    fn bar_chart_has_two_bars_per_group() {
        let groups: Vec<ReportGroup> = (0..4)
            .flat_map(|s| {
                (0..3).map(move |m| group(&format!("scenario{s}"), &format!("method{m}")))
            })
            .collect();
        let svg = bar_chart_svg(&groups);
        assert_eq!(svg.matches("class='bar-robustness'").count(), 12);
        assert_eq!(svg.matches("class='bar-satisfaction'").count(), 12);
        // 4 scenarios × 3 methods × 2 metrics = 24 bars.
        assert_eq!(svg.matches("<rect").count() - 1, 24); // minus background
    }
}
