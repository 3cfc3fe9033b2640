//! Static SVG of a grid plan: value heatmap, one arrow per cell, obstacle
//! and goal markers.

use std::fmt::Write as _;

use riskmdp_core::grid::Action;
use riskmdp_core::sim::terminal_states;
use riskmdp_core::{build_gridworld, GridConfig, PlanResult};
use thiserror::Error;

const CELL: f64 = 40.0;
const MARGIN: f64 = 10.0;
const LEGEND: f64 = 60.0;
/// Arrow length as a fraction of the cell side.
const ARROW: f64 = 0.32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("plan has {found} {what}, the {width}x{height} grid needs {expected}")]
    Dimension {
        what: &'static str,
        found: usize,
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("action {0} is not a grid action")]
    Action(usize),
    #[error(transparent)]
    Grid(#[from] riskmdp_core::grid::GridError),
}

/// Pale yellow to dark red, `t ∈ [0, 1]`.
fn heat(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 1.0 };
    let lerp = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 128.0), lerp(245.0, 0.0), lerp(200.0, 38.0))
}

fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn render_svg(grid: &GridConfig, plan: &PlanResult, manifest_hash: Option<&str>) -> Result<String, RenderError> {
    let n = grid.n_cells();
    let dim = |what, found| {
        if found == n {
            Ok(())
        } else {
            Err(RenderError::Dimension {
                what,
                found,
                expected: n,
                width: grid.width,
                height: grid.height,
            })
        }
    };
    if !plan.v_star.is_empty() {
        dim("values", plan.v_star.len())?;
    }
    dim("policy entries", plan.policy.len())?;
    let mdp = build_gridworld(grid)?;
    let absorbing = terminal_states(&mdp);
    let obstacles = grid.obstacle_mask();

    let finite: Vec<f64> = plan.v_star.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };

    let w = grid.width as f64 * CELL + 2.0 * MARGIN;
    let h = grid.height as f64 * CELL + 2.0 * MARGIN + LEGEND;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        num(w),
        num(h),
        num(w),
        num(h)
    );
    if let Some(hash) = manifest_hash {
        let _ = writeln!(out, "<metadata>manifest_sha256={hash}</metadata>");
    }
    out.push_str(concat!(
        "<defs><marker id=\"head\" viewBox=\"0 0 10 10\" refX=\"8\" refY=\"5\" markerWidth=\"5\" markerHeight=\"5\" orient=\"auto\">",
        "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"#1f1f1f\"/></marker></defs>\n"
    ));
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        num(w),
        num(h)
    );

    // Screen row 0 is the top of the grid (largest y).
    let origin = |s: usize| {
        let c = grid.cell(s);
        (
            MARGIN + c.x as f64 * CELL,
            MARGIN + (grid.height - 1 - c.y) as f64 * CELL,
        )
    };
    for s in 0..n {
        let (x, y) = origin(s);
        let v = plan.v_star.get(s).copied().unwrap_or(f64::NAN);
        let fill = if v.is_nan() { "#e0e0e0".into() } else { heat(scale(v)) };
        let _ = writeln!(
            out,
            r##"<rect class="cell" x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="#999999" stroke-width="0.5"><title>s={} V={}</title></rect>"##,
            num(x),
            num(y),
            num(CELL),
            num(CELL),
            fill,
            s,
            crate::io::fmt_num(v)
        );
    }
    for s in (0..n).filter(|&s| obstacles[s]) {
        let (x, y) = origin(s);
        let uncertain = grid.uncertain_obstacles.contains(&grid.cell(s));
        let (class, dash) = if uncertain {
            ("obstacle uncertain", r#" stroke-dasharray="4 3""#)
        } else {
            ("obstacle", "")
        };
        let _ = writeln!(
            out,
            r##"<rect class="{}" x="{}" y="{}" width="{}" height="{}" fill="#303030" fill-opacity="0.55" stroke="#000000" stroke-width="1.5"{}/>"##,
            class,
            num(x + 3.0),
            num(y + 3.0),
            num(CELL - 6.0),
            num(CELL - 6.0),
            dash
        );
    }
    for (class, cell, fill) in [("goal", grid.goal, "#1a9641"), ("start", grid.start, "none")] {
        let (x, y) = origin(grid.index(cell));
        let _ = writeln!(
            out,
            r##"<circle class="{}" cx="{}" cy="{}" r="{}" fill="{}" stroke="#1a9641" stroke-width="2"/>"##,
            class,
            num(x + CELL / 2.0),
            num(y + CELL / 2.0),
            num(CELL * 0.4),
            fill
        );
    }
    for s in (0..n).filter(|&s| !absorbing[s]) {
        let a = plan.policy.action(s);
        let action = Action::from_index(a).ok_or(RenderError::Action(a))?;
        let (dx, dy) = action.delta();
        let norm = ((dx * dx + dy * dy) as f64).sqrt();
        let (ux, uy) = (dx as f64 / norm, -(dy as f64) / norm);
        let (x, y) = origin(s);
        let (cx, cy) = (x + CELL / 2.0, y + CELL / 2.0);
        let r = ARROW * CELL;
        let _ = writeln!(
            out,
            r##"<line class="arrow {}" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#1f1f1f" stroke-width="2" marker-end="url(#head)"/>"##,
            action.name(),
            num(cx - ux * r),
            num(cy - uy * r),
            num(cx + ux * r),
            num(cy + uy * r)
        );
    }

    // Colour bar.
    let top = MARGIN + grid.height as f64 * CELL + 12.0;
    let bar = (w - 2.0 * MARGIN).max(1.0);
    let steps = 20;
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{}" y="{}" width="{}" height="12" fill="{}"/>"#,
            num(MARGIN + bar * k as f64 / steps as f64),
            num(top),
            num(bar / steps as f64 + 0.5),
            heat(t)
        );
    }
    let label = |x: f64| if x.is_finite() { crate::io::fmt_num(x) } else { "n/a".into() };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">V min {}</text>"#,
        num(MARGIN),
        num(top + 26.0),
        label(lo)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">V max {}</text>"#,
        num(w - MARGIN),
        num(top + 26.0),
        label(hi)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
        num(MARGIN),
        num(top + 42.0),
        plan.risk
    );
    out.push_str("</svg>\n");
    Ok(out)
}
