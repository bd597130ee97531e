//! Static SVG plot of a route plan.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{HlgpError, Result};
use crate::instance::{Instance, Point};
use crate::solution::{tour_cost, RoutePlan};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

fn to_px(p: Point, lo: Point, span: f64) -> (f64, f64) {
    let s = (SIZE - 2.0 * MARGIN) / span;
    (MARGIN + (p[0] - lo[0]) * s, SIZE - MARGIN - (p[1] - lo[1]) * s)
}

/// Distinct hue per tour by stepping the golden angle.
fn stroke(i: usize) -> String {
    let hue = (i as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},70%,45%)")
}

/// SVG with the depot as a square, customers as dots, one polyline per tour
/// and a legend giving the total cost.
pub fn svg_string(inst: &Instance, plan: &RoutePlan) -> Result<String> {
    let mut total = 0.0;
    for t in &plan.tours {
        total += tour_cost(t, inst)?;
    }
    let pts: Vec<Point> = std::iter::once(inst.depot()).chain(inst.customers().iter().copied()).collect();
    let lo = [
        pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
    ];
    let hi = [
        pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
        pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
    ];
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="0 0 {SIZE} {h}">"#,
        h = SIZE + 30.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, tour) in plan.tours.iter().enumerate() {
        let mut points: Vec<String> = Vec::with_capacity(tour.len() + 2);
        for p in std::iter::once(inst.depot())
            .chain(tour.iter().map(|&c| inst.coord(c)))
            .chain(std::iter::once(inst.depot()))
        {
            let (x, y) = to_px(p, lo, span);
            points.push(format!("{x:.2},{y:.2}"));
        }
        let _ = writeln!(
            s,
            r#"<polyline class="tour" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            points.join(" "),
            stroke(i)
        );
    }
    for &c in inst.customers() {
        let (x, y) = to_px(c, lo, span);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="black"/>"#);
    }
    let (dx, dy) = to_px(inst.depot(), lo, span);
    let _ = writeln!(
        s,
        r#"<rect class="depot" x="{:.2}" y="{:.2}" width="10" height="10" fill="red"/>"#,
        dx - 5.0,
        dy - 5.0
    );
    let _ = writeln!(
        s,
        r#"<text class="legend" x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="14">total cost {total:.4} ({} tours)</text>"#,
        SIZE + 15.0,
        plan.tours.len()
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_svg(inst: &Instance, plan: &RoutePlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = svg_string(inst, plan)?;
    std::fs::write(path, text).map_err(|e| HlgpError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solution::plan_cost;

    fn inst() -> Instance {
        Instance::new([0.5, 0.5], vec![[0.1, 0.1], [0.9, 0.2], [0.4, 0.9]], vec![3, 3, 3], 6).unwrap()
    }

    #[test]
    fn empty_plan_is_depot_only() {
        let s = svg_string(&inst(), &RoutePlan::new(vec![])).unwrap();
        assert_eq!(s.matches("<polyline").count(), 0);
        assert_eq!(s.matches(r#"class="depot""#).count(), 1);
    }

    #[test]
    fn one_polyline_per_tour() {
        let plan = RoutePlan::new(vec![vec![0, 1], vec![2]]);
        let s = svg_string(&inst(), &plan).unwrap();
        assert_eq!(s.matches("<polyline").count(), plan.tours.len());
        assert_ne!(stroke(0), stroke(1));
    }

    #[test]
    fn legend_matches_cost() {
        let plan = RoutePlan::new(vec![vec![0, 1], vec![2]]);
        let s = svg_string(&inst(), &plan).unwrap();
        let cost = plan_cost(&plan, &inst()).unwrap();
        assert!(s.contains(&format!("total cost {cost:.4}")));
    }

    #[test]
    fn unwritable_path() {
        let r = render_svg(&inst(), &RoutePlan::new(vec![]), "/nonexistent-dir/x.svg");
        assert!(matches!(r, Err(HlgpError::Io { .. })));
    }
}
