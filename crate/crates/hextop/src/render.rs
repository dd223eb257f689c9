//! Deterministic SVG rendering: grayscale hex cells plus optional mask
//! outlines, skeleton highlight, length-scale violation markers, smoothed
//! boundary polylines and the length-scale inset circles.

use std::fmt::Write as _;

use crate::grid::HexGrid;
use crate::lengthscale::Violations;
use crate::mask::{DensityField, MaskSet};
use crate::postproc::Polyline;

#[derive(Default)]
pub struct Overlays<'a> {
    pub masks: Option<&'a MaskSet>,
    pub skeleton: Option<&'a [usize]>,
    pub violations: Option<&'a Violations>,
    pub boundary: Option<&'a [Polyline]>,
    /// (min_ls, max_ls) inset circles in the top-right corner.
    pub ls_inset: Option<(f64, f64)>,
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

/// One polygon per cell with grayscale fill `1 - rho` (solid cells black).
/// Output bytes are a pure function of the inputs.
pub fn render_svg(grid: &HexGrid, field: &DensityField, overlays: &Overlays) -> String {
    let (lo, hi) = grid.bbox();
    let inset_pad = overlays
        .ls_inset
        .map(|(_, max_ls)| 2.0 * max_ls + grid.cs())
        .unwrap_or(0.0);
    let margin = grid.cs();
    let x0 = lo[0] - margin;
    let y_top = hi[1] + margin + inset_pad;
    let width = hi[0] - lo[0] + 2.0 * margin;
    let height = y_top - (lo[1] - margin);
    // svg y axis points down; flip around the top edge
    let fy = |y: f64| y_top - y;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{} {} {} {}\">",
        f3(x0),
        f3(0.0),
        f3(width),
        f3(height)
    );
    let _ = writeln!(s, "<rect x=\"{}\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>", f3(x0), f3(width), f3(height));

    // cells
    for cell in grid.cells() {
        let gray = (255.0 * (1.0 - field.rho[cell.id].clamp(0.0, 1.0))).round() as u8;
        let mut pts = String::new();
        for &n in &cell.node_ids {
            let p = grid.nodes()[n];
            let _ = write!(pts, "{},{} ", f3(p[0]), f3(fy(p[1])));
        }
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"rgb({gray},{gray},{gray})\"/>",
            pts.trim_end()
        );
    }

    // skeleton highlight
    if let Some(skel) = overlays.skeleton {
        for &id in skel {
            let cell = grid.cell(id);
            let mut pts = String::new();
            for &n in &cell.node_ids {
                let p = grid.nodes()[n];
                let _ = write!(pts, "{},{} ", f3(p[0]), f3(fy(p[1])));
            }
            let _ = writeln!(
                s,
                "<polygon points=\"{}\" fill=\"crimson\" fill-opacity=\"0.85\"/>",
                pts.trim_end()
            );
        }
    }

    // mask outlines
    if let Some(masks) = overlays.masks {
        let stroke = f3(0.12 * grid.cs());
        for m in &masks.masks {
            let deg = -m.theta.to_degrees();
            let _ = writeln!(
                s,
                "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" transform=\"rotate({} {} {})\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"{}\"/>",
                f3(m.x),
                f3(fy(m.y)),
                f3(m.a),
                f3(m.b),
                f3(deg),
                f3(m.x),
                f3(fy(m.y)),
                stroke
            );
        }
    }

    // length-scale violations: blue squares (should be solid), red circles
    // (should be void)
    if let Some(v) = overlays.violations {
        let half = 0.55 * grid.cs();
        let stroke = f3(0.15 * grid.cs());
        for &id in &v.blue {
            let c = grid.centroid(id);
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"blue\" stroke-width=\"{}\"/>",
                f3(c[0] - half),
                f3(fy(c[1]) - half),
                f3(2.0 * half),
                f3(2.0 * half),
                stroke
            );
        }
        for &id in &v.red {
            let c = grid.centroid(id);
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"red\" stroke-width=\"{}\"/>",
                f3(c[0]),
                f3(fy(c[1])),
                f3(half),
                stroke
            );
        }
    }

    // smoothed boundary polylines
    if let Some(polys) = overlays.boundary {
        let stroke = f3(0.2 * grid.cs());
        for p in polys {
            if p.points.len() < 2 {
                continue;
            }
            let mut d = String::new();
            for (i, q) in p.points.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                let _ = write!(d, "{cmd} {} {} ", f3(q[0]), f3(fy(q[1])));
            }
            if p.closed {
                d.push('Z');
            }
            let _ = writeln!(
                s,
                "<path d=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"{}\"/>",
                d.trim_end(),
                stroke
            );
        }
    }

    // inset circles showing the imposed length scales
    if let Some((min_ls, max_ls)) = overlays.ls_inset {
        let cx = hi[0] - max_ls;
        let cy = hi[1] + margin + max_ls;
        let stroke = f3(0.15 * grid.cs());
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"green\" stroke-width=\"{}\"/>",
            f3(cx),
            f3(fy(cy)),
            f3(max_ls),
            stroke
        );
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"blue\" stroke-width=\"{}\"/>",
            f3(cx),
            f3(fy(cy)),
            f3(min_ls),
            stroke
        );
    }

    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::HexGrid;
    use crate::mask::{EllipticalMask, MaskShape, Polarity};

    #[test]
    fn solid_field_renders_black_cells() {
        let g = HexGrid::new(3, 2, 1.0).unwrap();
        let f = DensityField::from_values(vec![1.0; 6], 1e-3);
        let svg = render_svg(&g, &f, &Overlays::default());
        assert_eq!(svg.matches("rgb(0,0,0)").count(), 6);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn mask_outlines_present_at_configured_centers() {
        let g = HexGrid::new(3, 2, 1.0).unwrap();
        let f = DensityField::from_values(vec![0.5; 6], 1e-3);
        let masks = MaskSet::new(
            vec![EllipticalMask {
                x: 1.25,
                y: 0.5,
                a: 2.0,
                b: 1.0,
                theta: 0.3,
            }],
            Polarity::Negative,
            MaskShape::Elliptical,
            6.0,
            3.0,
        )
        .unwrap();
        let svg = render_svg(
            &g,
            &f,
            &Overlays {
                masks: Some(&masks),
                ..Overlays::default()
            },
        );
        assert!(svg.contains("<ellipse cx=\"1.250\""));
    }

    #[test]
    fn violation_marker_counts_match() {
        let g = HexGrid::new(4, 3, 1.0).unwrap();
        let f = DensityField::from_values(vec![0.5; 12], 1e-3);
        let v = Violations {
            blue: vec![0, 3, 7],
            red: vec![2],
        };
        let svg = render_svg(
            &g,
            &f,
            &Overlays {
                violations: Some(&v),
                ..Overlays::default()
            },
        );
        assert_eq!(svg.matches("<rect").count() - 1, 3); // minus background
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn byte_identical_for_identical_inputs() {
        let g = HexGrid::new(5, 4, 0.7).unwrap();
        let f = DensityField::from_values((0..20).map(|i| i as f64 / 20.0).collect(), 1e-3);
        let a = render_svg(&g, &f, &Overlays { ls_inset: Some((1.0, 2.0)), ..Overlays::default() });
        let b = render_svg(&g, &f, &Overlays { ls_inset: Some((1.0, 2.0)), ..Overlays::default() });
        assert_eq!(a, b);
    }
}
