use std::f64::consts::PI;
use std::fmt::Write;

use anyhow::{bail, Context};

use gcs_core::{Gcs, PathResult, Vector};

const DIRECTIONS: usize = 72;
const WIDTH: f64 = 800.0;

/// Outline of the projection of a set onto coordinates `(i, j)`, traced by
/// support points in evenly spaced directions.
fn outline(g: &Gcs, v: usize, (i, j): (usize, usize)) -> anyhow::Result<Vec<[f64; 2]>> {
    let set = g.set(v);
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(DIRECTIONS);
    for k in 0..DIRECTIONS {
        let (s, c) = (2.0 * PI * k as f64 / DIRECTIONS as f64).sin_cos();
        let mut d = Vector::zeros(set.dim());
        d[i] = c;
        d[j] = s;
        let x = set.support_point(&d).with_context(|| format!("outline of `{}`", g.id(v)))?;
        let p = [x[i], x[j]];
        if pts.last().is_none_or(|q| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-7) {
            pts.push(p);
        }
    }
    Ok(pts)
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(points: &[[f64; 2]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let margin = 0.05 * span;
        let lo = [lo[0] - margin, lo[1] - margin];
        let scale = WIDTH / (hi[0] - lo[0] + margin).max(1e-9);
        let height = (hi[1] - lo[1] + margin) * scale;
        Self { lo, scale, height }
    }

    /// Screen coordinates with the vertical axis pointing up.
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        ((p[0] - self.lo[0]) * self.scale, self.height - (p[1] - self.lo[1]) * self.scale)
    }
}

/// Sets as shaded outlines, edges as thin gray segments between set
/// centers, and the path as white circles joined by a dotted red line.
pub fn render(g: &Gcs, path: Option<&PathResult>, proj: Option<(usize, usize)>) -> anyhow::Result<String> {
    let dim = (0..g.num_vertices()).map(|v| g.dim(v)).min().unwrap_or(0);
    let axes = match proj {
        Some((i, j)) if i == j => bail!("--proj needs two different coordinates"),
        Some((i, j)) if i.max(j) >= dim => bail!("--proj {i} {j} is out of range for {dim}-dimensional sets"),
        Some(axes) => axes,
        None if (0..g.num_vertices()).all(|v| g.dim(v) == 2) => (0, 1),
        None => bail!("SVG output needs 2-D sets; pass --proj I J to project"),
    };
    let shapes: Vec<Vec<[f64; 2]>> = (0..g.num_vertices()).map(|v| outline(g, v, axes)).collect::<Result<_, _>>()?;
    let centers: Vec<[f64; 2]> = (0..g.num_vertices())
        .map(|v| {
            let c = g.set(v).chebyshev_center();
            [c[axes.0], c[axes.1]]
        })
        .collect();
    let frame = Frame::new(&shapes.concat());

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = WIDTH,
        h = frame.height
    )?;
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for e in g.edges() {
        let (a, b) = (frame.map(centers[e.u]), frame.map(centers[e.v]));
        writeln!(out, r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#bbbbbb" stroke-width="1"/>"##, a.0, a.1, b.0, b.1)?;
    }
    for (v, shape) in shapes.iter().enumerate() {
        if shape.len() == 1 {
            let (x, y) = frame.map(shape[0]);
            writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="#1f4e9e"/>"##)?;
        } else {
            let pts: Vec<String> = shape.iter().map(|&p| frame.map(p)).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(
                out,
                r##"<polygon points="{}" fill="#cfe0f5" fill-opacity="0.7" stroke="#1f4e9e" stroke-width="1.5"/>"##,
                pts.join(" ")
            )?;
        }
        let (x, y) = frame.map(centers[v]);
        writeln!(out, r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" fill="#333333">{}</text>"##, x + 6.0, y - 6.0, g.id(v))?;
    }
    if let Some(p) = path {
        let pts: Vec<(f64, f64)> = p.positions.iter().map(|x| frame.map([x[axes.0], x[axes.1]])).collect();
        let line: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="4 4"/>"##,
            line.join(" ")
        )?;
        for (x, y) in pts {
            writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="white" stroke="black" stroke-width="1.5"/>"##)?;
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcs_core::instances::{hpp_chain, symmetry_instance};
    use gcs_core::{solve_micp, BnbConfig};

    #[test]
    fn renders_sets_and_path() {
        let g = symmetry_instance();
        let rep = solve_micp(&g, &BnbConfig::default()).unwrap();
        let svg = render(&g, rep.incumbent.as_ref(), None).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<line").count(), g.num_edges());
        assert!(svg.contains("stroke-dasharray"));
        assert_eq!(svg.matches(r#"fill="white" stroke="black""#).count(), 4);
    }

    #[test]
    fn projection_is_checked() {
        let g = gcs_core::instances::generate("random:1:3:6:8:0.05").unwrap().gcs;
        assert!(render(&g, None, None).is_err());
        assert!(render(&g, None, Some((0, 2))).is_ok());
        assert!(render(&g, None, Some((0, 3))).is_err());
        assert!(render(&hpp_chain(2), None, Some((0, 0))).is_err());
    }
}
