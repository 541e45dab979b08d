//! Standalone SVG of level curves, signed branches and the global frame.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::axes::{Sign, SymmetryBranch};
use crate::frame::ShapeDescriptor;
use crate::geom::{Cell, Point};
use crate::surface::SurfaceField;
use crate::{Error, Result};

pub const LEVELS: usize = 10;
const PX_PER_CELL: f64 = 8.0;

/// Anything may be absent; an empty scene still yields a valid document.
#[derive(Debug, Clone, Copy, Default)]
pub struct Scene<'a> {
    pub field: Option<&'a SurfaceField>,
    pub branches: &'a [SymmetryBranch],
    pub descriptor: Option<&'a ShapeDescriptor>,
}

/// Evenly spaced levels strictly between the interior minimum and 1.
pub fn level_values(field: &SurfaceField, n: usize) -> Vec<f64> {
    let lo = field
        .interior_cells()
        .map(|c| field.value(c))
        .fold(f64::INFINITY, f64::min);
    let lo = if lo.is_finite() { lo } else { 0.0 };
    (1..=n).map(|k| lo + (1.0 - lo) * k as f64 / (n + 1) as f64).collect()
}

// Edge key: cell corner plus 0 for the edge to the right, 1 for the edge below.
type EdgeKey = (i32, i32, u8);

/// Marching-squares iso-lines at `level`, chained into polylines. Closed
/// curves repeat their first point at the end.
pub fn level_curves(field: &SurfaceField, level: f64) -> Vec<Vec<Point>> {
    let (w, h) = (field.width as i32, field.height as i32);
    let v = |x: i32, y: i32| field.value(Cell::new(x, y));
    let mut segments: Vec<[EdgeKey; 2]> = Vec::new();
    let mut at: HashMap<EdgeKey, Point> = HashMap::new();
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            // corners counter-clockwise in index order: tl, tr, br, bl
            let c = [v(x, y), v(x + 1, y), v(x + 1, y + 1), v(x, y + 1)];
            let above: Vec<bool> = c.iter().map(|&t| t >= level).collect();
            let edges: [(EdgeKey, usize, usize); 4] = [
                ((x, y, 0), 0, 1),
                ((x + 1, y, 1), 1, 2),
                ((x, y + 1, 0), 3, 2),
                ((x, y, 1), 0, 3),
            ];
            let mut cut = Vec::with_capacity(4);
            for (k, (key, a, b)) in edges.iter().enumerate() {
                if above[*a] != above[*b] {
                    let t = (level - c[*a]) / (c[*b] - c[*a]);
                    let p0 = corner(x, y, *a);
                    let p1 = corner(x, y, *b);
                    at.entry(*key).or_insert(p0 + (p1 - p0) * t);
                    cut.push((k, *key));
                }
            }
            match cut.len() {
                2 => segments.push([cut[0].1, cut[1].1]),
                4 => {
                    // saddle: decide by the centre average
                    let centre_above = c.iter().sum::<f64>() / 4.0 >= level;
                    if centre_above == above[0] {
                        segments.push([cut[0].1, cut[1].1]);
                        segments.push([cut[2].1, cut[3].1]);
                    } else {
                        segments.push([cut[0].1, cut[3].1]);
                        segments.push([cut[1].1, cut[2].1]);
                    }
                }
                _ => {}
            }
        }
    }
    chain(&segments)
        .into_iter()
        .map(|keys| keys.iter().map(|k| at[k]).collect())
        .collect()
}

fn corner(x: i32, y: i32, k: usize) -> Point {
    let (dx, dy) = [(0, 0), (1, 0), (1, 1), (0, 1)][k];
    Point::new((x + dx) as f64, (y + dy) as f64)
}

fn chain(segments: &[[EdgeKey; 2]]) -> Vec<Vec<EdgeKey>> {
    let mut by_edge: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (i, s) in segments.iter().enumerate() {
        for k in s {
            by_edge.entry(*k).or_default().push(i);
        }
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    let extend = |start: EdgeKey, used: &mut Vec<bool>, line: &mut Vec<EdgeKey>| {
        let mut tip = start;
        while let Some(&j) = by_edge[&tip].iter().find(|&&j| !used[j]) {
            used[j] = true;
            tip = if segments[j][0] == tip {
                segments[j][1]
            } else {
                segments[j][0]
            };
            line.push(tip);
        }
    };
    // open curves first, starting from edges with a single segment
    let mut starts: Vec<EdgeKey> = by_edge.iter().filter(|(_, v)| v.len() == 1).map(|(k, _)| *k).collect();
    starts.sort();
    for s in starts {
        if by_edge[&s].iter().all(|&j| used[j]) {
            continue;
        }
        let mut line = vec![s];
        extend(s, &mut used, &mut line);
        out.push(line);
    }
    for i in 0..segments.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut line = vec![segments[i][0], segments[i][1]];
        extend(segments[i][1], &mut used, &mut line);
        out.push(line);
    }
    out
}

fn points_attr(pts: &[Point]) -> String {
    let mut s = String::new();
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.3},{:.3}", p.x, p.y);
    }
    s
}

fn sign_class(s: Sign) -> &'static str {
    match s {
        Sign::Positive => "positive",
        Sign::Negative => "negative",
    }
}

fn extent(scene: &Scene) -> (f64, f64) {
    if let Some(f) = scene.field {
        return (f.width as f64, f.height as f64);
    }
    let mut pts: Vec<Point> = scene
        .branches
        .iter()
        .flat_map(|b| b.points.iter().map(|c| c.to_point()))
        .collect();
    if let Some(d) = scene.descriptor {
        pts.push(d.extrinsic.center);
        pts.extend(d.extrinsic.branches.iter().flat_map(|g| [g.start, g.disconnection]));
    }
    let w = pts.iter().map(|p| p.x).fold(0.0, f64::max) + 2.0;
    let h = pts.iter().map(|p| p.y).fold(0.0, f64::max) + 2.0;
    (w.max(1.0), h.max(1.0))
}

pub fn render_svg(scene: &Scene) -> String {
    let (w, h) = extent(scene);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="-0.5 -0.5 {w} {h}">"#,
        w * PX_PER_CELL,
        h * PX_PER_CELL
    );
    s.push_str(concat!(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"5\" markerHeight=\"5\" orient=\"auto\">",
        "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"#4af\"/></marker></defs>\n",
        "<style>.level{fill:none;stroke:#bbb;stroke-width:0.15}",
        ".positive{fill:none;stroke:red;stroke-width:0.5}",
        ".negative{fill:none;stroke:yellow;stroke-width:0.5}",
        ".axis{stroke:#4af;stroke-width:0.4;marker-end:url(#arrow)}",
        ".disconnection{fill:#fff;stroke:#000;stroke-width:0.15}</style>\n",
    ));
    let _ = writeln!(s, r##"<rect x="-0.5" y="-0.5" width="{w}" height="{h}" fill="#333"/>"##);

    if let Some(f) = scene.field {
        for level in level_values(f, LEVELS) {
            for line in level_curves(f, level) {
                let _ = writeln!(s, r#"<polyline class="level" points="{}"/>"#, points_attr(&line));
            }
        }
    }

    if scene.branches.is_empty() {
        if let Some(d) = scene.descriptor {
            for (rec, g) in d.records().zip(&d.extrinsic.branches) {
                let _ = writeln!(
                    s,
                    r#"<polyline class="{}" points="{}"/>"#,
                    sign_class(rec.sign),
                    points_attr(&[g.start, g.disconnection])
                );
            }
        }
    } else {
        for b in scene.branches {
            let pts: Vec<Point> = b.points.iter().map(|c| c.to_point()).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="{}" points="{}"/>"#,
                sign_class(b.sign),
                points_attr(&pts)
            );
        }
    }

    let dots: Vec<Point> = match scene.descriptor {
        Some(d) => {
            let o = d.extrinsic.frame.origin;
            for h in 0..2 {
                let reach = d.halves[h]
                    .iter()
                    .position(|r| r.is_reference)
                    .map(|k| d.flat_index(h, k))
                    .map(|i| d.extrinsic.branches[i].start.dist(o))
                    .filter(|&l| l > 1.0)
                    .unwrap_or(0.25 * d.extrinsic.image_diagonal);
                let tip = o + d.extrinsic.frame.axes[h] * reach;
                let _ = writeln!(
                    s,
                    r#"<line class="axis" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                    o.x, o.y, tip.x, tip.y
                );
            }
            d.extrinsic.branches.iter().map(|g| g.disconnection).collect()
        }
        None => scene.branches.iter().map(|b| b.disconnection.to_point()).collect(),
    };
    for p in dots {
        let _ = writeln!(
            s,
            r#"<circle class="disconnection" cx="{:.3}" cy="{:.3}" r="0.8"/>"#,
            p.x, p.y
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(scene: &Scene, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(scene)).map_err(|e| Error::io(path, e))
}
