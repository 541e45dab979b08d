//! Shape-centred frames and attributed point-set descriptors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::axes::{is_captured, Sign, SymmetryBranch};
use crate::geom::{wrap_2pi, Cell, Point};
use crate::surface::{ExtremaSet, SurfaceField};
use crate::{Error, Result};

pub const DESCRIPTOR_FORMAT: &str = "diskel-desc/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Chebyshev radius used to decide which branch ends reach an origin.
    pub capture_radius: f64,
    /// Hard cap on alternative descriptions per shape.
    pub max_alternatives: usize,
    /// Junction swaps considered per shape (each doubles the alternatives).
    pub max_junctions: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            capture_radius: 2.0,
            max_alternatives: 16,
            max_junctions: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalFrame {
    /// Sub-cell refined surface extremum.
    pub origin: Point,
    pub origin_cell: Cell,
    /// Unit directions of the two reference axes (image coordinates).
    pub axes: [Point; 2],
    /// Branch points the axis directions were anchored on.
    pub near: [Point; 2],
    /// Screen angles of the axes, counter-clockwise from +x.
    pub m0: f64,
    pub m1: f64,
    /// Indices of the reference branches in the branch list.
    pub reference: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub sign: Sign,
    pub r: f64,
    pub theta: f64,
    pub norm_length: f64,
    pub is_reference: bool,
    pub next: usize,
    pub prev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchGeometry {
    /// Boundary end of the chain.
    pub start: Point,
    /// Disconnection point after any cut.
    pub disconnection: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrinsic {
    pub center: Point,
    pub total_axis_length: f64,
    pub m0: f64,
    pub m1: f64,
    pub image_diagonal: f64,
    pub frame: GlobalFrame,
    /// Same order as the flattened halves.
    pub branches: Vec<BranchGeometry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    pub alternative_id: usize,
    pub halves: [Vec<BranchRecord>; 2],
    pub extrinsic: Extrinsic,
}

impl ShapeDescriptor {
    pub fn len(&self) -> usize {
        self.halves[0].len() + self.halves[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record by flattened index (half 0 first).
    pub fn record(&self, i: usize) -> &BranchRecord {
        let n0 = self.halves[0].len();
        if i < n0 {
            &self.halves[0][i]
        } else {
            &self.halves[1][i - n0]
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &BranchRecord> {
        self.halves[0].iter().chain(&self.halves[1])
    }

    /// Flattened index of `half[k]`.
    pub fn flat_index(&self, half: usize, k: usize) -> usize {
        if half == 0 {
            k
        } else {
            self.halves[0].len() + k
        }
    }

    /// Check the structural invariants; returns a description of the first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        let n = self.len();
        if n == 0 {
            return Err("no records".into());
        }
        let total: f64 = self.records().map(|r| r.norm_length).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("norm_length sums to {total}"));
        }
        for (h, half) in self.halves.iter().enumerate() {
            for w in half.windows(2) {
                if !(w[0].theta < w[1].theta) {
                    return Err(format!("half {h} not strictly sorted by theta"));
                }
            }
        }
        let mut seen = vec![false; n];
        let mut i = 0;
        for _ in 0..n {
            if seen[i] {
                return Err("next links revisit a record".into());
            }
            seen[i] = true;
            let r = self.record(i);
            if self.record(r.next).prev != i {
                return Err(format!("prev of next({i}) is not {i}"));
            }
            i = r.next;
        }
        if i != 0 || seen.iter().any(|s| !s) {
            return Err("next links do not form one cycle".into());
        }
        if self.extrinsic.branches.len() != n {
            return Err("extrinsic geometry count mismatch".into());
        }
        Ok(())
    }
}

/// Every alternative description of one shape, as serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub alternatives: Vec<ShapeDescriptor>,
}

impl DescriptorSet {
    pub fn new(alternatives: Vec<ShapeDescriptor>, source: Option<String>) -> Self {
        DescriptorSet {
            format: DESCRIPTOR_FORMAT.into(),
            source,
            alternatives,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: DescriptorSet = serde_json::from_str(s)?;
        if set.format != DESCRIPTOR_FORMAT {
            return Err(Error::Parse(format!("unsupported descriptor format {:?}", set.format)));
        }
        if set.alternatives.is_empty() {
            return Err(Error::Parse("descriptor set has no alternatives".into()));
        }
        for d in &set.alternatives {
            d.check().map_err(Error::Parse)?;
        }
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Quadratic sub-cell refinement of a surface extremum.
pub fn refine_extremum(field: &SurfaceField, c: Cell) -> Point {
    let f = |dx: i32, dy: i32| field.value(Cell::new(c.x + dx, c.y + dy));
    let off = |m: f64, z: f64, p: f64| {
        let den = p - 2.0 * z + m;
        if den.abs() < 1e-300 {
            0.0
        } else {
            (0.5 * (m - p) / den).clamp(-0.5, 0.5)
        }
    };
    Point::new(
        c.x as f64 + off(f(-1, 0), f(0, 0), f(1, 0)),
        c.y as f64 + off(f(0, -1), f(0, 0), f(0, 1)),
    )
}

fn unit(p: Point) -> Point {
    let n = p.norm();
    if n > 0.0 {
        p * (1.0 / n)
    } else {
        Point::new(1.0, 0.0)
    }
}

/// Median φ at the disconnection points of non-major branches: the level at
/// which the shape has shed its parts.
fn cut_level(branches: &[SymmetryBranch], fallback: &SymmetryBranch, field: &SurfaceField) -> f64 {
    let mut v: Vec<f64> = branches
        .iter()
        .filter(|b| !b.is_major)
        .map(|b| b.phi_at_disconnection)
        .collect();
    if v.is_empty() {
        v = fallback.points.iter().map(|&c| field.value(c)).collect();
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Direction of a branch as seen from the origin, averaged over its chain
/// points inside the central blob. Returns (unit direction, anchor point).
pub fn branch_direction(
    branch: &SymmetryBranch,
    field: &SurfaceField,
    origin: Point,
    phi_origin: f64,
    level: f64,
) -> (Point, Point) {
    let target = 0.5 * (phi_origin + level);
    let far_enough = |c: &Cell| c.to_point().dist(origin) >= 1.5;
    let mut sum = Point::default();
    let mut count = 0;
    for c in branch.points.iter().filter(|c| far_enough(c)) {
        if field.value(*c) <= target {
            sum = sum + unit(c.to_point() - origin);
            count += 1;
        }
    }
    let anchor = branch
        .points
        .iter()
        .filter(|c| far_enough(c))
        .min_by(|a, b| {
            (field.value(**a) - target)
                .abs()
                .total_cmp(&(field.value(**b) - target).abs())
        })
        .copied()
        .unwrap_or(branch.points[0])
        .to_point();
    let dir = if count > 0 { unit(sum) } else { unit(anchor - origin) };
    (dir, anchor)
}

fn angle_of(branch: &SymmetryBranch, origin: Point) -> f64 {
    wrap_2pi((branch.start().to_point() - origin).screen_angle())
}

/// Nearest non-major branches on either side of `i` in angular order of
/// their boundary ends about `origin`.
fn angular_neighbors(branches: &[SymmetryBranch], i: usize, origin: Point) -> Vec<usize> {
    let a = angle_of(&branches[i], origin);
    let mut ccw: Option<(f64, usize)> = None;
    let mut cw: Option<(f64, usize)> = None;
    for (j, b) in branches.iter().enumerate() {
        if j == i || b.is_major {
            continue;
        }
        let d = wrap_2pi(angle_of(b, origin) - a);
        if ccw.map_or(true, |(e, _)| d < e) {
            ccw = Some((d, j));
        }
        let d = wrap_2pi(a - angle_of(b, origin));
        if cw.map_or(true, |(e, _)| d < e) {
            cw = Some((d, j));
        }
    }
    let mut out: Vec<usize> = ccw.into_iter().chain(cw).map(|(_, j)| j).collect();
    out.dedup();
    out
}

/// Point on a major branch where φ matches the mean disconnection φ of its
/// neighbors.
pub fn cut_major_positive(
    branch: &SymmetryBranch,
    field: &SurfaceField,
    neighbors: &[&SymmetryBranch],
) -> Result<Cell> {
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors(0));
    }
    let target = neighbors.iter().map(|b| b.phi_at_disconnection).sum::<f64>() / neighbors.len() as f64;
    let mut best = branch.points[0];
    let mut bd = f64::INFINITY;
    for &c in &branch.points {
        let d = (field.value(c) - target).abs();
        if d < bd {
            bd = d;
            best = c;
        }
    }
    Ok(best)
}

/// Chain point closest to the segment `a`–`b`; the straight-line cut.
pub fn line_cut(branch: &SymmetryBranch, a: Point, b: Point) -> Cell {
    let ab = b - a;
    let seg_dist = |p: Point| {
        let t = if ab.dot(ab) > 0.0 {
            ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        p.dist(a + ab * t)
    };
    *branch
        .points
        .iter()
        .min_by(|p, q| seg_dist(p.to_point()).total_cmp(&seg_dist(q.to_point())))
        .expect("non-empty chain")
}

/// Copy of the branch ending at `cell` (which must lie on the chain).
pub fn truncate_at(branch: &SymmetryBranch, cell: Cell, field: &SurfaceField) -> SymmetryBranch {
    let k = branch
        .points
        .iter()
        .position(|&c| c == cell)
        .expect("cut point on chain");
    let mut b = SymmetryBranch::from_chain(branch.points[..=k].to_vec(), branch.sign, branch.strength, field);
    b.is_major = branch.is_major;
    b
}

#[derive(Debug, Clone, Copy)]
struct Origin {
    cell: Cell,
    saddle: bool,
}

/// One frame per origin with exactly two reference branches; every ordered
/// pair when more than two negative majors meet at the origin.
pub fn build_frames(
    branches: &[SymmetryBranch],
    extrema: &ExtremaSet,
    field: &SurfaceField,
    config: &FrameConfig,
) -> Result<Vec<GlobalFrame>> {
    let mut origins: Vec<Origin> = extrema
        .minima
        .iter()
        .map(|e| Origin {
            cell: e.cell,
            saddle: false,
        })
        .collect();
    if extrema.minima.len() >= 2 {
        origins.extend(extrema.saddles.iter().map(|e| Origin {
            cell: e.cell,
            saddle: true,
        }));
    }
    let mut frames = Vec::new();
    for o in origins {
        let single = ExtremaSet {
            minima: vec![crate::surface::Extremum {
                cell: o.cell,
                value: field.value(o.cell),
            }],
            saddles: vec![],
        };
        let reaching = |sign: Sign| -> Vec<usize> {
            branches
                .iter()
                .enumerate()
                .filter(|(_, b)| {
                    b.is_major && b.sign == sign && is_captured(b.disconnection, &single, config.capture_radius)
                })
                .map(|(i, _)| i)
                .collect()
        };
        let mut refs = reaching(Sign::Negative);
        if refs.len() < 2 && o.saddle {
            // a neck carries at least two positive axes
            refs = reaching(Sign::Positive);
        }
        if refs.len() < 2 {
            continue;
        }
        let origin = refine_extremum(field, o.cell);
        let phi0 = field.value(o.cell);
        let dirs: Vec<(Point, Point)> = refs
            .iter()
            .map(|&i| {
                let level = cut_level(branches, &branches[i], field);
                branch_direction(&branches[i], field, origin, phi0, level)
            })
            .collect();
        let make = |a: usize, b: usize| {
            let (da, na) = dirs[a];
            let (db, nb) = dirs[b];
            GlobalFrame {
                origin,
                origin_cell: o.cell,
                axes: [da, db],
                near: [na, nb],
                m0: wrap_2pi(da.screen_angle()),
                m1: wrap_2pi(db.screen_angle()),
                reference: [refs[a], refs[b]],
            }
        };
        if refs.len() == 2 {
            let ab = wrap_2pi(dirs[1].0.screen_angle() - dirs[0].0.screen_angle());
            // the narrower sector comes first, so halves are labelled consistently
            if ab <= std::f64::consts::PI {
                frames.push(make(0, 1));
            } else {
                frames.push(make(1, 0));
            }
        } else {
            for a in 0..refs.len() {
                for b in 0..refs.len() {
                    if a != b {
                        frames.push(make(a, b));
                    }
                }
            }
        }
    }
    if frames.is_empty() {
        let n = branches
            .iter()
            .filter(|b| b.is_major && b.sign == Sign::Negative)
            .count();
        return Err(Error::NoMajorNegative(n));
    }
    Ok(frames)
}

/// Cut every non-reference major branch at the φ level of its angular
/// neighbors, falling back to the straight-line cut.
pub fn apply_cuts(branches: &[SymmetryBranch], frame: &GlobalFrame, field: &SurfaceField) -> Vec<SymmetryBranch> {
    branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if !b.is_major || frame.reference.contains(&i) {
                return b.clone();
            }
            let nb = angular_neighbors(branches, i, frame.origin);
            let refs: Vec<&SymmetryBranch> = nb.iter().map(|&j| &branches[j]).collect();
            match cut_major_positive(b, field, &refs) {
                Ok(c) => truncate_at(b, c, field),
                Err(_) => {
                    let others: Vec<usize> = (0..branches.len()).filter(|&j| j != i).collect();
                    if others.len() < 2 {
                        return b.clone();
                    }
                    let mut by_gap: Vec<(f64, usize)> = others
                        .iter()
                        .map(|&j| {
                            let d = wrap_2pi(angle_of(&branches[j], frame.origin) - angle_of(b, frame.origin));
                            (d.min(std::f64::consts::TAU - d), j)
                        })
                        .collect();
                    by_gap.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    let (p, q) = (branches[by_gap[0].1].start(), branches[by_gap[1].1].start());
                    truncate_at(b, line_cut(b, p.to_point(), q.to_point()), field)
                }
            }
        })
        .collect()
}

/// Turn branches (already cut) into the attributed record set for `frame`.
pub fn assemble_descriptor(
    frame: &GlobalFrame,
    branches: &[SymmetryBranch],
    field: &SurfaceField,
    alternative_id: usize,
    config: &FrameConfig,
) -> ShapeDescriptor {
    let o = frame.origin;
    let phi0 = field.value(frame.origin_cell);
    let near_radius = config.capture_radius + 1.0;
    let sector0 = wrap_2pi(frame.m1 - frame.m0);
    struct Item {
        half: usize,
        theta: f64,
        dist: f64,
        idx: usize,
    }
    let mut items: Vec<Item> = branches
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let v = b.disconnection.to_point() - o;
            let dist = v.norm();
            if let Some(k) = frame.reference.iter().position(|&r| r == i) {
                return Item {
                    half: k,
                    theta: 0.0,
                    dist,
                    idx: i,
                };
            }
            let angle = if dist >= near_radius {
                v.screen_angle()
            } else {
                let level = cut_level(branches, b, field);
                branch_direction(b, field, o, phi0, level).0.screen_angle()
            };
            let rel0 = wrap_2pi(angle - frame.m0);
            if rel0 < sector0 {
                Item {
                    half: 0,
                    theta: rel0,
                    dist,
                    idx: i,
                }
            } else {
                Item {
                    half: 1,
                    theta: wrap_2pi(angle - frame.m1),
                    dist,
                    idx: i,
                }
            }
        })
        .collect();
    items.sort_by(|a, b| {
        a.half
            .cmp(&b.half)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.idx.cmp(&b.idx))
    });
    // equal angles would break strict ordering; nudge by one ulp-scale step
    for k in 1..items.len() {
        if items[k].half == items[k - 1].half && items[k].theta <= items[k - 1].theta {
            items[k].theta = items[k - 1].theta + 1e-12;
        }
    }
    let n = items.len();
    let total_len: f64 = branches.iter().map(|b| b.length.max(1.0)).sum();
    let mean_dist = items.iter().map(|it| it.dist).sum::<f64>() / n as f64;
    let mut halves: [Vec<BranchRecord>; 2] = [Vec::new(), Vec::new()];
    let mut geometry = Vec::with_capacity(n);
    for (k, it) in items.iter().enumerate() {
        let b = &branches[it.idx];
        halves[it.half].push(BranchRecord {
            sign: b.sign,
            r: if mean_dist > 0.0 { it.dist / mean_dist } else { 0.0 },
            theta: it.theta,
            norm_length: b.length.max(1.0) / total_len,
            is_reference: frame.reference.contains(&it.idx),
            next: (k + 1) % n,
            prev: (k + n - 1) % n,
        });
        geometry.push(BranchGeometry {
            start: b.start().to_point(),
            disconnection: b.disconnection.to_point(),
        });
    }
    ShapeDescriptor {
        alternative_id,
        halves,
        extrinsic: Extrinsic {
            center: o,
            total_axis_length: total_len,
            m0: frame.m0,
            m1: frame.m1,
            image_diagonal: (field.width as f64).hypot(field.height as f64),
            frame: frame.clone(),
            branches: geometry,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Junction {
    /// Branch that continues through the junction.
    through: usize,
    /// Index of the junction cell on `through`.
    at: usize,
    /// Branch that stops at the junction.
    stub: usize,
}

fn find_junctions(branches: &[SymmetryBranch], extrema: &ExtremaSet, capture: f64) -> Vec<Junction> {
    let mut out = Vec::new();
    for (s, stub) in branches.iter().enumerate() {
        let end = stub.disconnection;
        if is_captured(end, extrema, capture) {
            continue;
        }
        'through: for (t, thr) in branches.iter().enumerate() {
            if t == s || thr.sign != stub.sign || thr.points.len() < 3 {
                continue;
            }
            for k in 1..thr.points.len() - 1 {
                let c = thr.points[k];
                if c.chebyshev(end) <= 2 && !is_captured(c, extrema, capture) {
                    out.push(Junction {
                        through: t,
                        at: k,
                        stub: s,
                    });
                    break 'through;
                }
            }
        }
    }
    out
}

/// Cells strictly between two cells at Chebyshev distance ≤ 2.
fn bridge(a: Cell, b: Cell) -> Option<Cell> {
    (a.chebyshev(b) == 2).then(|| Cell::new(a.x + (b.x - a.x).signum(), a.y + (b.y - a.y).signum()))
}

fn swap_at(
    branches: &mut [SymmetryBranch],
    j: Junction,
    field: &SurfaceField,
    extrema: &ExtremaSet,
    capture: f64,
) -> bool {
    let thr = &branches[j.through];
    let stub = &branches[j.stub];
    if j.at == 0 || j.at + 1 >= thr.points.len() || thr.points[j.at].chebyshev(stub.disconnection) > 2 {
        return false;
    }
    let mut joined = stub.points.clone();
    if let Some(m) = bridge(stub.disconnection, thr.points[j.at]) {
        joined.push(m);
    }
    joined.extend_from_slice(&thr.points[j.at..]);
    let kept = thr.points[..j.at].to_vec();
    let (ss, ts) = (stub.strength, thr.strength);
    let sign = stub.sign;
    let mut a = SymmetryBranch::from_chain(joined, sign, ss, field);
    let mut b = SymmetryBranch::from_chain(kept, sign, ts, field);
    a.is_major = is_captured(a.disconnection, extrema, capture);
    b.is_major = is_captured(b.disconnection, extrema, capture);
    branches[j.stub] = a;
    branches[j.through] = b;
    true
}

/// Alternative branch sets from reassigning the shared segment at junctions
/// where one chain stops against another.
pub fn resolve_triple_junctions(
    branches: &[SymmetryBranch],
    field: &SurfaceField,
    extrema: &ExtremaSet,
    config: &FrameConfig,
) -> Vec<Vec<SymmetryBranch>> {
    let mut junctions = find_junctions(branches, extrema, config.capture_radius);
    junctions.truncate(config.max_junctions);
    let mut out: Vec<Vec<SymmetryBranch>> = vec![branches.to_vec()];
    for subset in 1u32..(1 << junctions.len()) {
        let mut alt = branches.to_vec();
        let mut ok = true;
        for (k, &j) in junctions.iter().enumerate() {
            if subset & (1 << k) != 0 {
                ok &= swap_at(&mut alt, j, field, extrema, config.capture_radius);
            }
        }
        if ok && !out.contains(&alt) {
            out.push(alt);
        }
    }
    out
}

/// Every alternative description: junction alternatives × frames, capped.
pub fn describe(
    branches: &[SymmetryBranch],
    field: &SurfaceField,
    extrema: &ExtremaSet,
    config: &FrameConfig,
) -> Result<Vec<ShapeDescriptor>> {
    let mut out = Vec::new();
    let mut first_err = None;
    for set in resolve_triple_junctions(branches, field, extrema, config) {
        let frames = match build_frames(&set, extrema, field, config) {
            Ok(f) => f,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        for frame in frames {
            if out.len() >= config.max_alternatives {
                break;
            }
            let cut = apply_cuts(&set, &frame, field);
            let d = assemble_descriptor(&frame, &cut, field, out.len(), config);
            // symmetric shapes can produce the same description twice
            if !out
                .iter()
                .any(|o: &ShapeDescriptor| o.halves == d.halves && o.extrinsic.branches == d.extrinsic.branches)
            {
                out.push(d);
            }
        }
    }
    if out.is_empty() {
        return Err(first_err.unwrap_or(Error::NoMajorNegative(0)));
    }
    Ok(out)
}
