//! Symmetry points as zero crossings of d|∇φ|/ds, and their branches.

use serde::{Deserialize, Serialize};

use crate::geom::{Cell, N8};
use crate::surface::{CellClass, ExtremaSet, SurfaceField};
use crate::{Error, Result};

/// |∇φ|² below this marks a cell invalid.
pub const GRADIENT_FLOOR: f64 = 1e-12;
/// Flux magnitudes below this never start a crossing.
pub const ZERO_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// Tracks a boundary curvature maximum (protrusion).
    Positive,
    /// Tracks a boundary curvature minimum (indentation).
    Negative,
}

#[derive(Debug, Clone)]
pub struct FluxField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// Central-difference gradient (φ_x, φ_y).
    pub grad: Vec<(f64, f64)>,
}

impl FluxField {
    pub fn value(&self, c: Cell) -> f64 {
        self.values[c.y as usize * self.width + c.x as usize]
    }

    pub fn is_valid(&self, c: Cell) -> bool {
        c.x >= 0
            && c.y >= 0
            && (c.x as usize) < self.width
            && (c.y as usize) < self.height
            && self.valid[c.y as usize * self.width + c.x as usize]
    }
}

/// ((v_y² − v_x²)v_xy − v_x v_y (v_yy − v_xx)) / |∇v|² by central differences.
pub fn dgrad_ds(field: &SurfaceField) -> FluxField {
    let (w, h) = (field.width, field.height);
    let v = &field.values;
    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    let mut grad = vec![(0.0, 0.0); w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w - 1 {
            let i = y * w + x;
            if field.class[i] != CellClass::Interior {
                continue;
            }
            let vx = 0.5 * (v[i + 1] - v[i - 1]);
            let vy = 0.5 * (v[i + w] - v[i - w]);
            // neighbor sums first so mirrored fields give bit-identical values
            let vxx = (v[i + 1] + v[i - 1]) - 2.0 * v[i];
            let vyy = (v[i + w] + v[i - w]) - 2.0 * v[i];
            let vxy = 0.25 * ((v[i + w + 1] - v[i + w - 1]) - (v[i - w + 1] - v[i - w - 1]));
            let g2 = vx * vx + vy * vy;
            grad[i] = (vx, vy);
            if g2 < GRADIENT_FLOOR {
                continue;
            }
            values[i] = ((vy * vy - vx * vx) * vxy - vx * vy * (vyy - vxx)) / g2;
            valid[i] = true;
        }
    }
    FluxField {
        width: w,
        height: h,
        values,
        valid,
        grad,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryPoint {
    pub cell: Cell,
    pub sign: Sign,
    /// Jump of the normalized flux across the crossing times the cell depth
    /// and the largest depth; dimensionless, so comparable across scales.
    pub strength: f64,
}

/// Mark cells where the flux changes sign towards the right or lower
/// neighbor. The cell closer to zero is marked, or the zero cell itself when
/// the sign change straddles one. The sign follows the
/// derivative of the flux along the level-curve tangent: a rising flux means
/// |∇φ| has a minimum there (positive point).
pub fn detect_symmetry_points(flux: &FluxField, field: &SurfaceField) -> Vec<SymmetryPoint> {
    let w = flux.width;
    let depth = depth_or_frame(field);
    let scale = depth.iter().copied().fold(0.0, f64::max);
    // (strength, signed tangent slope) per marked cell
    let mut best: Vec<Option<(f64, f64)>> = vec![None; flux.values.len()];
    let norm = |c: Cell| {
        let (gx, gy) = flux.grad[c.y as usize * w + c.x as usize];
        flux.value(c) / gx.hypot(gy)
    };
    // p and q lie on either side of the crossing, `step` cells apart along (dx, dy)
    let mut mark = |m: Cell, p: Cell, q: Cell, (dx, dy): (i32, i32), step: f64| {
        let (np, nq) = (norm(p), norm(q));
        let mi = m.y as usize * w + m.x as usize;
        let (gx, gy) = {
            let a = flux.grad[p.y as usize * w + p.x as usize];
            let b = flux.grad[q.y as usize * w + q.x as usize];
            (a.0 + b.0, a.1 + b.1)
        };
        let gn = gx.hypot(gy);
        if gn == 0.0 {
            return;
        }
        // tangent t = (φ_y, −φ_x)/|∇φ|; e is the unit step from p to q
        let e_dot_t = (dx as f64 * gy - dy as f64 * gx) / gn;
        let slope = (nq - np) / step * e_dot_t;
        let strength = (nq - np).abs() / step * depth[mi] * scale;
        let entry = &mut best[mi];
        *entry = Some(match *entry {
            None => (strength, slope),
            // exact ties go to the positive slope, independent of scan order
            Some((s0, t0)) => (
                s0.max(strength),
                if (slope.abs(), slope) > (t0.abs(), t0) {
                    slope
                } else {
                    t0
                },
            ),
        });
    };
    for y in 0..flux.height as i32 {
        for x in 0..w as i32 {
            let p = Cell::new(x, y);
            if !flux.is_valid(p) {
                continue;
            }
            for e in [(1, 0), (0, 1)] {
                let q = Cell::new(x + e.0, y + e.1);
                if !flux.is_valid(q) {
                    continue;
                }
                let (fp, fq) = (flux.value(p), flux.value(q));
                if fp.abs().max(fq.abs()) < ZERO_BAND {
                    continue;
                }
                if fp * fq < 0.0 {
                    // the cell closer to zero; both on an exact tie so mirror images mark alike
                    if fq.abs() <= fp.abs() {
                        mark(q, p, q, e, 1.0);
                    }
                    if fp.abs() <= fq.abs() {
                        mark(p, p, q, e, 1.0);
                    }
                } else if fq == 0.0 {
                    // zero exactly on a cell, as on a mirror axis through cell centres
                    let r = Cell::new(q.x + e.0, q.y + e.1);
                    if flux.is_valid(r) && fp * flux.value(r) < 0.0 {
                        mark(q, p, r, e, 2.0);
                    }
                }
            }
        }
    }
    best.iter()
        .enumerate()
        .filter_map(|(i, b)| {
            b.and_then(|(strength, slope)| {
                (slope != 0.0).then(|| SymmetryPoint {
                    cell: Cell::new((i % w) as i32, (i / w) as i32),
                    sign: if slope > 0.0 { Sign::Positive } else { Sign::Negative },
                    strength,
                })
            })
        })
        .collect()
}

/// Distance to the nearest exterior cell, or to the grid frame when the
/// field has no exterior (analytic test fields).
fn depth_or_frame(field: &SurfaceField) -> Vec<f64> {
    if field.class.iter().any(|&k| k == CellClass::Exterior) {
        return field.depth();
    }
    let (w, h) = (field.width as f64, field.height as f64);
    (0..field.values.len())
        .map(|i| {
            let (x, y) = ((i % field.width) as f64, (i / field.width) as f64);
            (x + 1.0).min(y + 1.0).min(w - x).min(h - y)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Absolute length floor in cells.
    pub min_length: f64,
    /// Length floor as a fraction of the inradius.
    pub min_relative_length: f64,
    /// Floor on the median crossing strength along a chain.
    pub min_strength: f64,
    /// Chebyshev distance from a minimum or saddle within which a chain end
    /// counts as major; raised to `capture_relative · inradius` on large shapes.
    /// Only chains ending within the unscaled radius skip the strength floor.
    pub capture_radius: f64,
    pub capture_relative: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            min_length: 3.0,
            min_relative_length: 0.4,
            min_strength: 0.4,
            capture_radius: 2.0,
            capture_relative: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryBranch {
    /// From the boundary end to the interior end.
    pub points: Vec<Cell>,
    pub sign: Sign,
    pub disconnection: Cell,
    pub length: f64,
    pub phi_at_disconnection: f64,
    pub is_major: bool,
    /// Median crossing strength along the chain.
    pub strength: f64,
}

impl SymmetryBranch {
    /// Build from an ordered chain, recomputing the derived fields.
    pub fn from_chain(points: Vec<Cell>, sign: Sign, strength: f64, field: &SurfaceField) -> Self {
        let disconnection = *points.last().expect("non-empty chain");
        SymmetryBranch {
            length: chain_length(&points),
            phi_at_disconnection: field.value(disconnection),
            disconnection,
            points,
            sign,
            is_major: false,
            strength,
        }
    }

    pub fn start(&self) -> Cell {
        self.points[0]
    }
}

pub fn chain_length(points: &[Cell]) -> f64 {
    points
        .windows(2)
        .map(|p| {
            if p[0].x != p[1].x && p[0].y != p[1].y {
                std::f64::consts::SQRT_2
            } else {
                1.0
            }
        })
        .sum()
}

/// Unpruned chain with its per-point strengths, for diagnostics.
#[derive(Debug, Clone)]
pub struct RawChain {
    pub points: Vec<Cell>,
    pub sign: Sign,
    pub strengths: Vec<f64>,
}

/// Relative φ rise (of the field's interior range) a chain may step over.
pub const BUMP_TOLERANCE: f64 = 0.02;

/// Group same-sign points into chains. Every chain walks downhill in φ from
/// its highest point through adjacent points, stepping over bumps of at most
/// `BUMP_TOLERANCE` above the lowest φ reached so far while in the outer half
/// of the φ range. All chains advance together in order of descending φ, so
/// mirror-image chains evolve identically: a point two chains contend for
/// goes to the one starting highest, exact ties stop both, and a point next
/// to an existing chain never starts a new one. Points touching a finished chain are absorbed so thick crossings yield one
/// chain.
pub fn raw_chains(points: &[SymmetryPoint], field: &SurfaceField) -> Vec<RawChain> {
    let w = field.width;
    let lo = field
        .interior_cells()
        .map(|c| field.value(c))
        .fold(f64::INFINITY, f64::min);
    let tol = BUMP_TOLERANCE * (1.0 - lo).max(0.0);
    // never near the centre, where flat φ would let a chain run into its neighbors
    let mid = 0.5 * (1.0 + lo);
    let mut out = Vec::new();
    for sign in [Sign::Positive, Sign::Negative] {
        let mut pts: Vec<&SymmetryPoint> = points.iter().filter(|p| p.sign == sign).collect();
        pts.sort_by(|a, b| {
            field
                .value(b.cell)
                .total_cmp(&field.value(a.cell))
                .then((a.cell.y, a.cell.x).cmp(&(b.cell.y, b.cell.x)))
        });
        let mut slot = vec![u32::MAX; field.values.len()];
        for (k, p) in pts.iter().enumerate() {
            slot[p.cell.y as usize * w + p.cell.x as usize] = k as u32;
        }
        let (slot, cells) = (&slot, &pts);
        let neighbors = |k: usize| {
            let c = cells[k].cell;
            N8.iter().filter_map(move |&(dx, dy)| {
                let n = Cell::new(c.x + dx, c.y + dy);
                if !field.in_bounds(n) {
                    return None;
                }
                let s = slot[n.y as usize * w + n.x as usize];
                (s != u32::MAX).then_some(s as usize)
            })
        };
        let phi: Vec<f64> = pts.iter().map(|p| field.value(p.cell)).collect();
        let mut taken = vec![false; pts.len()];
        let mut absorbed = vec![false; pts.len()];
        let mut walkers: Vec<Walker> = Vec::new();
        let mut next_start = 0;
        loop {
            // each active chain's next point, from the state before this batch
            let mut moves: Vec<(usize, usize)> = Vec::new();
            for (wi, wk) in walkers.iter_mut().enumerate().filter(|(_, wk)| !wk.done) {
                let head = *wk.cells.last().unwrap();
                let hc = pts[head].cell;
                let mut down: Option<usize> = None;
                let mut bump: Option<usize> = None;
                for k in neighbors(head) {
                    if taken[k] || absorbed[k] {
                        continue;
                    }
                    let v = phi[k];
                    if v < phi[head] {
                        let better = down.map_or(true, |n| {
                            let straight = |j: usize| pts[j].cell.x == hc.x || pts[j].cell.y == hc.y;
                            v > phi[n] || (v == phi[n] && (straight(k), n) > (straight(n), k))
                        });
                        if better {
                            down = Some(k);
                        }
                    } else if wk.floor > mid && v < wk.floor + tol && bump.map_or(true, |n| k > n) {
                        bump = Some(k);
                    }
                }
                match down.or(bump) {
                    Some(k) => moves.push((wi, k)),
                    None => wk.done = true,
                }
            }
            for wk in walkers.iter_mut().filter(|wk| wk.done && !wk.absorbed) {
                wk.absorbed = true;
                for &k in &wk.cells {
                    for j in neighbors(k) {
                        absorbed[j] = true;
                    }
                }
            }
            while next_start < pts.len()
                && (taken[next_start] || absorbed[next_start] || neighbors(next_start).any(|j| taken[j]))
            {
                next_start += 1;
            }
            let top = moves
                .iter()
                .map(|&(_, k)| phi[k])
                .chain((next_start < pts.len()).then(|| phi[next_start]))
                .fold(f64::NEG_INFINITY, f64::max);
            if top == f64::NEG_INFINITY {
                break;
            }
            let batch: Vec<(usize, usize)> = moves.into_iter().filter(|&(_, k)| phi[k] == top).collect();
            let mut starts = Vec::new();
            let mut s = next_start;
            while s < pts.len() && phi[s] == top {
                if !taken[s] && !absorbed[s] && !neighbors(s).any(|j| taken[j]) && !batch.iter().any(|&(_, k)| k == s) {
                    starts.push(s);
                }
                s += 1;
            }
            // a contested point goes to the chain starting highest, then the
            // longest; exact ties (mirror images) stop every contender
            let rank = |wi: usize| (phi[walkers[wi].cells[0]], chain_length_of(&walkers[wi].cells, &pts));
            let (winners, losers): (Vec<_>, Vec<_>) = batch.iter().partition(|&&(wi, k)| {
                let mine = rank(wi);
                !batch.iter().any(|&(vj, j)| j == k && vj != wi && rank(vj) >= mine)
            });
            for (wi, _) in losers {
                walkers[wi].done = true;
            }
            for (wi, k) in winners {
                let wk = &mut walkers[wi];
                wk.cells.push(k);
                wk.floor = wk.floor.min(phi[k]);
                taken[k] = true;
            }
            for k in starts {
                taken[k] = true;
                walkers.push(Walker {
                    cells: vec![k],
                    floor: phi[k],
                    done: false,
                    absorbed: false,
                });
            }
        }
        for wk in walkers {
            out.push(RawChain {
                points: wk.cells.iter().map(|&k| pts[k].cell).collect(),
                sign,
                strengths: wk.cells.iter().map(|&k| pts[k].strength).collect(),
            });
        }
    }
    out
}

fn chain_length_of(cells: &[usize], pts: &[&SymmetryPoint]) -> f64 {
    chain_length(&cells.iter().map(|&k| pts[k].cell).collect::<Vec<_>>())
}

struct Walker {
    cells: Vec<usize>,
    floor: f64,
    done: bool,
    absorbed: bool,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl TraceConfig {
    /// Effective major-branch capture radius.
    pub fn capture(&self, inradius: f64) -> f64 {
        self.capture_radius.max((self.capture_relative * inradius).floor())
    }

    /// Pruning rule. Chains reaching a centre or neck (`reaches`) are exempt
    /// from the strength floor: flat sides produce weak but structural crossings.
    pub fn keeps(&self, length: f64, strength: f64, inradius: f64, reaches: bool) -> bool {
        length >= self.min_length.max(self.min_relative_length * inradius) && (reaches || strength >= self.min_strength)
    }
}

/// Chain, prune and classify symmetry points. A chain survives when it is at
/// least `max(min_length, min_relative_length · inradius)` long and either
/// ends within `capture_radius` of an extremum or has median crossing strength at least `min_strength`.
/// The extremum exemption needs at least one chain that passes on strength.
pub fn trace_branches(
    points: &[SymmetryPoint],
    field: &SurfaceField,
    extrema: &ExtremaSet,
    config: &TraceConfig,
) -> Result<Vec<SymmetryBranch>> {
    let inradius = field.depth().into_iter().fold(0.0, f64::max);
    let capture = config.capture(inradius);
    let chains: Vec<(RawChain, f64)> = raw_chains(points, field)
        .into_iter()
        .map(|c| {
            let m = median(&c.strengths);
            (c, m)
        })
        .collect();
    // with no strong chain at all every crossing is a discretization ripple
    let anchored = chains
        .iter()
        .any(|(c, m)| config.keeps(chain_length(&c.points), *m, inradius, false));
    if !anchored {
        return Err(Error::DegenerateSkeleton);
    }
    let out: Vec<SymmetryBranch> = chains
        .into_iter()
        .filter_map(|(c, strength)| {
            let mut b = SymmetryBranch::from_chain(c.points, c.sign, strength, field);
            b.is_major = is_captured(b.disconnection, extrema, capture);
            let reaches = is_captured(b.disconnection, extrema, config.capture_radius);
            config.keeps(b.length, strength, inradius, reaches).then_some(b)
        })
        .collect();
    if out.is_empty() {
        return Err(Error::DegenerateSkeleton);
    }
    Ok(out)
}

/// Chebyshev distance test against every minimum and saddle.
pub fn is_captured(c: Cell, extrema: &ExtremaSet, radius: f64) -> bool {
    extrema
        .minima
        .iter()
        .chain(&extrema.saddles)
        .any(|e| e.cell.chebyshev(c) as f64 <= radius)
}

/// Major-branch counts by sign: (positive, negative).
pub fn major_counts(branches: &[SymmetryBranch]) -> (usize, usize) {
    let pos = branches
        .iter()
        .filter(|b| b.is_major && b.sign == Sign::Positive)
        .count();
    let neg = branches
        .iter()
        .filter(|b| b.is_major && b.sign == Sign::Negative)
        .count();
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{FieldKind, SurfaceField};
    use crate::BinaryMask;

    fn strip_field(n: usize) -> SurfaceField {
        SurfaceField::from_fn(n, 3, |x, _| 1.0 - x / n as f64)
    }

    #[test]
    fn short_chain_is_pruned() {
        let f = strip_field(10);
        let pts: Vec<SymmetryPoint> = [(2, 1), (3, 1)]
            .iter()
            .map(|&(x, y)| SymmetryPoint {
                cell: Cell::new(x, y),
                sign: Sign::Positive,
                strength: 1.0,
            })
            .collect();
        let cfg = TraceConfig {
            min_relative_length: 0.0,
            ..TraceConfig::default()
        };
        assert!(matches!(
            trace_branches(&pts, &f, &ExtremaSet::default(), &cfg),
            Err(Error::DegenerateSkeleton)
        ));
    }

    #[test]
    fn chain_is_ordered_by_descending_phi() {
        let f = strip_field(12);
        let pts: Vec<SymmetryPoint> = (1..9)
            .rev()
            .map(|x| SymmetryPoint {
                cell: Cell::new(x, 1),
                sign: Sign::Negative,
                strength: 1.0,
            })
            .collect();
        let cfg = TraceConfig {
            min_relative_length: 0.0,
            ..TraceConfig::default()
        };
        let b = trace_branches(&pts, &f, &ExtremaSet::default(), &cfg).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].start(), Cell::new(1, 1));
        assert_eq!(b[0].disconnection, Cell::new(8, 1));
        assert_eq!(b[0].length, 7.0);
        assert!(!b[0].is_major);
        let _ = FieldKind::Phi;
    }

    #[test]
    fn ramp_has_zero_flux() {
        let f = SurfaceField::from_fn(20, 20, |x, _| x / 20.0);
        let flux = dgrad_ds(&f);
        for (v, ok) in flux.values.iter().zip(&flux.valid) {
            if *ok {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(detect_symmetry_points(&flux, &f).is_empty());
    }

    #[test]
    fn saddle_field_crossings_follow_diagonals() {
        let n = 31;
        let c = 15.0;
        let f = SurfaceField::from_fn(n, n, |x, y| (x - c) * (y - c) / 100.0);
        let flux = dgrad_ds(&f);
        let pts = detect_symmetry_points(&flux, &f);
        assert!(!pts.is_empty());
        for p in pts {
            let (dx, dy) = (p.cell.x as f64 - c, p.cell.y as f64 - c);
            assert!((dx.abs() - dy.abs()).abs() <= 1.0, "{p:?}");
        }
    }

    fn branches_of(mask: &BinaryMask) -> Vec<SymmetryBranch> {
        let sol = crate::surface::solve_phi(mask, &crate::PhiConfig::default()).unwrap();
        let flux = dgrad_ds(&sol.field);
        let pts = detect_symmetry_points(&flux, &sol.field);
        trace_branches(&pts, &sol.field, &sol.extrema, &TraceConfig::default()).unwrap()
    }

    #[test]
    fn ellipse_has_two_positive_branches_on_the_major_axis() {
        let m = BinaryMask::from_fn(61, 31, |x, y| {
            ((x as f64 - 30.0) / 29.5).powi(2) + ((y as f64 - 15.0) / 14.75).powi(2) <= 1.0
        })
        .unwrap();
        let b = branches_of(&m);
        let pos: Vec<&SymmetryBranch> = b.iter().filter(|b| b.sign == Sign::Positive).collect();
        assert_eq!(pos.len(), 2);
        for p in pos {
            assert!(p.points.iter().all(|c| c.y == 16), "{:?}", p.points);
            assert!(p.is_major);
        }
    }

    #[test]
    fn rectangle_corners_give_four_positive_branches() {
        let m = BinaryMask::from_fn(40, 20, |_, _| true).unwrap();
        let b = branches_of(&m);
        let pos: Vec<&SymmetryBranch> = b.iter().filter(|b| b.sign == Sign::Positive).collect();
        assert_eq!(pos.len(), 4);
        for p in pos {
            let s = p.start();
            // starts next to a corner, ends in the interior
            assert!((s.x <= 3 || s.x >= 38) && (s.y <= 3 || s.y >= 18), "{s:?}");
            let d = p.disconnection;
            assert!(d.x > 5 && d.x < 36 && d.y > 3 && d.y < 18, "{d:?}");
        }
    }
}
