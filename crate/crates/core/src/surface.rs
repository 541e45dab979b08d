//! Diffusion surfaces over a mask and their extrema.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{sq_distance_transform, Cell, N8};
use crate::shape_io::BinaryMask;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    Phi,
    Tsp { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Exterior,
    /// Shape cell with a background 8-neighbor; clamped to 1.
    Boundary,
    Interior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub sigma: f64,
    pub kind: FieldKind,
    pub class: Vec<CellClass>,
}

impl SurfaceField {
    /// Interior 0, boundary and exterior 1.
    pub fn initial(mask: &BinaryMask, kind: FieldKind) -> Self {
        let (w, h) = (mask.width(), mask.height());
        let mut class = vec![CellClass::Exterior; w * h];
        let mut values = vec![1.0; w * h];
        for c in mask.cells() {
            let i = c.y as usize * w + c.x as usize;
            if mask.is_boundary(c.x, c.y) {
                class[i] = CellClass::Boundary;
            } else {
                class[i] = CellClass::Interior;
                values[i] = 0.0;
            }
        }
        SurfaceField {
            width: w,
            height: h,
            values,
            sigma: 0.0,
            kind,
            class,
        }
    }

    /// Sample an analytic function; every cell is treated as interior.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x as f64, y as f64))
            .collect();
        SurfaceField {
            width,
            height,
            values,
            sigma: 0.0,
            kind: FieldKind::Phi,
            class: vec![CellClass::Interior; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn value(&self, c: Cell) -> f64 {
        self.values[self.idx(c)]
    }

    pub fn is_interior(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.class[self.idx(c)] == CellClass::Interior
    }

    pub fn interior_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width;
        self.class
            .iter()
            .enumerate()
            .filter(|(_, &k)| k == CellClass::Interior)
            .map(move |(i, _)| Cell::new((i % w) as i32, (i / w) as i32))
    }

    /// Euclidean distance of each cell to the nearest non-shape cell.
    pub fn depth(&self) -> Vec<f64> {
        let seed: Vec<bool> = self.class.iter().map(|&k| k == CellClass::Exterior).collect();
        sq_distance_transform(self.width, self.height, &seed)
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }

    /// Debug dump: u32 width, u32 height, f64 sigma, then row-major f64 values,
    /// all little-endian.
    pub fn to_dump(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&self.sigma.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Inverse of [`to_dump`](Self::to_dump). Cells below 1 are read back as interior.
    pub fn from_dump(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Parse("field dump shorter than its header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let sigma = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let n = width * height;
        if bytes.len() != 16 + 8 * n {
            return Err(Error::Parse(format!(
                "field dump has {} bytes, expected {}",
                bytes.len(),
                16 + 8 * n
            )));
        }
        let values: Vec<f64> = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let class = values
            .iter()
            .map(|&v| {
                if v < 1.0 {
                    CellClass::Interior
                } else {
                    CellClass::Exterior
                }
            })
            .collect();
        Ok(SurfaceField {
            width,
            height,
            values,
            sigma,
            kind: FieldKind::Phi,
            class,
        })
    }

    pub fn write_dump(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_dump()).map_err(|e| Error::io(path, e))
    }

    pub fn read_dump(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_dump(&bytes)
    }
}

/// Largest distance from a shape cell to the background.
pub fn inradius(mask: &BinaryMask) -> f64 {
    let seed: Vec<bool> = mask.inside().iter().map(|&b| !b).collect();
    sq_distance_transform(mask.width(), mask.height(), &seed)
        .into_iter()
        .fold(0.0, f64::max)
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiConfig {
    pub dt: f64,
    pub max_sigma: f64,
    pub dumbbell_mode: bool,
    /// Consecutive steps the minima count must hold before stopping.
    pub dwell_steps: usize,
    /// Lower bound on the stopping time as a multiple of the squared inradius.
    pub min_sigma_factor: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig {
            dt: 0.2,
            max_sigma: 50_000.0,
            dumbbell_mode: false,
            dwell_steps: 50,
            min_sigma_factor: 0.25,
        }
    }
}

/// Explicit 5-point heat stepper with the shape boundary clamped to 1.
pub struct PhiSolver {
    field: SurfaceField,
    next: Vec<f64>,
    interior: Vec<u32>,
    dt: f64,
}

impl PhiSolver {
    pub fn new(mask: &BinaryMask, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt <= 0.25) {
            return Err(Error::Invalid(format!("dt must be in (0, 0.25], got {dt}")));
        }
        let field = SurfaceField::initial(mask, FieldKind::Phi);
        let interior = (0..field.values.len() as u32)
            .filter(|&i| field.class[i as usize] == CellClass::Interior)
            .collect();
        let next = field.values.clone();
        Ok(PhiSolver {
            field,
            next,
            interior,
            dt,
        })
    }

    pub fn field(&self) -> &SurfaceField {
        &self.field
    }

    pub fn into_field(self) -> SurfaceField {
        self.field
    }

    pub fn step(&mut self) {
        let w = self.field.width;
        let v = &self.field.values;
        let dt = self.dt;
        for &i in &self.interior {
            let i = i as usize;
            let c = v[i];
            // paired sums keep the update exactly symmetric under grid reflections
            let lap = ((v[i - 1] - c) + (v[i + 1] - c)) + ((v[i - w] - c) + (v[i + w] - c));
            self.next[i] = c + dt * lap;
        }
        for &i in &self.interior {
            self.field.values[i as usize] = self.next[i as usize];
        }
        self.field.sigma += dt;
    }

    fn touched_everywhere(&self) -> bool {
        self.interior.iter().all(|&i| self.field.values[i as usize] > 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct PhiSolution {
    pub field: SurfaceField,
    pub extrema: ExtremaSet,
    /// First field in which no interior cell is still at its initial value.
    pub snapshot: SurfaceField,
    /// Set when dumbbell mode stopped on a stable two-centre field.
    pub dumbbell: Option<(SurfaceField, ExtremaSet)>,
    /// Number of minima after each step from the snapshot on.
    pub minima_counts: Vec<u32>,
}

/// Diffuse until a single interior minimum has been stable for the dwell
/// window and the diffusion time reaches `min_sigma_factor · inradius²`.
pub fn solve_phi(mask: &BinaryMask, config: &PhiConfig) -> Result<PhiSolution> {
    let mut solver = PhiSolver::new(mask, config.dt)?;
    let r = inradius(mask);
    let sigma_floor = config.min_sigma_factor * r * r;
    let mut snapshot = None;
    let mut counts = Vec::new();
    let mut single = 0usize;
    let mut double = 0usize;
    if solver.interior.is_empty() {
        // nothing to diffuse; the shape is all boundary
        let field = solver.into_field();
        return Ok(PhiSolution {
            extrema: ExtremaSet::default(),
            snapshot: field.clone(),
            field,
            dumbbell: None,
            minima_counts: counts,
        });
    }
    loop {
        solver.step();
        let sigma = solver.field.sigma;
        if snapshot.is_none() {
            if !solver.touched_everywhere() {
                if sigma >= config.max_sigma {
                    return Err(Error::NonConvergence("interior never reached".into()));
                }
                continue;
            }
            snapshot = Some(solver.field.clone());
        }
        let minima = locate_minima(&solver.field);
        counts.push(minima.len() as u32);
        single = if minima.len() == 1 { single + 1 } else { 0 };
        if config.dumbbell_mode {
            let two_centres = minima.len() == 2 && locate_saddles(&solver.field).len() == 1;
            double = if two_centres { double + 1 } else { 0 };
            if double >= config.dwell_steps && sigma >= sigma_floor {
                let extrema = locate_extrema(&solver.field);
                let field = solver.into_field();
                return Ok(PhiSolution {
                    dumbbell: Some((field.clone(), extrema.clone())),
                    field,
                    extrema,
                    snapshot: snapshot.unwrap(),
                    minima_counts: counts,
                });
            }
        }
        if single >= config.dwell_steps && sigma >= sigma_floor {
            break;
        }
        if sigma >= config.max_sigma {
            return Err(Error::NonConvergence(format!(
                "{} minima at sigma {sigma:.1}",
                minima.len()
            )));
        }
    }
    let field = solver.into_field();
    let extrema = locate_extrema(&field);
    Ok(PhiSolution {
        field,
        extrema,
        snapshot: snapshot.unwrap(),
        dumbbell: None,
        minima_counts: counts,
    })
}

/// Steady state of Δv − v/ρ² = 0 with v = 1 off the interior, by SOR.
pub fn solve_tsp(mask: &BinaryMask, rho: f64) -> Result<SurfaceField> {
    solve_tsp_with(mask, rho, 1e-10, 500_000)
}

pub fn solve_tsp_with(mask: &BinaryMask, rho: f64, tol: f64, max_sweeps: usize) -> Result<SurfaceField> {
    if !(rho > 0.0) {
        return Err(Error::Invalid(format!("rho must be positive, got {rho}")));
    }
    let mut field = SurfaceField::initial(mask, FieldKind::Tsp { rho });
    let w = field.width;
    let interior: Vec<usize> = (0..field.values.len())
        .filter(|&i| field.class[i] == CellClass::Interior)
        .collect();
    let diag = 4.0 + 1.0 / (rho * rho);
    // SOR factor tuned to the slowest mode of the region
    let r = inradius(mask).max(1.0);
    let omega = (2.0 / (1.0 + (std::f64::consts::PI / (2.0 * r + 2.0)).sin())).min(1.95);
    let v = &mut field.values;
    for sweep in 0..max_sweeps {
        for &i in &interior {
            let s = (v[i - 1] + v[i + 1]) + (v[i - w] + v[i + w]);
            let gs = s / diag;
            v[i] += omega * (gs - v[i]);
        }
        if sweep % 16 == 15 || sweep + 1 == max_sweeps {
            let res = tsp_residual_max(v, w, &interior, rho);
            if res <= tol {
                return Ok(field);
            }
        }
    }
    Err(Error::NonConvergence(format!(
        "TSP relaxation after {max_sweeps} sweeps"
    )))
}

fn tsp_residual_max(v: &[f64], w: usize, interior: &[usize], rho: f64) -> f64 {
    interior
        .iter()
        .map(|&i| {
            let lap = (v[i - 1] + v[i + 1]) + (v[i - w] + v[i + w]) - 4.0 * v[i];
            (lap - v[i] / (rho * rho)).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest |Δv − v/ρ²| over interior cells.
pub fn tsp_residual(field: &SurfaceField) -> f64 {
    let FieldKind::Tsp { rho } = field.kind else {
        return f64::NAN;
    };
    let interior: Vec<usize> = (0..field.values.len())
        .filter(|&i| field.class[i] == CellClass::Interior)
        .collect();
    tsp_residual_max(&field.values, field.width, &interior, rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub cell: Cell,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtremaSet {
    pub minima: Vec<Extremum>,
    pub saddles: Vec<Extremum>,
}

pub fn locate_extrema(field: &SurfaceField) -> ExtremaSet {
    ExtremaSet {
        minima: locate_minima(field),
        saddles: locate_saddles(field),
    }
}

fn neighbors_in(field: &SurfaceField, c: Cell) -> impl Iterator<Item = Cell> + '_ {
    N8.iter()
        .map(move |&(dx, dy)| Cell::new(c.x + dx, c.y + dy))
        .filter(|&n| field.in_bounds(n))
}

/// Interior local minima. Equal-valued plateaus whose every outside neighbor
/// is strictly greater count once, at the member nearest their centroid.
pub fn locate_minima(field: &SurfaceField) -> Vec<Extremum> {
    let w = field.width;
    let v = &field.values;
    let mut out = Vec::new();
    let mut plateau_seen: Vec<bool> = Vec::new();
    for (i, &k) in field.class.iter().enumerate() {
        if k != CellClass::Interior {
            continue;
        }
        let c = Cell::new((i % w) as i32, (i / w) as i32);
        let x = v[i];
        if !has_full_ring(field, c) {
            continue;
        }
        let mut tie = false;
        let mut candidate = true;
        for n in neighbors_in(field, c) {
            let y = v[field.idx(n)];
            if y < x {
                candidate = false;
                break;
            }
            tie |= y == x;
        }
        if !candidate {
            continue;
        }
        if !tie {
            out.push(Extremum { cell: c, value: x });
            continue;
        }
        if plateau_seen.is_empty() {
            plateau_seen = vec![false; v.len()];
        }
        if plateau_seen[i] {
            continue;
        }
        if let Some(cell) = plateau_minimum(field, c, &mut plateau_seen) {
            out.push(Extremum { cell, value: x });
        }
    }
    out
}

fn has_full_ring(field: &SurfaceField, c: Cell) -> bool {
    c.x >= 1 && c.y >= 1 && (c.x as usize) + 1 < field.width && (c.y as usize) + 1 < field.height
}

/// Flood the equal-valued 8-component containing `start`; returns its
/// representative cell if it is a minimum plateau.
fn plateau_minimum(field: &SurfaceField, start: Cell, seen: &mut [bool]) -> Option<Cell> {
    let x = field.value(start);
    let mut members = vec![start];
    seen[field.idx(start)] = true;
    let mut is_min = true;
    let mut k = 0;
    while k < members.len() {
        let c = members[k];
        k += 1;
        if field.class[field.idx(c)] != CellClass::Interior || !has_full_ring(field, c) {
            is_min = false;
        }
        for n in neighbors_in(field, c) {
            let j = field.idx(n);
            let y = field.values[j];
            if y < x {
                is_min = false;
            } else if y == x && !seen[j] {
                seen[j] = true;
                members.push(n);
            }
        }
    }
    if !is_min {
        return None;
    }
    Some(representative(&members))
}

fn representative(members: &[Cell]) -> Cell {
    let n = members.len() as f64;
    let cx = members.iter().map(|c| c.x as f64).sum::<f64>() / n;
    let cy = members.iter().map(|c| c.y as f64).sum::<f64>() / n;
    let mut best = members[0];
    let mut bd = f64::INFINITY;
    let mut sorted = members.to_vec();
    sorted.sort_by_key(|c| (c.y, c.x));
    for c in sorted {
        let d = (c.x as f64 - cx).powi(2) + (c.y as f64 - cy).powi(2);
        if d < bd - 1e-12 {
            bd = d;
            best = c;
        }
    }
    best
}

/// Ring order for the saddle test: consecutive entries are adjacent around the cell.
const RING: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn is_saddle(field: &SurfaceField, c: Cell) -> bool {
    let x = field.value(c);
    let here = field.idx(c);
    let mut signs = [false; 8];
    for (k, &(dx, dy)) in RING.iter().enumerate() {
        let n = Cell::new(c.x + dx, c.y + dy);
        let v = field.value(n);
        // ties are broken by cell index so flat necks still yield one saddle
        signs[k] = v > x || (v == x && field.idx(n) > here);
    }
    (0..8).filter(|&k| signs[k] != signs[(k + 1) % 8]).count() >= 4
}

/// Interior cells passing the ring sign-change test; adjacent hits collapse
/// to one representative.
pub fn locate_saddles(field: &SurfaceField) -> Vec<Extremum> {
    let hits: Vec<Cell> = field
        .interior_cells()
        .filter(|&c| has_full_ring(field, c) && is_saddle(field, c))
        .collect();
    let mut used = vec![false; hits.len()];
    let mut out = Vec::new();
    for s in 0..hits.len() {
        if used[s] {
            continue;
        }
        used[s] = true;
        let mut group = vec![hits[s]];
        let mut k = 0;
        while k < group.len() {
            let g = group[k];
            k += 1;
            for (t, &h) in hits.iter().enumerate() {
                if !used[t] && h.is_8_adjacent(g) {
                    used[t] = true;
                    group.push(h);
                }
            }
        }
        let cell = representative(&group);
        out.push(Extremum {
            cell,
            value: field.value(cell),
        });
    }
    out
}
