//! Order-preserving branch correspondence and shape similarity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::frame::{BranchRecord, ShapeDescriptor};
use crate::geom::wrap_pi;
use crate::{Error, Result};

/// Diagonal of the record-difference covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityWeights {
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            sigma_l: 0.2,
            sigma_r: 0.3,
            sigma_theta: std::f64::consts::PI / 6.0,
        }
    }
}

impl SimilarityWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma_l, self.sigma_r, self.sigma_theta]
            .iter()
            .all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("similarity weights must be positive: {self:?}")))
        }
    }
}

/// Which extrinsic channels penalize the score in sensitive mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveFlags {
    pub translation: bool,
    pub scale: bool,
    pub rotation: bool,
}

impl std::str::FromStr for SensitiveFlags {
    type Err = Error;

    /// Comma-separated channel names: `t`, `s`, `r` (or spelled out).
    fn from_str(s: &str) -> Result<Self> {
        let mut f = SensitiveFlags::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "t" | "translation" => f.translation = true,
                "s" | "scale" => f.scale = true,
                "r" | "rotation" => f.rotation = true,
                _ => return Err(Error::Invalid(format!("unknown sensitivity channel {part:?}"))),
            }
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitiveScales {
    /// Fraction of the image diagonal.
    pub translation: f64,
    /// On the log of the total axis length ratio.
    pub scale: f64,
    pub rotation: f64,
}

impl Default for SensitiveScales {
    fn default() -> Self {
        SensitiveScales {
            translation: 0.25,
            scale: 0.5,
            rotation: std::f64::consts::FRAC_PI_4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum MatchMode {
    #[default]
    Invariant,
    Sensitive(SensitiveFlags, SensitiveScales),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
    pub per_pair_scores: Vec<f64>,
}

pub fn branch_similarity(a: &BranchRecord, b: &BranchRecord, w: &SimilarityWeights) -> f64 {
    if a.sign != b.sign {
        return 0.0;
    }
    let dl = (a.norm_length - b.norm_length) / w.sigma_l;
    let dr = (a.r - b.r) / w.sigma_r;
    // ordered difference so that sim(a, b) == sim(b, a) bit for bit
    let dt = wrap_pi(a.theta.max(b.theta) - a.theta.min(b.theta)) / w.sigma_theta;
    (-0.5 * (dl * dl + dr * dr + dt * dt)).exp()
}

/// Best order-preserving partial matching of two halves, maximizing
/// Σ 0.5·(wa_i + wb_j)·sim(i, j). Branch weights are the records' normalized
/// lengths.
pub fn match_half(a: &[BranchRecord], b: &[BranchRecord], w: &SimilarityWeights) -> Correspondence {
    let sim: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| branch_similarity(x, y, w)).collect())
        .collect();
    let value: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, x)| {
            b.iter()
                .enumerate()
                .map(|(j, y)| 0.5 * (x.norm_length + y.norm_length) * sim[i][j])
                .collect()
        })
        .collect();
    // suffix sums of weights for the optimistic bound
    let mut rest_a = vec![0.0; a.len() + 1];
    for i in (0..a.len()).rev() {
        rest_a[i] = rest_a[i + 1] + a[i].norm_length;
    }
    let mut rest_b = vec![0.0; b.len() + 1];
    for j in (0..b.len()).rev() {
        rest_b[j] = rest_b[j + 1] + b[j].norm_length;
    }
    let mut search = Search {
        value: &value,
        rest_a: &rest_a,
        rest_b: &rest_b,
        best: 0.0,
        best_pairs: Vec::new(),
        path: Vec::new(),
    };
    search.dfs(0, 0, 0.0);
    let pairs = search.best_pairs;
    Correspondence {
        per_pair_scores: pairs.iter().map(|&(i, j)| sim[i][j]).collect(),
        score: search.best,
        pairs,
    }
}

struct Search<'a> {
    value: &'a [Vec<f64>],
    rest_a: &'a [f64],
    rest_b: &'a [f64],
    best: f64,
    best_pairs: Vec<(usize, usize)>,
    path: Vec<(usize, usize)>,
}

impl Search<'_> {
    /// Branches `i..` of A and `j..` of B are still free; `cur` is the
    /// objective of the current path, accumulated in index order.
    fn dfs(&mut self, i: usize, j: usize, cur: f64) {
        if cur > self.best {
            self.best = cur;
            self.best_pairs = self.path.clone();
        }
        if i >= self.value.len() || j >= self.rest_b.len() - 1 {
            return;
        }
        let bound = cur + 0.5 * (self.rest_a[i] + self.rest_b[j]);
        // slack keeps rounding in the bound from cutting an equal-valued optimum
        if bound < self.best - 1e-9 {
            return;
        }
        for jj in j..self.value[i].len() {
            let v = self.value[i][jj];
            if v > 0.0 {
                self.path.push((i, jj));
                self.dfs(i + 1, jj + 1, cur + v);
                self.path.pop();
            }
        }
        self.dfs(i + 1, j, cur);
    }
}

/// One scored (alternative, alternative, alignment) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Final score, including any sensitive-mode penalty.
    pub score: f64,
    pub alt_a: usize,
    pub alt_b: usize,
    /// Half 0 of A was matched against half 1 of B.
    pub swapped: bool,
    /// Flattened record indices; `score` is min(score_ab, score_ba).
    pub correspondence: Correspondence,
    pub score_ab: f64,
    pub score_ba: f64,
    pub penalty: f64,
}

fn half_pairs(swapped: bool) -> [(usize, usize); 2] {
    if swapped {
        [(0, 1), (1, 0)]
    } else {
        [(0, 0), (1, 1)]
    }
}

fn penalty(a: &ShapeDescriptor, b: &ShapeDescriptor, swapped: bool, mode: &MatchMode) -> f64 {
    let MatchMode::Sensitive(flags, s) = mode else {
        return 1.0;
    };
    let g = |d: f64, scale: f64| (-0.5 * (d / scale).powi(2)).exp();
    let (ea, eb) = (&a.extrinsic, &b.extrinsic);
    let mut p = 1.0;
    if flags.translation {
        let diag = 0.5 * (ea.image_diagonal + eb.image_diagonal);
        p *= g(ea.center.dist(eb.center), s.translation * diag);
    }
    if flags.scale {
        p *= g((ea.total_axis_length / eb.total_axis_length).ln(), s.scale);
    }
    if flags.rotation {
        let mb = if swapped { eb.m1 } else { eb.m0 };
        p *= g(wrap_pi(ea.m0 - mb), s.rotation);
    }
    p
}

/// Score one descriptor pair under one half alignment.
pub fn match_descriptors(
    a: &ShapeDescriptor,
    b: &ShapeDescriptor,
    swapped: bool,
    w: &SimilarityWeights,
    mode: &MatchMode,
) -> MatchResult {
    let mut corr = Correspondence::default();
    let (mut ab, mut ba) = (0.0, 0.0);
    for (ha, hb) in half_pairs(swapped) {
        let c = match_half(&a.halves[ha], &b.halves[hb], w);
        for (&(i, j), &s) in c.pairs.iter().zip(&c.per_pair_scores) {
            ab += a.halves[ha][i].norm_length * s;
            ba += b.halves[hb][j].norm_length * s;
            corr.pairs.push((a.flat_index(ha, i), b.flat_index(hb, j)));
            corr.per_pair_scores.push(s);
        }
    }
    corr.score = ab.min(ba).clamp(0.0, 1.0);
    let pen = penalty(a, b, swapped, mode);
    MatchResult {
        score: corr.score * pen,
        alt_a: a.alternative_id,
        alt_b: b.alternative_id,
        swapped,
        correspondence: corr,
        score_ab: ab,
        score_ba: ba,
        penalty: pen,
    }
}

fn fingerprint(set: &[ShapeDescriptor]) -> Vec<u64> {
    let mut v = Vec::new();
    for d in set {
        v.push(d.len() as u64);
        for r in d.records() {
            v.extend([r.r, r.theta, r.norm_length].map(f64::to_bits));
            v.push(r.sign as u64);
        }
        let e = &d.extrinsic;
        v.extend(
            [
                e.center.x,
                e.center.y,
                e.total_axis_length,
                e.m0,
                e.m1,
                e.image_diagonal,
            ]
            .map(f64::to_bits),
        );
    }
    v
}

fn flip(mut r: MatchResult) -> MatchResult {
    std::mem::swap(&mut r.alt_a, &mut r.alt_b);
    std::mem::swap(&mut r.score_ab, &mut r.score_ba);
    for p in &mut r.correspondence.pairs {
        *p = (p.1, p.0);
    }
    r
}

/// Every candidate combination; the arguments are put in a canonical order
/// first so the result does not depend on which shape is passed as `a`.
pub fn all_candidates(
    a: &[ShapeDescriptor],
    b: &[ShapeDescriptor],
    w: &SimilarityWeights,
    mode: &MatchMode,
) -> Vec<MatchResult> {
    let flipped = fingerprint(a).cmp(&fingerprint(b)) == Ordering::Greater;
    let (x, y) = if flipped { (b, a) } else { (a, b) };
    let mut out = Vec::with_capacity(x.len() * y.len() * 2);
    for da in x {
        for db in y {
            for swapped in [false, true] {
                let r = match_descriptors(da, db, swapped, w, mode);
                out.push(if flipped { flip(r) } else { r });
            }
        }
    }
    out
}

/// Best candidate over alternatives and half alignments.
pub fn best_match(
    a: &[ShapeDescriptor],
    b: &[ShapeDescriptor],
    w: &SimilarityWeights,
    mode: &MatchMode,
) -> Option<MatchResult> {
    all_candidates(a, b, w, mode)
        .into_iter()
        .reduce(|best, r| if r.score > best.score { r } else { best })
}

pub fn shape_similarity(a: &[ShapeDescriptor], b: &[ShapeDescriptor], w: &SimilarityWeights, mode: &MatchMode) -> f64 {
    best_match(a, b, w, mode).map_or(0.0, |r| r.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axes::Sign;

    fn rec(sign: Sign, r: f64, theta: f64, l: f64) -> BranchRecord {
        BranchRecord {
            sign,
            r,
            theta,
            norm_length: l,
            is_reference: false,
            next: 0,
            prev: 0,
        }
    }

    #[test]
    fn similarity_formula() {
        let w = SimilarityWeights::default();
        let a = rec(Sign::Positive, 1.0, 0.5, 0.3);
        assert_eq!(branch_similarity(&a, &a, &w), 1.0);
        let b = BranchRecord { norm_length: 0.5, ..a };
        assert!((branch_similarity(&a, &b, &w) - (-0.5f64).exp()).abs() < 1e-15);
        let c = BranchRecord {
            sign: Sign::Negative,
            ..a
        };
        assert_eq!(branch_similarity(&a, &c, &w), 0.0);
        // angles wrap
        let d = BranchRecord { theta: 0.1, ..a };
        let e = BranchRecord {
            theta: std::f64::consts::TAU - 0.1,
            ..a
        };
        let f = BranchRecord { theta: 0.3, ..a };
        assert!((branch_similarity(&d, &e, &w) - branch_similarity(&d, &f, &w)).abs() < 1e-12);
    }

    #[test]
    fn identical_halves_pair_identically() {
        let h = vec![
            rec(Sign::Negative, 0.2, 0.0, 0.2),
            rec(Sign::Positive, 1.2, 0.7, 0.2),
            rec(Sign::Positive, 1.1, 1.5, 0.1),
        ];
        let c = match_half(&h, &h, &SimilarityWeights::default());
        assert_eq!(c.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert!(c.per_pair_scores.iter().all(|&s| s == 1.0));
        assert!(match_half(&h, &[], &SimilarityWeights::default()).pairs.is_empty());
    }

    #[test]
    fn flags_parse() {
        let f: SensitiveFlags = "t, r".parse().unwrap();
        assert!(f.translation && f.rotation && !f.scale);
        assert!("x".parse::<SensitiveFlags>().is_err());
    }
}
