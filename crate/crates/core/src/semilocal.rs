//! Part-centred pose coordinates and articulation-sensitive scoring.

use serde::{Deserialize, Serialize};

use crate::axes::Sign;
use crate::frame::ShapeDescriptor;
use crate::matching::{all_candidates, MatchMode, MatchResult, SimilarityWeights};
use crate::{Error, Point, Result};

pub const DEFAULT_POSE_EPSILON: f64 = 4.0;
const SINGULAR_DET: f64 = 1e-9;

/// Protrusion disconnection `p0`, neighboring indentation starts `p1`, `p2`
/// and protrusion tip `p3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionQuad {
    pub p0: Point,
    pub p1: Point,
    pub p2: Point,
    pub p3: Point,
}

/// `p3 − p0 = a·(p1 − p0) + b·(p2 − p0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseCoord {
    pub a: f64,
    pub b: f64,
}

pub fn semilocal_coords(q: &SectionQuad) -> Result<PoseCoord> {
    let u = q.p1 - q.p0;
    let v = q.p2 - q.p0;
    let t = q.p3 - q.p0;
    let det = u.cross(v);
    // compare against the basis scale so the test is similarity-invariant
    let scale = u.norm() * v.norm();
    if !(det.abs() > SINGULAR_DET * scale.max(1.0)) {
        return Err(Error::SingularBasis(det));
    }
    Ok(PoseCoord {
        a: t.cross(v) / det,
        b: u.cross(t) / det,
    })
}

pub fn pose_similarity(x: &PoseCoord, y: &PoseCoord, epsilon: f64) -> f64 {
    let d2 = (x.a - y.a).powi(2) + (x.b - y.b).powi(2);
    1.0 / (1.0 + d2 / (epsilon * epsilon))
}

/// Quad for the record at flattened index `i`: its own disconnection and tip,
/// and the starts of the nearest negative records before and after it in the
/// descriptor's cyclic order.
pub fn section_quad(d: &ShapeDescriptor, i: usize) -> Result<SectionQuad> {
    let n = d.len();
    let find = |step: usize| {
        let mut k = i;
        for _ in 1..n {
            k = (k + step) % n;
            if d.record(k).sign == Sign::Negative {
                return Some(k);
            }
        }
        None
    };
    let (Some(prev), Some(next)) = (find(n - 1), find(1)) else {
        return Err(Error::MissingQuad(i));
    };
    if prev == next {
        return Err(Error::MissingQuad(i));
    }
    let g = &d.extrinsic.branches;
    Ok(SectionQuad {
        p0: g[i].disconnection,
        p1: g[prev].start,
        p2: g[next].start,
        p3: g[i].start,
    })
}

fn pose(d: &ShapeDescriptor, i: usize) -> Result<PoseCoord> {
    semilocal_coords(&section_quad(d, i)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedScore {
    pub score: f64,
    /// Flattened indices in A whose quad could not be formed.
    pub missing: Vec<usize>,
}

/// Rescore a correspondence with each matched positive pair's weight scaled
/// by its pose similarity. Weights are not renormalized, so the result never
/// exceeds the unrevised score and grows with `epsilon`.
pub fn articulated_similarity(
    a: &ShapeDescriptor,
    b: &ShapeDescriptor,
    m: &MatchResult,
    epsilon: f64,
) -> ArticulatedScore {
    let corr = &m.correspondence;
    let (mut ab, mut ba) = (0.0, 0.0);
    let mut missing = Vec::new();
    for (&(i, j), &s) in corr.pairs.iter().zip(&corr.per_pair_scores) {
        let mut mult = 1.0;
        if a.record(i).sign == Sign::Positive {
            match (pose(a, i), pose(b, j)) {
                (Ok(x), Ok(y)) => mult = pose_similarity(&x, &y, epsilon),
                _ => missing.push(i),
            }
        }
        ab += a.record(i).norm_length * s * mult;
        ba += b.record(j).norm_length * s * mult;
    }
    ArticulatedScore {
        score: ab.min(ba).clamp(0.0, 1.0) * m.penalty,
        missing,
    }
}

/// Best articulated score over alternatives and half alignments.
pub fn articulated_shape_similarity(
    a: &[ShapeDescriptor],
    b: &[ShapeDescriptor],
    w: &SimilarityWeights,
    mode: &MatchMode,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Invalid(format!("pose epsilon must be positive, got {epsilon}")));
    }
    Ok(all_candidates(a, b, w, mode)
        .iter()
        .map(|m| articulated_similarity(&a[m.alt_a], &b[m.alt_b], m, epsilon).score)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(p: [(f64, f64); 4]) -> SectionQuad {
        let q = |i: usize| Point::new(p[i].0, p[i].1);
        SectionQuad {
            p0: q(0),
            p1: q(1),
            p2: q(2),
            p3: q(3),
        }
    }

    #[test]
    fn unit_basis() {
        let c = semilocal_coords(&quad([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])).unwrap();
        assert_eq!((c.a, c.b), (1.0, 1.0));
        let c = semilocal_coords(&quad([(2.0, 1.0), (5.0, 1.0), (2.0, 4.0), (5.0, 1.0)])).unwrap();
        assert_eq!((c.a, c.b), (1.0, 0.0));
        assert!(matches!(
            semilocal_coords(&quad([(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (1.0, 0.0)])),
            Err(Error::SingularBasis(_))
        ));
    }

    #[test]
    fn soft_threshold() {
        let x = PoseCoord { a: 0.0, b: 0.0 };
        assert_eq!(pose_similarity(&x, &x, 4.0), 1.0);
        assert!((pose_similarity(&x, &PoseCoord { a: 3.0, b: 4.0 }, 5.0) - 0.5).abs() < 1e-15);
        assert!((pose_similarity(&x, &PoseCoord { a: 0.0, b: 2.0 }, 1.0) - 0.2).abs() < 1e-15);
    }
}
