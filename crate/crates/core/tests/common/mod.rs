#![allow(dead_code)]

use std::f64::consts::TAU;

use diskel::frame::BranchGeometry;
use diskel::matching::branch_similarity;
use diskel::shape_io::LoadOptions;
use diskel::{BinaryMask, BranchRecord, Cell, Extrinsic, GlobalFrame, Point, ShapeDescriptor, Sign, SimilarityWeights};
use rand::Rng;

/// Random but well-formed descriptor with the given half sizes (≥ 1 record in total).
pub fn random_descriptor<R: Rng>(rng: &mut R, sizes: [usize; 2], alternative_id: usize) -> ShapeDescriptor {
    let n = sizes[0] + sizes[1];
    assert!(n > 0);
    let mut lengths: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = lengths.iter().sum();
    lengths.iter_mut().for_each(|l| *l /= total);
    let mut halves: [Vec<BranchRecord>; 2] = [Vec::new(), Vec::new()];
    let mut k = 0;
    for h in 0..2 {
        let mut thetas: Vec<f64> = (0..sizes[h]).map(|_| rng.gen_range(0.0..TAU)).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        while thetas.len() < sizes[h] {
            thetas.push(thetas.last().map_or(0.0, |t| t + 1e-6));
        }
        for t in thetas {
            halves[h].push(BranchRecord {
                sign: if rng.gen_bool(0.5) {
                    Sign::Positive
                } else {
                    Sign::Negative
                },
                r: rng.gen_range(0.1..2.0),
                theta: t,
                norm_length: lengths[k],
                is_reference: false,
                next: (k + 1) % n,
                prev: (k + n - 1) % n,
            });
            k += 1;
        }
    }
    let frame = GlobalFrame {
        origin: Point::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)),
        origin_cell: Cell::new(0, 0),
        axes: [Point::new(1.0, 0.0), Point::new(-1.0, 0.0)],
        near: [Point::default(); 2],
        m0: rng.gen_range(-3.0..3.0),
        m1: rng.gen_range(-3.0..3.0),
        reference: [0, 0],
    };
    let d = ShapeDescriptor {
        alternative_id,
        halves,
        extrinsic: Extrinsic {
            center: frame.origin,
            total_axis_length: rng.gen_range(50.0..200.0),
            m0: frame.m0,
            m1: frame.m1,
            image_diagonal: 150.0,
            frame,
            branches: (0..n)
                .map(|_| BranchGeometry {
                    start: Point::default(),
                    disconnection: Point::default(),
                })
                .collect(),
        },
    };
    d.check().expect("generated descriptor is valid");
    d
}

/// Exhaustive best order-preserving partial matching value, summed in index
/// order of A exactly as a left-to-right accumulation from zero.
pub fn exhaustive_half(a: &[BranchRecord], b: &[BranchRecord], w: &SimilarityWeights) -> f64 {
    fn go(a: &[BranchRecord], b: &[BranchRecord], w: &SimilarityWeights, i: usize, j0: usize, acc: f64) -> f64 {
        if i == a.len() {
            return acc;
        }
        let mut best = go(a, b, w, i + 1, j0, acc);
        for j in j0..b.len() {
            let s = branch_similarity(&a[i], &b[j], w);
            if s > 0.0 {
                let v = go(
                    a,
                    b,
                    w,
                    i + 1,
                    j + 1,
                    acc + 0.5 * (a[i].norm_length + b[j].norm_length) * s,
                );
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
    go(a, b, w, 0, 0, 0.0)
}

/// Random star-shaped blob inside a `w × h` raster.
pub fn random_star_mask<R: Rng>(rng: &mut R, w: usize, h: usize) -> BinaryMask {
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (ax, ay) = (0.45 * w as f64, 0.45 * h as f64);
    let harmonics: Vec<(f64, f64, f64)> = (2..=4)
        .map(|k| (k as f64, rng.gen_range(0.0..0.12), rng.gen_range(0.0..TAU)))
        .collect();
    let inside = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64 + 0.5 - cx, (i / w) as f64 + 0.5 - cy);
            let t = y.atan2(x);
            let rho = 1.0 + harmonics.iter().map(|(k, a, p)| a * (k * t + p).cos()).sum::<f64>();
            (x / ax).powi(2) + (y / ay).powi(2) <= (rho * 0.95).powi(2)
        })
        .collect();
    BinaryMask::new(
        w,
        h,
        inside,
        LoadOptions {
            allow_largest_component: true,
            fill_holes: true,
        },
    )
    .expect("centre cell is inside")
}
