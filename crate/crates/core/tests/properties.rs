mod common;

use std::f64::consts::TAU;

use diskel::axes::{detect_symmetry_points, dgrad_ds, trace_branches};
use diskel::deform::{fit_tps, procrustes_distance, procrustes_mean};
use diskel::frame::DescriptorSet;
use diskel::matching::{branch_similarity, match_half, shape_similarity};
use diskel::semilocal::semilocal_coords;
use diskel::shape_io::parse_pbm;
use diskel::surface::{solve_phi, CellClass, PhiSolver};
use diskel::{BinaryMask, LandmarkSet, MatchMode, PhiConfig, Point, SectionQuad, SimilarityWeights, TraceConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn transform(s: f64, t: f64, tx: f64, ty: f64) -> impl Fn(Point) -> Point {
    move |p| {
        Point::new(
            s * (t.cos() * p.x - t.sin() * p.y) + tx,
            s * (t.sin() * p.x + t.cos() * p.y) + ty,
        )
    }
}

fn points(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point::new(x, y)).collect())
}

fn well_spread(pts: &[Point]) -> bool {
    let set = LandmarkSet::new(pts.to_vec());
    set.check_non_collinear().is_ok()
        && pts
            .iter()
            .enumerate()
            .all(|(i, p)| pts[..i].iter().all(|q| p.dist(*q) > 2.0))
        && set.centroid_size() > 10.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_steps_respect_the_maximum_principle(seed in any::<u64>(), w in 5usize..40, h in 5usize..40) {
        let mask = common::random_star_mask(&mut rng(seed), w, h);
        let mut s = PhiSolver::new(&mask, 0.2).unwrap();
        let fw = s.field().width;
        for _ in 0..200 {
            let prev = s.field().values.clone();
            s.step();
            let f = s.field();
            for i in 0..prev.len() {
                if f.class[i] != CellClass::Interior {
                    prop_assert_eq!(f.values[i], prev[i]);
                    continue;
                }
                let nb = [prev[i], prev[i - 1], prev[i + 1], prev[i - fw], prev[i + fw]];
                let lo = nb.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = nb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(f.values[i] >= lo && f.values[i] <= hi);
                prop_assert!(f.values[i] >= prev[i]);
            }
        }
    }

    #[test]
    fn phi_field_mirrors_with_the_mask(seed in any::<u64>(), w in 5usize..30, h in 5usize..30) {
        let mask = common::random_star_mask(&mut rng(seed), w, h);
        let mirrored = mask.mirror_x();
        let (mut a, mut b) = (PhiSolver::new(&mask, 0.2).unwrap(), PhiSolver::new(&mirrored, 0.2).unwrap());
        for _ in 0..100 {
            a.step();
            b.step();
        }
        let (fa, fb) = (a.field(), b.field());
        let fw = fa.width;
        for y in 0..fa.height {
            for x in 0..fw {
                prop_assert_eq!(fa.values[y * fw + x], fb.values[y * fw + fw - 1 - x]);
            }
        }
    }

    #[test]
    fn branch_similarity_is_bounded_and_symmetric(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = common::random_descriptor(&mut r, [3, 3], 0);
        let b = common::random_descriptor(&mut r, [3, 3], 0);
        let w = SimilarityWeights::default();
        for x in a.halves.iter().flatten() {
            prop_assert_eq!(branch_similarity(x, x, &w), 1.0);
            for y in b.halves.iter().flatten() {
                let s = branch_similarity(x, y, &w);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, branch_similarity(y, x, &w));
            }
        }
    }

    #[test]
    fn match_half_equals_exhaustive_search(seed in any::<u64>(), na in 0usize..6, nb in 0usize..6) {
        let mut r = rng(seed);
        let a = common::random_descriptor(&mut r, [na, 1], 0);
        let b = common::random_descriptor(&mut r, [nb, 1], 0);
        let w = SimilarityWeights::default();
        let c = match_half(&a.halves[0], &b.halves[0], &w);
        prop_assert_eq!(c.score, common::exhaustive_half(&a.halves[0], &b.halves[0], &w));
        for p in c.pairs.windows(2) {
            prop_assert!(p[0].0 < p[1].0 && p[0].1 < p[1].1);
        }
    }

    #[test]
    fn shape_similarity_is_symmetric_and_bounded(seed in any::<u64>(), sa in (0usize..5, 1usize..5), sb in (0usize..5, 1usize..5)) {
        let mut r = rng(seed);
        let a = vec![common::random_descriptor(&mut r, [sa.0, sa.1], 0)];
        let b = vec![common::random_descriptor(&mut r, [sb.0, sb.1], 0), common::random_descriptor(&mut r, [sb.1, sb.0], 1)];
        let w = SimilarityWeights::default();
        let ab = shape_similarity(&a, &b, &w, &MatchMode::Invariant);
        prop_assert_eq!(ab, shape_similarity(&b, &a, &w, &MatchMode::Invariant));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((shape_similarity(&a, &a, &w, &MatchMode::Invariant) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_coordinates_ignore_similarity_transforms(
        pts in points(4..=4),
        s in 0.1..10.0f64, t in 0.0..TAU, tx in -100.0..100.0f64, ty in -100.0..100.0f64,
    ) {
        let (u, v) = (pts[1] - pts[0], pts[2] - pts[0]);
        prop_assume!(u.cross(v).abs() > 0.2 * u.norm() * v.norm() && u.norm() > 1.0 && v.norm() > 1.0);
        let f = transform(s, t, tx, ty);
        let q = SectionQuad { p0: pts[0], p1: pts[1], p2: pts[2], p3: pts[3] };
        let m = SectionQuad { p0: f(pts[0]), p1: f(pts[1]), p2: f(pts[2]), p3: f(pts[3]) };
        let (a, b) = (semilocal_coords(&q).unwrap(), semilocal_coords(&m).unwrap());
        prop_assert!((a.a - b.a).abs() <= 1e-9 && (a.b - b.b).abs() <= 1e-9);
    }

    #[test]
    fn tps_interpolates_and_meets_side_conditions(src in points(3..=12), seed in any::<u64>()) {
        prop_assume!(well_spread(&src));
        use rand::Rng;
        let mut r = rng(seed);
        let dst: Vec<Point> = src.iter().map(|p| Point::new(p.x + r.gen_range(-5.0..5.0), p.y + r.gen_range(-5.0..5.0))).collect();
        let t = fit_tps(&LandmarkSet::new(src.clone()), &LandmarkSet::new(dst.clone())).unwrap();
        for (p, q) in src.iter().zip(&dst) {
            prop_assert!(t.apply_point(*p).dist(*q) <= 1e-6);
        }
        for c in t.side_conditions() {
            prop_assert!(c.norm() <= 1e-9);
        }
    }

    #[test]
    fn procrustes_ignores_similarity_transforms(
        x in points(4..=10), y in points(4..=10),
        s in 0.1..10.0f64, t in 0.0..TAU, tx in -100.0..100.0f64, ty in -100.0..100.0f64,
    ) {
        let n = x.len().min(y.len());
        prop_assume!(well_spread(&x[..n]) && well_spread(&y[..n]));
        let (x, y) = (LandmarkSet::new(x[..n].to_vec()), LandmarkSet::new(y[..n].to_vec()));
        let f = transform(s, t, tx, ty);
        let moved = LandmarkSet::new(y.points.iter().map(|&p| f(p)).collect());
        prop_assert!((procrustes_distance(&x, &y) - procrustes_distance(&x, &moved)).abs() <= 1e-9);
        prop_assert!(procrustes_distance(&y, &moved) <= 1e-6);
        let (m1, m2) = (procrustes_mean(&[x.clone(), y]).unwrap(), procrustes_mean(&[x, moved]).unwrap());
        prop_assert!(procrustes_distance(&m1, &m2) <= 1e-6);
    }

    #[test]
    fn descriptor_json_round_trips(seed in any::<u64>(), sizes in (0usize..6, 1usize..6)) {
        let mut r = rng(seed);
        let set = DescriptorSet::new(
            vec![common::random_descriptor(&mut r, [sizes.0, sizes.1], 0), common::random_descriptor(&mut r, [sizes.1, sizes.0], 1)],
            Some("shape.pbm".into()),
        );
        prop_assert_eq!(DescriptorSet::from_json(&set.to_json().unwrap()).unwrap(), set);
    }

    #[test]
    fn pbm_round_trips(seed in any::<u64>(), w in 3usize..40, h in 3usize..40) {
        let mask = common::random_star_mask(&mut rng(seed), w, h);
        let (uw, uh, bits) = mask.unpadded();
        for bytes in [mask.to_pbm_ascii().into_bytes(), mask.to_pbm_binary()] {
            let (pw, ph, parsed) = parse_pbm(&bytes).unwrap();
            prop_assert_eq!((pw, ph), (uw, uh));
            prop_assert_eq!(&parsed, &bits);
        }
    }

    #[test]
    fn mirror_symmetric_masks_give_mirrored_branches(seed in any::<u64>(), w in 12usize..48, h in 12usize..48) {
        let half = common::random_star_mask(&mut rng(seed), w, h);
        let (uw, uh, bits) = half.unpadded();
        let mask = BinaryMask::from_fn(uw, uh, |x, y| bits[y * uw + x] || bits[y * uw + uw - 1 - x]).unwrap();
        let sol = solve_phi(&mask, &PhiConfig::default());
        prop_assume!(sol.is_ok());
        let sol = sol.unwrap();
        let flux = dgrad_ds(&sol.field);
        let points = detect_symmetry_points(&flux, &sol.field);
        let Ok(branches) = trace_branches(&points, &sol.field, &sol.extrema, &TraceConfig::default()) else {
            return Ok(());
        };
        let mut seen = std::collections::HashSet::new();
        for b in &branches {
            for c in &b.points {
                prop_assert!(points.iter().any(|p| p.cell == *c && p.sign == b.sign));
                prop_assert!(seen.insert((b.sign, *c)), "{:?} shared by two branches", c);
            }
        }
        let fw = sol.field.width as i32;
        for b in &branches {
            let d = b.disconnection;
            let mirrored = branches.iter().any(|o| {
                o.sign == b.sign && (o.disconnection.x - (fw - 1 - d.x)).abs() <= 1 && (o.disconnection.y - d.y).abs() <= 1
            });
            prop_assert!(mirrored, "{:?} branch ending at {:?} has no mirror image", b.sign, d);
        }
    }
}
