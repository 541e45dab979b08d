//! Procrustes averaging and thin-plate-spline warping of landmark sets.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::frame::ShapeDescriptor;
use crate::matching::MatchResult;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Self {
        LandmarkSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len().max(1) as f64;
        self.points.iter().fold(Point::default(), |a, &p| a + p) * (1.0 / n)
    }

    /// Root of the summed squared distances to the centroid.
    pub fn centroid_size(&self) -> f64 {
        let c = self.centroid();
        self.points.iter().map(|&p| (p - c).dot(p - c)).sum::<f64>().sqrt()
    }

    /// Centred at the origin with unit centroid size.
    pub fn normalized(&self) -> LandmarkSet {
        let c = self.centroid();
        let s = self.centroid_size();
        LandmarkSet::new(self.points.iter().map(|&p| (p - c) * (1.0 / s)).collect())
    }

    /// Smallest singular value of the centred coordinates relative to the largest.
    fn flatness(&self) -> f64 {
        let c = self.centroid();
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &p in &self.points {
            let d = p - c;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let tr = sxx + syy;
        let disc = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
        let (hi, lo) = (0.5 * (tr + disc), 0.5 * (tr - disc));
        if hi <= 0.0 {
            0.0
        } else {
            (lo.max(0.0) / hi).sqrt()
        }
    }

    pub fn check_non_collinear(&self) -> Result<()> {
        if self.points.len() < 3 || self.flatness() < 1e-9 {
            return Err(Error::DegenerateSet(format!(
                "{} landmarks do not span the plane",
                self.points.len()
            )));
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{}: {other:?}", path.display())),
        })?;
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::Parse(format!("{}: expected header x,y", path.display())));
        }
        let mut points = Vec::new();
        for row in rdr.deserialize::<(f64, f64)>() {
            let (x, y) = row?;
            points.push(Point::new(x, y));
        }
        Ok(LandmarkSet::new(points))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{other:?}")),
        })?;
        w.write_record(["x", "y"])?;
        for p in &self.points {
            w.serialize((p.x, p.y))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Similarity `z·x` (complex multiplication) best mapping centred `x` onto
/// centred `y` in least squares.
fn align_factor(x: &[Point], y: &[Point]) -> (f64, f64) {
    let (mut re, mut im, mut nn) = (0.0, 0.0, 0.0);
    for (p, q) in x.iter().zip(y) {
        // conj(p)·q
        re += p.x * q.x + p.y * q.y;
        im += p.x * q.y - p.y * q.x;
        nn += p.dot(*p);
    }
    (re / nn, im / nn)
}

fn cmul(z: (f64, f64), p: Point) -> Point {
    Point::new(z.0 * p.x - z.1 * p.y, z.0 * p.y + z.1 * p.x)
}

/// Optimal similarity alignment of `x` onto `y`, both taken as given.
pub fn align_similarity(x: &LandmarkSet, y: &LandmarkSet) -> LandmarkSet {
    let (cx, cy) = (x.centroid(), y.centroid());
    let xs: Vec<Point> = x.points.iter().map(|&p| p - cx).collect();
    let ys: Vec<Point> = y.points.iter().map(|&p| p - cy).collect();
    let z = align_factor(&xs, &ys);
    LandmarkSet::new(xs.iter().map(|&p| cmul(z, p) + cy).collect())
}

/// Residual after similarity-aligning `x` onto `y`, relative to the size of `y`.
pub fn procrustes_distance(x: &LandmarkSet, y: &LandmarkSet) -> f64 {
    let xn = x.normalized();
    let yn = y.normalized();
    let a = align_similarity(&xn, &yn);
    a.points
        .iter()
        .zip(&yn.points)
        .map(|(p, q)| p.dist(*q).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Generalized Procrustes mean, centred with unit centroid size.
pub fn procrustes_mean(sets: &[LandmarkSet]) -> Result<LandmarkSet> {
    if sets.len() < 2 {
        return Err(Error::DegenerateSet(format!(
            "need at least 2 sets, got {}",
            sets.len()
        )));
    }
    let n = sets[0].len();
    if sets.iter().any(|s| s.len() != n) {
        return Err(Error::DegenerateSet("landmark sets differ in size".into()));
    }
    for s in sets {
        s.check_non_collinear()?;
    }
    let shapes: Vec<LandmarkSet> = sets.iter().map(LandmarkSet::normalized).collect();
    let mut mean = shapes[0].clone();
    for _ in 0..10_000 {
        let mut acc = vec![Point::default(); n];
        for s in &shapes {
            let z = align_factor(&s.points, &mean.points);
            for (a, &p) in acc.iter_mut().zip(&s.points) {
                *a = *a + cmul(z, p);
            }
        }
        let mut next = LandmarkSet::new(acc).normalized();
        // hold the mean's orientation so only its shape is iterated
        let z = align_factor(&next.points, &mean.points);
        let m = z.0.hypot(z.1);
        next = LandmarkSet::new(next.points.iter().map(|&p| cmul((z.0 / m, z.1 / m), p)).collect());
        let change = next
            .points
            .iter()
            .zip(&mean.points)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max);
        mean = next;
        if change < 1e-12 {
            break;
        }
    }
    Ok(mean)
}

#[inline]
fn kernel(r2: f64) -> f64 {
    // r² log r written on r² to skip the square root
    if r2 > 0.0 {
        0.5 * r2 * r2.ln()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsTransform {
    /// Rows give x' and y' as `c + a·x + b·y`, stored `[c, a, b]`.
    pub affine: [[f64; 3]; 2],
    pub kernel_weights: Vec<Point>,
    pub sources: Vec<Point>,
}

impl TpsTransform {
    pub fn identity() -> Self {
        TpsTransform {
            affine: [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            kernel_weights: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let [ax, ay] = self.affine;
        let mut out = Point::new(ax[0] + ax[1] * p.x + ax[2] * p.y, ay[0] + ay[1] * p.x + ay[2] * p.y);
        for (w, s) in self.kernel_weights.iter().zip(&self.sources) {
            let d = p - *s;
            out = out + *w * kernel(d.dot(d));
        }
        out
    }

    /// (Σw, Σw·x, Σw·y) per output component; all vanish for a valid fit.
    pub fn side_conditions(&self) -> [Point; 3] {
        let mut s = [Point::default(); 3];
        for (w, p) in self.kernel_weights.iter().zip(&self.sources) {
            s[0] = s[0] + *w;
            s[1] = s[1] + *w * p.x;
            s[2] = s[2] + *w * p.y;
        }
        s
    }
}

/// Interpolating thin-plate spline taking `source` onto `target`.
pub fn fit_tps(source: &LandmarkSet, target: &LandmarkSet) -> Result<TpsTransform> {
    let n = source.len();
    if target.len() != n {
        return Err(Error::SingularSystem(format!(
            "{n} sources but {} targets",
            target.len()
        )));
    }
    source
        .check_non_collinear()
        .map_err(|e| Error::SingularSystem(e.to_string()))?;
    for i in 0..n {
        for j in 0..i {
            if source.points[i] == source.points[j] {
                return Err(Error::SingularSystem(format!("duplicate source landmark {i} = {j}")));
            }
        }
    }
    // solve in centred, unit-scaled coordinates for conditioning; the r² log c
    // term this adds to the kernel is affine under the side conditions
    let c = source.centroid();
    let scale = (source.centroid_size() / (n as f64).sqrt()).max(f64::MIN_POSITIVE);
    let q: Vec<Point> = source.points.iter().map(|&p| (p - c) * (1.0 / scale)).collect();
    let m = n + 3;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            let d = q[i] - q[j];
            a[(i, j)] = kernel(d.dot(d));
        }
        a[(i, n)] = 1.0;
        a[(i, n + 1)] = q[i].x;
        a[(i, n + 2)] = q[i].y;
        a[(n, i)] = 1.0;
        a[(n + 1, i)] = q[i].x;
        a[(n + 2, i)] = q[i].y;
    }
    let lu = a.lu();
    let mut sol = [DVector::zeros(m), DVector::zeros(m)];
    for (k, s) in sol.iter_mut().enumerate() {
        let rhs = DVector::from_fn(m, |i, _| {
            if i < n {
                if k == 0 {
                    target.points[i].x
                } else {
                    target.points[i].y
                }
            } else {
                0.0
            }
        });
        *s = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("interpolation system is singular".into()))?;
    }
    // back to original coordinates: U(|p−s|/h) = U(|p−s|)/h² − (ln h/h²)|p−s|²,
    // and the second part folds into the affine term
    let h2 = scale * scale;
    let ln_h = scale.ln();
    let mut affine = [[0.0; 3]; 2];
    let mut weights = vec![Point::default(); n];
    for k in 0..2 {
        let s = &sol[k];
        let w: Vec<f64> = (0..n).map(|i| s[i]).collect();
        // affine part in normalized coords: s[n] + s[n+1]·u + s[n+2]·v, u = (x−cx)/h
        let (a0, au, av) = (s[n], s[n + 1], s[n + 2]);
        let mut c0 = a0 - (au * c.x + av * c.y) / scale;
        let mut cx = au / scale;
        let mut cy = av / scale;
        // −(ln h/h²)·Σ w_i |p − s_i|² = −(ln h/h²)·(Σ w_i |s_i|² − 2 p·Σ w_i s_i)
        let mut sw_s2 = 0.0;
        let (mut swx, mut swy) = (0.0, 0.0);
        for i in 0..n {
            let p = source.points[i];
            sw_s2 += w[i] * p.dot(p);
            swx += w[i] * p.x;
            swy += w[i] * p.y;
        }
        let f = ln_h / h2;
        c0 -= f * sw_s2;
        cx += 2.0 * f * swx;
        cy += 2.0 * f * swy;
        affine[k] = [c0, cx, cy];
        for i in 0..n {
            if k == 0 {
                weights[i].x = w[i] / h2;
            } else {
                weights[i].y = w[i] / h2;
            }
        }
    }
    Ok(TpsTransform {
        affine,
        kernel_weights: weights,
        sources: source.points.clone(),
    })
}

pub fn apply_tps(t: &TpsTransform, points: &[Point]) -> Vec<Point> {
    points.iter().map(|&p| t.apply_point(p)).collect()
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let directed = |x: &[Point], y: &[Point]| {
        x.iter()
            .map(|p| y.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Corresponding landmark sets (centre first, then disconnection points) for
/// a group of shapes matched against `reference`. Only reference branches
/// matched in every shape and not listed in `exclude` are kept.
pub fn group_landmarks(
    reference: &ShapeDescriptor,
    others: &[(&ShapeDescriptor, &MatchResult)],
    exclude: &[usize],
) -> Result<Vec<LandmarkSet>> {
    let keep: Vec<usize> = (0..reference.len())
        .filter(|i| !exclude.contains(i))
        .filter(|&i| {
            others
                .iter()
                .all(|(_, m)| m.correspondence.pairs.iter().any(|p| p.0 == i))
        })
        .collect();
    let mut out = vec![LandmarkSet::new(
        std::iter::once(reference.extrinsic.center)
            .chain(keep.iter().map(|&i| reference.extrinsic.branches[i].disconnection))
            .collect(),
    )];
    for (d, m) in others {
        let pts = std::iter::once(d.extrinsic.center)
            .chain(keep.iter().map(|&i| {
                let j = m
                    .correspondence
                    .pairs
                    .iter()
                    .find(|p| p.0 == i)
                    .expect("kept pairs exist")
                    .1;
                d.extrinsic.branches[j].disconnection
            }))
            .collect();
        out.push(LandmarkSet::new(pts));
    }
    for s in &out {
        s.check_non_collinear()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> LandmarkSet {
        LandmarkSet::new(vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(1.0, 3.0),
            Point::new(3.0, 5.0),
        ])
    }

    #[test]
    fn identity_fit() {
        let t = fit_tps(&tri(), &tri()).unwrap();
        assert!(t.kernel_weights.iter().all(|w| w.norm() < 1e-9));
        assert!((t.affine[0][1] - 1.0).abs() < 1e-9 && (t.affine[1][2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn translation_fit() {
        let moved = LandmarkSet::new(tri().points.iter().map(|&p| p + Point::new(5.0, -3.0)).collect());
        let t = fit_tps(&tri(), &moved).unwrap();
        assert!(t.kernel_weights.iter().all(|w| w.norm() < 1e-9));
        assert!((t.affine[0][0] - 5.0).abs() < 1e-9 && (t.affine[1][0] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_sources_rejected() {
        let mut s = tri();
        s.points.push(s.points[1]);
        let t = LandmarkSet::new(s.points.clone());
        assert!(matches!(fit_tps(&s, &t), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn collinear_rejected() {
        let line = LandmarkSet::new((0..4).map(|k| Point::new(k as f64, 2.0 * k as f64)).collect());
        assert!(matches!(
            procrustes_mean(&[line.clone(), line]),
            Err(Error::DegenerateSet(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.csv");
        tri().write_csv(&p).unwrap();
        assert_eq!(LandmarkSet::read_csv(&p).unwrap(), tri());
    }
}
