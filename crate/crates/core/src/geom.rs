use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Integer grid coordinate. `x` is the column, `y` the row (pointing down).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn is_8_adjacent(self, other: Cell) -> bool {
        self != other && (self.x - other.x).abs() <= 1 && (self.y - other.y).abs() <= 1
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn to_point(self) -> Point {
        Point::new(self.x as f64, self.y as f64)
    }
}

/// Real-valued plane coordinate in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Angle in the visual counter-clockwise sense (image y points down).
    pub fn screen_angle(self) -> f64 {
        (-self.y).atan2(self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

pub(crate) const N8: [(i32, i32); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

pub(crate) const N4: [(i32, i32); 4] = [(1, 0), (0, -1), (-1, 0), (0, 1)];

/// Wrap an angle to [0, 2π).
pub(crate) fn wrap_2pi(a: f64) -> f64 {
    let t = a.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Wrap an angle difference to (−π, π].
pub(crate) fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = a.rem_euclid(TAU);
    if t > PI {
        t -= TAU;
    }
    t
}

/// Exact squared Euclidean distance transform (Felzenszwalb–Huttenlocher).
/// `seed[i]` marks cells at distance zero.
pub(crate) fn sq_distance_transform(width: usize, height: usize, seed: &[bool]) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut d: Vec<f64> = seed.iter().map(|&s| if s { 0.0 } else { INF }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut pass = |f: &[f64], len: usize, out: &mut [f64]| {
        let sect =
            |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..len {
            let mut s = sect(q, v[k]);
            while s <= z[k] {
                k -= 1;
                s = sect(q, v[k]);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        k = 0;
        for (q, o) in out.iter_mut().enumerate().take(len) {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let dq = q as f64 - p as f64;
            *o = dq * dq + f[p];
        }
    };
    for x in 0..width {
        for y in 0..height {
            f[y] = d[y * width + x];
        }
        pass(&f, height, &mut out);
        for y in 0..height {
            d[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        f[..width].copy_from_slice(&d[y * width..(y + 1) * width]);
        pass(&f, width, &mut out);
        d[y * width..(y + 1) * width].copy_from_slice(&out[..width]);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (13, 9);
        let seed: Vec<bool> = (0..w * h).map(|i| (i * 7919) % 11 == 0).collect();
        let d = sq_distance_transform(w, h, &seed);
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::INFINITY;
                for yy in 0..h {
                    for xx in 0..w {
                        if seed[yy * w + xx] {
                            let dx = x as f64 - xx as f64;
                            let dy = y as f64 - yy as f64;
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                }
                assert_eq!(d[y * w + x], best, "at {x},{y}");
            }
        }
    }

    #[test]
    fn angle_wraps() {
        use std::f64::consts::PI;
        assert_eq!(wrap_pi(PI), PI);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_2pi(-0.0), 0.0);
        assert!((wrap_2pi(-PI / 2.0) - 1.5 * PI).abs() < 1e-12);
    }
}
