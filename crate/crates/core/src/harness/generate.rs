//! Deterministic synthetic shapes built from a few primitives.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::shape_io::{BinaryMask, LoadOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prototype {
    Blob,
    Hand,
    Dogbone,
    Tripod,
    Rect,
}

impl Prototype {
    pub const ALL: [Prototype; 5] = [
        Prototype::Blob,
        Prototype::Hand,
        Prototype::Dogbone,
        Prototype::Tripod,
        Prototype::Rect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Prototype::Blob => "blob",
            Prototype::Hand => "hand",
            Prototype::Dogbone => "dogbone",
            Prototype::Tripod => "tripod",
            Prototype::Rect => "rect",
        }
    }
}

impl FromStr for Prototype {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Prototype::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown prototype {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub prototype: Prototype,
    /// Radians, counter-clockwise as displayed.
    pub rotation: f64,
    pub scale: f64,
    /// Bend of the designated limb about its base joint, radians.
    pub articulation: f64,
    /// Boundary perturbation amplitude in prototype units.
    pub noise: f64,
}

impl ShapeSpec {
    pub fn new(prototype: Prototype) -> Self {
        ShapeSpec {
            prototype,
            rotation: 0.0,
            scale: 1.0,
            articulation: 0.0,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Prim {
    Ellipse { c: Point, a: f64, b: f64 },
    Capsule { a: Point, b: Point, r: f64 },
    Box { c: Point, hw: f64, hh: f64 },
}

impl Prim {
    /// Signed distance (exact for capsules and boxes, first-order for ellipses).
    fn sd(&self, p: Point) -> f64 {
        match *self {
            Prim::Ellipse { c, a, b } => {
                let d = p - c;
                let k = ((d.x / a).powi(2) + (d.y / b).powi(2)).sqrt();
                (k - 1.0) * a.min(b)
            }
            Prim::Capsule { a, b, r } => {
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
                p.dist(a + ab * t) - r
            }
            Prim::Box { c, hw, hh } => {
                let d = p - c;
                let qx = d.x.abs() - hw;
                let qy = d.y.abs() - hh;
                Point::new(qx.max(0.0), qy.max(0.0)).norm() + qx.max(qy).min(0.0)
            }
        }
    }

    fn reach(&self) -> f64 {
        match *self {
            Prim::Ellipse { c, a, b } => c.norm() + a.max(b),
            Prim::Capsule { a, b, r } => a.norm().max(b.norm()) + r,
            Prim::Box { c, hw, hh } => c.norm() + hw.hypot(hh),
        }
    }
}

/// Direction with screen angle `a` (y axis pointing down).
fn dir(a: f64) -> Point {
    Point::new(a.cos(), -a.sin())
}

fn limb(base: Point, angle: f64, len: f64, r: f64) -> Prim {
    Prim::Capsule {
        a: base,
        b: base + dir(angle) * len,
        r,
    }
}

fn rotate_about(p: Point, pivot: Point, a: f64) -> Point {
    let d = p - pivot;
    // screen-CCW rotation with y down
    let (s, c) = a.sin_cos();
    pivot + Point::new(c * d.x + s * d.y, -s * d.x + c * d.y)
}

fn primitives(proto: Prototype, bend: f64) -> Vec<Prim> {
    let up = PI / 2.0;
    match proto {
        Prototype::Hand => {
            let mut v = vec![Prim::Ellipse {
                c: Point::new(0.0, 0.0),
                a: 25.0,
                b: 32.0,
            }];
            for (k, (len, r)) in [(36.0, 6.0), (44.0, 6.5), (42.0, 6.5), (34.0, 6.0)]
                .into_iter()
                .enumerate()
            {
                let a = up + 0.57 - 0.38 * k as f64;
                let base = dir(a) * 24.0;
                v.push(limb(base, a, len, r));
            }
            // thumb, the articulated limb
            let base = Point::new(-22.0, 6.0);
            v.push(limb(base, up + 1.3 + bend, 30.0, 7.0));
            v
        }
        Prototype::Tripod => {
            let mut v = vec![Prim::Ellipse {
                c: Point::new(0.0, 0.0),
                a: 15.0,
                b: 15.0,
            }];
            for k in 0..3 {
                let a = up + 2.0 * PI * k as f64 / 3.0 + if k == 0 { bend } else { 0.0 };
                v.push(limb(dir(a) * 10.0, a, 38.0, 7.0));
            }
            v
        }
        Prototype::Dogbone => {
            let left = Point::new(-40.0, 0.0);
            let right = rotate_about(Point::new(40.0, 0.0), Point::new(0.0, 0.0), bend);
            vec![
                Prim::Ellipse {
                    c: left,
                    a: 20.0,
                    b: 20.0,
                },
                Prim::Ellipse {
                    c: right,
                    a: 20.0,
                    b: 20.0,
                },
                Prim::Capsule {
                    a: left,
                    b: Point::new(0.0, 0.0),
                    r: 4.0,
                },
                Prim::Capsule {
                    a: Point::new(0.0, 0.0),
                    b: right,
                    r: 4.0,
                },
            ]
        }
        Prototype::Blob => {
            let lobe = rotate_about(Point::new(30.0, -16.0), Point::new(0.0, 0.0), bend);
            vec![
                Prim::Ellipse {
                    c: Point::new(0.0, 0.0),
                    a: 40.0,
                    b: 24.0,
                },
                Prim::Ellipse {
                    c: lobe,
                    a: 15.0,
                    b: 15.0,
                },
                Prim::Ellipse {
                    c: Point::new(-26.0, 14.0),
                    a: 13.0,
                    b: 13.0,
                },
            ]
        }
        Prototype::Rect => vec![Prim::Box {
            c: Point::new(0.0, 0.0),
            hw: 34.0,
            hh: 15.0,
        }],
    }
}

/// Smooth random boundary perturbation in prototype units.
struct Noise {
    waves: Vec<(Point, f64, f64)>,
}

impl Noise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..6)
            .map(|_| {
                let a = rng.gen_range(0.0..2.0 * PI);
                let wavelength = rng.gen_range(14.0..40.0);
                let k = 2.0 * PI / wavelength;
                (dir(a) * k, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.5..1.0))
            })
            .collect();
        Noise { waves }
    }

    fn at(&self, p: Point) -> f64 {
        let total: f64 = self.waves.iter().map(|w| w.2).sum();
        self.waves
            .iter()
            .map(|&(k, ph, c)| c * (k.dot(p) + ph).sin())
            .sum::<f64>()
            / total
    }
}

/// Rasterize a prototype. Same spec and seed always give the same mask.
pub fn generate_shape(spec: &ShapeSpec, seed: u64) -> Result<BinaryMask> {
    if !(spec.scale > 0.0) || !spec.rotation.is_finite() || !spec.articulation.is_finite() {
        return Err(Error::Invalid(format!("bad shape spec {spec:?}")));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::Invalid("noise amplitude must be non-negative".into()));
    }
    let prims = primitives(spec.prototype, spec.articulation);
    let noise = Noise::new(seed);
    let reach = prims.iter().map(Prim::reach).fold(0.0, f64::max) + spec.noise;
    let half = (reach * spec.scale).ceil() + 2.0;
    let n = (2.0 * half) as usize;
    let inside = (0..n * n)
        .map(|i| {
            let px = Point::new((i % n) as f64 + 0.5 - half, (i / n) as f64 + 0.5 - half);
            let local = rotate_about(px, Point::default(), -spec.rotation) * (1.0 / spec.scale);
            let sd = prims.iter().map(|p| p.sd(local)).fold(f64::INFINITY, f64::min);
            sd < spec.noise * noise.at(local)
        })
        .collect();
    let mask = BinaryMask::new(
        n,
        n,
        inside,
        LoadOptions {
            allow_largest_component: true,
            fill_holes: true,
        },
    )?;
    Ok(crop(&mask))
}

/// Trim empty rows and columns down to the one-cell margin.
fn crop(mask: &BinaryMask) -> BinaryMask {
    let (w, h, r) = mask.unpadded();
    let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
    for y in 0..h {
        for x in 0..w {
            if r[y * w + x] {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
    }
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    BinaryMask::from_fn(cw, ch, |x, y| r[(y + y0) * w + x + x0]).expect("crop keeps a valid mask")
}

/// The variant specs of the synthetic retrieval set: for each prototype, an
/// upright copy and three rotated, rescaled and articulated ones.
pub fn database_specs(variants: usize) -> Vec<(String, ShapeSpec)> {
    const VARIANTS: [(f64, f64, f64); 4] = [
        (0.0, 1.0, 0.0),
        (90.0, 1.0, 0.15),
        (-35.0, 0.8, -0.2),
        (150.0, 1.25, 0.25),
    ];
    let mut out = Vec::new();
    for p in Prototype::ALL {
        for (k, &(deg, scale, art)) in VARIANTS.iter().cycle().take(variants).enumerate() {
            let spec = ShapeSpec {
                prototype: p,
                rotation: deg.to_radians() + 0.1 * (k / VARIANTS.len()) as f64,
                scale,
                articulation: art,
                noise: 0.8,
            };
            out.push((format!("{}-{k}", p.name()), spec));
        }
    }
    out
}
