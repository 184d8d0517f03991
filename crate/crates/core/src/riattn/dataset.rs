//! Synthetic two-wing clouds: a left half (wing plus half a fuselage strip) and its copy
//! under the half-turn about `z`, so every point has a locally congruent partner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Mat3, PointCloud, Rotation3, Vec3};
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Half-turn about `z`, `(x, y, z) -> (-x, -y, z)`, built exactly.
pub fn mirror_rotation() -> Rotation3 {
    Rotation3::new(Mat3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0))).expect("diagonal half-turn is a rotation")
}

#[derive(Debug, Clone)]
pub struct WingtipCloud {
    pub cloud: PointCloud,
    /// [`LEFT`] or [`RIGHT`] per point.
    pub labels: Vec<usize>,
}

impl WingtipCloud {
    /// Index of the mirrored partner of point `i` (left and right halves share an order).
    pub fn partner(&self, i: usize) -> usize {
        let half = self.labels.len() / 2;
        if i < half {
            i + half
        } else {
            i - half
        }
    }
}

#[derive(Debug, Clone)]
pub struct WingtipDataset {
    pub clouds: Vec<WingtipCloud>,
    pub mirror: Rotation3,
}

struct Shape {
    fuselage_half_width: f64,
    fuselage_length: f64,
    fuselage_height: f64,
    span: f64,
    chord: f64,
    sweep: f64,
    dihedral: f64,
    camber: f64,
}

impl Shape {
    fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            fuselage_half_width: rng.random_range(0.06..0.1),
            fuselage_length: rng.random_range(1.0..1.4),
            fuselage_height: rng.random_range(0.05..0.1),
            span: rng.random_range(0.8..1.2),
            chord: rng.random_range(0.3..0.5),
            sweep: rng.random_range(0.0..0.4),
            dihedral: rng.random_range(0.0..0.15),
            camber: rng.random_range(0.02..0.06),
        }
    }

    fn fuselage_height(&self, x: f64) -> f64 {
        let t = x / self.fuselage_half_width;
        self.fuselage_height * (1.0 - t * t)
    }

    fn chord_at(&self, s: f64) -> f64 {
        self.chord * (1.0 - 0.4 * s)
    }

    /// Wing height field over the left half-plane.
    fn wing_height(&self, x: f64, y: f64) -> f64 {
        let s = (-x - self.fuselage_half_width) / self.span;
        let c = self.chord_at(s);
        let t = (y + self.sweep * s) / (0.5 * c);
        self.dihedral * s * self.span + self.camber * c * (1.0 - t * t)
    }

    fn wing_point(&self, s: f64, t: f64) -> Vec3 {
        let x = -self.fuselage_half_width - self.span * s;
        let y = -self.sweep * s + 0.5 * self.chord_at(s) * t;
        Vec3::new(x, y, self.wing_height(x, y))
    }
}

fn height_normal(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> Vec3 {
    let h = 1e-6;
    let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
    let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
    Vec3::new(-fx, -fy, 1.0).normalize()
}

/// `n_clouds` labelled clouds of `points_per_cloud` points each. An eighth of each half
/// lies on the fuselage strip. Positions (not normals) get isotropic Gaussian noise.
pub fn make_wingtip_dataset(n_clouds: usize, points_per_cloud: usize, noise_sigma: f64, seed: u64) -> Result<WingtipDataset> {
    if points_per_cloud < 32 || !points_per_cloud.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "points per cloud must be even and at least 32, got {points_per_cloud}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid noise level {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mirror = mirror_rotation();
    let half = points_per_cloud / 2;
    let n_fuselage = half / 8;
    let mut clouds = Vec::with_capacity(n_clouds);
    for _ in 0..n_clouds {
        let shape = Shape::random(&mut rng);
        let mut points = Vec::with_capacity(points_per_cloud);
        let mut normals = Vec::with_capacity(points_per_cloud);
        for i in 0..half {
            let (p, n) = if i < n_fuselage {
                let x = -shape.fuselage_half_width * rng.random::<f64>();
                let y = shape.fuselage_length * (rng.random::<f64>() - 0.5);
                let p = Vec3::new(x, y, shape.fuselage_height(x));
                (p, height_normal(|x, _| shape.fuselage_height(x), x, y))
            } else {
                let p = shape.wing_point(rng.random(), rng.random_range(-1.0..1.0));
                (p, height_normal(|x, y| shape.wing_height(x, y), p.x, p.y))
            };
            points.push(p);
            normals.push(n);
        }
        for i in 0..half {
            points.push(mirror.apply(&points[i]));
            normals.push(mirror.apply(&normals[i]));
        }
        if noise_sigma > 0.0 {
            for p in &mut points {
                *p += Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            }
        }
        let labels = (0..points_per_cloud).map(|i| if i < half { LEFT } else { RIGHT }).collect();
        clouds.push(WingtipCloud {
            cloud: PointCloud::with_renormalized_normals(points, normals)?,
            labels,
        });
    }
    Ok(WingtipDataset { clouds, mirror })
}
