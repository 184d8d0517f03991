//! Constructed geometry for tests, benchmarks and demonstrations: the circle-symmetric
//! neighbour pair that plain point-pair features cannot separate, and random oriented
//! clouds.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{random_unit_quaternion, PointCloud, Rotation3, Vec3};
use crate::lrf::{build_lrf, LocalFrame};
use crate::Result;

/// A reference point with two neighbours related by a rotation about the reference's
/// primary axis, frames carried along.
#[derive(Debug, Clone, Copy)]
pub struct CircleConfiguration {
    pub p_r: Vec3,
    pub frame_r: LocalFrame,
    pub p_a: Vec3,
    pub frame_a: LocalFrame,
    pub p_b: Vec3,
    pub frame_b: LocalFrame,
    /// Rotation taking `(p_a - p_r, frame_a)` to `(p_b - p_r, frame_b)`.
    pub turn: Rotation3,
}

/// Reference at `p_r` with `∂¹ = z`; neighbour `a` at radius 0.8, height 0.3 above `p_r`
/// with a tilted frame, neighbour `b` the same turned by `angle` about `z`.
pub fn circle_configuration(p_r: Vec3, angle: f64) -> Result<CircleConfiguration> {
    let frame_r = build_lrf(&Vec3::z(), &Vec3::x())?;
    let offset = Vec3::new(0.8, 0.0, 0.3);
    let frame_a = build_lrf(&Vec3::new(0.3, -0.5, 0.8), &Vec3::new(0.1, 1.0, 0.2))?;
    let turn = Rotation3::from_axis_angle(&Vec3::z(), angle)?;
    Ok(CircleConfiguration {
        p_r,
        frame_r,
        p_a: p_r + offset,
        frame_a,
        p_b: p_r + turn.apply(&offset),
        frame_b: frame_a.rotated(&turn),
        turn,
    })
}

/// `n` standard-normal points with uniformly random unit normals.
pub fn random_oriented_cloud<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<PointCloud> {
    let mut gauss = || Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let points: Vec<Vec3> = (0..n).map(|_| gauss()).collect();
    let normals: Vec<Vec3> = (0..n)
        .map(|_| loop {
            let v = gauss();
            if v.norm() > 1e-3 {
                break v;
            }
        })
        .collect();
    PointCloud::with_renormalized_normals(points, normals)
}

/// Uniform random rotation that is at least `min_angle` radians from the identity.
pub fn generic_rotation<R: Rng + ?Sized>(rng: &mut R, min_angle: f64) -> Rotation3 {
    loop {
        let q = random_unit_quaternion(rng);
        if 2.0 * q.w.abs().min(1.0).acos() >= min_angle {
            return q.to_rotation();
        }
    }
}
