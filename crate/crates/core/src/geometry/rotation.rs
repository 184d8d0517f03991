use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Mat3, Vec3};
use crate::{Error, Result};

const QUAT_NORM_TOL: f64 = 1e-6;
const ROTATION_TOL: f64 = 1e-10;
const MATRIX_TO_QUAT_TOL: f64 = 1e-6;

/// Scalar-first unit quaternion `(w, x, y, z)`. `q` and `-q` are the same rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalises `(w, x, y, z)`; fails when its norm is off from 1 by more than `1e-6`.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > QUAT_NORM_TOL {
            return Err(Error::InvalidInput(format!(
                "quaternion ({w}, {x}, {y}, {z}) has norm {n}, expected 1"
            )));
        }
        Ok(Self { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    /// Normalises any nonzero 4-vector.
    pub fn from_vector(v: [f64; 4]) -> Result<Self> {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("cannot normalise a zero quaternion".into()));
        }
        Ok(Self { w: v[0] / n, x: v[1] / n, y: v[2] / n, z: v[3] / n })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_vector(self) -> nalgebra::Vector4<f64> {
        nalgebra::Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn negate(self) -> Self {
        Self { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// The representative with `w > 0`; when `w == 0` the first nonzero
    /// vector component is made positive.
    pub fn canonical(self) -> Self {
        let lead = [self.w, self.x, self.y, self.z]
            .into_iter()
            .find(|c| *c != 0.0)
            .unwrap_or(1.0);
        if lead < 0.0 {
            self.negate()
        } else {
            self
        }
    }

    /// Angle between the two points on the hypersphere, antipodes identified (in `[0, pi/2]`).
    pub fn sphere_angle(&self, other: &Self) -> f64 {
        self.dot(other).abs().min(1.0).acos()
    }

    pub fn to_rotation(self) -> Rotation3 {
        quat_to_matrix(&self).expect("unit quaternion")
    }
}

/// A proper rotation matrix. Acts on row vectors: `p' = p R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Mat3);

impl Rotation3 {
    pub fn new(m: Mat3) -> Result<Self> {
        let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
        let det = m.determinant();
        if !m.iter().all(|c| c.is_finite()) || ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(format!(
                "not a rotation matrix (orthogonality error {ortho:e}, det {det})"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Rotation by `angle` about `axis`, in the column-vector sense of
    /// [`quat_to_matrix`] (acting on a row vector applies the inverse).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidArgument("zero rotation axis".into()));
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        quat_to_matrix(&UnitQuaternion { w: c, x: s * a.x, y: s * a.y, z: s * a.z })
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Row-vector action `p R`.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.0.tr_mul(p)
    }

    /// `self · other` as matrices, so applying the result to a row vector applies
    /// `self` first, then `other`.
    pub fn then(&self, other: &Rotation3) -> Rotation3 {
        Rotation3(self.0 * other.0)
    }

    pub fn transpose(&self) -> Rotation3 {
        Rotation3(self.0.transpose())
    }

    pub fn to_quat(&self) -> UnitQuaternion {
        matrix_to_quat(&self.0).expect("valid rotation")
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

/// Standard scalar-first quaternion to matrix map.
pub fn quat_to_matrix(q: &UnitQuaternion) -> Result<Rotation3> {
    let q = UnitQuaternion::new(q.w, q.x, q.y, q.z)?;
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Ok(Rotation3(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )))
}

/// Inverse of [`quat_to_matrix`] (Shepperd's method), returning the canonical
/// representative (see [`UnitQuaternion::canonical`]).
pub fn matrix_to_quat(m: &Mat3) -> Result<UnitQuaternion> {
    let ortho = (m.transpose() * m - Mat3::identity()).abs().max();
    let det = m.determinant();
    if !m.iter().all(|c| c.is_finite()) || ortho > MATRIX_TO_QUAT_TOL || (det - 1.0).abs() > MATRIX_TO_QUAT_TOL {
        return Err(Error::InvalidInput(format!(
            "not a rotation matrix (orthogonality error {ortho:e}, det {det})"
        )));
    }
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let diag = [trace, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let branch = (0..4).fold(0, |best, i| if diag[i] > diag[best] { i } else { best });
    let q = match branch {
        0 => {
            let w = 0.5 * (1.0 + trace).sqrt();
            let f = 0.25 / w;
            [w, (m[(2, 1)] - m[(1, 2)]) * f, (m[(0, 2)] - m[(2, 0)]) * f, (m[(1, 0)] - m[(0, 1)]) * f]
        }
        1 => {
            let x = 0.5 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            let f = 0.25 / x;
            [(m[(2, 1)] - m[(1, 2)]) * f, x, (m[(0, 1)] + m[(1, 0)]) * f, (m[(0, 2)] + m[(2, 0)]) * f]
        }
        2 => {
            let y = 0.5 * (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
            let f = 0.25 / y;
            [(m[(0, 2)] - m[(2, 0)]) * f, (m[(0, 1)] + m[(1, 0)]) * f, y, (m[(1, 2)] + m[(2, 1)]) * f]
        }
        _ => {
            let z = 0.5 * (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
            let f = 0.25 / z;
            [(m[(1, 0)] - m[(0, 1)]) * f, (m[(0, 2)] + m[(2, 0)]) * f, (m[(1, 2)] + m[(2, 1)]) * f, z]
        }
    };
    Ok(UnitQuaternion::from_vector(q)?.canonical())
}

/// Uniform quaternion on `S^3` from a normalised 4-D standard Gaussian.
pub fn random_unit_quaternion<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(q) = UnitQuaternion::from_vector(v) {
            return q;
        }
    }
}

/// Uniform (Haar) random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    random_unit_quaternion(rng).to_rotation()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn identity_quaternion_maps_to_identity() {
        let r = quat_to_matrix(&UnitQuaternion::IDENTITY).unwrap();
        assert_eq!(*r.matrix(), Mat3::identity());
    }

    #[test]
    fn quarter_turn_about_x() {
        let q = UnitQuaternion::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0).unwrap();
        let r = quat_to_matrix(&q).unwrap();
        let image = r.matrix() * Vec3::y();
        assert!((image - Vec3::z()).norm() < 1e-15);
        // Row-vector action is the inverse rotation.
        assert!((r.apply(&Vec3::y()) + Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn antipodal_quaternions_give_same_matrix() {
        let q = UnitQuaternion::from_vector([0.3, -0.1, 0.7, 0.2]).unwrap();
        let a = quat_to_matrix(&q).unwrap();
        let b = quat_to_matrix(&q.negate()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(quat_to_matrix(&UnitQuaternion { w: 1.1, x: 0.0, y: 0.0, z: 0.0 }).is_err());
        assert!(UnitQuaternion::new(1.0 + 5e-7, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn matrix_to_quat_known_values() {
        assert_eq!(matrix_to_quat(&Mat3::identity()).unwrap(), UnitQuaternion::IDENTITY);
        let half_turn_z = Rotation3::from_axis_angle(&Vec3::z(), PI).unwrap();
        let q = half_turn_z.to_quat();
        assert!(q.w.abs() < 1e-15 && q.x.abs() < 1e-15 && q.y.abs() < 1e-15);
        assert!((q.z - 1.0).abs() < 1e-15);
        assert!(matrix_to_quat(&(Mat3::identity() * 1.01)).is_err());
    }

    #[test]
    fn round_trip_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = random_unit_quaternion(&mut rng);
            let r = quat_to_matrix(&q).unwrap();
            let back = matrix_to_quat(r.matrix()).unwrap();
            let err = (back.dot(&q).abs() - 1.0).abs();
            assert!(err < 1e-12, "quaternion round trip error {err}");
            let r2 = quat_to_matrix(&back).unwrap();
            assert!((r.matrix() - r2.matrix()).abs().max() < 1e-10);
            assert!(back.w >= 0.0);
        }
    }

    #[test]
    fn random_rotation_is_reproducible_and_valid() {
        let a = random_rotation(&mut ChaCha8Rng::seed_from_u64(5));
        let b = random_rotation(&mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut mean = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let r = random_rotation(&mut rng);
            assert!(Rotation3::new(*r.matrix()).is_ok());
            mean += r.matrix()[(0, 0)];
        }
        mean /= n as f64;
        assert!(mean.abs() < 0.05, "mean R00 = {mean}");
    }

    #[test]
    fn quaternion_scatter_is_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut scatter = nalgebra::Matrix4::<f64>::zeros();
        for _ in 0..n {
            let q = random_unit_quaternion(&mut rng).to_vector();
            scatter += q * q.transpose();
        }
        scatter /= n as f64;
        let dev = (scatter - nalgebra::Matrix4::identity() * 0.25).abs().max();
        assert!(dev < 0.01, "scatter deviation {dev}");
    }
}
