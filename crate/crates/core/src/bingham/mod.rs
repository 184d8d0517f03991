//! Bingham distribution on the unit quaternions.
//!
//! `B(q | V, Λ) = exp(qᵀ V Λ Vᵀ q) / F(Λ)` with `Λ = diag(λ1, λ2, λ3, 0)`,
//! `λ1 <= λ2 <= λ3 < 0`. The last column of `V` is the mode.
//!
//! Parameters come from an unconstrained 7-vector seed `(z1, z2)`: `z1` is normalised and
//! spread into an orthogonal `V` by a fixed sign pattern, and `z2` is passed through
//! softplus and accumulated into ordered negative concentrations.

mod normalization;
mod sampler;

pub use normalization::{
    entropy, entropy_gradient_lambda, normalization, BinghamLossKind, NormalizationResult, SeedLoss,
    DEFAULT_QUADRATURE_ORDER, MIN_QUADRATURE_ORDER,
};
pub use sampler::{acceptance_bound, sample, sample_with_stats, SamplerStats};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::UnitQuaternion;
use crate::{Error, Result};

const ORTHOGONALITY_TOL: f64 = 1e-10;
const IDENTITY_MODE_TOL: f64 = 1e-9;

/// Unconstrained parameters of the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinghamSeed {
    pub z1: [f64; 4],
    pub z2: [f64; 3],
}

impl BinghamSeed {
    pub fn new(z1: [f64; 4], z2: [f64; 3]) -> Result<Self> {
        let seed = Self { z1, z2 };
        seed.validate()?;
        Ok(seed)
    }

    /// Standard-normal entries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let z1 = std::array::from_fn(|_| rng.sample(StandardNormal));
            let z2 = std::array::from_fn(|_| rng.sample(StandardNormal));
            if let Ok(s) = Self::new(z1, z2) {
                return s;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.z1.iter().chain(&self.z2).all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument("bingham seed must be finite".into()));
        }
        if self.z1.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidArgument("z1 must be nonzero".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<BinghamParams> {
        BinghamParams::new(birdal_v(self.z1)?, lambda_from(self.z2))
    }
}

/// Coefficient matrices `B_a` with `V(z) = Σ_a z_a B_a` for the fixed sign pattern
/// ```text
/// | z1 -z2 -z3  z4 |
/// | z2  z1  z4  z3 |
/// | z3 -z4  z1 -z2 |
/// | z4  z3 -z2 -z1 |
/// ```
pub(crate) fn birdal_basis() -> [Matrix4<f64>; 4] {
    [
        Matrix4::new(1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 0., -1.),
        Matrix4::new(0., -1., 0., 0., 1., 0., 0., 0., 0., 0., 0., -1., 0., 0., -1., 0.),
        Matrix4::new(0., 0., -1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 1., 0., 0.),
        Matrix4::new(0., 0., 0., 1., 0., 0., 1., 0., 0., -1., 0., 0., 1., 0., 0., 0.),
    ]
}

/// Orthogonal `V` from a nonzero 4-vector (normalised first).
pub fn birdal_v(z1: [f64; 4]) -> Result<Matrix4<f64>> {
    let z = Vector4::from(z1);
    let n = z.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument("z1 must be nonzero and finite".into()));
    }
    let z = z / n;
    let basis = birdal_basis();
    Ok((0..4).fold(Matrix4::zeros(), |acc, a| acc + basis[a] * z[a]))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(λ1, λ2, λ3)` as negative cumulative softplus sums; the fourth entry is 0.
pub fn lambda_from(z2: [f64; 3]) -> [f64; 3] {
    let s = z2.map(softplus);
    [-s[0] - s[1] - s[2], -s[0] - s[1], -s[0]]
}

/// `∂λ_k / ∂z2_j`.
pub(crate) fn lambda_jacobian(z2: [f64; 3]) -> [[f64; 3]; 3] {
    let d = z2.map(|x| -sigmoid(x));
    [[d[0], d[1], d[2]], [d[0], d[1], 0.0], [d[0], 0.0, 0.0]]
}

/// `(V, Λ)`; only `λ1..λ3` are stored, `λ4 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinghamParams {
    v: Matrix4<f64>,
    lambda: [f64; 3],
}

impl BinghamParams {
    pub fn new(v: Matrix4<f64>, lambda: [f64; 3]) -> Result<Self> {
        let ortho = (v.transpose() * v - Matrix4::identity()).abs().max();
        if !(ortho <= ORTHOGONALITY_TOL) {
            return Err(Error::InvalidArgument(format!("V is not orthogonal (error {ortho:e})")));
        }
        let [l1, l2, l3] = lambda;
        if !(l1 <= l2 && l2 <= l3 && l3 < 0.0 && l1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "concentrations must satisfy λ1 <= λ2 <= λ3 < 0, got {lambda:?}"
            )));
        }
        Ok(Self { v, lambda })
    }

    pub fn v(&self) -> &Matrix4<f64> {
        &self.v
    }

    pub fn lambda(&self) -> [f64; 3] {
        self.lambda
    }

    /// `V Λ Vᵀ`.
    pub fn quadratic_form(&self) -> Matrix4<f64> {
        let d = Matrix4::from_diagonal(&Vector4::new(self.lambda[0], self.lambda[1], self.lambda[2], 0.0));
        self.v * d * self.v.transpose()
    }
}

/// `qᵀ V Λ Vᵀ q` (at most 0, zero at the mode).
pub fn log_unnormalized_density(q: &UnitQuaternion, params: &BinghamParams) -> f64 {
    let y = params.v.tr_mul(&q.to_vector());
    (0..3).map(|i| params.lambda[i] * y[i] * y[i]).sum()
}

/// The most likely quaternion together with a flag for the degenerate identity rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinghamMode {
    pub quaternion: UnitQuaternion,
    /// The mode is (within `1e-9` rad) the identity rotation, which makes every shadow
    /// coincide with its source point.
    pub is_identity: bool,
}

/// The column of `V` paired with the zero concentration, canonical sign.
pub fn mode(params: &BinghamParams) -> BinghamMode {
    let c = params.v.column(3);
    let quaternion = UnitQuaternion::from_vector([c[0], c[1], c[2], c[3]])
        .expect("columns of an orthogonal matrix are unit vectors")
        .canonical();
    BinghamMode {
        quaternion,
        is_identity: rotation_is_identity(&quaternion),
    }
}

/// True when `q` encodes a rotation within `1e-9` rad of the identity.
pub fn rotation_is_identity(q: &UnitQuaternion) -> bool {
    2.0 * q.w.abs().min(1.0).acos() < IDENTITY_MODE_TOL
}
