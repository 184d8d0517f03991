use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::{birdal_basis, lambda_jacobian, BinghamParams, BinghamSeed};
use crate::geometry::UnitQuaternion;
use crate::{Error, Result};

pub const DEFAULT_QUADRATURE_ORDER: usize = 48;
pub const MIN_QUADRATURE_ORDER: usize = 16;

/// Number of decay lengths kept inside the first panel of a concentrated angle.
const PANEL_WIDTHS: f64 = 6.0;

/// `F(Λ)` with its first and second derivatives in `λ1..λ3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationResult {
    pub f: f64,
    pub grad_f: [f64; 3],
    pub hess_f: [[f64; 3]; 3],
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Nodes on `[0, π/2]` for an integrand decaying like `exp(-scale sin²t)`: one panel
/// when diffuse, otherwise a narrow panel at the peak plus the tail.
fn angle_nodes(rule: &[(f64, f64)], scale: f64, out: &mut Vec<(f64, f64)>) {
    out.clear();
    let split = if scale > 0.0 { PANEL_WIDTHS / scale.sqrt() } else { f64::INFINITY };
    let mut push = |a: f64, b: f64| {
        let (h, m) = (0.5 * (b - a), 0.5 * (b + a));
        out.extend(rule.iter().map(|&(x, w)| (m + h * x, h * w)));
    };
    if split >= FRAC_PI_2 {
        push(0.0, FRAC_PI_2);
    } else {
        push(0.0, split);
        push(split, FRAC_PI_2);
    }
}

/// Integrates `exp(Σ λ_i y_i²)` and its moments over `S³` in the eigenbasis of `V`
/// (`y4 = cos ψ` along the mode). Every factor is even in each `y_i`, so one octant of
/// each angle is integrated and scaled by 16.
pub(crate) fn normalization_lambda(lambda: [f64; 3], order: usize) -> Result<NormalizationResult> {
    if order < MIN_QUADRATURE_ORDER {
        return Err(Error::InvalidArgument(format!(
            "quadrature order must be at least {MIN_QUADRATURE_ORDER}, got {order}"
        )));
    }
    if !lambda.iter().all(|l| l.is_finite() && *l <= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid concentrations {lambda:?}")));
    }
    let [l1, l2, l3] = lambda;
    let rule = gauss_legendre(order);
    let (mut psi_nodes, mut theta_nodes, mut phi_nodes) = (Vec::new(), Vec::new(), Vec::new());

    let mut f = 0.0;
    let mut g = [0.0; 3];
    let mut h = [[0.0; 3]; 3];

    angle_nodes(&rule, -l3, &mut psi_nodes);
    for &(psi, w_psi) in &psi_nodes {
        let sp = psi.sin();
        let s2 = sp * sp;
        angle_nodes(&rule, s2 * (l3 - l2), &mut theta_nodes);
        for &(theta, w_theta) in &theta_nodes {
            let (st, ct) = theta.sin_cos();
            let y3 = sp * ct;
            let rho = sp * st;
            let w_outer = w_psi * s2 * w_theta * st;
            // φ is measured from the y2 axis, where λ2 (the weaker of λ1, λ2) acts.
            angle_nodes(&rule, rho * rho * (l2 - l1), &mut phi_nodes);
            for &(phi, w_phi) in &phi_nodes {
                let (sf, cf) = phi.sin_cos();
                let y = [rho * sf, rho * cf, y3];
                let sq = [y[0] * y[0], y[1] * y[1], y[2] * y[2]];
                let e = (l1 * sq[0] + l2 * sq[1] + l3 * sq[2]).exp() * w_outer * w_phi;
                f += e;
                for i in 0..3 {
                    g[i] += e * sq[i];
                    for k in i..3 {
                        h[i][k] += e * sq[i] * sq[k];
                    }
                }
            }
        }
    }
    let scale = 16.0;
    g.iter_mut().for_each(|v| *v *= scale);
    let h = std::array::from_fn(|i| std::array::from_fn(|k| scale * h[i.min(k)][i.max(k)]));
    Ok(NormalizationResult { f: f * scale, grad_f: g, hess_f: h })
}

/// `F(Λ) = ∫ exp(qᵀVΛVᵀq) dq` over `S³` and `∂F/∂λ_i = ∫ (v_iᵀq)² exp(..) dq`, by
/// Gauss-Legendre product quadrature with `order` nodes per angle (and panel).
pub fn normalization(params: &BinghamParams, order: usize) -> Result<NormalizationResult> {
    normalization_lambda(params.lambda(), order)
}

fn entropy_from(lambda: [f64; 3], n: &NormalizationResult) -> f64 {
    let dot: f64 = (0..3).map(|i| lambda[i] * n.grad_f[i]).sum();
    n.f.ln() - dot / n.f
}

/// Differential entropy `log F - Λ·∇F / F`.
pub fn entropy(params: &BinghamParams, order: usize) -> Result<f64> {
    let n = normalization(params, order)?;
    Ok(entropy_from(params.lambda(), &n))
}

fn entropy_grad_from(lambda: [f64; 3], n: &NormalizationResult) -> [f64; 3] {
    let f2 = n.f * n.f;
    std::array::from_fn(|k| {
        -(0..3)
            .map(|i| lambda[i] * (n.hess_f[i][k] * n.f - n.grad_f[i] * n.grad_f[k]) / f2)
            .sum::<f64>()
    })
}

/// `∂h/∂λ_k = -Σ_i λ_i (F ∂²F/∂λ_i∂λ_k - ∂F/∂λ_i ∂F/∂λ_k) / F²`.
pub fn entropy_gradient_lambda(lambda: [f64; 3], order: usize) -> Result<[f64; 3]> {
    let n = normalization_lambda(lambda, order)?;
    Ok(entropy_grad_from(lambda, &n))
}

/// What the Bingham term of the composite loss measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinghamLossKind {
    /// Differential entropy of the current distribution.
    #[default]
    Entropy,
    /// Negative log-likelihood of the epoch's shadow rotation quaternion.
    NllMode,
}

/// Bingham loss value and its gradient with respect to the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedLoss {
    pub value: f64,
    pub grad_z1: [f64; 4],
    pub grad_z2: [f64; 3],
}

impl SeedLoss {
    /// Loss and analytic seed gradient. `q` is the rotation quaternion the loss is
    /// evaluated at for [`BinghamLossKind::NllMode`]; it is treated as a constant.
    pub fn evaluate(seed: &BinghamSeed, kind: BinghamLossKind, q: &UnitQuaternion, order: usize) -> Result<Self> {
        let params = seed.params()?;
        let lambda = params.lambda();
        let n = normalization(&params, order)?;
        let jac = lambda_jacobian(seed.z2);
        let chain = |d_lambda: [f64; 3]| -> [f64; 3] {
            std::array::from_fn(|j| (0..3).map(|k| d_lambda[k] * jac[k][j]).sum())
        };
        match kind {
            BinghamLossKind::Entropy => Ok(Self {
                value: entropy_from(lambda, &n),
                grad_z1: [0.0; 4],
                grad_z2: chain(entropy_grad_from(lambda, &n)),
            }),
            BinghamLossKind::NllMode => {
                let qv = q.to_vector();
                let y = params.v().tr_mul(&qv);
                let quad: f64 = (0..3).map(|i| lambda[i] * y[i] * y[i]).sum();
                let value = n.f.ln() - quad;
                let d_lambda = std::array::from_fn(|k| n.grad_f[k] / n.f - y[k] * y[k]);
                // ∂L/∂V_{m,i} = -2 λ_i y_i q_m, pushed through V = Σ_a ẑ_a B_a.
                let basis = birdal_basis();
                let d_zhat = Vector4::from_fn(|a, _| {
                    let mut s = 0.0;
                    for m in 0..4 {
                        for i in 0..3 {
                            s += -2.0 * lambda[i] * y[i] * qv[m] * basis[a][(m, i)];
                        }
                    }
                    s
                });
                let z = Vector4::from(seed.z1);
                let norm = z.norm();
                let zhat = z / norm;
                let d_z1 = (d_zhat - zhat * zhat.dot(&d_zhat)) / norm;
                Ok(Self {
                    value,
                    grad_z1: [d_z1[0], d_z1[1], d_z1[2], d_z1[3]],
                    grad_z2: chain(d_lambda),
                })
            }
        }
    }
}
