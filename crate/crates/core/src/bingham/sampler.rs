use nalgebra::Vector4;
use rand::Rng;
use rand_distr::StandardNormal;

use super::BinghamParams;
use crate::geometry::UnitQuaternion;
use crate::{Error, Result};

/// Envelope shape parameter of the angular central Gaussian proposal.
const ENVELOPE_B: f64 = 1.0;
const BOUND_SAFETY: f64 = 1.0001;
const BATCH: usize = 256;
const MIN_ACCEPTANCE: f64 = 1e-4;
const STALL_CHECK_AFTER: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SamplerStats {
    pub accepted: u64,
    pub drawn: u64,
}

impl SamplerStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.drawn == 0 {
            0.0
        } else {
            self.accepted as f64 / self.drawn as f64
        }
    }
}

/// `exp(-t) (1 + 2t/b)^2` with `t = qᵀAq`, `A = -VΛVᵀ`: the ratio of the Bingham
/// kernel to the unnormalised ACG kernel in four dimensions.
fn log_ratio(t: f64) -> f64 {
    -t + 2.0 * (1.0 + 2.0 * t / ENVELOPE_B).ln()
}

/// Rejection constant `M*`: the supremum of the kernel ratio over the sphere, where
/// `t` ranges over `[0, -λ1]`, padded by a small safety factor.
pub fn acceptance_bound(params: &BinghamParams) -> f64 {
    let t_max = -params.lambda()[0];
    let t_peak = (4.0 - ENVELOPE_B) / 2.0;
    log_ratio(t_max.min(t_peak)).exp() * BOUND_SAFETY
}

pub fn sample<R: Rng + ?Sized>(params: &BinghamParams, rng: &mut R, n: usize) -> Result<Vec<UnitQuaternion>> {
    sample_with_stats(params, rng, n).map(|(q, _)| q)
}

/// Acceptance-rejection with ACG proposals `y ~ N(0, Ψ)`, `Ψ⁻¹ = I + 2A/b`, `q = y/|y|`.
/// Proposals are drawn and tested in fixed-size batches.
pub fn sample_with_stats<R: Rng + ?Sized>(
    params: &BinghamParams,
    rng: &mut R,
    n: usize,
) -> Result<(Vec<UnitQuaternion>, SamplerStats)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let lambda = params.lambda();
    let v = params.v();
    // Standard deviations of the proposal in the eigenbasis of V.
    let sd = [
        (1.0 - 2.0 * lambda[0] / ENVELOPE_B).sqrt().recip(),
        (1.0 - 2.0 * lambda[1] / ENVELOPE_B).sqrt().recip(),
        (1.0 - 2.0 * lambda[2] / ENVELOPE_B).sqrt().recip(),
        1.0,
    ];
    let log_m = acceptance_bound(params).ln();

    let mut out = Vec::with_capacity(n);
    let mut stats = SamplerStats::default();
    let mut proposals: Vec<(Vector4<f64>, f64)> = Vec::with_capacity(BATCH);
    while out.len() < n {
        proposals.clear();
        for _ in 0..BATCH {
            let e = Vector4::from_fn(|i, _| sd[i] * rng.sample::<f64, _>(StandardNormal));
            let norm = e.norm();
            if norm == 0.0 {
                continue;
            }
            let e = e / norm;
            let t: f64 = -(0..3).map(|i| lambda[i] * e[i] * e[i]).sum::<f64>();
            let u: f64 = rng.random();
            proposals.push((e, u.ln() - (log_ratio(t) - log_m)));
        }
        stats.drawn += proposals.len() as u64;
        for (e, margin) in &proposals {
            if out.len() == n {
                break;
            }
            if *margin < 0.0 {
                stats.accepted += 1;
                let q = v * e;
                out.push(UnitQuaternion::from_vector([q[0], q[1], q[2], q[3]])?);
            }
        }
        if stats.drawn >= STALL_CHECK_AFTER && stats.acceptance_rate() < MIN_ACCEPTANCE {
            return Err(Error::SamplerStall { accepted: stats.accepted as usize, drawn: stats.drawn as usize });
        }
    }
    Ok((out, stats))
}
