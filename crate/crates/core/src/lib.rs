//! Rotation-invariant point-cloud features with a global "shadow" reference.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: point clouds, quaternion/rotation algebra, kNN graphs.
//! * [`lrf`]: per-point local reference frames and the centroid input descriptor.
//! * [`descriptors`]: point-pair features (PPF), shadow-informed differences and the
//!   8-D pose feature, plus detectors for the two known degenerate configurations.
//! * [`bingham`]: Bingham distribution over unit quaternions (density, normalisation by
//!   quadrature, entropy, mode, acceptance-rejection sampling).
//! * [`riattn`]: the attention graph convolution, its analytic backward pass, the
//!   composite loss and a small epoch-wise trainer with a synthetic mirrored-wing task.
//! * [`fixtures`]: constructed configurations and random clouds for checks and benches.
//!
//! Points are row vectors throughout: a rotation `R` acts as `p · R`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bingham;
pub mod descriptors;
mod error;
pub mod fixtures;
pub mod geometry;
pub mod lrf;
pub mod riattn;

pub use error::{Error, Result};

pub use bingham::{BinghamParams, BinghamSeed, NormalizationResult};
pub use descriptors::{DescriptorMask, Ppf4, ShadowCloud, Sipf8, Sippf4};
pub use geometry::{NeighborGraph, PointCloud, Rotation3, UnitQuaternion, Vec3};
pub use lrf::{InputDescriptor, LocalFrame, LrfMode};
pub use riattn::{RiAttnLayer, ToyTaskConfig};
