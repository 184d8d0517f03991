//! Point-pair features, shadow-informed differences and the 8-D pose descriptor.
//!
//! A *shadow* is the whole cloud carried by one shared rotation `R_g`
//! (`p' = p R_g`, frames transported the same way). Pairing each reference point with
//! its own shadow gives every neighbourhood a globally consistent anchor while staying
//! invariant under a joint rotation of points, frames and shadow.

use serde::{Deserialize, Serialize};

use crate::geometry::{NeighborGraph, PointCloud, Rotation3, Vec3};
use crate::lrf::LocalFrame;
use crate::{Error, Result};

/// Below this pre-normalisation norm the shadow difference is reported as exactly zero.
pub const SIPPF_ZERO_TOL: f64 = 1e-12;

/// `(|d|, cos α1, cos α2, cos α3)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ppf4(pub [f64; 4]);

/// Unit-norm (or exactly zero) difference of two shadow PPFs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sippf4(pub [f64; 4]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sipf8 {
    pub ppf: Ppf4,
    pub sippf: Sippf4,
    /// Euclidean norm of the shadow PPF difference before normalisation.
    pub difference_norm: f64,
}

impl Sipf8 {
    pub fn to_array(&self) -> [f64; 8] {
        let (a, b) = (self.ppf.0, self.sippf.0);
        [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
    }
}

/// Which parts of the descriptor reach the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorMask {
    /// Full 8-D descriptor.
    #[default]
    Sipf,
    /// PPF block only; the shadow block is zeroed.
    Ppf,
    /// PPF block plus the magnitude of the shadow difference (slot 5), no direction.
    SipfNoDirection,
}

impl DescriptorMask {
    pub fn apply(self, d: &Sipf8) -> [f64; 8] {
        match self {
            DescriptorMask::Sipf => d.to_array(),
            DescriptorMask::Ppf => {
                let mut a = d.to_array();
                a[4..].fill(0.0);
                a
            }
            DescriptorMask::SipfNoDirection => {
                let mut a = d.to_array();
                a[4] = d.difference_norm;
                a[5..].fill(0.0);
                a
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DescriptorMask::Sipf => "sipf",
            DescriptorMask::Ppf => "ppf",
            DescriptorMask::SipfNoDirection => "sipf-no-direction",
        }
    }
}

impl std::str::FromStr for DescriptorMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sipf" => Ok(Self::Sipf),
            "ppf" => Ok(Self::Ppf),
            "sipf-no-direction" => Ok(Self::SipfNoDirection),
            other => Err(Error::InvalidArgument(format!("unknown descriptor mask {other:?}"))),
        }
    }
}

fn cos_between(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}

fn coincident(a: &Vec3, b: &Vec3, d: &Vec3) -> bool {
    let n = d.norm();
    !(n > 1e-15 * (1.0 + a.norm().max(b.norm())))
}

/// Classical point-pair feature of `(p_r, ∂¹_r)` and `(p_j, ∂¹_j)` with `d = p_j - p_r`.
pub fn ppf(p_r: &Vec3, frame_r: &LocalFrame, p_j: &Vec3, frame_j: &LocalFrame) -> Result<Ppf4> {
    ppf_axes(p_r, &frame_r.primary(), p_j, &frame_j.primary())
}

fn ppf_axes(p_r: &Vec3, a_r: &Vec3, p_j: &Vec3, a_j: &Vec3) -> Result<Ppf4> {
    let d = p_j - p_r;
    if coincident(p_r, p_j, &d) {
        return Err(Error::CoincidentPoints { index: None });
    }
    Ok(Ppf4([d.norm(), cos_between(a_r, &d), cos_between(a_j, &d), cos_between(a_r, a_j)]))
}

/// Shadow points and transported frames for a whole cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowCloud {
    pub points: Vec<Vec3>,
    pub frames: Vec<LocalFrame>,
    pub rotation: Rotation3,
}

impl ShadowCloud {
    /// Carries points and frames with a further rotation `r` (the generating rotation is
    /// left unchanged; it is defined in the frame of the original input).
    pub fn rotated(&self, r: &Rotation3) -> ShadowCloud {
        ShadowCloud {
            points: self.points.iter().map(|p| r.apply(p)).collect(),
            frames: self.frames.iter().map(|f| f.rotated(r)).collect(),
            rotation: self.rotation,
        }
    }
}

/// `p' = p R_g`, `L' = L R_g`.
pub fn shadow_of(cloud: &PointCloud, frames: &[LocalFrame], r_g: &Rotation3) -> ShadowCloud {
    ShadowCloud {
        points: cloud.points().iter().map(|p| r_g.apply(p)).collect(),
        frames: frames.iter().map(|f| f.rotated(r_g)).collect(),
        rotation: *r_g,
    }
}

/// `PPF(p_r, p_r') - PPF(p_j, p_r')`, before normalisation.
pub fn sippf_difference(
    p_r: &Vec3,
    frame_r: &LocalFrame,
    p_j: &Vec3,
    frame_j: &LocalFrame,
    shadow_p: &Vec3,
    shadow_frame: &LocalFrame,
) -> Result<[f64; 4]> {
    let a = ppf(p_r, frame_r, shadow_p, shadow_frame)?.0;
    let b = ppf(p_j, frame_j, shadow_p, shadow_frame)?.0;
    Ok([a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
}

fn normalise_difference(diff: [f64; 4]) -> (Sippf4, f64) {
    let n = diff.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n < SIPPF_ZERO_TOL {
        (Sippf4([0.0; 4]), n)
    } else {
        (Sippf4(diff.map(|c| c / n)), n)
    }
}

/// Shadow-informed point-pair feature: the normalised shadow PPF difference.
pub fn sippf(
    p_r: &Vec3,
    frame_r: &LocalFrame,
    p_j: &Vec3,
    frame_j: &LocalFrame,
    shadow_p: &Vec3,
    shadow_frame: &LocalFrame,
) -> Result<Sippf4> {
    let diff = sippf_difference(p_r, frame_r, p_j, frame_j, shadow_p, shadow_frame)?;
    Ok(normalise_difference(diff).0)
}

/// `(PPF(p_r, p_j), SiPPF(p_r, p_r', p_j))`.
pub fn sipf(
    p_r: &Vec3,
    frame_r: &LocalFrame,
    p_j: &Vec3,
    frame_j: &LocalFrame,
    shadow_p: &Vec3,
    shadow_frame: &LocalFrame,
) -> Result<Sipf8> {
    let ppf = ppf(p_r, frame_r, p_j, frame_j)?;
    let diff = sippf_difference(p_r, frame_r, p_j, frame_j, shadow_p, shadow_frame)?;
    let (sippf, difference_norm) = normalise_difference(diff);
    Ok(Sipf8 { ppf, sippf, difference_norm })
}

/// Descriptors of point `r` against each of its graph neighbours, in graph order.
pub fn sipf_stack(
    cloud: &PointCloud,
    frames: &[LocalFrame],
    graph: &NeighborGraph,
    shadow: &ShadowCloud,
    r: usize,
) -> Result<Vec<Sipf8>> {
    if r >= cloud.len() || graph.len() != cloud.len() || frames.len() != cloud.len() || shadow.points.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!("inputs not aligned for point {r}")));
    }
    let (p_r, f_r) = (cloud.point(r), &frames[r]);
    let (s_p, s_f) = (&shadow.points[r], &shadow.frames[r]);
    graph
        .row(r)
        .iter()
        .map(|&j| sipf(&p_r, f_r, &cloud.point(j), &frames[j], s_p, s_f).map_err(|e| e.at_index(r)))
        .collect()
}

/// Shadow-axis alignment score in `[0, 1]`:
/// `|cos ∠(p_r' - p_r, ∂¹_r)| · |cos ∠(∂¹_r, ∂¹_r')|`. 1 is fully degenerate.
pub fn detect_axis_alignment(p_r: &Vec3, frame_r: &LocalFrame, shadow_p: &Vec3, shadow_frame: &LocalFrame) -> f64 {
    let d = shadow_p - p_r;
    if d.norm() == 0.0 {
        return 1.0;
    }
    let a = frame_r.primary();
    (cos_between(&d, &a) * cos_between(&a, &shadow_frame.primary())).abs()
}

/// Geodesic distance on SO(3) between the shadow rotation and a patch rotation;
/// zero means the shadow cannot tell the patch from its rotated copy.
pub fn detect_local_coincidence(r_g: &Rotation3, r_j: &Rotation3) -> f64 {
    let rel = r_g.matrix().transpose() * r_j.matrix();
    ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrf::build_lrf;
    use std::f64::consts::PI;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn frame(primary: Vec3) -> LocalFrame {
        let helper = if primary.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        build_lrf(&primary, &helper).unwrap()
    }

    #[test]
    fn ppf_examples() {
        let fx = frame(Vec3::x());
        let p = ppf(&Vec3::zeros(), &fx, &v(2.0, 0.0, 0.0), &fx).unwrap();
        assert_eq!(p, Ppf4([2.0, 1.0, 1.0, 1.0]));
        let q = ppf(&Vec3::zeros(), &fx, &v(2.0, 0.0, 0.0), &frame(Vec3::y())).unwrap();
        assert_eq!(q, Ppf4([2.0, 1.0, 0.0, 0.0]));
        assert_eq!(
            ppf(&Vec3::x(), &fx, &Vec3::x(), &fx),
            Err(Error::CoincidentPoints { index: None })
        );
    }

    #[test]
    fn identity_shadow_is_coincident() {
        let fx = frame(Vec3::x());
        let p = v(1.0, 2.0, 3.0);
        let shadow = Rotation3::identity().apply(&p);
        assert!(sipf(&p, &fx, &v(1.5, 2.0, 3.0), &fx, &shadow, &fx).is_err());
    }

    #[test]
    fn half_turn_shadow() {
        let cloud = PointCloud::from_points(vec![v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)]).unwrap();
        let f = frame(Vec3::z());
        let r = Rotation3::from_axis_angle(&Vec3::z(), PI).unwrap();
        let s = shadow_of(&cloud, &[f, f], &r);
        assert!((s.points[0] - v(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((s.frames[0].primary() - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn equal_shadow_ppfs_give_zero_vector() {
        // p_j sits where p_r's shadow relation is mirrored exactly: same distance and
        // angles to the shadow.
        let f = frame(Vec3::z());
        let shadow = Vec3::zeros();
        let s = sippf(&v(1.0, 0.0, 0.0), &f, &v(0.0, 1.0, 0.0), &f, &shadow, &f).unwrap();
        assert_eq!(s, Sippf4([0.0; 4]));
    }

    #[test]
    fn alignment_score_extremes() {
        let f = frame(Vec3::z());
        let p = v(0.3, 0.2, 0.1);
        assert!((detect_axis_alignment(&p, &f, &(p + 2.0 * Vec3::z()), &f) - 1.0).abs() < 1e-15);
        assert!(detect_axis_alignment(&p, &f, &(p + Vec3::x()), &f).abs() < 1e-15);
    }

    #[test]
    fn coincidence_extremes() {
        let a = Rotation3::from_axis_angle(&v(1.0, 2.0, 0.5), 0.7).unwrap();
        assert!(detect_local_coincidence(&a, &a) < 1e-7);
        let half = Rotation3::from_axis_angle(&v(0.2, -1.0, 0.4), PI).unwrap();
        assert!((detect_local_coincidence(&a, &a.then(&half)) - PI).abs() < 1e-7);
    }

    #[test]
    fn masks() {
        let d = Sipf8 {
            ppf: Ppf4([1.0, 0.5, -0.5, 0.25]),
            sippf: Sippf4([0.5, 0.5, 0.5, 0.5]),
            difference_norm: 3.0,
        };
        assert_eq!(DescriptorMask::Ppf.apply(&d), [1.0, 0.5, -0.5, 0.25, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(DescriptorMask::SipfNoDirection.apply(&d), [1.0, 0.5, -0.5, 0.25, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!("sipf-no-direction".parse::<DescriptorMask>().unwrap(), DescriptorMask::SipfNoDirection);
        assert!("nope".parse::<DescriptorMask>().is_err());
    }
}
