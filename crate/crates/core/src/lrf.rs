//! Local reference frames and the centroid-relative input descriptor.

use crate::geometry::{Mat3, NeighborGraph, PointCloud, Rotation3, Vec3};
use crate::{Error, Result};

/// Minimum angle (radians) between the two Gram-Schmidt inputs.
pub const PARALLEL_TOL: f64 = 1e-7;

/// Orthonormal right-handed basis; row `a` is the axis `∂^(a+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    axes: Mat3,
}

impl LocalFrame {
    pub fn axes(&self) -> &Mat3 {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> Vec3 {
        self.axes.row(a).transpose()
    }

    /// The primary axis `∂¹`.
    pub fn primary(&self) -> Vec3 {
        self.axis(0)
    }

    /// Every axis right-multiplied by `r`, i.e. the frame carried along with the cloud.
    pub fn rotated(&self, r: &Rotation3) -> LocalFrame {
        LocalFrame {
            axes: self.axes * r.matrix(),
        }
    }

    /// Max deviation from orthonormality and right-handedness.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = (self.axes * self.axes.transpose() - Mat3::identity()).abs().max();
        let hand = (self.axis(0).cross(&self.axis(1)) - self.axis(2)).abs().max();
        gram.max(hand)
    }
}

/// How the two Gram-Schmidt inputs are chosen per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrfMode {
    /// `e1 = n_i`, `e2 = m_i - p_i`.
    Normal,
    /// Coordinates only: `e1 = m_i - p_i`, `e2 = p_i - O` with `O` the cloud centroid.
    Barycenter,
}

/// `m_i - p_i`, where `m_i` is the mean of the graph neighbours of point `i`.
pub fn barycenter_axis(cloud: &PointCloud, graph: &NeighborGraph, i: usize) -> Result<Vec3> {
    if i >= cloud.len() || graph.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!("point {i} not covered by graph")));
    }
    let row = graph.row(i);
    let sum = row.iter().fold(Vec3::zeros(), |acc, &j| acc + cloud.point(j));
    let p = cloud.point(i);
    let axis = sum / row.len() as f64 - p;
    if axis.norm() <= 1e-12 * (1.0 + p.norm()) {
        return Err(Error::DegenerateGeometry {
            index: Some(i),
            reason: "point coincides with its neighbour barycenter".into(),
        });
    }
    Ok(axis)
}

/// Gram-Schmidt: `∂¹ = e1/|e1|`, `∂³ = (∂¹ x e2)/|∂¹ x e2|`, `∂² = ∂³ x ∂¹`.
pub fn build_lrf(e1: &Vec3, e2: &Vec3) -> Result<LocalFrame> {
    let (n1, n2) = (e1.norm(), e2.norm());
    if !(n1 > 0.0 && n1.is_finite() && n2 > 0.0 && n2.is_finite()) {
        return Err(Error::InvalidArgument("frame directions must be nonzero and finite".into()));
    }
    let d1 = e1 / n1;
    let c = d1.cross(&(e2 / n2));
    if c.norm() < PARALLEL_TOL.sin() {
        return Err(Error::DegenerateFrame { index: None });
    }
    let d3 = c.normalize();
    let d2 = d3.cross(&d1);
    Ok(LocalFrame {
        axes: Mat3::from_rows(&[d1.transpose(), d2.transpose(), d3.transpose()]),
    })
}

fn frame_at(cloud: &PointCloud, graph: &NeighborGraph, mode: LrfMode, centroid: &Vec3, i: usize) -> Result<LocalFrame> {
    let bary = barycenter_axis(cloud, graph, i)?;
    let (e1, e2) = match mode {
        LrfMode::Normal => {
            let normals = cloud
                .normals()
                .ok_or_else(|| Error::InvalidInput("normal-based frames need normals".into()))?;
            (normals[i], bary)
        }
        LrfMode::Barycenter => (bary, cloud.point(i) - centroid),
    };
    build_lrf(&e1, &e2).map_err(|e| match e {
        Error::InvalidArgument(_) => Error::DegenerateFrame { index: Some(i) },
        other => other.at_index(i),
    })
}

/// Per-point frames; entries for degenerate points carry their own error.
pub fn try_build_all_lrfs(cloud: &PointCloud, graph: &NeighborGraph, mode: LrfMode) -> Result<Vec<Result<LocalFrame>>> {
    if mode == LrfMode::Normal && !cloud.has_normals() {
        return Err(Error::InvalidInput("normal-based frames need normals".into()));
    }
    if graph.len() != cloud.len() {
        return Err(Error::InvalidArgument("graph and cloud sizes differ".into()));
    }
    let centroid = cloud.centroid();
    Ok((0..cloud.len()).map(|i| frame_at(cloud, graph, mode, &centroid, i)).collect())
}

/// Frames for every point; the first degenerate point aborts with its index.
pub fn build_all_lrfs(cloud: &PointCloud, graph: &NeighborGraph, mode: LrfMode) -> Result<Vec<LocalFrame>> {
    try_build_all_lrfs(cloud, graph, mode)?.into_iter().collect()
}

/// `(|O->p|, sin ∠(∂¹, O->p), cos ∠(∂¹, O->p))` for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputDescriptor {
    pub radial: f64,
    pub sin: f64,
    pub cos: f64,
}

impl InputDescriptor {
    pub fn to_array(self) -> [f64; 3] {
        [self.radial, self.sin, self.cos]
    }
}

/// Rotation-invariant per-point input features relative to the cloud centroid.
/// A point exactly at the centroid gets `(0, 0, 1)`.
pub fn input_descriptor(cloud: &PointCloud, frames: &[LocalFrame]) -> Result<Vec<InputDescriptor>> {
    if frames.len() != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames for {} points",
            frames.len(),
            cloud.len()
        )));
    }
    let o = cloud.centroid();
    Ok(cloud
        .points()
        .iter()
        .zip(frames)
        .map(|(p, f)| {
            let v = p - o;
            let radial = v.norm();
            if radial == 0.0 {
                return InputDescriptor { radial, sin: 0.0, cos: 1.0 };
            }
            let u = v / radial;
            let a = f.primary();
            InputDescriptor {
                radial,
                sin: a.cross(&u).norm().min(1.0),
                cos: a.dot(&u).clamp(-1.0, 1.0),
            }
        })
        .collect())
}
