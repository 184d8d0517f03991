use super::{Rotation3, Vec3};
use crate::{Error, Result};

const NORMAL_TOL: f64 = 1e-9;

/// An `N x 3` set of positions with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a point cloud needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite coordinate at point {i}")));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "{} normals for {} points",
                    ns.len(),
                    points.len()
                )));
            }
            for (i, n) in ns.iter().enumerate() {
                if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > NORMAL_TOL {
                    return Err(Error::InvalidInput(format!("normal {i} is not a unit vector")));
                }
            }
        }
        Ok(Self { points, normals })
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None)
    }

    /// Like [`PointCloud::new`], but rescales every normal to unit length first.
    /// Zero normals are rejected.
    pub fn with_renormalized_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        let mut unit = Vec::with_capacity(normals.len());
        for (i, n) in normals.into_iter().enumerate() {
            let len = n.norm();
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::InvalidInput(format!("normal {i} has zero or non-finite length")));
            }
            unit.push(n / len);
        }
        Self::new(points, Some(unit))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Arithmetic mean of the positions.
    pub fn centroid(&self) -> Vec3 {
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        sum / self.points.len() as f64
    }

    pub fn without_normals(&self) -> Self {
        Self {
            points: self.points.clone(),
            normals: None,
        }
    }
}

/// `P_R = P R`: every point and normal is right-multiplied by `r`.
pub fn apply_rotation(cloud: &PointCloud, r: &Rotation3) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| r.apply(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| r.apply(n)).collect()),
    }
}
