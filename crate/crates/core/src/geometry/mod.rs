//! Point clouds, rotations and neighbourhood graphs.

mod cloud;
mod knn;
mod rotation;

pub use cloud::{apply_rotation, PointCloud};
pub use knn::{knn_graph, knn_graph_brute_force, NeighborGraph};
pub use rotation::{
    matrix_to_quat, quat_to_matrix, random_rotation, random_unit_quaternion, Rotation3,
    UnitQuaternion,
};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
