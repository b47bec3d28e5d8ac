//! Core geometric types, camera model, marching cubes, and metrics.

pub mod accel;
pub mod camera;
pub mod grid;
pub mod io;
pub mod linear;
mod mc_tables;
pub mod mesh;
pub mod metrics;

pub use accel::PointGrid;
pub use camera::{generate_rays, Camera, Ray};
pub use grid::{marching_cubes, ScalarGrid};
pub use io::{read_obj, read_ply, read_rig, write_obj, write_ply, write_rig};
pub use linear::{cholesky_solve, Mat3, Quat, RigidTransform, Vec3};
pub use mesh::TriMesh;
pub use metrics::{chamfer_distance, geodesic_distances, sample_surface, ChamferInput};
