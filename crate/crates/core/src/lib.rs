//! Animated-mesh capture engine: hash-encoded implicit surface
//! reconstruction from multi-view images, embedded-deformation tracking
//! into topology-consistent mesh sequences, and occlusion-aware view
//! blending, with a synthetic-scene harness for end-to-end verification.

pub mod checkpoint;
pub mod encode;
pub mod error;
pub mod geom;
pub mod harness;
pub mod img;
pub mod net;
pub mod nsr;
pub mod scalar;
pub mod blend;
pub mod refine;
pub mod track;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete training-precision aliases.
pub type Vec3f = geom::Vec3<f32>;
pub type TriMeshF = geom::TriMesh<f32>;
pub type CameraF = geom::Camera<f32>;

/// Concrete verification-precision aliases.
pub type Vec3d = geom::Vec3<f64>;
pub type TriMeshD = geom::TriMesh<f64>;
pub type CameraD = geom::Camera<f64>;
