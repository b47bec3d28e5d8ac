//! Input encodings: multi-resolution hash grids over space / space-time
//! and spherical harmonics over directions.

mod hashgrid;
mod serial;
mod sh;

pub use hashgrid::{AccumMode, FeatureGradSink, HashGrid, HashGridConfig, MAX_DIM};
pub use sh::{sh_encode, MAX_SH_DEGREE};
