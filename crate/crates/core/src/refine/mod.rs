//! Photometric refinement: a canonical radiance field trained on the
//! first frame, a spacetime displacement network trained against it
//! through backward warping, and motion re-optimization from the learned
//! dense correspondences.

pub mod deform;
pub mod knn;
pub mod radiance;
pub mod train;

pub use deform::{DeformGrads, DeformNet, DeformOptimizer, DEFORM_HIDDEN};
pub use knn::{backward_warp, build_knn_volume, KnnVolume};
pub use radiance::{
    photometric_loss, radiance_grid_default, train_radiance, RadianceConfig, RadianceField,
    RadianceGrads, GEO_WIDTH, SH_DEGREE,
};
pub use train::{
    build_frame_warps, deformed_radiance, frame_time, generate_animation_mesh,
    render_deformed_ray, reoptimize_motion, train_deform, DeformConfig, FrameWarp,
};
