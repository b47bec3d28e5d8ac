//! Synthetic-scene test harness: analytic ground-truth scenes, image
//! metrics, parametric deformation sequences, and the end-to-end
//! pipeline driver.

pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod sequence;

pub use metrics::{image_metrics, mae, psnr, ssim, ImageMetrics};
pub use pipeline::{
    run_pipeline, PipelineConfig, PipelineReport, RenderStageConfig, RingConfig, StageToggles,
    TrackStageConfig,
};
pub use scene::{
    make_camera_ring, render_ground_truth, render_training_views, Albedo, AnalyticScene,
    GroundTruthView, Primitive,
};
pub use sequence::{make_sequence, SyntheticSequence, WarpKind};
