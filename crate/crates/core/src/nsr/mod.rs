//! Implicit surface reconstruction: hash-encoded SDF field with
//! TSDF-stabilized volume rendering, photometric training, and
//! isosurface extraction.

mod field;
mod render;
mod train;

pub use field::{FieldGrads, NormalMode, SdfField, F_GEO_WIDTH, SH_DEGREE};
pub use render::{
    alpha_from_tsdf, alpha_from_tsdf_grad, composite, merge_sorted, sample_importance,
    stratified_samples, tsdf_map, tsdf_map_grad,
};
pub use train::{
    batch_loss_backward, eikonal_error, nsr_loss, train_field, train_nsr, write_loss_trace,
    FieldOptimizer, NsrConfig, TraceRow, TrainView,
};
