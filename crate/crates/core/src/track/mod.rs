//! Coarse non-rigid tracking: embedded-deformation graph sampling,
//! linear-blend-skinning warps, gated ICP correspondences, and a damped
//! Gauss-Newton solver producing per-frame warp fields.

mod graph;
mod icp;
mod solve;
mod warp;

pub use graph::{
    radius_from_ratio, sample_ed_nodes, skinning_weights, EdGraph, DEFAULT_NODE_RADIUS,
};
pub use icp::{
    energy, find_correspondences, Correspondence, CorrespondenceSet, EnergyEval, TrackWeights,
};
pub use solve::{
    gauss_newton_solve, propagate_warp, track_frame, GaussNewtonParams, SolveReport,
};
pub use warp::{lbs_warp, lbs_warp_point, WarpField};
