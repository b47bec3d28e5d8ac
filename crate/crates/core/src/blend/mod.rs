//! Rendering stage: depth rasterization, occlusion-aware warping of two
//! adjacent source views into the target view, deterministic weight
//! blending, and boundary-aware depth upsampling.

pub mod depth;
pub mod rig;
pub mod warp;
pub mod weights;

pub use depth::{boundary_refine, rasterize_depth, rescale_camera, DepthMap};
pub use rig::{angle_preference, select_adjacent_views, VirtualRig};
pub use warp::{occlusion_map, warp_view, WarpedView};
pub use weights::{
    blend_weights, compose, BlendWeights, OcclusionWeightProvider, ViewInputs, WeightProvider,
};

use crate::error::Result;
use crate::geom::{Camera, TriMesh};
use crate::img::Image;
use crate::scalar::Real;

/// End-to-end target-view synthesis: rasterize the target depth at a low
/// working resolution, warp the two angularly closest rig views into it,
/// blend by occlusion/angle weights upsampled to the full resolution, and
/// fall back to the textured mesh wherever neither view contributes.
///
/// `source_images[i]` is the image captured (or rendered) from
/// `rig.cameras[i]`; `target` carries the output resolution.
pub fn render_target_view<S: Real>(
    mesh: &TriMesh<S>,
    rig: &VirtualRig<S>,
    source_images: &[Image<S>],
    target: &Camera<S>,
    low_resolution: usize,
    tau: f64,
) -> Result<Image<S>> {
    let (i1, i2) = select_adjacent_views(rig, target)?;
    let low_target = rescale_camera(target, low_resolution, low_resolution);
    let (tgt_low, _) = rasterize_depth(mesh, &low_target)?;
    let mut warped = Vec::new();
    let mut occs = Vec::new();
    for &i in &[i1, i2] {
        let cam = &rig.cameras[i];
        let low_src = rescale_camera(cam, low_resolution, low_resolution);
        let (src_depth, _) = rasterize_depth(mesh, &low_src)?;
        // low-res warp drives the weights; the full-res warp supplies color
        let mut low_img = Image::new(low_resolution, low_resolution, 3);
        {
            let src = &source_images[i];
            for row in 0..low_resolution {
                for col in 0..low_resolution {
                    let u = (col as f64 + 0.5) * src.width as f64 / low_resolution as f64;
                    let v = (row as f64 + 0.5) * src.height as f64 / low_resolution as f64;
                    let px = src.pixel(
                        (v as usize).min(src.height - 1),
                        (u as usize).min(src.width - 1),
                    );
                    low_img.pixel_mut(row, col).copy_from_slice(px);
                }
            }
        }
        let wv = warp_view(&low_img, &src_depth, &tgt_low)?;
        let occ = occlusion_map(&tgt_low, &wv)?;
        warped.push(wv);
        occs.push(occ);
    }
    let provider = OcclusionWeightProvider { tau };
    let w_low = provider.weights(
        &ViewInputs {
            warped: &warped[0],
            occlusion: &occs[0],
            angle_preference: angle_preference(&rig.cameras[i1], target),
        },
        &ViewInputs {
            warped: &warped[1],
            occlusion: &occs[1],
            angle_preference: angle_preference(&rig.cameras[i2], target),
        },
    )?;
    let w = w_low.upsampled(target.width, target.height);

    // full-resolution target depth (boundary-refined) and mesh fallback
    let tgt_hi = boundary_refine(&tgt_low, mesh, target.width, target.height)?;
    let (_, mesh_color) = rasterize_depth(mesh, target)?;
    let mut full_warped = Vec::new();
    for &i in &[i1, i2] {
        let cam = &rig.cameras[i];
        let (src_depth, _) = rasterize_depth(mesh, cam)?;
        full_warped.push(warp_view(&source_images[i], &src_depth, &tgt_hi)?);
    }
    compose(&w, &full_warped[0].image, &full_warped[1].image, &mesh_color)
}
