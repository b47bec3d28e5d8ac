//! Occlusion-aware image warping between calibrated views sharing the
//! same surface geometry.

use super::depth::DepthMap;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::scalar::Real;

/// A source view re-projected into the target view: color, the
/// target-view depth of the surface the source actually sees, and a
/// binary validity plane (target pixels whose unprojection left the
/// source frustum are invalid).
#[derive(Debug, Clone)]
pub struct WarpedView<S> {
    pub image: Image<S>,
    pub depth: Image<S>,
    pub validity: Image<S>,
}

fn bilinear_rgb<S: Real>(img: &Image<S>, u: f64, v: f64) -> [S; 3] {
    let x = (u - 0.5).clamp(0.0, img.width as f64 - 1.0);
    let y = (v - 0.5).clamp(0.0, img.height as f64 - 1.0);
    let c0 = x.floor() as usize;
    let r0 = y.floor() as usize;
    let c1 = (c0 + 1).min(img.width - 1);
    let r1 = (r0 + 1).min(img.height - 1);
    let fx = S::from_f64_(x - c0 as f64);
    let fy = S::from_f64_(y - r0 as f64);
    let mut out = [S::zero(); 3];
    let taps = [
        (r0, c0, (S::one() - fx) * (S::one() - fy)),
        (r0, c1, fx * (S::one() - fy)),
        (r1, c0, (S::one() - fx) * fy),
        (r1, c1, fx * fy),
    ];
    for (r, c, w) in taps {
        let p = img.pixel(r, c);
        for k in 0..3 {
            out[k] += w * p[k];
        }
    }
    out
}

/// Warps a source image into the target view via the target depth map:
/// each foreground target pixel is unprojected, projected into the
/// source camera, and sampled (bilinear color, nearest depth). The
/// warped depth is the target-view depth of the source-visible surface,
/// so it is directly comparable with the target depth map.
pub fn warp_view<S: Real>(
    src_image: &Image<S>,
    src_depth: &DepthMap<S>,
    tgt_depth: &DepthMap<S>,
) -> Result<WarpedView<S>> {
    if src_image.width != src_depth.depth.width || src_image.height != src_depth.depth.height {
        return Err(Error::shape(format!(
            "source image {}x{} does not match source depth {}x{}",
            src_image.width, src_image.height, src_depth.depth.width, src_depth.depth.height
        )));
    }
    let (w, h) = (tgt_depth.depth.width, tgt_depth.depth.height);
    let mut image = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut validity = Image::new(w, h, 1);
    let src_cam = &src_depth.camera;
    for row in 0..h {
        for col in 0..w {
            let d = tgt_depth.depth.pixel(row, col)[0];
            if d <= S::zero() {
                continue;
            }
            let p = tgt_depth.camera.unproject(
                S::from_usize_(col) + S::half(),
                S::from_usize_(row) + S::half(),
                d,
            );
            let (us, vs, zs) = src_cam.project(p);
            let (uf, vf) = (us.to_f64_(), vs.to_f64_());
            if zs <= src_cam.near
                || uf < 0.0
                || vf < 0.0
                || uf >= src_cam.width as f64
                || vf >= src_cam.height as f64
            {
                continue;
            }
            validity.pixel_mut(row, col)[0] = S::one();
            let rgb = bilinear_rgb(src_image, uf, vf);
            image.pixel_mut(row, col).copy_from_slice(&rgb);
            // nearest-pixel source depth; forward-project the point the
            // source sees into the target view
            let sc = (uf as usize).min(src_cam.width - 1);
            let sr = (vf as usize).min(src_cam.height - 1);
            let ds = src_depth.depth.pixel(sr, sc)[0];
            if ds > S::zero() {
                let q = src_cam.unproject(
                    S::from_usize_(sc) + S::half(),
                    S::from_usize_(sr) + S::half(),
                    ds,
                );
                let zt = tgt_depth.camera.world_to_camera.apply(q).z;
                depth.pixel_mut(row, col)[0] = zt.max(S::zero());
            }
        }
    }
    Ok(WarpedView {
        image,
        depth,
        validity,
    })
}

/// Per-pixel signed depth discrepancy `O = D_target - D_warped_source`,
/// zero wherever either depth is background.
pub fn occlusion_map<S: Real>(tgt_depth: &DepthMap<S>, warped: &WarpedView<S>) -> Result<Image<S>> {
    let (w, h) = (tgt_depth.depth.width, tgt_depth.depth.height);
    if warped.depth.width != w || warped.depth.height != h {
        return Err(Error::shape(format!(
            "occlusion inputs disagree: {}x{} vs {}x{}",
            w, h, warped.depth.width, warped.depth.height
        )));
    }
    let mut out = Image::new(w, h, 1);
    for row in 0..h {
        for col in 0..w {
            let a = tgt_depth.depth.pixel(row, col)[0];
            let b = warped.depth.pixel(row, col)[0];
            if a > S::zero() && b > S::zero() {
                out.pixel_mut(row, col)[0] = a - b;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::depth::rasterize_depth;
    use super::super::depth::tests::{look_cam, quad, uv_sphere};
    use super::*;
    use crate::geom::{TriMesh, Vec3};

    fn textured_quad() -> TriMesh<f64> {
        let mut m = quad(0.0, 0.8);
        m.colors = Some(vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 0.0),
        ]);
        m
    }

    #[test]
    fn identity_cameras_give_identity_warp() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -2.5), 32);
        let mesh = textured_quad();
        let (d, img) = rasterize_depth(&mesh, &cam).unwrap();
        let wv = warp_view(&img, &d, &d).unwrap();
        for row in 0..32 {
            for col in 0..32 {
                if d.depth.pixel(row, col)[0] > 0.0 {
                    assert_eq!(wv.validity.pixel(row, col)[0], 1.0);
                    for k in 0..3 {
                        let a = wv.image.pixel(row, col)[k];
                        let b = img.pixel(row, col)[k];
                        assert!((a - b).abs() < 1e-6, "({row},{col},{k}): {a} vs {b}");
                    }
                } else {
                    assert_eq!(wv.validity.pixel(row, col)[0], 0.0);
                    assert_eq!(wv.image.pixel(row, col), [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn cross_view_warp_matches_direct_rasterization() {
        let mesh = textured_quad();
        let src_cam = look_cam(Vec3::new(0.6, 0.1, -2.4), 48);
        let tgt_cam = look_cam(Vec3::new(-0.4, -0.2, -2.5), 48);
        let (sd, simg) = rasterize_depth(&mesh, &src_cam).unwrap();
        let (td, timg) = rasterize_depth(&mesh, &tgt_cam).unwrap();
        let wv = warp_view(&simg, &sd, &td).unwrap();
        let fg = |r: usize, c: usize| td.depth.pixel(r, c)[0] > 0.0;
        for row in 2..46 {
            for col in 2..46 {
                // skip the silhouette neighborhood
                let mut all_fg = true;
                for dr in -2i64..=2 {
                    for dc in -2i64..=2 {
                        if !fg((row as i64 + dr) as usize, (col as i64 + dc) as usize) {
                            all_fg = false;
                        }
                    }
                }
                if !all_fg || wv.validity.pixel(row, col)[0] == 0.0 {
                    continue;
                }
                for k in 0..3 {
                    let a = wv.image.pixel(row, col)[k];
                    let b = timg.pixel(row, col)[k];
                    assert!(
                        (a - b).abs() < 1.0 / 255.0 + 0.05,
                        "({row},{col},{k}): {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn occlusion_zero_for_identical_depths() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -3.0), 32);
        let mesh = uv_sphere(Vec3::zero(), 0.5, 32, 16);
        let (d, img) = rasterize_depth(&mesh, &cam).unwrap();
        let wv = warp_view(&img, &d, &d).unwrap();
        let occ = occlusion_map(&d, &wv).unwrap();
        for &v in &occ.data {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn occluder_shows_up_in_the_occlusion_map() {
        // target sees the far plane; an occluder 0.1 nearer blocks the
        // source camera's view of part of it
        let far_plane = quad(0.0, 2.0);
        let mut near_plane = quad(-0.1, 0.2);
        near_plane
            .vertices
            .iter_mut()
            .for_each(|v| v.x += 0.9); // off to the side of the target axis
        let mut both = far_plane.clone();
        let off = both.vertices.len();
        both.vertices.extend(near_plane.vertices.iter().copied());
        for f in &near_plane.faces {
            both.faces.push([f[0] + off, f[1] + off, f[2] + off]);
        }
        let both = TriMesh::new(both.vertices, both.faces).unwrap();
        let tgt_cam = look_cam(Vec3::new(-0.8, 0.0, -2.0), 64);
        let src_cam = look_cam(Vec3::new(1.4, 0.0, -2.0), 64);
        // target-view depth of the far plane only (the occluder is out of
        // the target's line of sight for these pixels)
        let (td, _) = rasterize_depth(&far_plane, &tgt_cam).unwrap();
        let (sd, simg) = rasterize_depth(&both, &src_cam).unwrap();
        let wv = warp_view(&simg, &sd, &td).unwrap();
        let occ = occlusion_map(&td, &wv).unwrap();
        let max_abs = occ.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            max_abs > 0.05,
            "expected a visible occlusion signal, max |O| = {max_abs}"
        );
        // background pixels stay zero
        for row in 0..64 {
            for col in 0..64 {
                if td.depth.pixel(row, col)[0] == 0.0 {
                    assert_eq!(occ.pixel(row, col)[0], 0.0);
                }
            }
        }
    }

    #[test]
    fn mismatched_resolutions_are_rejected() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -2.5), 16);
        let mesh = textured_quad();
        let (d, img) = rasterize_depth(&mesh, &cam).unwrap();
        let wv = warp_view(&img, &d, &d).unwrap();
        let cam2 = look_cam(Vec3::new(0.0, 0.0, -2.5), 8);
        let (d2, _) = rasterize_depth(&mesh, &cam2).unwrap();
        assert!(occlusion_map(&d2, &wv).is_err());
    }
}
