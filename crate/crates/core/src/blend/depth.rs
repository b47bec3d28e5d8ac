//! Mesh depth/color rasterization and boundary-aware depth upsampling.

use crate::error::{Error, Result};
use crate::geom::{Camera, TriMesh, Vec3};
use crate::img::Image;
use crate::scalar::Real;

/// Per-pixel nearest-surface depth (camera-space z) with the generating
/// camera; 0 marks background.
#[derive(Debug, Clone)]
pub struct DepthMap<S> {
    pub depth: Image<S>,
    pub camera: Camera<S>,
}

impl<S: Real> DepthMap<S> {
    pub fn is_foreground(&self, row: usize, col: usize) -> bool {
        self.depth.pixel(row, col)[0] > S::zero()
    }
}

/// Fixed directional light for the flat-shaded fallback when the mesh
/// carries no vertex colors.
fn shade_flat<S: Real>(normal: Vec3<S>) -> Vec3<S> {
    let l = Vec3::new(S::one(), S::one(), S::one()).normalized();
    let lambert = normal.dot(l).max(S::zero());
    let v = S::from_f64_(0.25) + S::from_f64_(0.7) * lambert;
    Vec3::new(v, v, v)
}

/// Z-buffered rasterization of `mesh` from `camera` at the camera's
/// resolution. Returns the depth map and the textured color image
/// (per-vertex colors when present, flat shading otherwise).
pub fn rasterize_depth<S: Real>(
    mesh: &TriMesh<S>,
    camera: &Camera<S>,
) -> Result<(DepthMap<S>, Image<S>)> {
    if mesh.is_empty() {
        return Err(Error::invalid("cannot rasterize an empty mesh"));
    }
    let (w, h) = (camera.width, camera.height);
    let mut depth = Image::new(w, h, 1);
    let mut color = Image::new(w, h, 3);
    let eps = S::from_f64_(1e-12);
    for f in &mesh.faces {
        let pw = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
        let pc: Vec<Vec3<S>> = pw.iter().map(|p| camera.world_to_camera.apply(*p)).collect();
        if pc.iter().any(|p| p.z <= camera.near) {
            continue;
        }
        let uv: Vec<(S, S)> = pc
            .iter()
            .map(|p| {
                (
                    camera.fx * p.x / p.z + camera.cx,
                    camera.fy * p.y / p.z + camera.cy,
                )
            })
            .collect();
        let area = (uv[1].0 - uv[0].0) * (uv[2].1 - uv[0].1)
            - (uv[2].0 - uv[0].0) * (uv[1].1 - uv[0].1);
        if area.abs() < eps {
            continue;
        }
        let face_color = if mesh.colors.is_none() {
            let n = (pw[1] - pw[0]).cross(pw[2] - pw[0]);
            let n = if n.norm() > S::zero() { n.normalized() } else { n };
            Some(shade_flat(n))
        } else {
            None
        };
        let min_u = uv.iter().map(|p| p.0).fold(S::from_f64_(f64::INFINITY), S::min);
        let max_u = uv.iter().map(|p| p.0).fold(S::from_f64_(f64::NEG_INFINITY), S::max);
        let min_v = uv.iter().map(|p| p.1).fold(S::from_f64_(f64::INFINITY), S::min);
        let max_v = uv.iter().map(|p| p.1).fold(S::from_f64_(f64::NEG_INFINITY), S::max);
        let c0 = (min_u.to_f64_().floor().max(0.0)) as usize;
        let c1 = (max_u.to_f64_().ceil().min(w as f64 - 1.0)).max(0.0) as usize;
        let r0 = (min_v.to_f64_().floor().max(0.0)) as usize;
        let r1 = (max_v.to_f64_().ceil().min(h as f64 - 1.0)).max(0.0) as usize;
        if min_u.to_f64_() > w as f64 || max_u.to_f64_() < 0.0 || min_v.to_f64_() > h as f64
            || max_v.to_f64_() < 0.0
        {
            continue;
        }
        let inv_area = S::one() / area;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let px = S::from_usize_(col) + S::half();
                let py = S::from_usize_(row) + S::half();
                // signed areas of the sub-triangles, normalized
                let w0 = ((uv[1].0 - px) * (uv[2].1 - py) - (uv[2].0 - px) * (uv[1].1 - py))
                    * inv_area;
                let w1 = ((uv[2].0 - px) * (uv[0].1 - py) - (uv[0].0 - px) * (uv[2].1 - py))
                    * inv_area;
                let w2 = S::one() - w0 - w1;
                let tol = S::from_f64_(-1e-9);
                if w0 < tol || w1 < tol || w2 < tol {
                    continue;
                }
                // perspective-correct interpolation
                let inv_z = w0 / pc[0].z + w1 / pc[1].z + w2 / pc[2].z;
                let z = S::one() / inv_z;
                let cur = depth.pixel(row, col)[0];
                if cur > S::zero() && cur <= z {
                    continue;
                }
                depth.pixel_mut(row, col)[0] = z;
                let rgb = match (&mesh.colors, &face_color) {
                    (Some(cols), _) => {
                        (cols[f[0]] * (w0 / pc[0].z)
                            + cols[f[1]] * (w1 / pc[1].z)
                            + cols[f[2]] * (w2 / pc[2].z))
                            * z
                    }
                    (None, Some(c)) => *c,
                    (None, None) => unreachable!(),
                };
                let px = color.pixel_mut(row, col);
                px[0] = rgb.x.clamp(S::zero(), S::one());
                px[1] = rgb.y.clamp(S::zero(), S::one());
                px[2] = rgb.z.clamp(S::zero(), S::one());
            }
        }
    }
    Ok((
        DepthMap {
            depth,
            camera: camera.clone(),
        },
        color,
    ))
}

/// Same camera pose/intrinsics rescaled to a new pixel resolution.
pub fn rescale_camera<S: Real>(camera: &Camera<S>, width: usize, height: usize) -> Camera<S> {
    let sx = S::from_usize_(width) / S::from_usize_(camera.width);
    let sy = S::from_usize_(height) / S::from_usize_(camera.height);
    Camera {
        fx: camera.fx * sx,
        fy: camera.fy * sy,
        cx: camera.cx * sx,
        cy: camera.cy * sy,
        width,
        height,
        world_to_camera: camera.world_to_camera.clone(),
        near: camera.near,
        far: camera.far,
    }
}

/// Foreground-aware bilinear upsample of a depth plane; background (0)
/// neighbors are excluded from the interpolation weights.
fn bilinear_upsample_depth<S: Real>(low: &Image<S>, width: usize, height: usize) -> Image<S> {
    let mut out = Image::new(width, height, 1);
    let sx = low.width as f64 / width as f64;
    let sy = low.height as f64 / height as f64;
    for row in 0..height {
        for col in 0..width {
            let u = (col as f64 + 0.5) * sx - 0.5;
            let v = (row as f64 + 0.5) * sy - 0.5;
            let c0 = u.floor().clamp(0.0, low.width as f64 - 1.0) as usize;
            let r0 = v.floor().clamp(0.0, low.height as f64 - 1.0) as usize;
            let c1 = (c0 + 1).min(low.width - 1);
            let r1 = (r0 + 1).min(low.height - 1);
            let fu = S::from_f64_((u - c0 as f64).clamp(0.0, 1.0));
            let fv = S::from_f64_((v - r0 as f64).clamp(0.0, 1.0));
            let taps = [
                (r0, c0, (S::one() - fu) * (S::one() - fv)),
                (r0, c1, fu * (S::one() - fv)),
                (r1, c0, (S::one() - fu) * fv),
                (r1, c1, fu * fv),
            ];
            let mut acc = S::zero();
            let mut wsum = S::zero();
            for (r, c, w) in taps {
                let d = low.pixel(r, c)[0];
                if d > S::zero() {
                    acc += w * d;
                    wsum += w;
                }
            }
            // majority-foreground pixels survive; silhouette-crossing ones
            // fall back to background and are re-rasterized by the band pass
            if wsum > S::half() {
                out.pixel_mut(row, col)[0] = acc / wsum;
            }
        }
    }
    out
}

/// Boundary band of the low-res foreground mask: foreground or background
/// pixels whose 3x3 neighborhood crosses the silhouette (a one-pixel
/// erosion/dilation band).
fn boundary_band<S: Real>(low: &Image<S>) -> Vec<bool> {
    let (w, h) = (low.width, low.height);
    let fg = |r: usize, c: usize| low.pixel(r, c)[0] > S::zero();
    let mut band = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let me = fg(r, c);
            let mut mixed = false;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let rr = r as i64 + dr;
                    let cc = c as i64 + dc;
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    if fg(rr as usize, cc as usize) != me {
                        mixed = true;
                    }
                }
            }
            band[r * w + c] = mixed;
        }
    }
    band
}

/// Upsamples a low-resolution depth map to `target` resolution: bilinear
/// in the interior, exact re-rasterization of `mesh` inside the
/// one-pixel silhouette band.
pub fn boundary_refine<S: Real>(
    low: &DepthMap<S>,
    mesh: &TriMesh<S>,
    target_width: usize,
    target_height: usize,
) -> Result<DepthMap<S>> {
    if target_width < low.depth.width || target_height < low.depth.height {
        return Err(Error::invalid(
            "boundary refinement target resolution must be >= the source",
        ));
    }
    let hi_cam = rescale_camera(&low.camera, target_width, target_height);
    let mut out = bilinear_upsample_depth(&low.depth, target_width, target_height);
    let band = boundary_band(&low.depth);
    if band.iter().any(|&b| b) {
        let (exact, _) = rasterize_depth(mesh, &hi_cam)?;
        let sx = low.depth.width as f64 / target_width as f64;
        let sy = low.depth.height as f64 / target_height as f64;
        for row in 0..target_height {
            for col in 0..target_width {
                let lc = (((col as f64 + 0.5) * sx) as usize).min(low.depth.width - 1);
                let lr = (((row as f64 + 0.5) * sy) as usize).min(low.depth.height - 1);
                if band[lr * low.depth.width + lc] {
                    out.pixel_mut(row, col)[0] = exact.depth.pixel(row, col)[0];
                }
            }
        }
    }
    Ok(DepthMap {
        depth: out,
        camera: hi_cam,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::Vec3;

    pub(crate) fn look_cam(eye: Vec3<f64>, size: usize) -> Camera<f64> {
        Camera::look_at(
            eye,
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            size as f64,
            size as f64,
            size,
            size,
            0.05,
            100.0,
        )
        .unwrap()
    }

    pub(crate) fn quad(z: f64, half: f64) -> TriMesh<f64> {
        TriMesh::new(
            vec![
                Vec3::new(-half, -half, z),
                Vec3::new(half, -half, z),
                Vec3::new(half, half, z),
                Vec3::new(-half, half, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    pub(crate) fn uv_sphere(center: Vec3<f64>, radius: f64, nu: usize, nv: usize) -> TriMesh<f64> {
        let mut vertices = Vec::new();
        for i in 0..=nv {
            let theta = std::f64::consts::PI * i as f64 / nv as f64;
            for j in 0..nu {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / nu as f64;
                vertices.push(
                    center
                        + Vec3::new(
                            radius * theta.sin() * phi.cos(),
                            radius * theta.cos(),
                            radius * theta.sin() * phi.sin(),
                        ),
                );
            }
        }
        let mut faces = Vec::new();
        for i in 0..nv {
            for j in 0..nu {
                let a = i * nu + j;
                let b = i * nu + (j + 1) % nu;
                let c = (i + 1) * nu + j;
                let d = (i + 1) * nu + (j + 1) % nu;
                if i > 0 {
                    faces.push([a, b, c]);
                }
                if i + 1 < nv {
                    faces.push([b, d, c]);
                }
            }
        }
        TriMesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn mesh_behind_camera_rasterizes_to_background() {
        // camera at origin looking toward -z target; quad sits behind it
        let cam = look_cam(Vec3::new(0.0, 0.0, -3.0), 16);
        let mesh = quad(-5.0, 0.5);
        let (d, _) = rasterize_depth(&mesh, &cam).unwrap();
        assert!(d.depth.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn facing_quad_has_constant_depth() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -2.0), 32);
        let mesh = quad(0.0, 0.8);
        let (d, _) = rasterize_depth(&mesh, &cam).unwrap();
        // interior pixel
        let center = d.depth.pixel(16, 16)[0];
        assert!((center - 2.0).abs() < 1e-6, "center depth {center}");
        let mut fg = 0;
        for &v in &d.depth.data {
            if v > 0.0 {
                assert!((v - 2.0).abs() < 1e-6);
                fg += 1;
            }
        }
        assert!(fg > 100);
    }

    #[test]
    fn sphere_depth_matches_ray_intersection() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -3.0), 64);
        let mesh = uv_sphere(Vec3::zero(), 0.5, 48, 24);
        let (d, _) = rasterize_depth(&mesh, &cam).unwrap();
        let mut checked = 0;
        for row in 0..64 {
            for col in 0..64 {
                let z = d.depth.pixel(row, col)[0];
                if z == 0.0 {
                    continue;
                }
                let ray = cam.ray_through(col as f64 + 0.5, row as f64 + 0.5);
                let Some((t0, _)) = ray.intersect_sphere(Vec3::zero(), 0.5) else {
                    continue; // silhouette pixel outside the analytic sphere
                };
                // grazing rays hit chord facets far from the true sphere
                let hit = ray.at(t0);
                let cos_inc = (-(hit.normalized().dot(ray.direction))).abs();
                if cos_inc < 0.4 {
                    continue;
                }
                let analytic_z = cam.world_to_camera.apply(hit).z;
                assert!(
                    (z - analytic_z).abs() < 0.01,
                    "pixel ({row},{col}): {z} vs {analytic_z}"
                );
                checked += 1;
            }
        }
        assert!(checked > 200, "only {checked} pixels checked");
    }

    #[test]
    fn vertex_colors_interpolate() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -2.0), 32);
        let mut mesh = quad(0.0, 0.8);
        mesh.colors = Some(vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ]);
        let (_, img) = rasterize_depth(&mesh, &cam).unwrap();
        let px = img.pixel(16, 16);
        assert!((px[0] - 1.0).abs() < 1e-9 && px[1] == 0.0 && px[2] == 0.0);
    }

    #[test]
    fn full_frame_foreground_upsamples_bilinearly() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -2.0), 16);
        let mesh = quad(0.0, 50.0); // covers the whole frame
        let (low, _) = rasterize_depth(&mesh, &cam).unwrap();
        assert!(low.depth.data.iter().all(|&v| v > 0.0));
        let hi = boundary_refine(&low, &mesh, 32, 32).unwrap();
        // no boundary band: everything interpolated, close to the plane
        for &v in &hi.depth.data {
            assert!(v > 0.0 && (v - 2.0).abs() < 0.1);
        }
    }

    #[test]
    fn sphere_band_pixels_match_direct_rasterization() {
        let cam = look_cam(Vec3::new(0.0, 0.0, -3.0), 32);
        let mesh = uv_sphere(Vec3::zero(), 0.5, 32, 16);
        let (low, _) = rasterize_depth(&mesh, &cam).unwrap();
        let hi = boundary_refine(&low, &mesh, 64, 64).unwrap();
        let hi_cam = rescale_camera(&cam, 64, 64);
        let (exact, _) = rasterize_depth(&mesh, &hi_cam).unwrap();
        let band = super::boundary_band(&low.depth);
        assert!(band.iter().any(|&b| b), "sphere silhouette must yield a band");
        let mut band_pixels = 0;
        for row in 0..64 {
            for col in 0..64 {
                let (lr, lc) = (row / 2, col / 2);
                if band[lr * 32 + lc] {
                    assert_eq!(
                        hi.depth.pixel(row, col)[0],
                        exact.depth.pixel(row, col)[0],
                        "band pixel ({row},{col})"
                    );
                    band_pixels += 1;
                } else if hi.depth.pixel(row, col)[0] > 0.0
                    && exact.depth.pixel(row, col)[0] > 0.0
                {
                    // interior: bilinear against exact within chord error
                    let a = hi.depth.pixel(row, col)[0];
                    let b = exact.depth.pixel(row, col)[0];
                    assert!((a - b).abs() < 0.05, "interior ({row},{col}): {a} vs {b}");
                }
            }
        }
        assert!(band_pixels > 20);
    }

    #[test]
    fn band_is_one_pixel_wide_on_a_straight_edge() {
        // half-frame foreground: band = one fg row + one bg row at the edge
        let mut low = Image::<f64>::new(8, 8, 1);
        for r in 0..4 {
            for c in 0..8 {
                low.pixel_mut(r, c)[0] = 1.0;
            }
        }
        let band = super::boundary_band(&low);
        for r in 0..8 {
            for c in 0..8 {
                let expect = r == 3 || r == 4;
                assert_eq!(band[r * 8 + c], expect, "({r},{c})");
            }
        }
    }
}
