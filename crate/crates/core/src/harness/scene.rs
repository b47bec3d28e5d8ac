//! Analytic test scenes: SDF primitives, a Lambertian sphere-traced
//! ground-truth renderer, and camera-ring generation.

use crate::error::{Error, Result};
use crate::geom::{marching_cubes, Camera, ScalarGrid, TriMesh, Vec3};
use crate::img::Image;
use crate::nsr::TrainView;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Analytic SDF primitive; all are exact distances (Lipschitz-1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Torus around the y axis through `center`.
    Torus {
        center: [f64; 3],
        major_radius: f64,
        minor_radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
}

impl Primitive {
    pub fn sdf<S: Real>(&self, p: Vec3<S>) -> S {
        let v3 = |a: &[f64; 3]| Vec3::new(S::from_f64_(a[0]), S::from_f64_(a[1]), S::from_f64_(a[2]));
        match self {
            Primitive::Sphere { center, radius } => {
                (p - v3(center)).norm() - S::from_f64_(*radius)
            }
            Primitive::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let q = p - v3(center);
                let ring = (q.x * q.x + q.z * q.z).sqrt() - S::from_f64_(*major_radius);
                (ring * ring + q.y * q.y).sqrt() - S::from_f64_(*minor_radius)
            }
            Primitive::Capsule { a, b, radius } => {
                let (a, b) = (v3(a), v3(b));
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(S::zero(), S::one());
                (p - (a + ab * t)).norm() - S::from_f64_(*radius)
            }
        }
    }
}

/// Albedo model over the surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Albedo {
    Uniform { rgb: [f64; 3] },
    /// Smooth position-driven tint, useful for photometric supervision.
    PositionTint { base: [f64; 3], scale: f64 },
    /// Sinusoidal stripes on top of a base color; high-frequency detail
    /// that vertex-sampled meshes undersample but images resolve.
    Stripes {
        base: [f64; 3],
        amplitude: f64,
        frequency: f64,
    },
}

impl Albedo {
    pub fn at<S: Real>(&self, p: Vec3<S>) -> [S; 3] {
        match self {
            Albedo::Uniform { rgb } => rgb.map(S::from_f64_),
            Albedo::PositionTint { base, scale } => {
                let s = S::from_f64_(*scale);
                [
                    (S::from_f64_(base[0]) + s * p.x).clamp(S::zero(), S::one()),
                    (S::from_f64_(base[1]) + s * p.y).clamp(S::zero(), S::one()),
                    (S::from_f64_(base[2]) + s * p.z).clamp(S::zero(), S::one()),
                ]
            }
            Albedo::Stripes {
                base,
                amplitude,
                frequency,
            } => {
                let w = S::from_f64_(*frequency);
                let a = S::from_f64_(*amplitude);
                let m = (w * (p.x + p.y)).sin() * (w * (p.z - p.y)).cos();
                [
                    (S::from_f64_(base[0]) + a * m).clamp(S::zero(), S::one()),
                    (S::from_f64_(base[1]) + a * (w * p.y).sin()).clamp(S::zero(), S::one()),
                    (S::from_f64_(base[2]) + a * m).clamp(S::zero(), S::one()),
                ]
            }
        }
    }
}

/// Union of analytic primitives with Lambertian shading under one fixed
/// directional light.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    pub albedo: Albedo,
    /// Direction the light travels FROM (normalized at use).
    pub light_dir: [f64; 3],
    pub light_intensity: f64,
    pub ambient: f64,
    pub background: [f64; 3],
}

impl Default for AnalyticScene {
    fn default() -> Self {
        AnalyticScene {
            primitives: vec![Primitive::Sphere {
                center: [0.0; 3],
                radius: 0.5,
            }],
            albedo: Albedo::Uniform { rgb: [0.8, 0.8, 0.8] },
            light_dir: [1.0, 1.0, 1.0],
            light_intensity: 1.0,
            ambient: 0.1,
            background: [0.0; 3],
        }
    }
}

impl AnalyticScene {
    /// Capsule torso with a torus collar: the standard acceptance
    /// subject (bounded by a sphere of radius ~0.7 at the origin).
    pub fn capsule_torso() -> Self {
        AnalyticScene {
            primitives: vec![
                Primitive::Capsule {
                    a: [0.0, -0.35, 0.0],
                    b: [0.0, 0.3, 0.0],
                    radius: 0.18,
                },
                Primitive::Torus {
                    center: [0.0, 0.32, 0.0],
                    major_radius: 0.2,
                    minor_radius: 0.06,
                },
            ],
            albedo: Albedo::PositionTint {
                base: [0.55, 0.5, 0.45],
                scale: 0.4,
            },
            ..AnalyticScene::default()
        }
    }

    pub fn sdf<S: Real>(&self, p: Vec3<S>) -> S {
        let mut d = S::from_f64_(f64::INFINITY);
        for prim in &self.primitives {
            d = d.min(prim.sdf(p));
        }
        d
    }

    /// Central-difference surface normal.
    pub fn normal<S: Real>(&self, p: Vec3<S>) -> Vec3<S> {
        let h = S::from_f64_(1e-5);
        let e = [
            Vec3::new(h, S::zero(), S::zero()),
            Vec3::new(S::zero(), h, S::zero()),
            Vec3::new(S::zero(), S::zero(), h),
        ];
        let g = Vec3::new(
            self.sdf(p + e[0]) - self.sdf(p - e[0]),
            self.sdf(p + e[1]) - self.sdf(p - e[1]),
            self.sdf(p + e[2]) - self.sdf(p - e[2]),
        );
        if g.norm() > S::zero() {
            g.normalized()
        } else {
            Vec3::new(S::zero(), S::one(), S::zero())
        }
    }

    pub fn shade<S: Real>(&self, p: Vec3<S>) -> [S; 3] {
        let n = self.normal(p);
        let l = Vec3::new(
            S::from_f64_(self.light_dir[0]),
            S::from_f64_(self.light_dir[1]),
            S::from_f64_(self.light_dir[2]),
        )
        .normalized();
        let lambert = n.dot(l).max(S::zero());
        let ambient = S::from_f64_(self.ambient);
        let gain =
            S::from_f64_(self.light_intensity) * (ambient + (S::one() - ambient) * lambert);
        let albedo = self.albedo.at(p);
        albedo.map(|a| (a * gain).clamp(S::zero(), S::one()))
    }

    /// Sphere-traced hit along a ray: returns (point, ray distance).
    pub fn trace<S: Real>(&self, origin: Vec3<S>, dir: Vec3<S>, t_near: S, t_far: S) -> Option<(Vec3<S>, S)> {
        let eps = S::from_f64_(1e-6);
        let mut t = t_near;
        for _ in 0..512 {
            let p = origin + dir * t;
            let d = self.sdf(p);
            if d < eps {
                return Some((p, t));
            }
            t += d;
            if t > t_far {
                return None;
            }
        }
        None
    }

    /// Watertight triangle mesh of the zero level set via marching cubes
    /// over `[-bound, bound]^3`.
    pub fn extract_mesh<S: Real>(&self, resolution: usize, bound: f64) -> Result<TriMesh<S>> {
        let lo = Vec3::splat(S::from_f64_(-bound));
        let hi = Vec3::splat(S::from_f64_(bound));
        let grid = ScalarGrid::from_fn([resolution; 3], lo, hi, |p| self.sdf(p));
        let mut mesh = marching_cubes(&grid, S::zero())?;
        mesh.recompute_normals();
        let verts = mesh.vertices.clone();
        mesh.colors = Some(verts.iter().map(|v| {
            let [r, g, b] = self.shade(*v);
            Vec3::new(r, g, b)
        }).collect());
        Ok(mesh)
    }
}

/// Ground-truth render of one camera: color image, exact camera-space
/// depth (0 background), and binary foreground mask.
pub struct GroundTruthView<S> {
    pub image: Image<S>,
    pub depth: Image<S>,
    pub mask: Image<S>,
}

pub fn render_ground_truth<S: Real>(
    scene: &AnalyticScene,
    camera: &Camera<S>,
) -> Result<GroundTruthView<S>> {
    let (w, h) = (camera.width, camera.height);
    let mut image = Image::filled(w, h, &scene.background.map(S::from_f64_));
    let mut depth = Image::new(w, h, 1);
    let mut mask = Image::new(w, h, 1);
    for row in 0..h {
        for col in 0..w {
            let ray = camera.ray_through(S::from_usize_(col) + S::half(), S::from_usize_(row) + S::half());
            if let Some((p, _)) = scene.trace(ray.origin, ray.direction, ray.t_near, ray.t_far) {
                image.pixel_mut(row, col).copy_from_slice(&scene.shade(p));
                depth.pixel_mut(row, col)[0] = camera.world_to_camera.apply(p).z;
                mask.pixel_mut(row, col)[0] = S::one();
            }
        }
    }
    Ok(GroundTruthView { image, depth, mask })
}

/// Ground-truth views for many cameras, packaged for training.
pub fn render_training_views<S: Real>(
    scene: &AnalyticScene,
    cameras: &[Camera<S>],
) -> Result<Vec<TrainView<S>>> {
    cameras
        .iter()
        .map(|cam| {
            let gt = render_ground_truth(scene, cam)?;
            Ok(TrainView {
                image: gt.image,
                mask: Some(gt.mask),
                camera: cam.clone(),
            })
        })
        .collect()
}

/// `count` cameras distributed round-robin over latitude circles (in
/// degrees), each looking at the origin from `radius` away.
#[allow(clippy::too_many_arguments)]
pub fn make_camera_ring<S: Real>(
    count: usize,
    radius: f64,
    latitudes_deg: &[f64],
    focal: f64,
    width: usize,
    height: usize,
    near: f64,
    far: f64,
) -> Result<Vec<Camera<S>>> {
    if count < 2 {
        return Err(Error::invalid("camera ring needs at least two cameras"));
    }
    if latitudes_deg.is_empty() {
        return Err(Error::invalid("camera ring needs at least one latitude"));
    }
    let n_lat = latitudes_deg.len();
    let mut cameras = Vec::with_capacity(count);
    for li in 0..n_lat {
        let n_here = count / n_lat + usize::from(li < count % n_lat);
        let lat = latitudes_deg[li].to_radians();
        for i in 0..n_here {
            // stagger rings by half a step so cameras never align vertically
            let az = 2.0 * std::f64::consts::PI * (i as f64 + 0.5 * li as f64) / n_here as f64;
            let eye = Vec3::new(
                S::from_f64_(radius * lat.cos() * az.cos()),
                S::from_f64_(radius * lat.sin()),
                S::from_f64_(radius * lat.cos() * az.sin()),
            );
            cameras.push(Camera::look_at(
                eye,
                Vec3::zero(),
                Vec3::new(S::zero(), S::one(), S::zero()),
                S::from_f64_(focal),
                S::from_f64_(focal),
                width,
                height,
                S::from_f64_(near),
                S::from_f64_(far),
            )?);
        }
    }
    Ok(cameras)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_facing_away_sees_background_only() {
        let scene = AnalyticScene::default();
        // look outward from beyond the sphere
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(0.0, 1.0, 0.0),
            32.0,
            32.0,
            32,
            32,
            0.01,
            10.0,
        )
        .unwrap();
        let gt = render_ground_truth(&scene, &cam).unwrap();
        assert!(gt.mask.data.iter().all(|&v| v == 0.0));
        assert!(gt.depth.data.iter().all(|&v| v == 0.0));
        for row in 0..32 {
            for col in 0..32 {
                assert_eq!(gt.image.pixel(row, col), [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn sphere_center_pixel_depth_is_closed_form() {
        let scene = AnalyticScene::default();
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, -3.0),
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            64.0,
            64.0,
            65,
            65,
            0.01,
            10.0,
        )
        .unwrap();
        // odd resolution puts the center of pixel (32, 32) exactly on
        // the principal axis
        let gt = render_ground_truth(&scene, &cam).unwrap();
        let d: f64 = gt.depth.pixel(32, 32)[0];
        assert!((d - (3.0 - 0.5)).abs() < 1e-4, "center depth {d}");
    }

    #[test]
    fn light_facing_pole_shades_to_full_intensity() {
        let mut scene = AnalyticScene::default();
        scene.light_dir = [0.0, 0.0, -1.0];
        scene.ambient = 0.0;
        let p: Vec3<f64> = Vec3::new(0.0, 0.0, -0.5); // pole facing the light
        let c = scene.shade(p);
        // albedo 0.8 * (n . l = 1) * intensity 1
        for ch in c {
            assert!((ch - 0.8).abs() < 1e-4, "{ch}");
        }
    }

    #[test]
    fn depth_matches_fine_ray_marching() {
        let scene = AnalyticScene::capsule_torso();
        let cam = Camera::look_at(
            Vec3::new(0.4, 0.3, -2.5),
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            32.0,
            32.0,
            32,
            32,
            0.01,
            10.0,
        )
        .unwrap();
        let gt = render_ground_truth::<f64>(&scene, &cam).unwrap();
        let mut checked = 0;
        for row in 0..32 {
            for col in 0..32 {
                let d = gt.depth.pixel(row, col)[0];
                if d == 0.0 {
                    continue;
                }
                // brute-force march with tiny fixed steps
                let ray = cam.ray_through(col as f64 + 0.5, row as f64 + 0.5);
                let mut t = ray.t_near;
                let mut hit = None;
                while t < ray.t_far {
                    if scene.sdf(ray.at(t)) < 1e-6 {
                        hit = Some(t);
                        break;
                    }
                    t += 1e-4_f64.min(scene.sdf(ray.at(t)).max(1e-5) * 0.1);
                }
                let Some(th) = hit else { continue };
                let z = cam.world_to_camera.apply(ray.at(th)).z;
                assert!((d - z).abs() < 1e-4, "({row},{col}): {d} vs {z}");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn four_camera_ring_at_equator() {
        let cams = make_camera_ring::<f64>(4, 3.0, &[0.0], 32.0, 32, 32, 0.1, 10.0).unwrap();
        assert_eq!(cams.len(), 4);
        for (i, c) in cams.iter().enumerate() {
            // optical axis passes through the origin
            let (u, v, z) = c.project(Vec3::zero());
            assert!((u - 16.0).abs() < 1e-9 && (v - 16.0).abs() < 1e-9 && z > 0.0);
            // 90 degree spacing
            let next = &cams[(i + 1) % 4];
            let cosang = c.forward().dot(next.forward());
            assert!(cosang.abs() < 1e-9, "spacing cos {cosang}");
        }
    }

    #[test]
    fn two_latitude_ring_has_distinct_directions() {
        let cams = make_camera_ring::<f64>(36, 3.0, &[-20.0, 20.0], 32.0, 32, 32, 0.1, 10.0)
            .unwrap();
        assert_eq!(cams.len(), 36);
        let mut min_ang = f64::INFINITY;
        for i in 0..36 {
            for j in i + 1..36 {
                let cosang = cams[i]
                    .forward()
                    .dot(cams[j].forward())
                    .clamp(-1.0, 1.0);
                min_ang = min_ang.min(cosang.acos());
            }
        }
        assert!(min_ang > 1e-3, "min angular spacing {min_ang}");
    }

    #[test]
    fn ring_cameras_round_trip_the_origin() {
        let cams = make_camera_ring::<f64>(8, 2.5, &[10.0], 48.0, 48, 48, 0.1, 10.0).unwrap();
        for c in &cams {
            let (u, v, z) = c.project(Vec3::zero());
            let back = c.unproject(u, v, z);
            assert!(back.norm() < 1e-9);
        }
    }

    #[test]
    fn torso_mesh_extraction_is_watertight_enough() {
        let scene = AnalyticScene::capsule_torso();
        let mesh: TriMesh<f64> = scene.extract_mesh(48, 0.8).unwrap();
        assert!(mesh.vertices.len() > 500);
        assert!(mesh.colors.as_ref().unwrap().len() == mesh.vertices.len());
        // every vertex sits near the zero level set
        for v in &mesh.vertices {
            assert!(scene.sdf(*v).abs() < 0.05);
        }
    }
}
