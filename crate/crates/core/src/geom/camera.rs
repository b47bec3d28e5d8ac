//! Pinhole camera model and ray generation.
//!
//! Camera space follows the computer-vision convention: +z forward,
//! +x right, +y down. Pixel (row, col) projects through its center at
//! (col + 0.5, row + 0.5).

use super::linear::{Mat3, RigidTransform, Vec3};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: usize,
    pub height: usize,
    pub world_to_camera: RigidTransform<S>,
    pub near: S,
    pub far: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<S> {
    pub origin: Vec3<S>,
    pub direction: Vec3<S>,
    pub t_near: S,
    pub t_far: S,
}

impl<S: Real> Ray<S> {
    pub fn new(origin: Vec3<S>, direction: Vec3<S>, t_near: S, t_far: S) -> Result<Self> {
        if (direction.norm() - S::one()).abs() > S::from_f64_(1e-9) {
            return Err(Error::invalid("ray direction must be unit length"));
        }
        if t_near >= t_far {
            return Err(Error::invalid("ray t_near must be < t_far"));
        }
        Ok(Ray {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    #[inline]
    pub fn at(&self, t: S) -> Vec3<S> {
        self.origin + self.direction * t
    }

    /// Intersection interval with a sphere, clipped to [t_near, t_far].
    pub fn intersect_sphere(&self, center: Vec3<S>, radius: S) -> Option<(S, S)> {
        let oc = self.origin - center;
        let b = oc.dot(self.direction);
        let c = oc.norm_sq() - radius * radius;
        let disc = b * b - c;
        if disc < S::zero() {
            return None;
        }
        let sq = disc.sqrt();
        let t0 = (-b - sq).max(self.t_near);
        let t1 = (-b + sq).min(self.t_far);
        if t0 < t1 {
            Some((t0, t1))
        } else {
            None
        }
    }
}

impl<S: Real> Camera<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: S,
        fy: S,
        cx: S,
        cy: S,
        width: usize,
        height: usize,
        world_to_camera: RigidTransform<S>,
        near: S,
        far: S,
    ) -> Result<Self> {
        if fx <= S::zero() || fy <= S::zero() {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if near >= far {
            return Err(Error::invalid("camera near must be < far"));
        }
        if !world_to_camera.rotation.is_orthonormal(S::from_f64_(1e-6)) {
            return Err(Error::invalid("camera rotation is not orthonormal"));
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            near,
            far,
        })
    }

    /// Camera that sits at `eye` and looks at `target` with `up` hint.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3<S>,
        target: Vec3<S>,
        up: Vec3<S>,
        fx: S,
        fy: S,
        width: usize,
        height: usize,
        near: S,
        far: S,
    ) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up).normalized();
        let down = forward.cross(right); // +y down in camera space
        // rows of R are the camera axes expressed in world coordinates
        let r = Mat3::from_rows(right, down, forward);
        let t = -r.mul_vec(eye);
        Camera::new(
            fx,
            fy,
            S::from_usize_(width) * S::half(),
            S::from_usize_(height) * S::half(),
            width,
            height,
            RigidTransform::new(r, t),
            near,
            far,
        )
    }

    pub fn center(&self) -> Vec3<S> {
        self.world_to_camera.inverse().translation
    }

    /// Optical axis direction in world space.
    pub fn forward(&self) -> Vec3<S> {
        self.world_to_camera.rotation.row(2)
    }

    /// Project a world point to (u, v, depth); depth is camera-space z.
    pub fn project(&self, p: Vec3<S>) -> (S, S, S) {
        let pc = self.world_to_camera.apply(p);
        (
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
            pc.z,
        )
    }

    /// World-space ray through continuous pixel coordinates (u, v).
    pub fn ray_through(&self, u: S, v: S) -> Ray<S> {
        let dc = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, S::one());
        let dw = self
            .world_to_camera
            .rotation
            .transpose()
            .mul_vec(dc)
            .normalized();
        Ray {
            origin: self.center(),
            direction: dw,
            t_near: self.near,
            t_far: self.far,
        }
    }

    /// World point at camera-space depth `z` along the pixel ray.
    pub fn unproject(&self, u: S, v: S, depth: S) -> Vec3<S> {
        let pc = Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        self.world_to_camera.inverse().apply(pc)
    }

    pub fn cast<T: Real>(&self) -> Camera<T> {
        Camera {
            fx: T::from_f64_(self.fx.to_f64_()),
            fy: T::from_f64_(self.fy.to_f64_()),
            cx: T::from_f64_(self.cx.to_f64_()),
            cy: T::from_f64_(self.cy.to_f64_()),
            width: self.width,
            height: self.height,
            world_to_camera: self.world_to_camera.cast(),
            near: T::from_f64_(self.near.to_f64_()),
            far: T::from_f64_(self.far.to_f64_()),
        }
    }
}

/// One ray per pixel index, through the pixel center.
pub fn generate_rays<S: Real>(
    camera: &Camera<S>,
    pixel_indices: &[(usize, usize)],
) -> Result<Vec<Ray<S>>> {
    let mut rays = Vec::with_capacity(pixel_indices.len());
    for &(row, col) in pixel_indices {
        if row >= camera.height || col >= camera.width {
            return Err(Error::invalid(format!(
                "pixel ({row}, {col}) outside {}x{} image",
                camera.width, camera.height
            )));
        }
        let u = S::from_usize_(col) + S::half();
        let v = S::from_usize_(row) + S::half();
        rays.push(camera.ray_through(u, v));
    }
    Ok(rays)
}
