//! Virtual camera rig surrounding the subject and adjacent-view
//! selection for texture blending.

use crate::error::{Error, Result};
use crate::geom::{Camera, Vec3};
use crate::scalar::Real;

/// Ring of virtual viewpoints looking at the subject; six by default.
#[derive(Debug, Clone)]
pub struct VirtualRig<S> {
    pub cameras: Vec<Camera<S>>,
}

impl<S: Real> VirtualRig<S> {
    /// `count` cameras evenly spaced on a horizontal circle of `radius`
    /// at height `height`, all looking at `target`. Fails when a camera's
    /// field of view cannot contain the subject sphere of
    /// `subject_radius` around the target.
    #[allow(clippy::too_many_arguments)]
    pub fn surrounding(
        count: usize,
        target: Vec3<S>,
        radius: S,
        height: S,
        subject_radius: S,
        focal: S,
        width: usize,
        height_px: usize,
        near: S,
        far: S,
    ) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("a rig needs at least two cameras"));
        }
        let mut cameras = Vec::with_capacity(count);
        for i in 0..count {
            let ang = S::from_f64_(2.0 * std::f64::consts::PI) * S::from_usize_(i)
                / S::from_usize_(count);
            let eye = target + Vec3::new(radius * ang.cos(), height, radius * ang.sin());
            let cam = Camera::look_at(
                eye,
                target,
                Vec3::new(S::zero(), S::one(), S::zero()),
                focal,
                focal,
                width,
                height_px,
                near,
                far,
            )?;
            // the subject sphere must fit the frustum: its angular radius
            // against the half field of view in the tighter dimension
            let dist = (eye - target).norm();
            if subject_radius >= dist {
                return Err(Error::invalid("camera inside the subject sphere"));
            }
            let ang_subject = (subject_radius / dist).asin();
            let half_w = (S::from_usize_(width) * S::half() / focal).atan();
            let half_h = (S::from_usize_(height_px) * S::half() / focal).atan();
            if ang_subject > half_w.min(half_h) {
                return Err(Error::invalid(
                    "subject sphere exceeds the camera field of view",
                ));
            }
            cameras.push(cam);
        }
        Ok(VirtualRig { cameras })
    }
}

/// Indices of the two rig views whose optical axes are angularly closest
/// to the target camera's, nearest first; ties break to the lower index.
pub fn select_adjacent_views<S: Real>(
    rig: &VirtualRig<S>,
    target: &Camera<S>,
) -> Result<(usize, usize)> {
    if rig.cameras.len() < 2 {
        return Err(Error::invalid("rig must contain at least two cameras"));
    }
    let ft = target.forward();
    let mut scored: Vec<(f64, usize)> = rig
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let cosang = c.forward().dot(ft).to_f64_().clamp(-1.0, 1.0);
            (cosang.acos(), i)
        })
        .collect();
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((scored[0].1, scored[1].1))
}

/// Cosine-based preference in [0, 1] for blending: 1 when the source and
/// target axes align, 0 at ninety degrees or beyond.
pub fn angle_preference<S: Real>(source: &Camera<S>, target: &Camera<S>) -> S {
    source.forward().dot(target.forward()).max(S::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex_rig() -> VirtualRig<f64> {
        VirtualRig::surrounding(
            6,
            Vec3::zero(),
            3.0,
            0.0,
            0.8,
            64.0,
            64,
            64,
            0.1,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_subject_wider_than_the_frustum() {
        let r = VirtualRig::<f64>::surrounding(
            6,
            Vec3::zero(),
            3.0,
            0.0,
            2.9,
            64.0,
            64,
            64,
            0.1,
            10.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn coincident_target_selects_that_view_first() {
        let rig = hex_rig();
        for i in 0..6 {
            let (a, _) = select_adjacent_views(&rig, &rig.cameras[i]).unwrap();
            assert_eq!(a, i);
        }
    }

    #[test]
    fn midway_target_selects_the_straddling_pair() {
        let rig = hex_rig();
        // halfway between views 2 and 3 on the ring
        let ang = 2.0 * std::f64::consts::PI * 2.5 / 6.0;
        let target = Camera::look_at(
            Vec3::new(3.0 * ang.cos(), 0.0, 3.0 * ang.sin()),
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            64.0,
            64.0,
            64,
            64,
            0.1,
            10.0,
        )
        .unwrap();
        let (a, b) = select_adjacent_views(&rig, &target).unwrap();
        let mut pair = [a, b];
        pair.sort();
        assert_eq!(pair, [2, 3]);
    }

    #[test]
    fn selection_matches_brute_force_sort() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let rig = hex_rig();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let y: f64 = rng.gen_range(-1.0..1.0);
            let eye = Vec3::new(3.0 * theta.cos(), y, 3.0 * theta.sin());
            let target = Camera::look_at(
                eye,
                Vec3::zero(),
                Vec3::new(0.0, 1.0, 0.0),
                64.0,
                64.0,
                64,
                64,
                0.1,
                10.0,
            )
            .unwrap();
            let (a, b) = select_adjacent_views(&rig, &target).unwrap();
            let mut angles: Vec<(f64, usize)> = rig
                .cameras
                .iter()
                .enumerate()
                .map(|(i, c)| (c.forward().dot(target.forward()).clamp(-1.0, 1.0).acos(), i))
                .collect();
            angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
            assert_eq!((a, b), (angles[0].1, angles[1].1));
        }
    }

    #[test]
    fn all_axes_pass_through_the_target() {
        let rig = hex_rig();
        for c in &rig.cameras {
            // origin projects to the principal point
            let (u, v, z) = c.project(Vec3::zero());
            assert!((u - 32.0).abs() < 1e-9 && (v - 32.0).abs() < 1e-9 && z > 0.0);
        }
    }
}
