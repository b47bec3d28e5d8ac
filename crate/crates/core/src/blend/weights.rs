//! Per-pixel blending weights for two warped source views and the final
//! composition against the mesh-colored fallback.

use super::warp::WarpedView;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::scalar::Real;

/// Per-pixel weight pair; invariant `w1, w2 >= 0` and `w1 + w2 <= 1`.
#[derive(Debug, Clone)]
pub struct BlendWeights<S> {
    pub w1: Image<S>,
    pub w2: Image<S>,
}

impl<S: Real> BlendWeights<S> {
    /// Bilinear upsample of both planes to a higher resolution.
    pub fn upsampled(&self, width: usize, height: usize) -> BlendWeights<S> {
        let up = |img: &Image<S>| {
            let mut out = Image::new(width, height, 1);
            let sx = img.width as f64 / width as f64;
            let sy = img.height as f64 / height as f64;
            for row in 0..height {
                for col in 0..width {
                    let u = ((col as f64 + 0.5) * sx - 0.5).clamp(0.0, img.width as f64 - 1.0);
                    let v = ((row as f64 + 0.5) * sy - 0.5).clamp(0.0, img.height as f64 - 1.0);
                    let c0 = u.floor() as usize;
                    let r0 = v.floor() as usize;
                    let c1 = (c0 + 1).min(img.width - 1);
                    let r1 = (r0 + 1).min(img.height - 1);
                    let fu = S::from_f64_(u - c0 as f64);
                    let fv = S::from_f64_(v - r0 as f64);
                    out.pixel_mut(row, col)[0] = img.pixel(r0, c0)[0]
                        * (S::one() - fu)
                        * (S::one() - fv)
                        + img.pixel(r0, c1)[0] * fu * (S::one() - fv)
                        + img.pixel(r1, c0)[0] * (S::one() - fu) * fv
                        + img.pixel(r1, c1)[0] * fu * fv;
                }
            }
            out
        };
        BlendWeights {
            w1: up(&self.w1),
            w2: up(&self.w2),
        }
    }
}

/// Everything a weight model sees for one source view.
pub struct ViewInputs<'a, S> {
    pub warped: &'a WarpedView<S>,
    pub occlusion: &'a Image<S>,
    /// Constant per-view preference in [0, 1], typically derived from the
    /// angle between the source and target optical axes.
    pub angle_preference: S,
}

/// Pluggable weight model; the default is the deterministic
/// occlusion/angle provider below, but any learned model satisfying the
/// same contract can slot in.
pub trait WeightProvider<S: Real> {
    fn weights(&self, v1: &ViewInputs<S>, v2: &ViewInputs<S>) -> Result<BlendWeights<S>>;
}

/// Deterministic provider: per-view score
/// `validity * exp(-|O| / tau) * angle_preference`, normalized so the
/// pair sums to at most one. Pixels where both views are invalid or
/// heavily occluded fall back to the mesh color in [`compose`].
pub struct OcclusionWeightProvider {
    pub tau: f64,
}

impl OcclusionWeightProvider {
    /// Occlusion tolerance from the mesh scale: twice the mean triangle
    /// edge length.
    pub fn from_mesh_scale(mean_edge_length: f64) -> Self {
        OcclusionWeightProvider {
            tau: 2.0 * mean_edge_length,
        }
    }
}

impl<S: Real> WeightProvider<S> for OcclusionWeightProvider {
    fn weights(&self, v1: &ViewInputs<S>, v2: &ViewInputs<S>) -> Result<BlendWeights<S>> {
        let (w, h) = (v1.occlusion.width, v1.occlusion.height);
        if v2.occlusion.width != w
            || v2.occlusion.height != h
            || v1.warped.validity.width != w
            || v2.warped.validity.width != w
        {
            return Err(Error::shape("blend weight inputs disagree in resolution".to_string()));
        }
        let tau = S::from_f64_(self.tau.max(1e-12));
        let mut w1 = Image::new(w, h, 1);
        let mut w2 = Image::new(w, h, 1);
        for row in 0..h {
            for col in 0..w {
                let score = |v: &ViewInputs<S>| {
                    v.warped.validity.pixel(row, col)[0]
                        * (-v.occlusion.pixel(row, col)[0].abs() / tau).exp()
                        * v.angle_preference
                };
                let s1 = score(v1);
                let s2 = score(v2);
                let norm = (s1 + s2).max(S::one());
                w1.pixel_mut(row, col)[0] = s1 / norm;
                w2.pixel_mut(row, col)[0] = s2 / norm;
            }
        }
        Ok(BlendWeights { w1, w2 })
    }
}

/// Convenience wrapper applying a provider to two warped views.
pub fn blend_weights<S: Real, P: WeightProvider<S>>(
    v1: &ViewInputs<S>,
    v2: &ViewInputs<S>,
    provider: &P,
) -> Result<BlendWeights<S>> {
    provider.weights(v1, v2)
}

/// Final composition
/// `I = w1 * I1 + w2 * I2 + (1 - w1 - w2) * I_mesh` per pixel.
pub fn compose<S: Real>(
    weights: &BlendWeights<S>,
    i1: &Image<S>,
    i2: &Image<S>,
    i_mesh: &Image<S>,
) -> Result<Image<S>> {
    let (w, h) = (i_mesh.width, i_mesh.height);
    for img in [&weights.w1, &weights.w2] {
        if img.width != w || img.height != h {
            return Err(Error::shape("compose weight resolution mismatch".to_string()));
        }
    }
    for img in [i1, i2] {
        if img.width != w || img.height != h || img.channels != 3 {
            return Err(Error::shape("compose image resolution mismatch".to_string()));
        }
    }
    let mut out = Image::new(w, h, 3);
    for row in 0..h {
        for col in 0..w {
            let a = weights.w1.pixel(row, col)[0];
            let b = weights.w2.pixel(row, col)[0];
            let rest = (S::one() - a - b).max(S::zero());
            let p1 = i1.pixel(row, col);
            let p2 = i2.pixel(row, col);
            let pm = i_mesh.pixel(row, col);
            let po = out.pixel_mut(row, col);
            for k in 0..3 {
                po[k] = a * p1[k] + b * p2[k] + rest * pm[k];
            }
        }
    }
    Ok(out)
}
