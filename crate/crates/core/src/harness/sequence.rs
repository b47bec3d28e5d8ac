//! Parametric ground-truth deformation sequences for end-to-end tests.

use crate::error::{Error, Result};
use crate::geom::{TriMesh, Vec3};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Smooth invertible parametric warp; `s` in [0, 1] scales from identity
/// to full amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarpKind {
    /// Rotation about the x axis by `amplitude * s * y` radians.
    Bend { amplitude: f64 },
    /// Rotation about the y axis by `amplitude * s * y` radians.
    Twist { amplitude: f64 },
    Translate { offset: [f64; 3] },
}

impl WarpKind {
    pub fn apply<S: Real>(&self, p: Vec3<S>, s: f64) -> Vec3<S> {
        match self {
            WarpKind::Bend { amplitude } => {
                let a = S::from_f64_(amplitude * s) * p.y;
                Vec3::new(
                    p.x,
                    a.cos() * p.y - a.sin() * p.z,
                    a.sin() * p.y + a.cos() * p.z,
                )
            }
            WarpKind::Twist { amplitude } => {
                let a = S::from_f64_(amplitude * s) * p.y;
                Vec3::new(
                    a.cos() * p.x + a.sin() * p.z,
                    p.y,
                    -a.sin() * p.x + a.cos() * p.z,
                )
            }
            WarpKind::Translate { offset } => {
                p + Vec3::new(
                    S::from_f64_(offset[0] * s),
                    S::from_f64_(offset[1] * s),
                    S::from_f64_(offset[2] * s),
                )
            }
        }
    }
}

/// Canonical mesh plus per-frame ground-truth deformed copies.
#[derive(Debug, Clone)]
pub struct SyntheticSequence<S> {
    pub canonical: TriMesh<S>,
    pub frames: Vec<TriMesh<S>>,
    pub warp: WarpKind,
}

/// Builds an `n_frames` sequence; frame `f` is the canonical mesh warped
/// at strength `f / (n_frames - 1)` (frame 0 is the canonical pose).
pub fn make_sequence<S: Real>(
    canonical: TriMesh<S>,
    warp: WarpKind,
    n_frames: usize,
) -> Result<SyntheticSequence<S>> {
    if n_frames == 0 {
        return Err(Error::invalid("sequence needs at least one frame"));
    }
    let frames = (0..n_frames)
        .map(|f| {
            let s = if n_frames > 1 {
                f as f64 / (n_frames - 1) as f64
            } else {
                0.0
            };
            let mut m = canonical.clone();
            for v in &mut m.vertices {
                *v = warp.apply(*v, s);
            }
            m.recompute_normals();
            m
        })
        .collect();
    Ok(SyntheticSequence {
        canonical,
        frames,
        warp,
    })
}
