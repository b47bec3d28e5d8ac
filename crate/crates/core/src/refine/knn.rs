//! Uniform k-nearest-neighbor lookup volume over live-space deformation
//! nodes, plus the blended-inverse backward warp built on it.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;
use crate::track::WarpField;

/// Precomputed per-voxel k-nearest deformation nodes over an axis-aligned
/// live-space box. Lists are sorted by distance from the voxel center.
#[derive(Debug, Clone)]
pub struct KnnVolume<S> {
    lo: Vec3<S>,
    hi: Vec3<S>,
    dims: [usize; 3],
    k: usize,
    /// Live-space node positions the volume was built from.
    nodes: Vec<Vec3<S>>,
    /// Per voxel: (node index, distance to voxel center), ascending.
    entries: Vec<Vec<(u32, S)>>,
}

/// Builds the exact per-voxel KNN table by scanning all nodes for each
/// voxel center. `k` is clamped to the node count when fewer exist.
pub fn build_knn_volume<S: Real>(
    nodes: &[Vec3<S>],
    lo: Vec3<S>,
    hi: Vec3<S>,
    resolution: [usize; 3],
    k: usize,
) -> Result<KnnVolume<S>> {
    if nodes.is_empty() {
        return Err(Error::invalid("knn volume needs at least one node"));
    }
    if resolution.iter().any(|&r| r == 0) {
        return Err(Error::invalid("knn volume resolution must be positive"));
    }
    if k == 0 {
        return Err(Error::invalid("knn volume needs k >= 1"));
    }
    let k = k.min(nodes.len());
    let mut entries = Vec::with_capacity(resolution[0] * resolution[1] * resolution[2]);
    let step = |a: S, b: S, n: usize| (b - a) / S::from_usize_(n);
    let sx = step(lo.x, hi.x, resolution[0]);
    let sy = step(lo.y, hi.y, resolution[1]);
    let sz = step(lo.z, hi.z, resolution[2]);
    let mut scratch: Vec<(S, u32)> = Vec::with_capacity(nodes.len());
    for iz in 0..resolution[2] {
        for iy in 0..resolution[1] {
            for ix in 0..resolution[0] {
                let c = Vec3::new(
                    lo.x + (S::from_usize_(ix) + S::half()) * sx,
                    lo.y + (S::from_usize_(iy) + S::half()) * sy,
                    lo.z + (S::from_usize_(iz) + S::half()) * sz,
                );
                scratch.clear();
                for (ni, x) in nodes.iter().enumerate() {
                    scratch.push(((*x - c).norm(), ni as u32));
                }
                let cmp = |a: &(S, u32), b: &(S, u32)| {
                    a.0.partial_cmp(&b.0)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.1.cmp(&b.1))
                };
                if k < scratch.len() {
                    scratch.select_nth_unstable_by(k - 1, cmp);
                    scratch.truncate(k);
                }
                scratch.sort_by(cmp);
                entries.push(scratch.iter().map(|&(d, i)| (i, d)).collect());
            }
        }
    }
    Ok(KnnVolume {
        lo,
        hi,
        dims: resolution,
        k,
        nodes: nodes.to_vec(),
        entries,
    })
}

impl<S: Real> KnnVolume<S> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn nodes(&self) -> &[Vec3<S>] {
        &self.nodes
    }

    pub fn bounds(&self) -> (Vec3<S>, Vec3<S>) {
        (self.lo, self.hi)
    }

    fn voxel_index(&self, p: Vec3<S>) -> Result<usize> {
        let rel = p - self.lo;
        let ext = self.hi - self.lo;
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let f = (rel[a] / ext[a]).to_f64_();
            if !(-1e-9..=1.0 + 1e-9).contains(&f) {
                return Err(Error::invalid(format!(
                    "point outside knn volume bounds on axis {a}"
                )));
            }
            idx[a] = ((f * self.dims[a] as f64) as usize).min(self.dims[a] - 1);
        }
        Ok(idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2]))
    }

    /// The voxel's k nearest (node index, center distance) pairs.
    pub fn query(&self, p: Vec3<S>) -> Result<&[(u32, S)]> {
        Ok(&self.entries[self.voxel_index(p)?])
    }
}

/// Warps a live-space point back to canonical space by blending the
/// inverse transforms of its voxel's nearest nodes. Influence weights
/// use the skinning kernel on live-space distances; a point outside all
/// supports falls back to the nearest node's inverse alone.
pub fn backward_warp<S: Real>(
    p_live: Vec3<S>,
    volume: &KnnVolume<S>,
    radius: S,
    field: &WarpField<S>,
) -> Result<Vec3<S>> {
    let neighbors = volume.query(p_live)?;
    let r_sq = radius * radius;
    let mut total = S::zero();
    let mut out = Vec3::zero();
    let mut nearest = (S::infinity(), 0usize);
    for &(ni, _) in neighbors {
        let ni = ni as usize;
        let d_sq = (p_live - volume.nodes[ni]).norm_sq();
        if d_sq < nearest.0 {
            nearest = (d_sq, ni);
        }
        let q = S::one() - d_sq / r_sq;
        if q > S::zero() {
            let w = q * q * q;
            out += field.transforms[ni].inverse().apply(p_live) * w;
            total += w;
        }
    }
    if total > S::zero() {
        Ok(out / total)
    } else {
        Ok(field.transforms[nearest.1].inverse().apply(p_live))
    }
}
