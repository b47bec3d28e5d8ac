//! Indexed triangle mesh, the shared currency between reconstruction,
//! tracking, and rendering.

use super::linear::Vec3;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh<S> {
    pub vertices: Vec<Vec3<S>>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3<S>>>,
    pub uvs: Option<Vec<[S; 2]>>,
    /// Optional per-vertex RGB in [0,1], used by the textured rasterizer.
    pub colors: Option<Vec<Vec3<S>>>,
}

impl<S: Real> TriMesh<S> {
    pub fn new(vertices: Vec<Vec3<S>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            faces,
            normals: None,
            uvs: None,
            colors: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f[0] >= n || f[1] >= n || f[2] >= n {
                return Err(Error::invalid(format!(
                    "face {fi} references vertex out of range (vertex count {n})"
                )));
            }
            if f[0] == f[1] && f[1] == f[2] {
                return Err(Error::invalid(format!("face {fi} is degenerate")));
            }
        }
        if let Some(ns) = &self.normals {
            if ns.len() != n {
                return Err(Error::shape("normal count != vertex count".to_string()));
            }
            let tol = S::from_f64_(1e-6);
            for (i, nv) in ns.iter().enumerate() {
                if (nv.norm() - S::one()).abs() > tol {
                    return Err(Error::invalid(format!("normal {i} is not unit length")));
                }
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    /// Area-weighted per-vertex normals recomputed from faces.
    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::zero(); self.vertices.len()];
        for f in &self.faces {
            let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
            let n = (b - a).cross(c - a); // magnitude = 2*area
            for &vi in f {
                acc[vi] += n;
            }
        }
        let up = Vec3::new(S::zero(), S::zero(), S::one());
        for n in acc.iter_mut() {
            let len = n.norm();
            *n = if len > S::from_f64_(1e-20) { *n / len } else { up };
        }
        self.normals = Some(acc);
    }

    pub fn bounds(&self) -> (Vec3<S>, Vec3<S>) {
        let mut lo = Vec3::splat(S::infinity());
        let mut hi = Vec3::splat(S::neg_infinity());
        for v in &self.vertices {
            lo = lo.min_elem(*v);
            hi = hi.max_elem(*v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> S {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn mean_edge_length(&self) -> S {
        let mut total = S::zero();
        let mut count = 0usize;
        for f in &self.faces {
            for (i, j) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                total += (self.vertices[i] - self.vertices[j]).norm();
                count += 1;
            }
        }
        if count == 0 {
            S::zero()
        } else {
            total / S::from_usize_(count)
        }
    }

    pub fn face_area(&self, f: &[usize; 3]) -> S {
        let (a, b, c) = (self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]);
        (b - a).cross(c - a).norm() * S::half()
    }

    pub fn cast<T: Real>(&self) -> TriMesh<T> {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| n.cast()).collect()),
            uvs: self.uvs.as_ref().map(|uv| {
                uv.iter()
                    .map(|[u, v]| [T::from_f64_(u.to_f64_()), T::from_f64_(v.to_f64_())])
                    .collect()
            }),
            colors: self
                .colors
                .as_ref()
                .map(|cs| cs.iter().map(|c| c.cast()).collect()),
        }
    }
}
