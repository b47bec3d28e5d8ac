//! Scalar grids and marching-cubes isosurface extraction.

use super::linear::Vec3;
use super::mc_tables::{EDGE_TABLE, TRI_TABLE};
use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;
use std::collections::HashMap;

/// Scalar samples at the nodes of a regular axis-aligned grid.
#[derive(Debug, Clone)]
pub struct ScalarGrid<S> {
    /// Node counts per axis (>= 2 for marching cubes).
    pub resolution: [usize; 3],
    pub lo: Vec3<S>,
    pub hi: Vec3<S>,
    /// Node values, x fastest: index = i + nx*(j + ny*k).
    pub values: Vec<S>,
}

impl<S: Real> ScalarGrid<S> {
    pub fn new(resolution: [usize; 3], lo: Vec3<S>, hi: Vec3<S>, values: Vec<S>) -> Result<Self> {
        let count = resolution[0] * resolution[1] * resolution[2];
        if values.len() != count {
            return Err(Error::shape(format!(
                "grid expects {count} values, got {}",
                values.len()
            )));
        }
        Ok(ScalarGrid {
            resolution,
            lo,
            hi,
            values,
        })
    }

    /// Sample a function at every grid node.
    pub fn from_fn(
        resolution: [usize; 3],
        lo: Vec3<S>,
        hi: Vec3<S>,
        f: impl Fn(Vec3<S>) -> S,
    ) -> Self {
        let [nx, ny, nz] = resolution;
        let mut values = Vec::with_capacity(nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(Self::node_pos_static(resolution, lo, hi, i, j, k)));
                }
            }
        }
        ScalarGrid {
            resolution,
            lo,
            hi,
            values,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> S {
        self.values[self.idx(i, j, k)]
    }

    fn node_pos_static(
        resolution: [usize; 3],
        lo: Vec3<S>,
        hi: Vec3<S>,
        i: usize,
        j: usize,
        k: usize,
    ) -> Vec3<S> {
        let t = Vec3::new(
            S::from_usize_(i) / S::from_usize_(resolution[0] - 1),
            S::from_usize_(j) / S::from_usize_(resolution[1] - 1),
            S::from_usize_(k) / S::from_usize_(resolution[2] - 1),
        );
        lo + (hi - lo).mul_elem(t)
    }

    pub fn node_pos(&self, i: usize, j: usize, k: usize) -> Vec3<S> {
        Self::node_pos_static(self.resolution, self.lo, self.hi, i, j, k)
    }

    pub fn spacing(&self) -> Vec3<S> {
        let d = self.hi - self.lo;
        Vec3::new(
            d.x / S::from_usize_(self.resolution[0] - 1),
            d.y / S::from_usize_(self.resolution[1] - 1),
            d.z / S::from_usize_(self.resolution[2] - 1),
        )
    }

    /// Trilinear interpolation of the grid at an arbitrary point (clamped
    /// to the bounds). Used by tests to verify extracted vertices.
    pub fn sample(&self, p: Vec3<S>) -> S {
        let [nx, ny, nz] = self.resolution;
        let ext = self.hi - self.lo;
        let mut u = [S::zero(); 3];
        let rel = p - self.lo;
        let rels = [rel.x / ext.x, rel.y / ext.y, rel.z / ext.z];
        let cells = [nx - 1, ny - 1, nz - 1];
        let mut base = [0usize; 3];
        for a in 0..3 {
            let s = (rels[a].max(S::zero()).min(S::one())) * S::from_usize_(cells[a]);
            let c = s.floor().to_f64_() as usize;
            let c = c.min(cells[a] - 1);
            base[a] = c;
            u[a] = s - S::from_usize_(c);
        }
        let mut acc = S::zero();
        for corner in 0..8usize {
            let mut w = S::one();
            let mut idx = [0usize; 3];
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    w *= u[a];
                    idx[a] = base[a] + 1;
                } else {
                    w *= S::one() - u[a];
                    idx[a] = base[a];
                }
            }
            acc += w * self.value(idx[0], idx[1], idx[2]);
        }
        acc
    }
}

// Bourke cube corner offsets (x, y, z).
const CORNER: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGE_ENDS: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extract the `iso` level set as an indexed mesh with vertices shared
/// along cell edges.
pub fn marching_cubes<S: Real>(grid: &ScalarGrid<S>, iso: S) -> Result<TriMesh<S>> {
    let [nx, ny, nz] = grid.resolution;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::invalid("marching cubes needs resolution >= 2 per axis"));
    }
    let mut vertices: Vec<Vec3<S>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // global edge key: (node index, axis)
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();
    let node = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut corner_val = [S::zero(); 8];
                let mut case = 0usize;
                for (c, off) in CORNER.iter().enumerate() {
                    let v = grid.value(i + off[0], j + off[1], k + off[2]);
                    corner_val[c] = v;
                    if v < iso {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut edge_to_index = [usize::MAX; 12];
                for (e, ends) in EDGE_ENDS.iter().enumerate() {
                    if EDGE_TABLE[case] >> e & 1 == 0 {
                        continue;
                    }
                    let (a, b) = (ends[0], ends[1]);
                    let oa = CORNER[a];
                    let ob = CORNER[b];
                    // canonical key: lower-index node + axis of travel
                    let axis = (0..3).find(|&ax| oa[ax] != ob[ax]).unwrap() as u8;
                    let lower = if oa[axis as usize] < ob[axis as usize] {
                        oa
                    } else {
                        ob
                    };
                    let key = (node(i + lower[0], j + lower[1], k + lower[2]), axis);
                    let vi = *edge_vertex.entry(key).or_insert_with(|| {
                        let (va, vb) = (corner_val[a], corner_val[b]);
                        let pa = grid.node_pos(i + oa[0], j + oa[1], k + oa[2]);
                        let pb = grid.node_pos(i + ob[0], j + ob[1], k + ob[2]);
                        let denom = vb - va;
                        let t = if denom.abs() < S::from_f64_(1e-30) {
                            S::half()
                        } else {
                            ((iso - va) / denom).max(S::zero()).min(S::one())
                        };
                        vertices.push(pa + (pb - pa) * t);
                        vertices.len() - 1
                    });
                    edge_to_index[e] = vi;
                }
                let tris = &TRI_TABLE[case];
                let mut t = 0;
                while tris[t] >= 0 {
                    let f = [
                        edge_to_index[tris[t] as usize],
                        edge_to_index[tris[t + 1] as usize],
                        edge_to_index[tris[t + 2] as usize],
                    ];
                    // dedup can collapse a sliver triangle
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        faces.push(f);
                    }
                    t += 3;
                }
            }
        }
    }
    let mut mesh = TriMesh {
        vertices,
        faces,
        normals: None,
        uvs: None,
        colors: None,
    };
    if !mesh.is_empty() {
        mesh.recompute_normals();
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn constant_grid_gives_empty_mesh() {
        let g = ScalarGrid::from_fn(
            [8, 8, 8],
            Vec3::new(-1.0f64, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |_| 1.0,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn plane_vertices_lie_on_plane() {
        let g = ScalarGrid::from_fn(
            [9, 9, 9],
            Vec3::new(-1.0f64, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.z,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(!m.is_empty());
        for v in &m.vertices {
            assert!(v.z.abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_mesh_close_to_analytic_sphere() {
        let res = 64usize;
        let g = ScalarGrid::from_fn(
            [res, res, res],
            Vec3::new(-1.0f64, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.norm() - 0.5,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        let spacing = 2.0 / (res as f64 - 1.0);
        assert!(!m.is_empty());
        for v in &m.vertices {
            assert!((v.norm() - 0.5).abs() < spacing, "vertex off sphere");
        }
    }

    #[test]
    fn sphere_mesh_is_watertight() {
        // every edge of a closed surface is shared by exactly two faces;
        // this catches table typos effectively
        let g = ScalarGrid::from_fn(
            [24, 24, 24],
            Vec3::new(-1.0f64, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.norm() - 0.5,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &m.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (&e, &c) in &edge_count {
            assert_eq!(c, 2, "edge {e:?} shared by {c} faces");
        }
    }

    #[test]
    fn vertices_interpolate_to_iso() {
        let g = ScalarGrid::from_fn(
            [16, 16, 16],
            Vec3::new(-1.0f64, -1.0, -1.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.norm_sq() - 0.4,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        for v in &m.vertices {
            assert!(v.x >= -1.0 && v.x <= 1.0);
            // vertex lies on a grid edge so trilinear sample is the
            // linear interpolation along that edge
            assert!(g.sample(*v).abs() < 1e-6);
        }
    }

    #[test]
    fn minimal_two_node_grid() {
        let g = ScalarGrid::from_fn(
            [2, 2, 2],
            Vec3::new(0.0f64, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            |p| p.x - 0.5,
        );
        let m = marching_cubes(&g, 0.0).unwrap();
        assert!(!m.is_empty());
        assert!(m.faces.len() <= 12);
    }
}
