//! Per-frame warp fields: one rigid transform per deformation node,
//! linear-blend-skinning application, and a line-oriented text format.

use super::graph::EdGraph;
use crate::error::{Error, Result};
use crate::geom::{Quat, RigidTransform, TriMesh, Vec3};
use crate::scalar::Real;
use std::io::{BufRead, Write};
use std::path::Path;

/// Rigid transform per deformation node for one frame. Transforms map
/// canonical points straight into the frame: T(p) = R p + t.
#[derive(Debug, Clone)]
pub struct WarpField<S> {
    pub transforms: Vec<RigidTransform<S>>,
}

impl<S: Real> WarpField<S> {
    pub fn identity(n_nodes: usize) -> Self {
        WarpField {
            transforms: vec![RigidTransform::identity(); n_nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    /// Applies a stacked per-node increment (axis-angle rotation then
    /// translation, 6 values per node): R <- exp(dw) R, t <- t + dt.
    pub fn perturbed(&self, delta: &[S]) -> WarpField<S> {
        debug_assert_eq!(delta.len(), 6 * self.len());
        let transforms = self
            .transforms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let d = &delta[6 * i..6 * i + 6];
                let rot = crate::geom::Mat3::from_axis_angle(Vec3::new(d[0], d[1], d[2]));
                RigidTransform::new(
                    rot.mul_mat(&t.rotation),
                    t.translation + Vec3::new(d[3], d[4], d[5]),
                )
            })
            .collect();
        WarpField { transforms }
    }

    /// Re-orthonormalizes every rotation (applied after each solver step).
    pub fn orthonormalize(&mut self) {
        for t in &mut self.transforms {
            t.rotation = t.rotation.orthonormalized();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tol = S::from_f64_(1e-5);
        for (i, t) in self.transforms.iter().enumerate() {
            if !t.rotation.is_orthonormal(tol) {
                return Err(Error::invalid(format!(
                    "warp-field rotation {i} is not orthonormal"
                )));
            }
            if !t.translation.is_finite() {
                return Err(Error::invalid(format!(
                    "warp-field translation {i} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// Per-node composition: (outer ∘ self)_i = outer_i ∘ self_i.
    pub fn composed_with(&self, outer: &WarpField<S>) -> Result<WarpField<S>> {
        if outer.len() != self.len() {
            return Err(Error::shape(format!(
                "warp-field length mismatch: {} vs {}",
                outer.len(),
                self.len()
            )));
        }
        Ok(WarpField {
            transforms: self
                .transforms
                .iter()
                .zip(&outer.transforms)
                .map(|(inner, outer)| outer.compose(inner))
                .collect(),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# index qw qx qy qz tx ty tz")?;
        for (i, t) in self.transforms.iter().enumerate() {
            let q = Quat::from_mat3(&t.rotation);
            let tr = t.translation;
            writeln!(
                w,
                "{} {} {} {} {} {} {} {}",
                i,
                q.w.to_f64_(),
                q.x.to_f64_(),
                q.y.to_f64_(),
                q.z.to_f64_(),
                tr.x.to_f64_(),
                tr.y.to_f64_(),
                tr.z.to_f64_()
            )?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut transforms: Vec<(usize, RigidTransform<S>)> = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad warp-field token '{t}'")))
                })
                .collect::<Result<_>>()?;
            if f.len() != 8 {
                return Err(Error::invalid(format!(
                    "warp-field line needs 8 fields, got {}",
                    f.len()
                )));
            }
            let q = Quat {
                w: S::from_f64_(f[1]),
                x: S::from_f64_(f[2]),
                y: S::from_f64_(f[3]),
                z: S::from_f64_(f[4]),
            };
            transforms.push((
                f[0] as usize,
                RigidTransform::new(
                    q.to_mat3(),
                    Vec3::new(S::from_f64_(f[5]), S::from_f64_(f[6]), S::from_f64_(f[7])),
                ),
            ));
        }
        if transforms.is_empty() {
            return Err(Error::invalid("warp-field file contains no transforms"));
        }
        transforms.sort_by_key(|&(i, _)| i);
        for (slot, &(i, _)) in transforms.iter().enumerate() {
            if i != slot {
                return Err(Error::invalid(format!(
                    "warp-field node indices not contiguous at {i}"
                )));
            }
        }
        let field = WarpField {
            transforms: transforms.into_iter().map(|(_, t)| t).collect(),
        };
        field.validate()?;
        Ok(field)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

/// Warps a single canonical point by the blended node transforms.
pub fn lbs_warp_point<S: Real>(
    field: &WarpField<S>,
    neighbors: &[(usize, S)],
    p: Vec3<S>,
) -> Vec3<S> {
    let mut out = Vec3::zero();
    for &(i, w) in neighbors {
        out += field.transforms[i].apply(p) * w;
    }
    out
}

/// Linear blend skinning of the whole mesh: v' = Σ ω̂_i T_i(v), with
/// normals re-derived from the warped faces.
pub fn lbs_warp<S: Real>(
    mesh: &TriMesh<S>,
    graph: &EdGraph<S>,
    field: &WarpField<S>,
) -> Result<TriMesh<S>> {
    if field.len() != graph.nodes.len() {
        return Err(Error::shape(format!(
            "warp field has {} transforms for {} nodes",
            field.len(),
            graph.nodes.len()
        )));
    }
    if graph.vertex_neighbors.len() != mesh.vertices.len() {
        return Err(Error::shape(format!(
            "graph covers {} vertices but mesh has {}",
            graph.vertex_neighbors.len(),
            mesh.vertices.len()
        )));
    }
    let mut out = mesh.clone();
    for (v, nbrs) in out.vertices.iter_mut().zip(&graph.vertex_neighbors) {
        *v = lbs_warp_point(field, nbrs, *v);
    }
    out.recompute_normals();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::graph::sample_ed_nodes;
    use super::*;
    use crate::geom::Mat3;

    fn sheet_mesh(n: usize, spacing: f64) -> TriMesh<f64> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for i in 0..n {
            for j in 0..n {
                vertices.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let a = i * n + j;
                faces.push([a, a + 1, a + n]);
                faces.push([a + 1, a + n + 1, a + n]);
            }
        }
        TriMesh::new(vertices, faces).unwrap()
    }

    #[test]
    fn identity_field_is_exact_identity() {
        let mesh = sheet_mesh(6, 0.05);
        let graph = sample_ed_nodes(&mesh, 0.075).unwrap();
        let out = lbs_warp(&mesh, &graph, &WarpField::identity(graph.nodes.len())).unwrap();
        assert_eq!(out.vertices, mesh.vertices);
    }

    #[test]
    fn shared_rigid_transform_moves_every_vertex_exactly() {
        let mesh = sheet_mesh(6, 0.05);
        let graph = sample_ed_nodes(&mesh, 0.075).unwrap();
        let r = Mat3::from_axis_angle(Vec3::new(0.1, -0.2, 0.3));
        let t = Vec3::new(0.02, -0.01, 0.04);
        let rigid = RigidTransform::new(r, t);
        let mut field = WarpField::identity(graph.nodes.len());
        for tf in &mut field.transforms {
            *tf = rigid;
        }
        let out = lbs_warp(&mesh, &graph, &field).unwrap();
        for (v, v0) in out.vertices.iter().zip(&mesh.vertices) {
            assert!((*v - rigid.apply(*v0)).norm() < 1e-14);
        }
    }

    #[test]
    fn half_weighted_translation_moves_vertex_halfway() {
        let field = WarpField::<f64> {
            transforms: vec![
                RigidTransform::identity(),
                RigidTransform::new(Mat3::identity(), Vec3::new(0.01, 0.0, 0.0)),
            ],
        };
        let p = Vec3::new(0.3, 0.2, 0.1);
        let out = lbs_warp_point(&field, &[(0, 0.5), (1, 0.5)], p);
        assert!((out - (p + Vec3::new(0.005, 0.0, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn lbs_is_equivariant_under_global_rigid_motion() {
        let mesh = sheet_mesh(6, 0.05);
        let graph = sample_ed_nodes(&mesh, 0.09).unwrap();
        let mut field = WarpField::identity(graph.nodes.len());
        for (i, tf) in field.transforms.iter_mut().enumerate() {
            let s = i as f64 * 0.01;
            tf.rotation = Mat3::from_axis_angle(Vec3::new(s, -s, 0.5 * s));
            tf.translation = Vec3::new(0.01 * s, 0.02, -0.01);
        }
        let g = RigidTransform::new(
            Mat3::from_axis_angle(Vec3::new(0.2, 0.1, -0.3)),
            Vec3::new(0.5, -0.2, 0.1),
        );
        // warp then transform
        let warped = lbs_warp(&mesh, &graph, &field).unwrap();
        // transform the node transforms instead: T_i' = g ∘ T_i
        let mut gfield = field.clone();
        for tf in &mut gfield.transforms {
            *tf = g.compose(tf);
        }
        let gwarped = lbs_warp(&mesh, &graph, &gfield).unwrap();
        for (a, b) in warped.vertices.iter().zip(&gwarped.vertices) {
            assert!((g.apply(*a) - *b).norm() < 1e-6);
        }
    }

    #[test]
    fn text_round_trip_preserves_transforms() {
        let mut field = WarpField::<f64>::identity(3);
        field.transforms[1] = RigidTransform::new(
            Mat3::from_axis_angle(Vec3::new(0.3, 0.1, -0.2)),
            Vec3::new(1.5, -0.25, 0.75),
        );
        field.transforms[2] = RigidTransform::new(
            Mat3::from_axis_angle(Vec3::new(-0.05, 0.7, 0.2)),
            Vec3::new(0.0, 3.0, -1.0),
        );
        let mut buf = Vec::new();
        field.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# index qw qx qy qz tx ty tz"));
        let back = WarpField::<f64>::read_from(&mut std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in field.transforms.iter().zip(&back.transforms) {
            assert!(a.rotation.frobenius_dist(&b.rotation) < 1e-12);
            assert!((a.translation - b.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn malformed_warp_lines_are_rejected() {
        let bad = "0 1 0 0 0 0 0\n"; // 7 fields
        assert!(WarpField::<f64>::read_from(&mut std::io::Cursor::new(bad.as_bytes())).is_err());
        let gap = "0 1 0 0 0 0 0 0\n2 1 0 0 0 0 0 0\n"; // missing index 1
        assert!(WarpField::<f64>::read_from(&mut std::io::Cursor::new(gap.as_bytes())).is_err());
    }
}
