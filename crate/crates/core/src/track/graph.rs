//! Embedded-deformation graph: greedy Y-sorted node sampling, compactly
//! supported skinning weights, and node connectivity derived from shared
//! vertex influence.

use crate::error::{Error, Result};
use crate::geom::{PointGrid, TriMesh, Vec3};
use crate::scalar::Real;
use std::collections::BTreeSet;

/// Default node influence radius in scene units.
pub const DEFAULT_NODE_RADIUS: f64 = 0.075;

/// Deformation-node graph over a canonical mesh. Node positions live in
/// canonical space; every mesh vertex carries a normalized list of
/// influencing nodes.
#[derive(Debug, Clone)]
pub struct EdGraph<S> {
    /// Node positions in canonical space.
    pub nodes: Vec<Vec3<S>>,
    /// Influence radius shared by all nodes.
    pub radius: S,
    /// Undirected edges (i < j) between nodes influencing a common vertex.
    pub edges: Vec<(usize, usize)>,
    /// Per mesh vertex: (node index, normalized weight) pairs, weights sum to 1.
    pub vertex_neighbors: Vec<Vec<(usize, S)>>,
}

/// Influence radius derived from mesh resolution: mean edge length times
/// a compression ratio.
pub fn radius_from_ratio<S: Real>(mesh: &TriMesh<S>, ratio: S) -> S {
    mesh.mean_edge_length() * ratio
}

/// Compactly supported kernel (1 - d^2/r^2)^3 for d < r, else 0.
fn kernel<S: Real>(d_sq: S, r_sq: S) -> S {
    let q = S::one() - d_sq / r_sq;
    if q > S::zero() {
        q * q * q
    } else {
        S::zero()
    }
}

/// Unnormalized influence weights of each graph node on point `v`,
/// normalized to sum 1; a point outside every node's support attaches to
/// the nearest node with weight 1.
pub fn skinning_weights<S: Real>(
    nodes: &[Vec3<S>],
    index: &PointGrid<S>,
    radius: S,
    v: Vec3<S>,
) -> Vec<(usize, S)> {
    let r_sq = radius * radius;
    let mut out = Vec::new();
    let mut total = S::zero();
    for (i, x) in nodes.iter().enumerate() {
        let w = kernel((v - *x).norm_sq(), r_sq);
        if w > S::zero() {
            out.push((i, w));
            total += w;
        }
    }
    if out.is_empty() {
        let (i, _) = index.nearest(v);
        return vec![(i, S::one())];
    }
    for (_, w) in out.iter_mut() {
        *w /= total;
    }
    out
}

/// Samples deformation nodes by scanning vertices in ascending-Y order
/// (index tie-break) and greedily accepting any vertex at least `radius`
/// from all accepted nodes, then builds per-vertex weights and node edges.
pub fn sample_ed_nodes<S: Real>(mesh: &TriMesh<S>, radius: S) -> Result<EdGraph<S>> {
    if mesh.vertices.is_empty() {
        return Err(Error::invalid("cannot sample deformation nodes on an empty mesh"));
    }
    if !(radius > S::zero()) {
        return Err(Error::invalid("node radius must be positive"));
    }
    let mut order: Vec<usize> = (0..mesh.vertices.len()).collect();
    order.sort_by(|&a, &b| {
        mesh.vertices[a]
            .y
            .partial_cmp(&mesh.vertices[b].y)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let r_sq = radius * radius;
    let mut nodes: Vec<Vec3<S>> = Vec::new();
    for &vi in &order {
        let v = mesh.vertices[vi];
        if nodes.iter().all(|x| (v - *x).norm_sq() >= r_sq) {
            nodes.push(v);
        }
    }
    let index = PointGrid::build(nodes.clone());
    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut vertex_neighbors = Vec::with_capacity(mesh.vertices.len());
    for v in &mesh.vertices {
        let nbrs = skinning_weights(&nodes, &index, radius, *v);
        for a in 0..nbrs.len() {
            for b in a + 1..nbrs.len() {
                let (i, j) = (nbrs[a].0, nbrs[b].0);
                edge_set.insert((i.min(j), i.max(j)));
            }
        }
        vertex_neighbors.push(nbrs);
    }
    Ok(EdGraph {
        nodes,
        radius,
        edges: edge_set.into_iter().collect(),
        vertex_neighbors,
    })
}

impl<S: Real> EdGraph<S> {
    /// Weights of this graph's nodes on an arbitrary point.
    pub fn weights_at(&self, v: Vec3<S>) -> Vec<(usize, S)> {
        let index = PointGrid::build(self.nodes.clone());
        skinning_weights(&self.nodes, &index, self.radius, v)
    }

    /// Same connectivity and weights with node positions moved to
    /// `positions` (e.g. advected into a live frame).
    pub fn with_node_positions(&self, positions: Vec<Vec3<S>>) -> Result<Self> {
        if positions.len() != self.nodes.len() {
            return Err(Error::shape(format!(
                "node position count {} != graph node count {}",
                positions.len(),
                self.nodes.len()
            )));
        }
        Ok(EdGraph {
            nodes: positions,
            radius: self.radius,
            edges: self.edges.clone(),
            vertex_neighbors: self.vertex_neighbors.clone(),
        })
    }
}
