//! Non-rigid ICP ingredients: gated nearest-point correspondences and
//! the tracking energy (point + plane data terms, Huber-robust
//! as-rigid-as-possible regularizer) with its analytic sparse Jacobian.

use super::graph::EdGraph;
use super::warp::WarpField;
use crate::error::{Error, Result};
use crate::geom::{Mat3, PointGrid, TriMesh, Vec3};
use crate::scalar::Real;

/// One accepted vertex-to-target pairing.
#[derive(Debug, Clone, Copy)]
pub struct Correspondence<S> {
    /// Canonical/warped vertex index.
    pub vertex: usize,
    /// Matched target surface point.
    pub target: Vec3<S>,
    /// Unit normal at the target point.
    pub target_normal: Vec3<S>,
}

#[derive(Debug, Clone, Default)]
pub struct CorrespondenceSet<S> {
    pub pairs: Vec<Correspondence<S>>,
}

impl<S> CorrespondenceSet<S> {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

/// Pairs each warped vertex with its nearest target vertex, keeping
/// matches within `max_dist` whose normals agree within
/// `max_normal_angle_deg`.
pub fn find_correspondences<S: Real>(
    warped: &TriMesh<S>,
    target: &TriMesh<S>,
    max_dist: S,
    max_normal_angle_deg: S,
) -> Result<CorrespondenceSet<S>> {
    if warped.is_empty() || target.is_empty() {
        return Err(Error::invalid("correspondence search needs nonempty meshes"));
    }
    let mut warped_n = warped.clone();
    if warped_n.normals.is_none() {
        warped_n.recompute_normals();
    }
    let mut target_n = target.clone();
    if target_n.normals.is_none() {
        target_n.recompute_normals();
    }
    let wn = warped_n.normals.as_ref().unwrap();
    let tn = target_n.normals.as_ref().unwrap();
    let index = PointGrid::build(target.vertices.clone());
    let cos_gate = (max_normal_angle_deg * S::from_f64_(std::f64::consts::PI / 180.0)).cos();
    let max_sq = max_dist * max_dist;
    let mut pairs = Vec::new();
    for (vi, v) in warped.vertices.iter().enumerate() {
        let (ti, d_sq) = index.nearest(*v);
        if d_sq > max_sq {
            continue;
        }
        let normal = tn[ti];
        if wn[vi].dot(normal) < cos_gate {
            continue;
        }
        if !target.vertices[ti].is_finite() || !normal.is_finite() {
            continue;
        }
        pairs.push(Correspondence {
            vertex: vi,
            target: target.vertices[ti],
            target_normal: normal,
        });
    }
    Ok(CorrespondenceSet { pairs })
}

/// Term weights of the tracking energy.
#[derive(Debug, Clone, Copy)]
pub struct TrackWeights<S> {
    pub lambda_data: S,
    pub lambda_reg: S,
    pub lambda_point: S,
    pub lambda_plane: S,
    /// Huber switch point of the regularizer, in squared-length units.
    pub huber_threshold: S,
}

impl<S: Real> Default for TrackWeights<S> {
    fn default() -> Self {
        TrackWeights {
            lambda_data: S::one(),
            lambda_reg: S::from_f64_(20.0),
            lambda_point: S::from_f64_(0.2),
            lambda_plane: S::from_f64_(0.8),
            huber_threshold: S::from_f64_(1e-2),
        }
    }
}

/// Energy value with its stacked residual vector and row-sparse Jacobian.
/// Each Jacobian row lists (node index, 6 partials) blocks; the node
/// parameters are an axis-angle rotation increment followed by a
/// translation increment.
#[derive(Debug, Clone)]
pub struct EnergyEval<S> {
    pub energy: S,
    pub residuals: Vec<S>,
    pub jacobian: Vec<Vec<(usize, [S; 6])>>,
}

/// Huber penalty on the squared edge length: identity below the
/// threshold, square-root growth above. Returns (psi, gamma, dgamma/ds)
/// with gamma = sqrt(psi(s)/s) so that |gamma * d|^2 = psi(|d|^2).
fn huber_sqrt_weight<S: Real>(s: S, delta: S) -> (S, S, S) {
    let eps = S::from_f64_(1e-30);
    if s <= delta {
        (s, S::one(), S::zero())
    } else {
        let psi = S::two() * (delta * s).sqrt() - delta;
        let gamma = (psi / s).sqrt();
        let dpsi = (delta / s).sqrt();
        let dgamma = (dpsi * s - psi) / (S::two() * s * s * gamma.max(eps));
        (psi, gamma, dgamma)
    }
}

/// Evaluates the tracking energy, residuals, and analytic Jacobian for
/// one frame. `canonical` supplies the undeformed vertex positions the
/// correspondences refer to.
pub fn energy<S: Real>(
    field: &WarpField<S>,
    graph: &EdGraph<S>,
    canonical: &TriMesh<S>,
    corr: &CorrespondenceSet<S>,
    weights: &TrackWeights<S>,
) -> Result<EnergyEval<S>> {
    if field.len() != graph.nodes.len() {
        return Err(Error::shape(format!(
            "warp field has {} transforms for {} nodes",
            field.len(),
            graph.nodes.len()
        )));
    }
    let n_rows = 4 * corr.len() + 6 * graph.edges.len();
    let mut residuals = Vec::with_capacity(n_rows);
    let mut jacobian: Vec<Vec<(usize, [S; 6])>> = Vec::with_capacity(n_rows);

    let sp = (weights.lambda_data * weights.lambda_point).sqrt();
    let spl = (weights.lambda_data * weights.lambda_plane).sqrt();
    for c in &corr.pairs {
        let v = *canonical
            .vertices
            .get(c.vertex)
            .ok_or_else(|| Error::shape("correspondence vertex out of range".to_string()))?;
        let nbrs = &graph.vertex_neighbors[c.vertex];
        let mut vp = Vec3::zero();
        for &(i, w) in nbrs {
            vp += field.transforms[i].apply(v) * w;
        }
        let diff = vp - c.target;
        // three point-to-point rows
        for k in 0..3 {
            residuals.push(sp * diff[k]);
            let mut row = Vec::with_capacity(nbrs.len());
            for &(i, w) in nbrs {
                let u = field.transforms[i].rotation.mul_vec(v);
                let neg_skew = Mat3::skew(u); // row k of -skew(u) = skew(u).row(k) negated below
                let mut block = [S::zero(); 6];
                for a in 0..3 {
                    block[a] = -sp * w * neg_skew.m[k][a];
                }
                block[3 + k] = sp * w;
                row.push((i, block));
            }
            jacobian.push(row);
        }
        // one point-to-plane row
        let n = c.target_normal;
        residuals.push(spl * n.dot(diff));
        let mut row = Vec::with_capacity(nbrs.len());
        for &(i, w) in nbrs {
            let u = field.transforms[i].rotation.mul_vec(v);
            // n^T (-skew(u)) = (u x n)^T
            let g = u.cross(n);
            let mut block = [S::zero(); 6];
            for a in 0..3 {
                block[a] = spl * w * g[a];
                block[3 + a] = spl * w * n[a];
            }
            row.push((i, block));
        }
        jacobian.push(row);
    }

    // regularizer: both directed versions of every undirected edge
    let sreg = weights.lambda_reg.sqrt(); // edge weight is uniform 1
    for &(i, j) in &graph.edges {
        for (a, b) in [(i, j), (j, i)] {
            let x = graph.nodes[a];
            let d = field.transforms[a].apply(x) - field.transforms[b].apply(x);
            let s = d.norm_sq();
            let (_, gamma, dgamma) = huber_sqrt_weight(s, weights.huber_threshold);
            let ua = field.transforms[a].rotation.mul_vec(x);
            let ub = field.transforms[b].rotation.mul_vec(x);
            let ska = Mat3::skew(ua);
            let skb = Mat3::skew(ub);
            // dd/dparams: node a -> [-skew(ua) | I], node b -> [skew(ub) | -I]
            // d(s)/dparams = 2 d^T dd/dparams, shared by the three rows
            let mut ds_a = [S::zero(); 6];
            let mut ds_b = [S::zero(); 6];
            for q in 0..3 {
                for k in 0..3 {
                    ds_a[q] += -S::two() * d[k] * ska.m[k][q];
                    ds_b[q] += S::two() * d[k] * skb.m[k][q];
                }
                ds_a[3 + q] = S::two() * d[q];
                ds_b[3 + q] = -S::two() * d[q];
            }
            for k in 0..3 {
                residuals.push(sreg * gamma * d[k]);
                let mut block_a = [S::zero(); 6];
                let mut block_b = [S::zero(); 6];
                for q in 0..3 {
                    block_a[q] = sreg * (gamma * (-ska.m[k][q]) + dgamma * d[k] * ds_a[q]);
                    block_b[q] = sreg * (gamma * skb.m[k][q] + dgamma * d[k] * ds_b[q]);
                    block_a[3 + q] = sreg * dgamma * d[k] * ds_a[3 + q];
                    block_b[3 + q] = sreg * dgamma * d[k] * ds_b[3 + q];
                }
                block_a[3 + k] += sreg * gamma;
                block_b[3 + k] -= sreg * gamma;
                jacobian.push(vec![(a, block_a), (b, block_b)]);
            }
        }
    }

    let mut e = S::zero();
    for r in &residuals {
        e += *r * *r;
    }
    Ok(EnergyEval {
        energy: e,
        residuals,
        jacobian,
    })
}
