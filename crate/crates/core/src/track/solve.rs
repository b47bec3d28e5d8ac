//! Damped Gauss-Newton solver for the tracking energy, plus frame-to-frame
//! warp propagation into canonical-to-frame motions.

use super::graph::EdGraph;
use super::icp::{energy, find_correspondences, CorrespondenceSet, TrackWeights};
use super::warp::{lbs_warp, WarpField};
use crate::error::{Error, Result};
use crate::geom::{cholesky_solve, TriMesh};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct GaussNewtonParams<S> {
    pub iterations: usize,
    /// Initial Levenberg damping; x10 on a rejected step, /10 on accept.
    pub damping_init: S,
    /// Stop when the relative energy decrease falls below this.
    pub rel_tol: S,
    pub weights: TrackWeights<S>,
    /// Correspondence distance gate; None derives 0.1 x target bbox diagonal.
    pub max_dist: Option<S>,
    pub max_normal_angle_deg: S,
}

impl<S: Real> Default for GaussNewtonParams<S> {
    fn default() -> Self {
        GaussNewtonParams {
            iterations: 20,
            damping_init: S::from_f64_(1e-4),
            rel_tol: S::from_f64_(1e-6),
            weights: TrackWeights::default(),
            max_dist: None,
            max_normal_angle_deg: S::from_f64_(60.0),
        }
    }
}

/// Solver output: the optimized field and the accepted-iteration energy
/// trace (first entry is the initial energy).
#[derive(Debug, Clone)]
pub struct SolveReport<S> {
    pub field: WarpField<S>,
    pub energies: Vec<S>,
}

fn assemble_normal_equations<S: Real>(
    n_nodes: usize,
    residuals: &[S],
    jacobian: &[Vec<(usize, [S; 6])>],
) -> (Vec<Vec<S>>, Vec<S>) {
    let n = 6 * n_nodes;
    let mut a = vec![vec![S::zero(); n]; n];
    let mut g = vec![S::zero(); n];
    for (row, r) in jacobian.iter().zip(residuals) {
        for &(ni, bi) in row {
            for p in 0..6 {
                g[6 * ni + p] += bi[p] * *r;
            }
            for &(nj, bj) in row {
                for p in 0..6 {
                    let ai = &mut a[6 * ni + p];
                    for q in 0..6 {
                        ai[6 * nj + q] += bi[p] * bj[q];
                    }
                }
            }
        }
    }
    (a, g)
}

/// Minimizes the tracking energy over per-node rigid transforms.
/// `provider` re-derives correspondences from the current warped mesh at
/// every accepted iteration (the ICP outer loop); within one iteration
/// the correspondence set is held fixed while Levenberg damping finds an
/// energy-decreasing step.
pub fn gauss_newton_solve<S, F>(
    graph: &EdGraph<S>,
    canonical: &TriMesh<S>,
    mut provider: F,
    init: WarpField<S>,
    params: &GaussNewtonParams<S>,
) -> Result<SolveReport<S>>
where
    S: Real,
    F: FnMut(&TriMesh<S>) -> Result<CorrespondenceSet<S>>,
{
    init.validate()?;
    if init.len() != graph.nodes.len() {
        return Err(Error::shape(format!(
            "initial field has {} transforms for {} nodes",
            init.len(),
            graph.nodes.len()
        )));
    }
    let mut field = init;
    let mut damping = params.damping_init;
    let tiny = S::from_f64_(1e-30);
    let damping_cap = S::from_f64_(1e12);

    let mut warped = lbs_warp(canonical, graph, &field)?;
    let mut corr = provider(&warped)?;
    if corr.is_empty() {
        return Err(Error::invalid(
            "tracking failure: empty correspondence set",
        ));
    }
    let mut eval = energy(&field, graph, canonical, &corr, &params.weights)?;
    let mut e = eval.energy;
    let mut energies = vec![e];

    for _ in 0..params.iterations {
        let (a, g) = assemble_normal_equations(graph.nodes.len(), &eval.residuals, &eval.jacobian);
        let n = g.len();
        let mut accepted: Option<(WarpField<S>, S)> = None;
        let mut converged = false;
        while damping <= damping_cap {
            let mut ad = a.clone();
            for i in 0..n {
                ad[i][i] += damping;
            }
            let rhs: Vec<S> = g.iter().map(|&v| -v).collect();
            let delta = match cholesky_solve(&ad, &rhs) {
                Some(d) => d,
                None => {
                    damping *= S::from_f64_(10.0);
                    continue;
                }
            };
            let mut trial = field.perturbed(&delta);
            trial.orthonormalize();
            let e_trial = energy(&trial, graph, canonical, &corr, &params.weights)?.energy;
            if e_trial.is_finite() && e_trial < e {
                accepted = Some((trial, e_trial));
                damping = (damping / S::from_f64_(10.0)).max(S::from_f64_(1e-12));
                break;
            }
            // a non-improving step with negligible energy gap means the
            // iterate is already at a (damped) stationary point
            if e_trial.is_finite() && (e_trial - e).abs() / e.max(tiny) < params.rel_tol {
                converged = true;
                break;
            }
            damping *= S::from_f64_(10.0);
        }
        if converged {
            break;
        }
        let (next, e_next) = accepted.ok_or_else(|| {
            Error::invalid("gauss-newton solve failed: system singular after damping")
        })?;
        let rel_drop = (e - e_next) / e.max(tiny);
        field = next;
        energies.push(e_next);
        // ICP re-matching for the next iteration
        warped = lbs_warp(canonical, graph, &field)?;
        corr = provider(&warped)?;
        if corr.is_empty() {
            return Err(Error::invalid(
                "tracking failure: empty correspondence set",
            ));
        }
        eval = energy(&field, graph, canonical, &corr, &params.weights)?;
        e = eval.energy;
        if rel_drop < params.rel_tol {
            break;
        }
    }
    Ok(SolveReport { field, energies })
}

/// Tracks one frame: nearest-point correspondences against `target`
/// under the configured gates, solved from `init`.
pub fn track_frame<S: Real>(
    canonical: &TriMesh<S>,
    graph: &EdGraph<S>,
    target: &TriMesh<S>,
    init: WarpField<S>,
    params: &GaussNewtonParams<S>,
) -> Result<SolveReport<S>> {
    let max_dist = params
        .max_dist
        .unwrap_or_else(|| S::from_f64_(0.1) * target.bbox_diagonal());
    let angle = params.max_normal_angle_deg;
    gauss_newton_solve(
        graph,
        canonical,
        |warped| find_correspondences(warped, target, max_dist, angle),
        init,
        params,
    )
}

/// Tracks a mesh sequence into per-frame canonical-to-frame motions.
/// Frame 0 is the canonical frame (identity). Each later frame is first
/// tracked from the previous frame's warped state (adjacent warp W_t),
/// then its canonical motion is re-solved initialized from W_t composed
/// with the previous canonical motion.
pub fn propagate_warp<S: Real>(
    canonical: &TriMesh<S>,
    graph: &EdGraph<S>,
    frames: &[TriMesh<S>],
    params: &GaussNewtonParams<S>,
) -> Result<Vec<WarpField<S>>> {
    if frames.is_empty() {
        return Err(Error::invalid("propagate_warp needs at least one frame"));
    }
    let mut motions = vec![WarpField::identity(graph.nodes.len())];
    for t in 1..frames.len() {
        let prev = &motions[t - 1];
        let step = (|| -> Result<WarpField<S>> {
            let prev_warped = lbs_warp(canonical, graph, prev)?;
            let advected = graph.with_node_positions(
                graph
                    .nodes
                    .iter()
                    .zip(&prev.transforms)
                    .map(|(x, tf)| tf.apply(*x))
                    .collect(),
            )?;
            let adjacent = track_frame(
                &prev_warped,
                &advected,
                &frames[t],
                WarpField::identity(graph.nodes.len()),
                params,
            )?;
            let init = prev.composed_with(&adjacent.field)?;
            Ok(track_frame(canonical, graph, &frames[t], init, params)?.field)
        })()
        .map_err(|err| Error::invalid(format!("tracking failed at frame {t}: {err}")))?;
        motions.push(step);
    }
    Ok(motions)
}
