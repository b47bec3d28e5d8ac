//! Refinement stage: photometric training of the displacement network
//! through backward warping into the frozen canonical radiance field,
//! motion re-optimization from dense learned correspondences, and
//! constant-topology animation-mesh generation.

use super::deform::{DeformGrads, DeformNet, DeformOptimizer};
use super::knn::{backward_warp, build_knn_volume, KnnVolume};
use super::radiance::{RadianceField, SH_DEGREE};
use crate::encode::{sh_encode, AccumMode, HashGridConfig};
use crate::error::{Error, Result};
use crate::geom::{Ray, TriMesh, Vec3};
use crate::net::{exp_lr_schedule, huber, sigmoid, AdamConfig};
use crate::nsr::{composite, stratified_samples, TraceRow, TrainView};
use crate::scalar::Real;
use crate::track::{
    gauss_newton_solve, lbs_warp, lbs_warp_point, Correspondence, CorrespondenceSet, EdGraph,
    GaussNewtonParams, WarpField,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformConfig {
    pub rays_per_batch: usize,
    pub n_samples: usize,
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Decoupled weight decay keeping the canonical frame a fixed point.
    pub weight_decay: f64,
    pub huber_delta: f64,
    pub background: [f64; 3],
    pub grid: HashGridConfig,
    pub hidden_width: usize,
    pub knn_resolution: usize,
    pub knn_k: usize,
    pub seed: u64,
    pub trace_every: usize,
    pub early_stop_transmittance: f64,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            rays_per_batch: 4096,
            n_samples: 128,
            iterations: 2000,
            lr_start: 1e-2,
            lr_end: 1.6e-3,
            weight_decay: 1e-6,
            huber_delta: 1.0,
            background: [0.0; 3],
            grid: HashGridConfig::spacetime_default([-1.0; 3], [1.0; 3], 8),
            hidden_width: super::deform::DEFORM_HIDDEN,
            knn_resolution: 64,
            knn_k: 8,
            seed: 0,
            trace_every: 50,
            early_stop_transmittance: 1e-3,
        }
    }
}

/// Per-frame warp context used to pull live-space samples back to
/// canonical space.
#[derive(Debug, Clone)]
pub struct FrameWarp<S> {
    pub volume: KnnVolume<S>,
    pub motion: WarpField<S>,
    /// Node influence radius (from the deformation graph).
    pub radius: S,
    /// Normalized frame time in [0, 1].
    pub time: S,
}

/// Normalized timestamp of frame `f` in an `n`-frame sequence.
pub fn frame_time<S: Real>(f: usize, n: usize) -> S {
    if n <= 1 {
        S::zero()
    } else {
        S::from_usize_(f) / S::from_usize_(n - 1)
    }
}

/// Builds one [`FrameWarp`] per motion: advects the graph nodes into the
/// frame and indexes them in a KNN volume spanning the scene sphere.
pub fn build_frame_warps<S: Real>(
    graph: &EdGraph<S>,
    motions: &[WarpField<S>],
    center: Vec3<S>,
    radius: S,
    knn_resolution: usize,
    knn_k: usize,
) -> Result<Vec<FrameWarp<S>>> {
    let pad = radius * S::from_f64_(1.5);
    let lo = center - Vec3::splat(pad);
    let hi = center + Vec3::splat(pad);
    motions
        .iter()
        .enumerate()
        .map(|(f, m)| {
            if m.len() != graph.nodes.len() {
                return Err(Error::shape(format!(
                    "motion {f} has {} transforms for {} nodes",
                    m.len(),
                    graph.nodes.len()
                )));
            }
            let live: Vec<Vec3<S>> = graph
                .nodes
                .iter()
                .zip(&m.transforms)
                .map(|(x, t)| t.apply(*x))
                .collect();
            Ok(FrameWarp {
                volume: build_knn_volume(&live, lo, hi, [knn_resolution; 3], knn_k)?,
                motion: m.clone(),
                radius: graph.radius,
                time: frame_time(f, motions.len()),
            })
        })
        .collect()
}

/// Color and density of a live-space point at frame time `t`: backward
/// warp to canonical space, displace by the deformation net, query the
/// frozen canonical field.
pub fn deformed_radiance<S: Real>(
    p_live: Vec3<S>,
    dir: Vec3<S>,
    phi_o: &RadianceField<S>,
    phi_d: &DeformNet<S>,
    warp: &FrameWarp<S>,
) -> Result<([S; 3], S)> {
    let p_canon = backward_warp(p_live, &warp.volume, warp.radius, &warp.motion)?;
    let q = p_canon + phi_d.displacement(p_canon, warp.time)?;
    phi_o.query(q, dir)
}

/// Inference render of one live-space ray through the deformed field.
/// `phi_d` None renders the coarse-only baseline (zero displacement).
pub fn render_deformed_ray<S: Real, R: Rng>(
    phi_o: &RadianceField<S>,
    phi_d: Option<&DeformNet<S>>,
    warp: &FrameWarp<S>,
    ray: &Ray<S>,
    n_samples: usize,
    background: [S; 3],
    rng: &mut R,
) -> Result<([S; 3], S)> {
    let Some((t0, t1)) = ray.intersect_sphere(phi_o.center, phi_o.radius) else {
        return Ok((background, S::zero()));
    };
    let mut ts = stratified_samples(t0, t1, n_samples, rng);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sh = sh_encode(ray.direction, SH_DEGREE)?;
    let mut alphas = Vec::with_capacity(ts.len());
    let mut colors = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        let delta = if i + 1 < ts.len() { ts[i + 1] - t } else { t1 - t };
        let p = ray.at(t);
        let p_canon = backward_warp(p, &warp.volume, warp.radius, &warp.motion)?;
        let q = match phi_d {
            Some(d) => p_canon + d.displacement(p_canon, warp.time)?,
            None => p_canon,
        };
        let s = phi_o.sample_forward(q, &sh)?;
        alphas.push(S::one() - (-s.sigma * delta).exp());
        colors.push(s.rgb);
    }
    Ok(composite(&alphas, &colors, background))
}

/// Forward + backward for one deform-training ray. Only `phi_d`
/// accumulates gradients; `phi_o` stays fixed but propagates input
/// gradients.
#[allow(clippy::too_many_arguments)]
fn process_ray<S: Real, R: Rng>(
    phi_o: &RadianceField<S>,
    phi_d: &DeformNet<S>,
    warp: &FrameWarp<S>,
    ray: &Ray<S>,
    target: [S; 3],
    cfg: &DeformConfig,
    inv_color_norm: S,
    grads: &mut DeformGrads<S>,
    rng: &mut R,
) -> Result<S> {
    let background = cfg.background.map(S::from_f64_);
    let delta_huber = S::from_f64_(cfg.huber_delta);
    let early_stop = S::from_f64_(cfg.early_stop_transmittance);
    let Some((t0, t1)) = ray.intersect_sphere(phi_o.center, phi_o.radius) else {
        let mut loss = S::zero();
        for k in 0..3 {
            loss += huber(background[k] - target[k], delta_huber).0 * inv_color_norm;
        }
        return Ok(loss);
    };
    let mut ts = stratified_samples(t0, t1, cfg.n_samples, rng);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sh = sh_encode(ray.direction, SH_DEGREE)?;

    struct Fwd<S: Real> {
        p_canon: Vec3<S>,
        q: Vec3<S>,
        d_tape: crate::net::Tape<S>,
        sample: super::radiance::RadianceSample<S>,
    }
    let mut fwd: Vec<Fwd<S>> = Vec::with_capacity(ts.len());
    let mut deltas = Vec::with_capacity(ts.len());
    let mut alphas = Vec::with_capacity(ts.len());
    let mut trans = S::one();
    for (i, &t) in ts.iter().enumerate() {
        let delta = if i + 1 < ts.len() { ts[i + 1] - t } else { t1 - t };
        let p = ray.at(t);
        let p_canon = backward_warp(p, &warp.volume, warp.radius, &warp.motion)?;
        let (disp, d_tape) = phi_d.forward(p_canon, warp.time)?;
        let q = p_canon + disp;
        let sample = phi_o.sample_forward(q, &sh)?;
        let alpha = S::one() - (-sample.sigma * delta).exp();
        trans *= S::one() - alpha;
        fwd.push(Fwd {
            p_canon,
            q,
            d_tape,
            sample,
        });
        deltas.push(delta);
        alphas.push(alpha);
        if early_stop > S::zero() && trans < early_stop {
            break;
        }
    }
    let n = fwd.len();
    let colors: Vec<[S; 3]> = fwd.iter().map(|f| f.sample.rgb).collect();
    let (rendered, _) = composite(&alphas, &colors, background);

    let mut loss = S::zero();
    let mut dl_dc = [S::zero(); 3];
    for k in 0..3 {
        let (v, d) = huber(rendered[k] - target[k], delta_huber);
        loss += v * inv_color_norm;
        dl_dc[k] = d * inv_color_norm;
    }

    let mut behind = vec![[S::zero(); 3]; n];
    behind[n - 1] = background;
    for i in (0..n - 1).rev() {
        for k in 0..3 {
            behind[i][k] =
                alphas[i + 1] * colors[i + 1][k] + (S::one() - alphas[i + 1]) * behind[i + 1][k];
        }
    }
    let mut t_acc = S::one();
    let mut d_alpha = vec![S::zero(); n];
    let mut d_rgb = vec![[S::zero(); 3]; n];
    for i in 0..n {
        for k in 0..3 {
            d_rgb[i][k] = dl_dc[k] * t_acc * alphas[i];
            d_alpha[i] += dl_dc[k] * t_acc * (colors[i][k] - behind[i][k]);
        }
        t_acc *= S::one() - alphas[i];
    }

    for (i, f) in fwd.into_iter().enumerate().rev() {
        let d_sigma = d_alpha[i] * deltas[i] * (S::one() - alphas[i]);
        let d_raw = d_sigma * sigmoid(f.sample.raw_sigma);
        let dq = phi_o
            .sample_backward(f.q, f.sample, d_rgb[i], d_raw, None, true)?
            .expect("point gradient requested");
        phi_d.backward(f.p_canon, warp.time, f.d_tape, dq, grads)?;
    }
    Ok(loss)
}

/// Trains a displacement network on per-frame views against the frozen
/// canonical field. `frames[f]` holds the calibrated views of frame `f`;
/// `motions[f]` is its coarse canonical-to-frame warp.
pub fn train_deform<S: Real>(
    phi_o: &RadianceField<S>,
    graph: &EdGraph<S>,
    motions: &[WarpField<S>],
    frames: &[Vec<TrainView<S>>],
    cfg: &DeformConfig,
) -> Result<(DeformNet<S>, Vec<TraceRow>)> {
    if !phi_o.is_frozen() {
        return Err(Error::invalid(
            "deformation training requires a frozen canonical field",
        ));
    }
    if frames.is_empty() || frames.len() != motions.len() {
        return Err(Error::shape(format!(
            "got {} frames and {} motions",
            frames.len(),
            motions.len()
        )));
    }
    if frames.iter().any(|f| f.is_empty()) {
        return Err(Error::invalid("every frame needs at least one view"));
    }
    let warps = build_frame_warps(
        graph,
        motions,
        phi_o.center,
        phi_o.radius,
        cfg.knn_resolution,
        cfg.knn_k,
    )?;
    let mut net = DeformNet::new(cfg.grid.clone(), cfg.hidden_width, cfg.seed)?;
    let mut grads = DeformGrads::new_for(&net, AccumMode::Deterministic);
    let adam_cfg = AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut opt = DeformOptimizer::new(&net, adam_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background = cfg.background.map(S::from_f64_);
    let mut trace = Vec::new();
    for iter in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.rays_per_batch);
        for _ in 0..cfg.rays_per_batch {
            let f = rng.gen_range(0..frames.len());
            let v = &frames[f][rng.gen_range(0..frames[f].len())];
            let row = rng.gen_range(0..v.image.height);
            let col = rng.gen_range(0..v.image.width);
            let ray = v
                .camera
                .ray_through(S::from_usize_(col) + S::half(), S::from_usize_(row) + S::half());
            let foreground = v
                .mask
                .as_ref()
                .map(|m| m.pixel(row, col)[0].to_f64_() > 0.5)
                .unwrap_or(true);
            let px = v.image.pixel(row, col);
            let target = if foreground {
                [px[0], px[1], px[2]]
            } else {
                background
            };
            batch.push((f, ray, target));
        }
        grads.zero();
        let inv = S::one() / S::from_usize_(3 * batch.len());
        let batch_seed = cfg.seed ^ (iter as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let mut loss = S::zero();
        for (i, (f, ray, target)) in batch.iter().enumerate() {
            let mut ray_rng = ChaCha8Rng::seed_from_u64(
                batch_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            loss += process_ray(
                phi_o,
                &net,
                &warps[*f],
                ray,
                *target,
                cfg,
                inv,
                &mut grads,
                &mut ray_rng,
            )?;
        }
        if !loss.to_f64_().is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                detail: "deformation loss became non-finite".to_string(),
            });
        }
        let lr = exp_lr_schedule(cfg.lr_start, cfg.lr_end, iter, cfg.iterations);
        opt.step(&mut net, &grads, lr).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence {
                iteration: iter,
                detail,
            },
            other => other,
        })?;
        if iter % cfg.trace_every.max(1) == 0 || iter + 1 == cfg.iterations {
            trace.push(TraceRow {
                iteration: iter,
                color_loss: loss.to_f64_(),
                eikonal_loss: 0.0,
                total_loss: loss.to_f64_(),
            });
        }
    }
    Ok((net, trace))
}

/// Re-solves each frame's motion from dense learned correspondences:
/// every canonical vertex is displaced by the deformation net, forward
/// warped by the coarse motion, and used as a fixed point-to-point prior.
pub fn reoptimize_motion<S: Real>(
    canonical: &TriMesh<S>,
    graph: &EdGraph<S>,
    motions: &[WarpField<S>],
    phi_d: &DeformNet<S>,
    params: &GaussNewtonParams<S>,
) -> Result<Vec<WarpField<S>>> {
    let mut params = *params;
    // dense priors are point-to-point only
    params.weights.lambda_plane = S::zero();
    let up = Vec3::new(S::zero(), S::zero(), S::one());
    motions
        .iter()
        .enumerate()
        .map(|(f, motion)| {
            let t = frame_time::<S>(f, motions.len());
            let pairs = canonical
                .vertices
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let corrected = *v + phi_d.displacement(*v, t)?;
                    let target =
                        lbs_warp_point(motion, &graph.vertex_neighbors[j], corrected);
                    Ok(Correspondence {
                        vertex: j,
                        target,
                        target_normal: up,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let set = CorrespondenceSet { pairs };
            let report = gauss_newton_solve(
                graph,
                canonical,
                |_| Ok(set.clone()),
                motion.clone(),
                &params,
            )
            .map_err(|e| Error::invalid(format!("re-optimization failed at frame {f}: {e}")))?;
            Ok(report.field)
        })
        .collect()
}

/// Warps the canonical mesh into every frame; the face list (and hence
/// topology) is identical across frames.
pub fn generate_animation_mesh<S: Real>(
    canonical: &TriMesh<S>,
    graph: &EdGraph<S>,
    motions: &[WarpField<S>],
) -> Result<Vec<TriMesh<S>>> {
    motions
        .iter()
        .map(|m| lbs_warp(canonical, graph, m))
        .collect()
}
