//! Photometric training of an [`SdfField`] from calibrated views:
//! hierarchical ray sampling, TSDF volume rendering, Huber color loss
//! with an Eikonal regularizer, and manual backprop into every
//! trainable parameter.

use super::field::{FieldGrads, NormalMode, SdfField};
use super::render::{alpha_from_tsdf_grad, tsdf_map, tsdf_map_grad};
use crate::encode::{AccumMode, HashGridConfig};
use crate::error::{Error, Result};
use crate::geom::{Camera, Ray, Vec3};
use crate::img::Image;
use crate::net::{exp_lr_schedule, huber, AdamConfig, AdamState, Tape};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NsrConfig {
    pub rays_per_batch: usize,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub iterations: usize,
    pub lambda_eik: f64,
    pub dx_start: f64,
    pub dx_end: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub background: [f64; 3],
    pub huber_delta: f64,
    pub hidden_width: usize,
    pub grid: HashGridConfig,
    pub scene_center: [f64; 3],
    pub scene_radius: f64,
    pub seed: u64,
    pub trace_every: usize,
    /// Stop marching a ray once transmittance drops below this
    /// (0 disables; disabled rays keep the exact per-sample loss mean).
    pub early_stop_transmittance: f64,
}

impl Default for NsrConfig {
    fn default() -> Self {
        NsrConfig {
            rays_per_batch: 4096,
            n_coarse: 64,
            n_fine: 64,
            iterations: 6000,
            lambda_eik: 0.1,
            dx_start: 0.005,
            dx_end: 0.0005,
            lr_start: 1e-2,
            lr_end: 1.6e-3,
            background: [0.0; 3],
            huber_delta: 1.0,
            hidden_width: 64,
            grid: HashGridConfig::spatial_default([-1.0; 3], [1.0; 3]),
            scene_center: [0.0; 3],
            scene_radius: 1.0,
            seed: 0,
            trace_every: 50,
            early_stop_transmittance: 1e-3,
        }
    }
}

/// One calibrated training view; an optional mask marks foreground
/// pixels (background pixels train toward the background color).
#[derive(Debug, Clone)]
pub struct TrainView<S> {
    pub image: Image<S>,
    pub mask: Option<Image<S>>,
    pub camera: Camera<S>,
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iteration: usize,
    pub color_loss: f64,
    pub eikonal_loss: f64,
    pub total_loss: f64,
}

pub fn write_loss_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iteration,color_loss,eikonal_loss,total_loss")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.iteration, r.color_loss, r.eikonal_loss, r.total_loss
        )?;
    }
    Ok(())
}

/// Batch loss per the training objective: mean-over-(rays, channels)
/// Huber color term plus lambda * mean over all samples of (|n|-1)^2.
pub fn nsr_loss<S: Real>(
    rendered: &[[S; 3]],
    target: &[[S; 3]],
    normals: &[Vec3<S>],
    lambda: S,
    delta: S,
) -> Result<S> {
    if rendered.len() != target.len() || rendered.is_empty() {
        return Err(Error::shape("nsr_loss needs matching nonempty pixel batches"));
    }
    if lambda < S::zero() {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let mut color = S::zero();
    for (r, t) in rendered.iter().zip(target) {
        for k in 0..3 {
            color += huber(r[k] - t[k], delta).0;
        }
    }
    color /= S::from_usize_(3 * rendered.len());
    let mut eik = S::zero();
    if !normals.is_empty() {
        for n in normals {
            let e = n.norm() - S::one();
            eik += e * e;
        }
        eik /= S::from_usize_(normals.len());
    }
    Ok(color + lambda * eik)
}

/// Scaling constants shared by every ray in one batch.
struct LossParams<S> {
    lambda: S,
    /// 1 / (3 * batch size)
    inv_color_norm: S,
    /// 1 / number of rays that hit the bounding sphere
    inv_hit_rays: S,
    delta: S,
    n_coarse: usize,
    n_fine: usize,
    background: [S; 3],
    early_stop: S,
}

/// Per-sample forward record kept until the ray's backward pass.
struct SampleFwd<S> {
    p: Vec3<S>,
    x: S,
    tsdf: S,
    f_geo: Vec<S>,
    tape: Tape<S>,
    /// (raw SDF, tape) at p + dx*e_a and p - dx*e_a, axis-major.
    probes: Vec<(S, Tape<S>)>,
    /// FD gradient of the TSDF (the training normal).
    n: Vec3<S>,
    rgb: [S; 3],
    color_tape: Option<Tape<S>>,
}

struct RayStats<S> {
    color_loss: S,
    eik_loss: S,
}

fn process_ray<S: Real, R: Rng>(
    field: &SdfField<S>,
    ray: &Ray<S>,
    target: [S; 3],
    lp: &LossParams<S>,
    grads: &mut FieldGrads<S>,
    rng: &mut R,
) -> Result<RayStats<S>> {
    let ts = field.sample_hierarchical(ray, lp.n_coarse, lp.n_fine, rng)?;
    let b = field.b();
    let dx = field.fd_step;
    let eps = S::from_f64_(1e-12);

    // ---- forward ----
    let mut samples: Vec<SampleFwd<S>> = Vec::with_capacity(ts.len());
    let mut trans = S::one();
    for (i, &t) in ts.iter().enumerate() {
        let p = ray.at(t);
        let (out, tape) = field.ms_forward(p)?;
        let x = out[0];
        let tsdf = tsdf_map(x, b);
        if i > 0 {
            let (alpha, _, _, _) = alpha_from_tsdf_grad(samples[i - 1].tsdf, tsdf, b);
            trans *= S::one() - alpha;
        }
        samples.push(SampleFwd {
            p,
            x,
            tsdf,
            f_geo: out[1..].to_vec(),
            tape,
            probes: Vec::new(),
            n: Vec3::zero(),
            rgb: [S::zero(); 3],
            color_tape: None,
        });
        if lp.early_stop > S::zero() && trans < lp.early_stop {
            break;
        }
    }
    let n_samples = samples.len();

    if n_samples < 2 {
        // miss (or degenerate): composites to the background; constant in
        // the parameters, so only the loss value is recorded
        let mut color_loss = S::zero();
        for k in 0..3 {
            color_loss += huber(lp.background[k] - target[k], lp.delta).0 * lp.inv_color_norm;
        }
        return Ok(RayStats {
            color_loss,
            eik_loss: S::zero(),
        });
    }

    // FD normals (probes are part of the training graph) and colors
    for i in 0..n_samples {
        let p = samples[i].p;
        let mut probes = Vec::with_capacity(6);
        let mut n = Vec3::zero();
        for a in 0..3 {
            let mut vals = [S::zero(); 2];
            for (si, sign) in [S::one(), -S::one()].into_iter().enumerate() {
                let mut q = p;
                q[a] += sign * dx;
                let (out, tape) = field.ms_forward(q)?;
                vals[si] = tsdf_map(out[0], b);
                probes.push((out[0], tape));
            }
            n[a] = (vals[0] - vals[1]) / (S::two() * dx);
        }
        samples[i].probes = probes;
        samples[i].n = n;
        if i + 1 < n_samples {
            // only segment-leading samples contribute color
            let norm = n.norm();
            let n_unit = if norm > eps { n / norm } else { Vec3::zero() };
            let input = field.mc_input(p, n_unit, &samples[i].f_geo, ray.direction)?;
            let (rgb, ct) = field.m_c.forward(&input)?;
            samples[i].rgb = [rgb[0], rgb[1], rgb[2]];
            samples[i].color_tape = Some(ct);
        }
    }

    // segment opacities and transmittances
    let n_seg = n_samples - 1;
    let mut alphas = Vec::with_capacity(n_seg);
    let mut alpha_grads = Vec::with_capacity(n_seg);
    for i in 0..n_seg {
        let (a, dc, dn, db) = alpha_from_tsdf_grad(samples[i].tsdf, samples[i + 1].tsdf, b);
        alphas.push(a);
        alpha_grads.push((dc, dn, db));
    }
    let mut t_acc = Vec::with_capacity(n_seg + 1);
    t_acc.push(S::one());
    for &a in &alphas {
        let last = *t_acc.last().unwrap();
        t_acc.push(last * (S::one() - a));
    }
    let mut rendered = lp.background.map(|c| c * t_acc[n_seg]);
    for i in 0..n_seg {
        for k in 0..3 {
            rendered[k] += t_acc[i] * alphas[i] * samples[i].rgb[k];
        }
    }

    // ---- losses and output gradients ----
    let mut color_loss = S::zero();
    let mut dl_drgb = [S::zero(); 3];
    for k in 0..3 {
        let (v, d) = huber(rendered[k] - target[k], lp.delta);
        color_loss += v * lp.inv_color_norm;
        dl_drgb[k] = d * lp.inv_color_norm;
    }
    let eik_scale = lp.lambda * lp.inv_hit_rays / S::from_usize_(n_samples);
    let mut eik_loss = S::zero();
    let mut dl_dn: Vec<Vec3<S>> = Vec::with_capacity(n_samples);
    for s in &samples {
        let norm = s.n.norm();
        let e = norm - S::one();
        eik_loss += eik_scale * e * e;
        if norm > eps {
            dl_dn.push(s.n * (eik_scale * S::two() * e / norm));
        } else {
            dl_dn.push(Vec3::zero());
        }
    }

    // ---- backward ----
    // radiance arriving from behind each segment (stable composite grads)
    let mut behind = vec![[S::zero(); 3]; n_seg];
    let mut acc_col = lp.background;
    for i in (0..n_seg).rev() {
        behind[i] = acc_col;
        for k in 0..3 {
            acc_col[k] = alphas[i] * samples[i].rgb[k] + (S::one() - alphas[i]) * acc_col[k];
        }
    }
    let mut dl_dtsdf = vec![S::zero(); n_samples];
    let mut d_b = S::zero();
    for i in 0..n_seg {
        let mut dl_da = S::zero();
        for k in 0..3 {
            dl_da += dl_drgb[k] * t_acc[i] * (samples[i].rgb[k] - behind[i][k]);
        }
        let (dc, dn, db) = alpha_grads[i];
        dl_dtsdf[i] += dl_da * dc;
        dl_dtsdf[i + 1] += dl_da * dn;
        d_b += dl_da * db;
    }

    let ms_out_width = field.m_s.output_width();
    let inv_2dx = S::one() / (S::two() * dx);
    for (i, s) in samples.into_iter().enumerate() {
        let mut dl_dn_i = dl_dn[i];
        let mut upstream_ms = vec![S::zero(); ms_out_width];
        // color net backward (segment-leading samples only)
        if let Some(ct) = s.color_tape {
            let mut up_c = [S::zero(); 3];
            for k in 0..3 {
                up_c[k] = dl_drgb[k] * t_acc[i] * alphas[i];
            }
            let in_grad = field.m_c.backward(ct, &up_c, &mut grads.m_c)?;
            // chain the unit-normal input through normalization
            let norm = s.n.norm();
            if norm > eps {
                let n_unit = s.n / norm;
                let g = Vec3::new(in_grad[3], in_grad[4], in_grad[5]);
                dl_dn_i += (g - n_unit * n_unit.dot(g)) / norm;
            }
            for (f, gi) in upstream_ms[1..].iter_mut().zip(&in_grad[6..6 + ms_out_width - 1]) {
                *f = *gi;
            }
        }
        // probe backward: n_a = (pi(x+) - pi(x-)) / (2 dx)
        let mut probes = s.probes;
        for a in (0..3).rev() {
            for sign in [-S::one(), S::one()] {
                let (x_probe, tape) = probes.pop().expect("six probes per sample");
                let (dpi_dx, dpi_db) = tsdf_map_grad(x_probe, b);
                let coeff = dl_dn_i[a] * sign * inv_2dx;
                d_b += coeff * dpi_db;
                let mut up = vec![S::zero(); ms_out_width];
                up[0] = coeff * dpi_dx;
                let mut q = s.p;
                q[a] += sign * dx;
                field.ms_backward(q, tape, &up, Some(&mut *grads), false)?;
                // probes were pushed (+, -) per axis; popping yields -, +
            }
        }
        // center backward: TSDF chain plus geometry-feature gradients
        let (dpi_dx, dpi_db) = tsdf_map_grad(s.x, b);
        upstream_ms[0] = dl_dtsdf[i] * dpi_dx;
        d_b += dl_dtsdf[i] * dpi_db;
        field.ms_backward(s.p, s.tape, &upstream_ms, Some(&mut *grads), false)?;
    }
    // b = exp(s): dL/ds = dL/db * b
    grads.d_s += d_b * b;

    Ok(RayStats {
        color_loss,
        eik_loss,
    })
}

/// Forward + backward over one ray batch; accumulates into `grads` and
/// returns (color loss, eikonal loss). Deterministic for a fixed seed.
pub fn batch_loss_backward<S: Real>(
    field: &SdfField<S>,
    rays: &[(Ray<S>, [S; 3])],
    cfg: &NsrConfig,
    batch_seed: u64,
    grads: &mut FieldGrads<S>,
) -> Result<(S, S)> {
    if rays.is_empty() {
        return Err(Error::invalid("empty ray batch"));
    }
    let hits = rays
        .iter()
        .filter(|(r, _)| r.intersect_sphere(field.center, field.radius).is_some())
        .count()
        .max(1);
    let lp = LossParams {
        lambda: S::from_f64_(cfg.lambda_eik),
        inv_color_norm: S::one() / S::from_usize_(3 * rays.len()),
        inv_hit_rays: S::one() / S::from_usize_(hits),
        delta: S::from_f64_(cfg.huber_delta),
        n_coarse: cfg.n_coarse,
        n_fine: cfg.n_fine,
        background: cfg.background.map(S::from_f64_),
        early_stop: S::from_f64_(cfg.early_stop_transmittance),
    };
    let mut color = S::zero();
    let mut eik = S::zero();
    for (i, (ray, target)) in rays.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(batch_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let stats = process_ray(field, ray, *target, &lp, grads, &mut rng)?;
        color += stats.color_loss;
        eik += stats.eik_loss;
    }
    Ok((color, eik))
}

/// Adam state for every parameter block of an [`SdfField`].
pub struct FieldOptimizer<S> {
    tables: Vec<AdamState<S>>,
    ms_w: Vec<AdamState<S>>,
    ms_b: Vec<AdamState<S>>,
    mc_w: Vec<AdamState<S>>,
    mc_b: Vec<AdamState<S>>,
    s: AdamState<S>,
}

impl<S: Real> FieldOptimizer<S> {
    pub fn new(field: &SdfField<S>, cfg: AdamConfig) -> Self {
        FieldOptimizer {
            tables: field
                .grid
                .tables
                .iter()
                .map(|t| AdamState::new(t.len(), cfg))
                .collect(),
            ms_w: field.m_s.weights.iter().map(|w| AdamState::new(w.len(), cfg)).collect(),
            ms_b: field.m_s.biases.iter().map(|b| AdamState::new(b.len(), cfg)).collect(),
            mc_w: field.m_c.weights.iter().map(|w| AdamState::new(w.len(), cfg)).collect(),
            mc_b: field.m_c.biases.iter().map(|b| AdamState::new(b.len(), cfg)).collect(),
            s: AdamState::new(1, cfg),
        }
    }

    pub fn step(&mut self, field: &mut SdfField<S>, grads: &FieldGrads<S>, lr: f64) -> Result<()> {
        for (l, adam) in self.tables.iter_mut().enumerate() {
            let g = grads.sink.level_grads(l);
            adam.step(&mut field.grid.tables[l], &g, lr)?;
        }
        for (l, adam) in self.ms_w.iter_mut().enumerate() {
            adam.step(&mut field.m_s.weights[l], &grads.m_s.weights[l], lr)?;
        }
        for (l, adam) in self.ms_b.iter_mut().enumerate() {
            adam.step(&mut field.m_s.biases[l], &grads.m_s.biases[l], lr)?;
        }
        for (l, adam) in self.mc_w.iter_mut().enumerate() {
            adam.step(&mut field.m_c.weights[l], &grads.m_c.weights[l], lr)?;
        }
        for (l, adam) in self.mc_b.iter_mut().enumerate() {
            adam.step(&mut field.m_c.biases[l], &grads.m_c.biases[l], lr)?;
        }
        let mut s_block = [field.s_param];
        self.s.step(&mut s_block, &[grads.d_s], lr)?;
        field.s_param = s_block[0];
        Ok(())
    }
}

/// Train `field` in place; returns the loss trace.
pub fn train_field<S: Real>(
    field: &mut SdfField<S>,
    views: &[TrainView<S>],
    cfg: &NsrConfig,
) -> Result<Vec<TraceRow>> {
    if views.len() < 2 {
        return Err(Error::invalid("training needs at least 2 calibrated views"));
    }
    for v in views {
        let n = v.image.width * v.image.height;
        if n == 0 || v.image.channels != 3 {
            return Err(Error::invalid("training images must be RGB and nonempty"));
        }
        if let Some(m) = &v.mask {
            if m.width != v.image.width || m.height != v.image.height {
                return Err(Error::shape("mask size differs from image"));
            }
        }
    }
    field.normal_mode = NormalMode::FiniteDifference;
    let mut grads = FieldGrads::new_for(field, AccumMode::Deterministic);
    let mut opt = FieldOptimizer::new(field, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background = cfg.background.map(S::from_f64_);
    let mut trace = Vec::new();
    for iter in 0..cfg.iterations {
        field.fd_step = S::from_f64_(exp_lr_schedule(
            cfg.dx_start,
            cfg.dx_end,
            iter,
            cfg.iterations,
        ));
        let mut rays = Vec::with_capacity(cfg.rays_per_batch);
        for _ in 0..cfg.rays_per_batch {
            let v = &views[rng.gen_range(0..views.len())];
            let row = rng.gen_range(0..v.image.height);
            let col = rng.gen_range(0..v.image.width);
            let u = S::from_usize_(col) + S::half();
            let vv = S::from_usize_(row) + S::half();
            let ray = v.camera.ray_through(u, vv);
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
            rays.push((ray, target));
        }
        grads.zero();
        let batch_seed = cfg.seed ^ (iter as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let (color, eik) = batch_loss_backward(field, &rays, cfg, batch_seed, &mut grads)?;
        let total = (color + eik).to_f64_();
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                detail: format!(
                    "loss became non-finite (color {}, eikonal {})",
                    color.to_f64_(),
                    eik.to_f64_()
                ),
            });
        }
        let lr = exp_lr_schedule(cfg.lr_start, cfg.lr_end, iter, cfg.iterations);
        opt.step(field, &grads, lr).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence {
                iteration: iter,
                detail,
            },
            other => other,
        })?;
        if iter % cfg.trace_every.max(1) == 0 || iter + 1 == cfg.iterations {
            trace.push(TraceRow {
                iteration: iter,
                color_loss: color.to_f64_(),
                eikonal_loss: eik.to_f64_(),
                total_loss: total,
            });
        }
    }
    Ok(trace)
}

/// Build a fresh field from the config and train it.
pub fn train_nsr<S: Real>(
    views: &[TrainView<S>],
    cfg: &NsrConfig,
) -> Result<(SdfField<S>, Vec<TraceRow>)> {
    let mut field = SdfField::new(
        cfg.grid.clone(),
        cfg.hidden_width,
        cfg.seed,
        Vec3::new(
            S::from_f64_(cfg.scene_center[0]),
            S::from_f64_(cfg.scene_center[1]),
            S::from_f64_(cfg.scene_center[2]),
        ),
        S::from_f64_(cfg.scene_radius),
    )?;
    let trace = train_field(&mut field, views, cfg)?;
    Ok((field, trace))
}

/// Mean (|grad f| - 1)^2 over uniform samples inside the bounding
/// sphere, with analytic normals.
pub fn eikonal_error<S: Real>(field: &SdfField<S>, n_samples: usize, seed: u64) -> Result<S> {
    let mut probe = field.clone();
    probe.normal_mode = NormalMode::Analytic;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = S::zero();
    let mut count = 0usize;
    while count < n_samples {
        let p = Vec3::new(
            S::from_f64_(rng.gen_range(-1.0..1.0)),
            S::from_f64_(rng.gen_range(-1.0..1.0)),
            S::from_f64_(rng.gen_range(-1.0..1.0)),
        ) * probe.radius
            + probe.center;
        if (p - probe.center).norm() > probe.radius {
            continue;
        }
        let e = probe.normal(p)?.norm() - S::one();
        acc += e * e;
        count += 1;
    }
    Ok(acc / S::from_usize_(n_samples))
}
