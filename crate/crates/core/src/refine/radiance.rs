//! Canonical radiance field: hash-encoded density + color networks with
//! classic absorption-based volume rendering, photometric training, and
//! a freeze switch that locks the parameters for the refinement stage.

use crate::checkpoint as ckpt;
use crate::encode::{sh_encode, AccumMode, FeatureGradSink, HashGrid, HashGridConfig};
use crate::error::{Error, Result};
use crate::geom::{Camera, Ray, Vec3};
use crate::net::{
    exp_lr_schedule, huber, sigmoid, softplus, Activation, AdamConfig, AdamState, MlpGrads, Tape,
    TinyMlp,
};
use crate::nsr::{composite, stratified_samples, TraceRow, TrainView};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const GEO_WIDTH: usize = 15;
pub const SH_DEGREE: usize = 4;

/// Spatial hash grid with 64-dimensional output (32 levels x 2 features)
/// feeding the density network.
pub fn radiance_grid_default(lo: [f64; 3], hi: [f64; 3]) -> HashGridConfig {
    let mut cfg = HashGridConfig::spatial_default(lo, hi);
    cfg.levels = 32;
    cfg
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RadianceConfig {
    pub rays_per_batch: usize,
    pub n_samples: usize,
    pub iterations: usize,
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
    pub early_stop_transmittance: f64,
}

impl Default for RadianceConfig {
    fn default() -> Self {
        RadianceConfig {
            rays_per_batch: 4096,
            n_samples: 128,
            iterations: 3000,
            lr_start: 1e-2,
            lr_end: 1.6e-3,
            background: [0.0; 3],
            huber_delta: 1.0,
            hidden_width: 64,
            grid: radiance_grid_default([-1.0; 3], [1.0; 3]),
            scene_center: [0.0; 3],
            scene_radius: 1.0,
            seed: 0,
            trace_every: 50,
            early_stop_transmittance: 1e-3,
        }
    }
}

/// Gradient buffers for every trainable block of a [`RadianceField`].
pub struct RadianceGrads<S> {
    pub sink: FeatureGradSink<S>,
    pub density: MlpGrads<S>,
    pub color: MlpGrads<S>,
}

impl<S: Real> RadianceGrads<S> {
    pub fn new_for(field: &RadianceField<S>, mode: AccumMode) -> Self {
        RadianceGrads {
            sink: FeatureGradSink::new_for(&field.grid, mode),
            density: MlpGrads::new_for(&field.density_mlp),
            color: MlpGrads::new_for(&field.color_mlp),
        }
    }

    pub fn zero(&mut self) {
        self.sink.zero();
        self.density.zero();
        self.color.zero();
    }
}

/// Density/color field over a bounding sphere. Density is mapped through
/// a softplus so it is nonnegative by construction.
#[derive(Debug, Clone)]
pub struct RadianceField<S> {
    pub grid: HashGrid<S>,
    /// [grid features] -> [raw density, 15 geometry features].
    pub density_mlp: TinyMlp<S>,
    /// [15 geometry features, 16 SH coefficients] -> RGB.
    pub color_mlp: TinyMlp<S>,
    frozen: bool,
    pub center: Vec3<S>,
    pub radius: S,
}

/// Per-sample forward record used by the training backward pass.
pub(crate) struct RadianceSample<S> {
    pub raw_sigma: S,
    pub sigma: S,
    pub den_tape: Tape<S>,
    pub rgb: [S; 3],
    pub col_tape: Tape<S>,
}

impl<S: Real> RadianceField<S> {
    pub fn new(
        grid_cfg: HashGridConfig,
        hidden_width: usize,
        seed: u64,
        center: Vec3<S>,
        radius: S,
    ) -> Result<Self> {
        if grid_cfg.dim != 3 {
            return Err(Error::invalid("radiance field needs a 3D hash grid"));
        }
        let grid = HashGrid::new(grid_cfg, seed)?;
        let w = hidden_width;
        let density_mlp = TinyMlp::new(
            &[grid.output_width(), w, w, 1 + GEO_WIDTH],
            Activation::Relu,
            Activation::Identity,
            seed.wrapping_add(1),
        )?;
        let color_mlp = TinyMlp::new(
            &[GEO_WIDTH + SH_DEGREE * SH_DEGREE, w, w, w, 3],
            Activation::Relu,
            Activation::Sigmoid,
            seed.wrapping_add(2),
        )?;
        Ok(RadianceField {
            grid,
            density_mlp,
            color_mlp,
            frozen: false,
            center,
            radius,
        })
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// FNV-1a checksum over the little-endian f32 image of all
    /// parameters; used to verify frozen-field immutability.
    pub fn params_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: S| {
            for byte in v.to_le_f32_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for t in self.grid.params() {
            for &v in t {
                eat(v);
            }
        }
        for mlp in [&self.density_mlp, &self.color_mlp] {
            for w in &mlp.weights {
                for &v in w {
                    eat(v);
                }
            }
            for b in &mlp.biases {
                for &v in b {
                    eat(v);
                }
            }
        }
        h
    }

    /// Density-net forward with tape; output is [raw density, F_geo...].
    pub(crate) fn density_forward(&self, p: Vec3<S>) -> Result<(Vec<S>, Tape<S>)> {
        let pf = [p.x.to_f64_(), p.y.to_f64_(), p.z.to_f64_()];
        let enc = self.grid.encode(&pf);
        self.density_mlp.forward(&enc)
    }

    /// Full per-sample forward at point `p` with SH-encoded direction.
    pub(crate) fn sample_forward(&self, p: Vec3<S>, sh: &[S]) -> Result<RadianceSample<S>> {
        let (den_out, den_tape) = self.density_forward(p)?;
        let raw_sigma = den_out[0];
        let sigma = softplus(raw_sigma, 1.0);
        let f_geo = den_out[1..].to_vec();
        let mut col_in = Vec::with_capacity(self.color_mlp.input_width());
        col_in.extend_from_slice(&f_geo);
        col_in.extend_from_slice(sh);
        let (rgb, col_tape) = self.color_mlp.forward(&col_in)?;
        Ok(RadianceSample {
            raw_sigma,
            sigma,
            den_tape,
            rgb: [rgb[0], rgb[1], rgb[2]],
            col_tape,
        })
    }

    /// Backward through both networks and the encoding for one sample.
    /// `dl_draw` is the loss gradient on the raw (pre-softplus) density.
    /// Returns dL/dp when requested (the deformation-training path).
    pub(crate) fn sample_backward(
        &self,
        p: Vec3<S>,
        sample: RadianceSample<S>,
        dl_drgb: [S; 3],
        dl_draw: S,
        grads: Option<&mut RadianceGrads<S>>,
        want_point_grad: bool,
    ) -> Result<Option<Vec3<S>>> {
        let mut grads = grads;
        let mut scratch_c = None;
        let col_in_grad = match grads.as_mut() {
            Some(g) => self
                .color_mlp
                .backward(sample.col_tape, &dl_drgb, &mut g.color)?,
            None => {
                scratch_c = Some(MlpGrads::new_for(&self.color_mlp));
                self.color_mlp
                    .backward(sample.col_tape, &dl_drgb, scratch_c.as_mut().unwrap())?
            }
        };
        let _ = scratch_c;
        let mut den_up = vec![S::zero(); 1 + GEO_WIDTH];
        den_up[0] = dl_draw;
        den_up[1..].copy_from_slice(&col_in_grad[..GEO_WIDTH]);
        let mut scratch_d = None;
        let den_in_grad = match grads.as_mut() {
            Some(g) => self
                .density_mlp
                .backward(sample.den_tape, &den_up, &mut g.density)?,
            None => {
                scratch_d = Some(MlpGrads::new_for(&self.density_mlp));
                self.density_mlp
                    .backward(sample.den_tape, &den_up, scratch_d.as_mut().unwrap())?
            }
        };
        let _ = scratch_d;
        let pf = [p.x.to_f64_(), p.y.to_f64_(), p.z.to_f64_()];
        let enc_g = self.grid.encode_backward(
            &pf,
            &den_in_grad,
            grads.map(|g| &mut g.sink),
            want_point_grad,
        )?;
        Ok(want_point_grad.then(|| {
            let g = enc_g.unwrap_or_default();
            Vec3::new(g[0], g[1], g[2])
        }))
    }

    /// Inference query: (color, density) at `p` seen from direction `dir`.
    pub fn query(&self, p: Vec3<S>, dir: Vec3<S>) -> Result<([S; 3], S)> {
        let sh = sh_encode(dir, SH_DEGREE)?;
        let s = self.sample_forward(p, &sh)?;
        Ok((s.rgb, s.sigma))
    }

    /// Inference render of one ray over a background color.
    pub fn render_ray<R: Rng>(
        &self,
        ray: &Ray<S>,
        n_samples: usize,
        background: [S; 3],
        rng: &mut R,
    ) -> Result<([S; 3], S)> {
        let Some((t0, t1)) = ray.intersect_sphere(self.center, self.radius) else {
            return Ok((background, S::zero()));
        };
        let mut ts = stratified_samples(t0, t1, n_samples, rng);
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sh = sh_encode(ray.direction, SH_DEGREE)?;
        let mut alphas = Vec::with_capacity(ts.len());
        let mut colors = Vec::with_capacity(ts.len());
        for (i, &t) in ts.iter().enumerate() {
            let delta = if i + 1 < ts.len() { ts[i + 1] - t } else { t1 - t };
            let s = self.sample_forward(ray.at(t), &sh)?;
            alphas.push(S::one() - (-s.sigma * delta).exp());
            colors.push(s.rgb);
        }
        Ok(composite(&alphas, &colors, background))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        ckpt::write_header(w, ckpt::Kind::RadianceField)?;
        self.grid.write_to(w)?;
        self.density_mlp.write_to(w)?;
        self.color_mlp.write_to(w)?;
        ckpt::write_u32(w, self.frozen as u32)?;
        for v in [self.center.x, self.center.y, self.center.z, self.radius] {
            ckpt::write_f64(w, v.to_f64_())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        ckpt::read_header(r, ckpt::Kind::RadianceField)?;
        let grid = HashGrid::read_from(r)?;
        let density_mlp = TinyMlp::read_from(r)?;
        let color_mlp = TinyMlp::read_from(r)?;
        let frozen = ckpt::read_u32(r)? != 0;
        let center = Vec3::new(
            S::from_f64_(ckpt::read_f64(r)?),
            S::from_f64_(ckpt::read_f64(r)?),
            S::from_f64_(ckpt::read_f64(r)?),
        );
        let radius = S::from_f64_(ckpt::read_f64(r)?);
        Ok(RadianceField {
            grid,
            density_mlp,
            color_mlp,
            frozen,
            center,
            radius,
        })
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

/// Adam state for every parameter block of a [`RadianceField`].
pub struct RadianceOptimizer<S> {
    tables: Vec<AdamState<S>>,
    den_w: Vec<AdamState<S>>,
    den_b: Vec<AdamState<S>>,
    col_w: Vec<AdamState<S>>,
    col_b: Vec<AdamState<S>>,
}

impl<S: Real> RadianceOptimizer<S> {
    pub fn new(field: &RadianceField<S>, cfg: AdamConfig) -> Self {
        RadianceOptimizer {
            tables: field
                .grid
                .params()
                .map(|t| AdamState::new(t.len(), cfg))
                .collect(),
            den_w: field
                .density_mlp
                .weights
                .iter()
                .map(|w| AdamState::new(w.len(), cfg))
                .collect(),
            den_b: field
                .density_mlp
                .biases
                .iter()
                .map(|b| AdamState::new(b.len(), cfg))
                .collect(),
            col_w: field
                .color_mlp
                .weights
                .iter()
                .map(|w| AdamState::new(w.len(), cfg))
                .collect(),
            col_b: field
                .color_mlp
                .biases
                .iter()
                .map(|b| AdamState::new(b.len(), cfg))
                .collect(),
        }
    }

    pub fn step(
        &mut self,
        field: &mut RadianceField<S>,
        grads: &RadianceGrads<S>,
        lr: f64,
    ) -> Result<()> {
        for (l, adam) in self.tables.iter_mut().enumerate() {
            let g = grads.sink.level_grads(l);
            adam.step(&mut field.grid.tables[l], &g, lr)?;
        }
        for (l, adam) in self.den_w.iter_mut().enumerate() {
            adam.step(&mut field.density_mlp.weights[l], &grads.density.weights[l], lr)?;
        }
        for (l, adam) in self.den_b.iter_mut().enumerate() {
            adam.step(&mut field.density_mlp.biases[l], &grads.density.biases[l], lr)?;
        }
        for (l, adam) in self.col_w.iter_mut().enumerate() {
            adam.step(&mut field.color_mlp.weights[l], &grads.color.weights[l], lr)?;
        }
        for (l, adam) in self.col_b.iter_mut().enumerate() {
            adam.step(&mut field.color_mlp.biases[l], &grads.color.biases[l], lr)?;
        }
        Ok(())
    }
}

/// Forward + backward for one training ray; accumulates parameter
/// gradients and returns the ray's Huber color loss (already scaled by
/// `inv_color_norm`).
#[allow(clippy::too_many_arguments)]
fn process_ray<S: Real, R: Rng>(
    field: &RadianceField<S>,
    ray: &Ray<S>,
    target: [S; 3],
    n_samples: usize,
    inv_color_norm: S,
    delta_huber: S,
    background: [S; 3],
    early_stop: S,
    grads: &mut RadianceGrads<S>,
    rng: &mut R,
) -> Result<S> {
    let Some((t0, t1)) = ray.intersect_sphere(field.center, field.radius) else {
        let mut loss = S::zero();
        for k in 0..3 {
            loss += huber(background[k] - target[k], delta_huber).0 * inv_color_norm;
        }
        return Ok(loss);
    };
    let mut ts = stratified_samples(t0, t1, n_samples, rng);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sh = sh_encode(ray.direction, SH_DEGREE)?;

    let mut samples = Vec::with_capacity(ts.len());
    let mut deltas = Vec::with_capacity(ts.len());
    let mut alphas = Vec::with_capacity(ts.len());
    let mut trans = S::one();
    for (i, &t) in ts.iter().enumerate() {
        let delta = if i + 1 < ts.len() { ts[i + 1] - t } else { t1 - t };
        let s = field.sample_forward(ray.at(t), &sh)?;
        let alpha = S::one() - (-s.sigma * delta).exp();
        trans *= S::one() - alpha;
        samples.push(s);
        deltas.push(delta);
        alphas.push(alpha);
        if early_stop > S::zero() && trans < early_stop {
            break;
        }
    }
    let n = samples.len();
    let colors: Vec<[S; 3]> = samples.iter().map(|s| s.rgb).collect();
    let (rendered, _) = composite(&alphas, &colors, background);

    // loss and dL/dC
    let mut loss = S::zero();
    let mut dl_dc = [S::zero(); 3];
    for k in 0..3 {
        let (v, d) = huber(rendered[k] - target[k], delta_huber);
        loss += v * inv_color_norm;
        dl_dc[k] = d * inv_color_norm;
    }

    // composite backward via the "behind" recursion:
    // behind[i] = color seen past sample i (with background at the end)
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

    for (i, s) in samples.into_iter().enumerate().rev() {
        // d alpha / d sigma = delta * exp(-sigma delta) = delta * (1 - alpha)
        let d_sigma = d_alpha[i] * deltas[i] * (S::one() - alphas[i]);
        let d_raw = d_sigma * sigmoid(s.raw_sigma);
        let p = ray.at(ts[i]);
        field.sample_backward(p, s, d_rgb[i], d_raw, Some(&mut *grads), false)?;
    }
    Ok(loss)
}

/// Trains the field in place on calibrated views; returns the loss trace.
pub fn train_radiance<S: Real>(
    field: &mut RadianceField<S>,
    views: &[TrainView<S>],
    cfg: &RadianceConfig,
) -> Result<Vec<TraceRow>> {
    if field.is_frozen() {
        return Err(Error::invalid("cannot train a frozen radiance field"));
    }
    if views.is_empty() {
        return Err(Error::invalid("radiance training needs at least 1 view"));
    }
    let mut grads = RadianceGrads::new_for(field, AccumMode::Deterministic);
    let mut opt = RadianceOptimizer::new(field, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background = cfg.background.map(S::from_f64_);
    let delta_huber = S::from_f64_(cfg.huber_delta);
    let early_stop = S::from_f64_(cfg.early_stop_transmittance);
    let mut trace = Vec::new();
    for iter in 0..cfg.iterations {
        let mut rays = Vec::with_capacity(cfg.rays_per_batch);
        for _ in 0..cfg.rays_per_batch {
            let v = &views[rng.gen_range(0..views.len())];
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
            rays.push((ray, target));
        }
        grads.zero();
        let inv_color_norm = S::one() / S::from_usize_(3 * rays.len());
        let batch_seed = cfg.seed ^ (iter as u64).wrapping_mul(0xA076_1D64_78BD_642F);
        let mut loss = S::zero();
        for (i, (ray, target)) in rays.iter().enumerate() {
            let mut ray_rng = ChaCha8Rng::seed_from_u64(
                batch_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            loss += process_ray(
                field,
                ray,
                *target,
                cfg.n_samples,
                inv_color_norm,
                delta_huber,
                background,
                early_stop,
                &mut grads,
                &mut ray_rng,
            )?;
        }
        if !loss.to_f64_().is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                detail: "photometric loss became non-finite".to_string(),
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
                color_loss: loss.to_f64_(),
                eikonal_loss: 0.0,
                total_loss: loss.to_f64_(),
            });
        }
    }
    Ok(trace)
}

/// Builds a camera-facing helper used in tests and by the pipeline:
/// mean Huber photometric loss of `render` over all pixels of `views`.
pub fn photometric_loss<S: Real, F>(
    views: &[TrainView<S>],
    background: [S; 3],
    delta_huber: S,
    mut render: F,
) -> Result<f64>
where
    F: FnMut(&Camera<S>, S, S) -> Result<[S; 3]>,
{
    let mut total = S::zero();
    let mut count = 0usize;
    for v in views {
        for row in 0..v.image.height {
            for col in 0..v.image.width {
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
                let got = render(
                    &v.camera,
                    S::from_usize_(col) + S::half(),
                    S::from_usize_(row) + S::half(),
                )?;
                for k in 0..3 {
                    total += huber(got[k] - target[k], delta_huber).0;
                }
                count += 3;
            }
        }
    }
    Ok(total.to_f64_() / count as f64)
}

/// Used by gradient tests: full loss + gradients for a fixed ray batch.
#[cfg(test)]
pub(crate) fn batch_backward_for_test<S: Real>(
    field: &RadianceField<S>,
    rays: &[(Ray<S>, [S; 3])],
    n_samples: usize,
    grads: &mut RadianceGrads<S>,
    seed: u64,
) -> Result<S> {
    let inv = S::one() / S::from_usize_(3 * rays.len());
    let mut loss = S::zero();
    for (i, (ray, target)) in rays.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        loss += process_ray(
            field,
            ray,
            *target,
            n_samples,
            inv,
            S::one(),
            [S::zero(); 3],
            S::zero(),
            grads,
            &mut rng,
        )?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Camera;
    use crate::img::Image;

    pub(crate) fn tiny_grid(lo: f64, hi: f64) -> HashGridConfig {
        HashGridConfig {
            dim: 3,
            levels: 4,
            features_per_level: 2,
            table_size_log2: 10,
            base_resolution: 4,
            max_resolution: 32,
            time_resolution: 1,
            lo: [lo, lo, lo, 0.0],
            hi: [hi, hi, hi, 1.0],
            init_scale: 1e-4,
        }
    }

    pub(crate) fn tiny_field(seed: u64) -> RadianceField<f64> {
        RadianceField::new(tiny_grid(-1.0, 1.0), 8, seed, Vec3::zero(), 1.0).unwrap()
    }

    fn look_at_camera(eye: Vec3<f64>, size: usize) -> Camera<f64> {
        Camera::look_at(
            eye,
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            size as f64,
            size as f64,
            size,
            size,
            0.1,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn density_is_nonnegative_everywhere() {
        let f = tiny_field(3);
        for p in [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.5, -0.3, 0.2),
            Vec3::new(-0.9, 0.9, -0.9),
        ] {
            let (_, sigma) = f.query(p, Vec3::new(0.0, 0.0, 1.0)).unwrap();
            assert!(sigma >= 0.0);
        }
    }

    #[test]
    fn checksum_tracks_parameter_changes() {
        let f = tiny_field(3);
        let c1 = f.params_checksum();
        assert_eq!(c1, tiny_field(3).params_checksum());
        let mut g = f.clone();
        g.density_mlp.biases[0][0] += 0.5;
        assert_ne!(c1, g.params_checksum());
    }

    #[test]
    fn frozen_field_refuses_training() {
        let mut f = tiny_field(3);
        f.freeze();
        assert!(f.is_frozen());
        let err = train_radiance(&mut f, &[], &RadianceConfig::default()).unwrap_err();
        assert!(err.to_string().contains("frozen"));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut f = tiny_field(9);
        f.freeze();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = RadianceField::<f64>::read_from(&mut std::io::Cursor::new(buf)).unwrap();
        assert!(g.is_frozen());
        assert_eq!(f.params_checksum(), g.params_checksum());
        let p = Vec3::new(0.2, -0.1, 0.3);
        let d = Vec3::new(0.0, 0.0, 1.0);
        // payloads are stored as f32, so f64 queries agree to f32 precision
        let (c1, s1) = f.query(p, d).unwrap();
        let (c2, s2) = g.query(p, d).unwrap();
        for k in 0..3 {
            assert!((c1[k] - c2[k]).abs() < 1e-6);
        }
        assert!((s1 - s2).abs() < 1e-6);
    }

    #[test]
    fn miss_ray_composites_to_background() {
        let f = tiny_field(1);
        let ray = Ray::new(Vec3::new(5.0, 5.0, 5.0), Vec3::new(0.0, 1.0, 0.0), 1e-3, 10.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (c, acc) = f.render_ray(&ray, 16, [0.25, 0.5, 0.75], &mut rng).unwrap();
        assert_eq!(c, [0.25, 0.5, 0.75]);
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn full_gradient_check_against_finite_differences() {
        let mut field = tiny_field(17);
        // lift densities so alphas are far from 0 and gradients well-scaled
        field.density_mlp.biases[2][0] = 1.0;
        let rays = vec![
            (
                Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 1.0), 1e-3, 10.0)
                    .unwrap(),
                [0.8, 0.2, 0.5],
            ),
            (
                Ray::new(
                    Vec3::new(0.3, -0.2, -2.0),
                    Vec3::new(-0.1, 0.05, 1.0).normalized(),
                    1e-3,
                    10.0,
                )
                .unwrap(),
                [0.1, 0.9, 0.4],
            ),
        ];
        let mut grads = RadianceGrads::new_for(&field, AccumMode::Deterministic);
        let n_samples = 12;
        let seed = 99;
        batch_backward_for_test(&field, &rays, n_samples, &mut grads, seed).unwrap();
        let h = 1e-5;
        let tol = 1e-4;
        let check = |analytic: f64, plus: f64, minus: f64, what: &str| {
            let fd = (plus - minus) / (2.0 * h);
            let scale = fd.abs().max(analytic.abs()).max(1e-6);
            assert!(
                (fd - analytic).abs() / scale < tol,
                "{what}: analytic {analytic} vs fd {fd}"
            );
        };
        let eval = |f: &RadianceField<f64>| {
            let mut g = RadianceGrads::new_for(f, AccumMode::Deterministic);
            batch_backward_for_test(f, &rays, n_samples, &mut g, seed)
                .unwrap()
        };
        // a hash-table entry touched by the rays
        let lvl = 1usize;
        let sink_g = grads.sink.level_grads(lvl);
        let idx = sink_g
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        let mut fp = field.clone();
        fp.grid.tables[lvl][idx] += h;
        let mut fm = field.clone();
        fm.grid.tables[lvl][idx] -= h;
        check(sink_g[idx], eval(&fp), eval(&fm), "table entry");
        // density weight, color weight, biases
        for (name, get, set) in [
            (
                "density w0",
                grads.density.weights[0][5],
                (0usize, 0usize, 5usize),
            ),
            (
                "color w1",
                grads.color.weights[1][3],
                (1usize, 1usize, 3usize),
            ),
        ] {
            let (which, layer, at) = set;
            let mut fp = field.clone();
            let mut fm = field.clone();
            if which == 0 {
                fp.density_mlp.weights[layer][at] += h;
                fm.density_mlp.weights[layer][at] -= h;
            } else {
                fp.color_mlp.weights[layer][at] += h;
                fm.color_mlp.weights[layer][at] -= h;
            }
            check(get, eval(&fp), eval(&fm), name);
        }
        let mut fp = field.clone();
        fp.density_mlp.biases[2][0] += h;
        let mut fm = field.clone();
        fm.density_mlp.biases[2][0] -= h;
        check(grads.density.biases[2][0], eval(&fp), eval(&fm), "density raw bias");
    }

    #[test]
    fn training_fits_a_simple_scene() {
        // small emissive blob observed from a ring of cameras
        let size = 24;
        let mut views = Vec::new();
        for i in 0..4 {
            let ang = i as f64 * std::f64::consts::FRAC_PI_2;
            let cam = look_at_camera(Vec3::new(2.0 * ang.cos(), 0.6, 2.0 * ang.sin()), size);
            let mut img = Image::filled(size, size, &[0.0f64, 0.0, 0.0]);
            // rasterize a crude disc: pixels whose ray passes near origin
            for row in 0..size {
                for col in 0..size {
                    let ray = cam.ray_through(col as f64 + 0.5, row as f64 + 0.5);
                    let to_c = Vec3::zero() - ray.origin;
                    let t = to_c.dot(ray.direction);
                    let d = (ray.at(t) - Vec3::zero()).norm();
                    if d < 0.35 {
                        let px = img.pixel_mut(row, col);
                        px[0] = 0.9;
                        px[1] = 0.4;
                        px[2] = 0.1;
                    }
                }
            }
            views.push(TrainView {
                image: img,
                mask: None,
                camera: cam,
            });
        }
        let cfg = RadianceConfig {
            rays_per_batch: 128,
            n_samples: 24,
            iterations: 120,
            grid: tiny_grid(-1.0, 1.0),
            hidden_width: 16,
            trace_every: 1000,
            seed: 4,
            ..RadianceConfig::default()
        };
        let mut field =
            RadianceField::new(cfg.grid.clone(), cfg.hidden_width, cfg.seed, Vec3::zero(), 1.0)
                .unwrap();
        let trace = train_radiance(&mut field, &views, &cfg).unwrap();
        let first = trace.first().unwrap().total_loss;
        let last = trace.last().unwrap().total_loss;
        assert!(
            last < 0.5 * first,
            "loss did not drop: {first} -> {last}"
        );
    }
}
