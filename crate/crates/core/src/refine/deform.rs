//! Learned per-frame displacement field: a 4D (position, time) hash
//! encoding followed by a small MLP whose output layer starts at zero so
//! the initial displacement is identically zero.

use crate::checkpoint as ckpt;
use crate::encode::{AccumMode, FeatureGradSink, HashGrid, HashGridConfig};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::net::{Activation, AdamConfig, AdamState, MlpGrads, Tape, TinyMlp};
use crate::scalar::Real;
use std::io::{Read, Write};
use std::path::Path;

/// Hidden width of the displacement MLP.
pub const DEFORM_HIDDEN: usize = 128;

/// Displacement network Δp = f(p, t) over canonical space and
/// normalized time in [0, 1].
#[derive(Debug, Clone)]
pub struct DeformNet<S> {
    pub grid: HashGrid<S>,
    /// [64 spacetime features] -> 3D displacement.
    pub mlp: TinyMlp<S>,
}

/// Gradient buffers for a [`DeformNet`].
pub struct DeformGrads<S> {
    pub sink: FeatureGradSink<S>,
    pub mlp: MlpGrads<S>,
}

impl<S: Real> DeformGrads<S> {
    pub fn new_for(net: &DeformNet<S>, mode: AccumMode) -> Self {
        DeformGrads {
            sink: FeatureGradSink::new_for(&net.grid, mode),
            mlp: MlpGrads::new_for(&net.mlp),
        }
    }

    pub fn zero(&mut self) {
        self.sink.zero();
        self.mlp.zero();
    }
}

impl<S: Real> DeformNet<S> {
    /// `grid_cfg` must be 4-dimensional; `hidden_width` 128 matches the
    /// full-size model. The output layer is zeroed so a fresh net maps
    /// everything to zero displacement.
    pub fn new(grid_cfg: HashGridConfig, hidden_width: usize, seed: u64) -> Result<Self> {
        if grid_cfg.dim != 4 {
            return Err(Error::invalid("deform net needs a 4D hash grid"));
        }
        let grid = HashGrid::new(grid_cfg, seed)?;
        let w = hidden_width;
        let mut mlp = TinyMlp::new(
            &[grid.output_width(), w, w, 3],
            Activation::Relu,
            Activation::Identity,
            seed.wrapping_add(1),
        )?;
        mlp.zero_output_layer();
        Ok(DeformNet { grid, mlp })
    }

    fn encode(&self, p: Vec3<S>, t: S) -> Vec<S> {
        let pf = [p.x.to_f64_(), p.y.to_f64_(), p.z.to_f64_(), t.to_f64_()];
        self.grid.encode(&pf)
    }

    /// Displacement at (p, t) without a tape.
    pub fn displacement(&self, p: Vec3<S>, t: S) -> Result<Vec3<S>> {
        let out = self.mlp.infer(&self.encode(p, t))?;
        Ok(Vec3::new(out[0], out[1], out[2]))
    }

    /// Forward with tape for training.
    pub(crate) fn forward(&self, p: Vec3<S>, t: S) -> Result<(Vec3<S>, Tape<S>)> {
        let (out, tape) = self.mlp.forward(&self.encode(p, t))?;
        Ok((Vec3::new(out[0], out[1], out[2]), tape))
    }

    /// Backward into the net's own parameters.
    pub(crate) fn backward(
        &self,
        p: Vec3<S>,
        t: S,
        tape: Tape<S>,
        dl_ddelta: Vec3<S>,
        grads: &mut DeformGrads<S>,
    ) -> Result<()> {
        let up = [dl_ddelta.x, dl_ddelta.y, dl_ddelta.z];
        let in_grad = self.mlp.backward(tape, &up, &mut grads.mlp)?;
        let pf = [p.x.to_f64_(), p.y.to_f64_(), p.z.to_f64_(), t.to_f64_()];
        self.grid
            .encode_backward(&pf, &in_grad, Some(&mut grads.sink), false)?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        ckpt::write_header(w, ckpt::Kind::DeformField)?;
        self.grid.write_to(w)?;
        self.mlp.write_to(w)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        ckpt::read_header(r, ckpt::Kind::DeformField)?;
        Ok(DeformNet {
            grid: HashGrid::read_from(r)?,
            mlp: TinyMlp::read_from(r)?,
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

/// Adam state for all parameter blocks of a [`DeformNet`].
pub struct DeformOptimizer<S> {
    tables: Vec<AdamState<S>>,
    w: Vec<AdamState<S>>,
    b: Vec<AdamState<S>>,
}

impl<S: Real> DeformOptimizer<S> {
    pub fn new(net: &DeformNet<S>, cfg: AdamConfig) -> Self {
        DeformOptimizer {
            tables: net
                .grid
                .params()
                .map(|t| AdamState::new(t.len(), cfg))
                .collect(),
            w: net
                .mlp
                .weights
                .iter()
                .map(|w| AdamState::new(w.len(), cfg))
                .collect(),
            b: net
                .mlp
                .biases
                .iter()
                .map(|b| AdamState::new(b.len(), cfg))
                .collect(),
        }
    }

    pub fn step(&mut self, net: &mut DeformNet<S>, grads: &DeformGrads<S>, lr: f64) -> Result<()> {
        for (l, adam) in self.tables.iter_mut().enumerate() {
            let g = grads.sink.level_grads(l);
            adam.step(&mut net.grid.tables[l], &g, lr)?;
        }
        for (l, adam) in self.w.iter_mut().enumerate() {
            adam.step(&mut net.mlp.weights[l], &grads.mlp.weights[l], lr)?;
        }
        for (l, adam) in self.b.iter_mut().enumerate() {
            adam.step(&mut net.mlp.biases[l], &grads.mlp.biases[l], lr)?;
        }
        Ok(())
    }
}
