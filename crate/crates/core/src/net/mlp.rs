//! Small fully-connected networks with explicit forward tapes and manual
//! backprop.

use super::activation::Activation;
use crate::checkpoint as ckpt;
use crate::error::{Error, Result};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

#[derive(Debug, Clone)]
pub struct TinyMlp<S> {
    /// Layer widths including input and output: [in, h1, ..., out].
    pub widths: Vec<usize>,
    pub hidden_act: Activation,
    pub output_act: Activation,
    /// Per layer, row-major (out x in).
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
}

/// Saved forward state; consumed exactly once by [`TinyMlp::backward`].
pub struct Tape<S> {
    /// Post-activation inputs to each layer (element 0 is the network input).
    layer_inputs: Vec<Vec<S>>,
    /// Activation derivatives at each layer's pre-activation.
    act_derivs: Vec<Vec<S>>,
}

/// Gradient buffers mirroring [`TinyMlp`] parameters; accumulated across
/// calls until zeroed.
#[derive(Debug, Clone)]
pub struct MlpGrads<S> {
    pub weights: Vec<Vec<S>>,
    pub biases: Vec<Vec<S>>,
}

impl<S: Real> MlpGrads<S> {
    pub fn new_for(mlp: &TinyMlp<S>) -> Self {
        MlpGrads {
            weights: mlp.weights.iter().map(|w| vec![S::zero(); w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![S::zero(); b.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in g.iter_mut() {
                *x = S::zero();
            }
        }
    }

    pub fn scale(&mut self, s: S) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in g.iter_mut() {
                *x *= s;
            }
        }
    }
}

impl<S: Real> TinyMlp<S> {
    /// Glorot-uniform weights, zero biases.
    pub fn new(
        widths: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("mlp needs >= 2 nonzero layer widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| S::from_f64_(rng.gen_range(-bound..=bound)))
                    .collect(),
            );
            biases.push(vec![S::zero(); fan_out]);
        }
        Ok(TinyMlp {
            widths: widths.to_vec(),
            hidden_act,
            output_act,
            weights,
            biases,
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Zero the final layer's weights and biases (outputs start at the
    /// output activation of 0).
    pub fn zero_output_layer(&mut self) {
        for w in self.weights.last_mut().unwrap() {
            *w = S::zero();
        }
        for b in self.biases.last_mut().unwrap() {
            *b = S::zero();
        }
    }

    /// Forward pass recording a tape for backprop.
    pub fn forward(&self, x: &[S]) -> Result<(Vec<S>, Tape<S>)> {
        self.run(x, true)
            .map(|(y, tape)| (y, tape.expect("tape requested")))
    }

    /// Forward pass without bookkeeping.
    pub fn infer(&self, x: &[S]) -> Result<Vec<S>> {
        self.run(x, false).map(|(y, _)| y)
    }

    fn run(&self, x: &[S], record: bool) -> Result<(Vec<S>, Option<Tape<S>>)> {
        if x.len() != self.input_width() {
            return Err(Error::shape(format!(
                "mlp input width {} != {}",
                x.len(),
                self.input_width()
            )));
        }
        let layers = self.weights.len();
        let mut inputs = Vec::with_capacity(layers + 1);
        let mut derivs = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let act = if l + 1 == layers {
                self.output_act
            } else {
                self.hidden_act
            };
            let w = &self.weights[l];
            let mut next = Vec::with_capacity(n_out);
            let mut dact = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = self.biases[l][o];
                for (wi, xi) in row.iter().zip(&cur) {
                    z += *wi * *xi;
                }
                let (v, d) = act.eval(z);
                next.push(v);
                dact.push(d);
            }
            if record {
                inputs.push(cur);
                derivs.push(dact);
            }
            cur = next;
        }
        let tape = record.then(|| Tape {
            layer_inputs: inputs,
            act_derivs: derivs,
        });
        Ok((cur, tape))
    }

    /// Backprop `upstream` (dL/doutput) through the tape; accumulates
    /// parameter gradients into `grads` and returns dL/dinput.
    pub fn backward(&self, tape: Tape<S>, upstream: &[S], grads: &mut MlpGrads<S>) -> Result<Vec<S>> {
        if upstream.len() != self.output_width() {
            return Err(Error::shape(format!(
                "upstream width {} != mlp output width {}",
                upstream.len(),
                self.output_width()
            )));
        }
        let layers = self.weights.len();
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let input = &tape.layer_inputs[l];
            let dact = &tape.act_derivs[l];
            // delta at pre-activation
            for (d, da) in delta.iter_mut().zip(dact) {
                *d *= *da;
            }
            let gw = &mut grads.weights[l];
            for o in 0..n_out {
                let d = delta[o];
                grads.biases[l][o] += d;
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * *xi;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![S::zero(); n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += d * *wi;
                    }
                }
                delta = prev;
            } else {
                let w = &self.weights[0];
                let mut input_grad = vec![S::zero(); n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wi) in input_grad.iter_mut().zip(row) {
                        *p += d * *wi;
                    }
                }
                return Ok(input_grad);
            }
        }
        unreachable!("mlp has at least one layer")
    }

    fn act_code(a: Activation) -> (u32, f64) {
        match a {
            Activation::Identity => (0, 0.0),
            Activation::Relu => (1, 0.0),
            Activation::Softplus { beta } => (2, beta),
            Activation::Sigmoid => (3, 0.0),
        }
    }

    fn act_from(code: u32, beta: f64) -> Result<Activation> {
        Ok(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Softplus { beta },
            3 => Activation::Sigmoid,
            _ => return Err(Error::Checkpoint(format!("unknown activation code {code}"))),
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        ckpt::write_header(w, ckpt::Kind::Mlp)?;
        ckpt::write_u32(w, self.widths.len() as u32)?;
        for &wd in &self.widths {
            ckpt::write_u32(w, wd as u32)?;
        }
        for act in [self.hidden_act, self.output_act] {
            let (code, beta) = Self::act_code(act);
            ckpt::write_u32(w, code)?;
            ckpt::write_f64(w, beta)?;
        }
        for l in 0..self.weights.len() {
            ckpt::write_params(w, &self.weights[l])?;
            ckpt::write_params(w, &self.biases[l])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        ckpt::read_header(r, ckpt::Kind::Mlp)?;
        let n = ckpt::read_u32(r)? as usize;
        let mut widths = Vec::with_capacity(n);
        for _ in 0..n {
            widths.push(ckpt::read_u32(r)? as usize);
        }
        let mut acts = [Activation::Identity; 2];
        for a in acts.iter_mut() {
            let code = ckpt::read_u32(r)?;
            let beta = ckpt::read_f64(r)?;
            *a = Self::act_from(code, beta)?;
        }
        let mut mlp = TinyMlp::new(&widths, acts[0], acts[1], 0)?;
        for l in 0..mlp.weights.len() {
            let w: Vec<S> = ckpt::read_params(r)?;
            let b: Vec<S> = ckpt::read_params(r)?;
            if w.len() != mlp.weights[l].len() || b.len() != mlp.biases[l].len() {
                return Err(Error::Checkpoint("layer shape mismatch".into()));
            }
            mlp.weights[l] = w;
            mlp.biases[l] = b;
        }
        Ok(mlp)
    }
}
