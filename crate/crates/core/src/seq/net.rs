//! The word-sequence network: embedding, two dense layers, a bidirectional
//! LSTM (or its feedforward stand-in), two dense layers and logistic outputs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{affine, affine_backward, axpy, dot, relu_backward, relu_in_place, sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::features::compute::DENSE_FEATURE_COUNT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SeqMode {
    Recurrent,
    /// The recurrent layer replaced by a per-word dense layer of similar size.
    Feedforward,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SeqDims {
    pub hash_bits: u32,
    pub embed: usize,
    pub numeric: usize,
    pub hidden: usize,
    /// Units per direction.
    pub recurrent: usize,
    pub tags: usize,
    pub dropout: f64,
    pub mode: SeqMode,
}

impl Default for SeqDims {
    fn default() -> Self {
        SeqDims::desk()
    }
}

impl SeqDims {
    pub fn desk() -> Self {
        SeqDims {
            hash_bits: 16,
            embed: 64,
            numeric: DENSE_FEATURE_COUNT,
            hidden: 64,
            recurrent: 32,
            tags: 17,
            dropout: 0.5,
            mode: SeqMode::Recurrent,
        }
    }

    pub fn full() -> Self {
        SeqDims { hash_bits: 18, embed: 500, hidden: 600, recurrent: 400, ..SeqDims::desk() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(SeqDims::desk()),
            "full" => Ok(SeqDims::full()),
            other => Err(Error::Config(format!("unknown preset {other:?}; expected desk or full"))),
        }
    }

    pub fn ablation(&self) -> Self {
        SeqDims { mode: SeqMode::Feedforward, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=30).contains(&self.hash_bits) {
            return Err(Error::Config("hash bits must lie in [1, 30]".into()));
        }
        if [self.embed, self.hidden, self.recurrent, self.tags].contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.embed + self.numeric
    }

    /// Parameters of the bidirectional LSTM layer.
    pub fn recurrent_params(&self) -> usize {
        2 * 4 * self.recurrent * (self.hidden + self.recurrent + 1)
    }

    /// Width of the feedforward stand-in: its weights and biases match the
    /// recurrent layer's parameter count as closely as an integer width allows.
    pub fn feedforward_width(&self) -> usize {
        ((self.recurrent_params() as f64) / (self.hidden as f64 + 1.0)).round() as usize
    }

    /// Width of the layer feeding the output stack.
    pub fn middle_width(&self) -> usize {
        match self.mode {
            SeqMode::Recurrent => 2 * self.recurrent,
            SeqMode::Feedforward => self.feedforward_width(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// Gate blocks in order input, forget, cell, output.
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub dims: SeqDims,
    pub emb: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    /// Forward and backward directions; empty in feedforward mode.
    pub lstm: Vec<Lstm>,
    /// Present only in feedforward mode.
    pub ff: Option<(Tensor, Tensor)>,
    pub w3: Tensor,
    pub b3: Tensor,
    pub w4: Tensor,
    pub b4: Tensor,
    pub w5: Tensor,
    pub b5: Tensor,
}

/// Uniform weights of variance `gain / fan_in`, zero biases.
fn dense(out: usize, inp: usize, gain: f64, rng: &mut impl Rng) -> (Tensor, Tensor) {
    (Tensor::uniform(out, inp, (3.0 * gain / inp as f64).sqrt(), rng), Tensor::zeros(1, out))
}

const RELU_GAIN: f64 = 2.0;

impl Params {
    pub fn init(dims: &SeqDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, r) = (dims.hidden, dims.recurrent);
        let emb = Tensor::uniform(1 << dims.hash_bits, dims.embed, 0.1, &mut rng);
        let (w1, b1) = dense(h, dims.input_width(), RELU_GAIN, &mut rng);
        let (w2, b2) = dense(h, h, RELU_GAIN, &mut rng);
        let (lstm, ff) = match dims.mode {
            SeqMode::Recurrent => {
                let make = |rng: &mut ChaCha8Rng| {
                    let mut b = Tensor::zeros(1, 4 * r);
                    b.data[r..2 * r].fill(1.0);
                    Lstm {
                        wx: Tensor::uniform(4 * r, h, (3.0 / h as f64).sqrt(), rng),
                        wh: Tensor::uniform(4 * r, r, (3.0 / r as f64).sqrt(), rng),
                        b,
                    }
                };
                (vec![make(&mut rng), make(&mut rng)], None)
            }
            SeqMode::Feedforward => (Vec::new(), Some(dense(dims.feedforward_width(), h, RELU_GAIN, &mut rng))),
        };
        let (w3, b3) = dense(h, dims.middle_width(), RELU_GAIN, &mut rng);
        let (w4, b4) = dense(h, h, RELU_GAIN, &mut rng);
        let (w5, b5) = dense(dims.tags, h, 1.0, &mut rng);
        Ok(Params { dims: dims.clone(), emb, w1, b1, w2, b2, lstm, ff, w3, b3, w4, b4, w5, b5 })
    }

    /// Same shapes, all zero, with an empty embedding table.
    fn zeros_without_embedding(&self) -> Self {
        Params {
            dims: self.dims.clone(),
            emb: Tensor::zeros(0, self.dims.embed),
            w1: self.w1.zeros_like(),
            b1: self.b1.zeros_like(),
            w2: self.w2.zeros_like(),
            b2: self.b2.zeros_like(),
            lstm: self.lstm.iter().map(|l| Lstm { wx: l.wx.zeros_like(), wh: l.wh.zeros_like(), b: l.b.zeros_like() }).collect(),
            ff: self.ff.as_ref().map(|(w, b)| (w.zeros_like(), b.zeros_like())),
            w3: self.w3.zeros_like(),
            b3: self.b3.zeros_like(),
            w4: self.w4.zeros_like(),
            b4: self.b4.zeros_like(),
            w5: self.w5.zeros_like(),
            b5: self.b5.zeros_like(),
        }
    }

    /// Every tensor except the embedding, in a fixed order with stable names.
    pub fn dense_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            vec![("w1".into(), &self.w1), ("b1".into(), &self.b1), ("w2".into(), &self.w2), ("b2".into(), &self.b2)];
        for (d, l) in ["fwd", "bwd"].iter().zip(&self.lstm) {
            out.push((format!("{d}.wx"), &l.wx));
            out.push((format!("{d}.wh"), &l.wh));
            out.push((format!("{d}.b"), &l.b));
        }
        if let Some((w, b)) = &self.ff {
            out.push(("ff.w".into(), w));
            out.push(("ff.b".into(), b));
        }
        for (n, t) in [("w3", &self.w3), ("b3", &self.b3), ("w4", &self.w4), ("b4", &self.b4), ("w5", &self.w5), ("b5", &self.b5)] {
            out.push((n.into(), t));
        }
        out
    }

    pub fn dense_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2];
        for l in &mut self.lstm {
            out.push(&mut l.wx);
            out.push(&mut l.wh);
            out.push(&mut l.b);
        }
        if let Some((w, b)) = &mut self.ff {
            out.push(w);
            out.push(b);
        }
        out.extend([&mut self.w3, &mut self.b3, &mut self.w4, &mut self.b4, &mut self.w5, &mut self.b5]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.emb.len() + self.dense_tensors().iter().map(|(_, t)| t.len()).sum::<usize>()
    }
}

/// Word inputs of one sequence: hashed word indices and standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct WordInputs {
    pub hash: Vec<u32>,
    /// `len × numeric`, row-major.
    pub numeric: Vec<f64>,
}

impl WordInputs {
    pub fn len(&self) -> usize {
        self.hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hash.is_empty()
    }
}

/// Dropout masks for one sequence, fixed across its time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Masks {
    /// Scale per word type: 0 when dropped, `1/(1-d)` when kept.
    pub emb: BTreeMap<u32, f64>,
    /// Per direction, a scale per recurrent unit applied to the previous hidden state.
    pub rec: Vec<Vec<f64>>,
}

impl Masks {
    pub fn sample(dims: &SeqDims, inputs: &WordInputs, rng: &mut impl Rng) -> Self {
        let keep = 1.0 - dims.dropout;
        let draw = |rng: &mut dyn rand::RngCore| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 };
        let mut emb = BTreeMap::new();
        for &h in &inputs.hash {
            if !emb.contains_key(&h) {
                let v = draw(rng);
                emb.insert(h, v);
            }
        }
        let directions = if dims.mode == SeqMode::Recurrent { 2 } else { 0 };
        let rec = (0..directions).map(|_| (0..dims.recurrent).map(|_| draw(rng)).collect()).collect();
        Masks { emb, rec }
    }
}

#[derive(Clone, Debug)]
struct LstmCache {
    /// Post-activation gates per processed step, `steps × 4R`.
    gates: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Cache {
    steps: usize,
    x0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    lstm: Vec<LstmCache>,
    u: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradients: dense tensors in the shape of the model, embedding rows sparse.
#[derive(Clone, Debug)]
pub struct Grads {
    pub dense: Params,
    pub emb: BTreeMap<u32, Vec<f64>>,
}

impl Grads {
    pub fn zeros(params: &Params) -> Self {
        Grads { dense: params.zeros_without_embedding(), emb: BTreeMap::new() }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.dense.dense_tensors_mut().into_iter().zip(other.dense.dense_tensors()) {
            axpy(1.0, &b.1.data, &mut a.data);
        }
        for (k, v) in &other.emb {
            let row = self.emb.entry(*k).or_insert_with(|| vec![0.0; v.len()]);
            axpy(1.0, v, row);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.dense.dense_tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
        for v in self.emb.values_mut() {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }
}

fn tanh(x: f64) -> f64 {
    x.tanh()
}

impl Params {
    fn check(&self, inputs: &WordInputs) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if inputs.numeric.len() != inputs.len() * self.dims.numeric {
            return Err(Error::DimensionMismatch { expected: inputs.len() * self.dims.numeric, got: inputs.numeric.len() });
        }
        let limit = 1u32 << self.dims.hash_bits;
        if let Some(&bad) = inputs.hash.iter().find(|&&h| h >= limit) {
            return Err(Error::DimensionMismatch { expected: limit as usize, got: bad as usize });
        }
        Ok(())
    }

    /// Per-word, per-tag probabilities (`len × tags`). With masks, dropout is applied.
    pub fn forward(&self, inputs: &WordInputs, masks: Option<&Masks>) -> Result<Cache> {
        self.check(inputs)?;
        let dims = &self.dims;
        let steps = inputs.len();
        let (e, n, r) = (dims.embed, dims.numeric, dims.recurrent);

        let mut x0 = Vec::with_capacity(steps * (e + n));
        for t in 0..steps {
            let h = inputs.hash[t];
            let scale = masks.map_or(1.0, |m| m.emb[&h]);
            x0.extend(self.emb.row(h as usize).iter().map(|v| v * scale));
            x0.extend_from_slice(&inputs.numeric[t * n..(t + 1) * n]);
        }
        let mut d1 = affine(&x0, steps, &self.w1, &self.b1);
        relu_in_place(&mut d1);
        let mut d2 = affine(&d1, steps, &self.w2, &self.b2);
        relu_in_place(&mut d2);

        let mut lstm = Vec::new();
        let u = match &self.ff {
            None => {
                let mut u = vec![0.0; steps * 2 * r];
                for (dir, cell) in self.lstm.iter().enumerate() {
                    let mask = masks.map(|m| m.rec[dir].as_slice());
                    let cache = run_lstm(cell, &d2, steps, r, dir == 1, mask);
                    for k in 0..steps {
                        let t = if dir == 1 { steps - 1 - k } else { k };
                        u[t * 2 * r + dir * r..t * 2 * r + (dir + 1) * r].copy_from_slice(&cache.h[k * r..(k + 1) * r]);
                    }
                    lstm.push(cache);
                }
                u
            }
            Some((w, b)) => {
                let mut u = affine(&d2, steps, w, b);
                relu_in_place(&mut u);
                u
            }
        };

        let mut e1 = affine(&u, steps, &self.w3, &self.b3);
        relu_in_place(&mut e1);
        let mut e2 = affine(&e1, steps, &self.w4, &self.b4);
        relu_in_place(&mut e2);
        let logits = affine(&e2, steps, &self.w5, &self.b5);
        let probs = logits.iter().map(|&z| sigmoid(z)).collect();
        Ok(Cache { steps, x0, d1, d2, lstm, u, e1, e2, logits, probs })
    }

    /// Summed binary cross-entropy of a forward pass against multi-hot targets.
    pub fn loss(&self, cache: &Cache, targets: &[f64]) -> Result<f64> {
        if targets.len() != cache.logits.len() {
            return Err(Error::DimensionMismatch { expected: cache.logits.len(), got: targets.len() });
        }
        Ok(cache.logits.iter().zip(targets).map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()).sum())
    }

    /// Loss and gradients for one sequence, through time over the whole sequence.
    pub fn backward(&self, inputs: &WordInputs, cache: &Cache, targets: &[f64], masks: Option<&Masks>) -> Result<(f64, Grads)> {
        let loss = self.loss(cache, targets)?;
        let dims = &self.dims;
        let steps = cache.steps;
        let (e, n, r) = (dims.embed, dims.numeric, dims.recurrent);
        let mut g = Grads::zeros(self);

        let dz: Vec<f64> = cache.probs.iter().zip(targets).map(|(p, y)| p - y).collect();
        let mut de2 = affine_backward(&cache.e2, &dz, steps, &self.w5, &mut g.dense.w5, &mut g.dense.b5);
        relu_backward(&cache.e2, &mut de2);
        let mut de1 = affine_backward(&cache.e1, &de2, steps, &self.w4, &mut g.dense.w4, &mut g.dense.b4);
        relu_backward(&cache.e1, &mut de1);
        let du = affine_backward(&cache.u, &de1, steps, &self.w3, &mut g.dense.w3, &mut g.dense.b3);

        let mut dd2 = match &self.ff {
            None => {
                let mut dd2 = vec![0.0; steps * dims.hidden];
                for dir in 0..self.lstm.len() {
                    let dh: Vec<f64> = (0..steps)
                        .flat_map(|k| {
                            let t = if dir == 1 { steps - 1 - k } else { k };
                            du[t * 2 * r + dir * r..t * 2 * r + (dir + 1) * r].iter().copied()
                        })
                        .collect();
                    let mask = masks.map(|m| m.rec[dir].as_slice());
                    let dx =
                        lstm_backward(&self.lstm[dir], &mut g.dense.lstm[dir], &cache.lstm[dir], &cache.d2, &dh, steps, r, dir == 1, mask);
                    axpy(1.0, &dx, &mut dd2);
                }
                dd2
            }
            Some((w, _)) => {
                let mut du = du;
                relu_backward(&cache.u, &mut du);
                let (gw, gb) = g.dense.ff.as_mut().expect("same mode");
                affine_backward(&cache.d2, &du, steps, w, gw, gb)
            }
        };
        relu_backward(&cache.d2, &mut dd2);
        let mut dd1 = affine_backward(&cache.d1, &dd2, steps, &self.w2, &mut g.dense.w2, &mut g.dense.b2);
        relu_backward(&cache.d1, &mut dd1);
        let dx0 = affine_backward(&cache.x0, &dd1, steps, &self.w1, &mut g.dense.w1, &mut g.dense.b1);
        for t in 0..steps {
            let h = inputs.hash[t];
            let scale = masks.map_or(1.0, |m| m.emb[&h]);
            if scale == 0.0 {
                continue;
            }
            let row = g.emb.entry(h).or_insert_with(|| vec![0.0; e]);
            axpy(scale, &dx0[t * (e + n)..t * (e + n) + e], row);
        }
        Ok((loss, g))
    }
}

/// Runs one direction. `x` is in natural order; caches are in processing order.
fn run_lstm(cell: &Lstm, x: &[f64], steps: usize, r: usize, reverse: bool, mask: Option<&[f64]>) -> LstmCache {
    let hdim = cell.wx.cols;
    let mut gates = vec![0.0; steps * 4 * r];
    let mut c = vec![0.0; steps * r];
    let mut h = vec![0.0; steps * r];
    let mut hin = vec![0.0; r];
    for k in 0..steps {
        let t = if reverse { steps - 1 - k } else { k };
        let xt = &x[t * hdim..(t + 1) * hdim];
        if k > 0 {
            for j in 0..r {
                hin[j] = h[(k - 1) * r + j] * mask.map_or(1.0, |m| m[j]);
            }
        }
        let a = &mut gates[k * 4 * r..(k + 1) * 4 * r];
        for (o, ao) in a.iter_mut().enumerate() {
            *ao = cell.b.data[o] + dot(cell.wx.row(o), xt) + if k > 0 { dot(cell.wh.row(o), &hin) } else { 0.0 };
        }
        for j in 0..r {
            let i = sigmoid(a[j]);
            let f = sigmoid(a[r + j]);
            let gg = tanh(a[2 * r + j]);
            let o = sigmoid(a[3 * r + j]);
            a[j] = i;
            a[r + j] = f;
            a[2 * r + j] = gg;
            a[3 * r + j] = o;
            let c_prev = if k > 0 { c[(k - 1) * r + j] } else { 0.0 };
            let cj = f * c_prev + i * gg;
            c[k * r + j] = cj;
            h[k * r + j] = o * tanh(cj);
        }
    }
    LstmCache { gates, c, h }
}

/// Backpropagates one direction; `dh` is the loss gradient on the outputs in
/// processing order. Returns the gradient on `x` in natural order.
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    cell: &Lstm,
    g: &mut Lstm,
    cache: &LstmCache,
    x: &[f64],
    dh: &[f64],
    steps: usize,
    r: usize,
    reverse: bool,
    mask: Option<&[f64]>,
) -> Vec<f64> {
    let hdim = cell.wx.cols;
    let mut dx = vec![0.0; steps * hdim];
    let mut dh_next = vec![0.0; r];
    let mut dc_next = vec![0.0; r];
    let mut da = vec![0.0; 4 * r];
    let mut hin = vec![0.0; r];
    for k in (0..steps).rev() {
        let t = if reverse { steps - 1 - k } else { k };
        let gates = &cache.gates[k * 4 * r..(k + 1) * 4 * r];
        for j in 0..r {
            let (i, f, gg, o) = (gates[j], gates[r + j], gates[2 * r + j], gates[3 * r + j]);
            let cj = cache.c[k * r + j];
            let c_prev = if k > 0 { cache.c[(k - 1) * r + j] } else { 0.0 };
            let tc = tanh(cj);
            let dhj = dh[k * r + j] + dh_next[j];
            let dc = dhj * o * (1.0 - tc * tc) + dc_next[j];
            da[j] = dc * gg * i * (1.0 - i);
            da[r + j] = dc * c_prev * f * (1.0 - f);
            da[2 * r + j] = dc * i * (1.0 - gg * gg);
            da[3 * r + j] = dhj * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        let xt = &x[t * hdim..(t + 1) * hdim];
        let dxt = &mut dx[t * hdim..(t + 1) * hdim];
        if k > 0 {
            for j in 0..r {
                hin[j] = cache.h[(k - 1) * r + j] * mask.map_or(1.0, |m| m[j]);
            }
        }
        dh_next.fill(0.0);
        for (o, &dao) in da.iter().enumerate() {
            if dao == 0.0 {
                continue;
            }
            g.b.data[o] += dao;
            axpy(dao, xt, g.wx.row_mut(o));
            axpy(dao, cell.wx.row(o), dxt);
            if k > 0 {
                axpy(dao, &hin, g.wh.row_mut(o));
                axpy(dao, cell.wh.row(o), &mut dh_next);
            }
        }
        if let Some(m) = mask {
            for j in 0..r {
                dh_next[j] *= m[j];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_dims(mode: SeqMode) -> SeqDims {
        SeqDims { hash_bits: 3, embed: 3, numeric: 2, hidden: 4, recurrent: 3, tags: 5, dropout: 0.5, mode }
    }

    fn toy_inputs(rng: &mut ChaCha8Rng) -> WordInputs {
        let hash = vec![1, 4, 1, 7, 2, 4];
        let numeric = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        WordInputs { hash, numeric }
    }

    fn check_gradients(mode: SeqMode, with_dropout: bool) {
        let dims = toy_dims(mode);
        let mut params = Params::init(&dims, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // large random weights and biases: strong signals, no unit sitting at a ReLU kink
        for t in params.dense_tensors_mut() {
            for v in &mut t.data {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let inputs = toy_inputs(&mut rng);
        let targets: Vec<f64> = (0..6 * dims.tags).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let masks = with_dropout.then(|| {
            let mut m = Masks::sample(&dims, &inputs, &mut rng);
            // keep at least one embedding row so its gradient is exercised
            m.emb.insert(1, 2.0);
            m
        });
        let cache = params.forward(&inputs, masks.as_ref()).unwrap();
        let (_, grads) = params.backward(&inputs, &cache, &targets, masks.as_ref()).unwrap();
        let h = 1e-5;
        let loss_at = |p: &Params| p.loss(&p.forward(&inputs, masks.as_ref()).unwrap(), &targets).unwrap();
        let rel = |num: f64, ana: f64| (num - ana).abs() / num.abs().max(ana.abs()).max(1e-7);

        let names: Vec<String> = params.dense_tensors().into_iter().map(|(n, _)| n).collect();
        let analytic: Vec<Vec<f64>> = grads.dense.dense_tensors().into_iter().map(|(_, t)| t.data.clone()).collect();
        for (ti, name) in names.iter().enumerate() {
            for k in 0..analytic[ti].len() {
                let mut plus = params.clone();
                plus.dense_tensors_mut()[ti].data[k] += h;
                let mut minus = params.clone();
                minus.dense_tensors_mut()[ti].data[k] -= h;
                let num = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let err = rel(num, analytic[ti][k]);
                assert!(err < 1e-4, "{name}[{k}]: numeric {num} analytic {} rel {err}", analytic[ti][k]);
            }
        }
        for &row in &[1u32, 2, 4, 7, 0] {
            for col in 0..dims.embed {
                let k = row as usize * dims.embed + col;
                let mut plus = params.clone();
                plus.emb.data[k] += h;
                let mut minus = params.clone();
                minus.emb.data[k] -= h;
                let num = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let ana = grads.emb.get(&row).map_or(0.0, |v| v[col]);
                assert!(rel(num, ana) < 1e-4 || (num.abs() < 1e-9 && ana == 0.0), "emb[{row},{col}]: {num} vs {ana}");
            }
        }
    }

    #[test]
    fn gradients_recurrent() {
        check_gradients(SeqMode::Recurrent, false);
    }

    #[test]
    fn gradients_recurrent_with_dropout() {
        check_gradients(SeqMode::Recurrent, true);
    }

    #[test]
    fn gradients_feedforward() {
        check_gradients(SeqMode::Feedforward, true);
    }

    #[test]
    fn zero_output_layer_gives_one_half() {
        let dims = toy_dims(SeqMode::Recurrent);
        let mut p = Params::init(&dims, 1).unwrap();
        p.w5.data.fill(0.0);
        p.b5.data.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = p.forward(&toy_inputs(&mut rng), None).unwrap();
        assert_eq!(c.probs.len(), 6 * dims.tags);
        assert!(c.probs.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn direction_matters() {
        let dims = SeqDims { hidden: 8, ..toy_dims(SeqMode::Recurrent) };
        let mut p = Params::init(&dims, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in p.dense_tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let inputs = WordInputs { hash: vec![1, 2, 5], numeric: vec![0.5, -1.0, 2.0, 0.0, -0.3, 0.7] };
        let reversed = WordInputs { hash: vec![5, 2, 1], numeric: vec![-0.3, 0.7, 2.0, 0.0, 0.5, -1.0] };
        let (k, r) = (dims.tags, dims.recurrent);
        let at = |v: &[f64], t: usize| v[t * k..(t + 1) * k].to_vec();

        // untied: the same word in a reversed context scores differently
        let a = p.forward(&inputs, None).unwrap().probs;
        let b = p.forward(&reversed, None).unwrap().probs;
        assert_ne!(at(&a, 0), at(&b, 0));
        assert_ne!(at(&a, 0), at(&b, 2));

        // tied directions with a symmetric reader of both halves: exact mirror
        p.lstm[1] = p.lstm[0].clone();
        for o in 0..p.w3.rows {
            let row = p.w3.row_mut(o);
            let (fwd, bwd) = row.split_at_mut(r);
            bwd.copy_from_slice(fwd);
        }
        let a = p.forward(&inputs, None).unwrap().probs;
        let b = p.forward(&reversed, None).unwrap().probs;
        for t in 0..3 {
            for (x, y) in at(&a, t).iter().zip(at(&b, 2 - t)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert_ne!(at(&a, 0), at(&b, 0));
    }

    #[test]
    fn masks_reproducible_and_shared_per_word_type() {
        let dims = toy_dims(SeqMode::Recurrent);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let inputs = toy_inputs(&mut rng);
        let a = Masks::sample(&dims, &inputs, &mut ChaCha8Rng::seed_from_u64(4));
        let b = Masks::sample(&dims, &inputs, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_eq!(a.emb.len(), 4);
        assert!(a.emb.values().all(|&s| s == 0.0 || s == 2.0));
        assert_eq!(a.rec.len(), 2);
    }

    #[test]
    fn ablation_parameter_count_within_one_percent() {
        for dims in [SeqDims::desk(), SeqDims::full()] {
            let ff = dims.feedforward_width();
            let ff_params = ff * dims.hidden + ff;
            let rec = dims.recurrent_params() as f64;
            assert!((ff_params as f64 - rec).abs() / rec < 0.01);
        }
        let p = Params::init(&toy_dims(SeqMode::Feedforward), 0).unwrap();
        let out = p.forward(&WordInputs { hash: vec![0, 1, 2], numeric: vec![0.0; 6] }, None).unwrap();
        assert_eq!(out.probs.len(), 3 * 5);
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = Params::init(&toy_dims(SeqMode::Recurrent), 0).unwrap();
        assert!(matches!(p.forward(&WordInputs { hash: vec![], numeric: vec![] }, None), Err(Error::EmptySequence)));
    }
}
