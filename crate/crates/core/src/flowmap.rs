//! The learned stochastic flow map: a fully-connected tanh network trained
//! by Adam on the labeled quadruples.
//!
//! The network maps `(x, mu, z)` to a raw output that encodes the scaled
//! displacement `c_scale * (x_next - x)`; inference divides by `c_scale`.
//! Training is plain mini-batch MSE regression with a 90/10 split and early
//! stopping on validation loss. Gradients come from hand-rolled reverse-mode
//! differentiation of the layer stack and are checked against central finite
//! differences in the test suite.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::codec::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::labels::LabeledDataset;
use crate::rng::{fill_standard_normal, RngSeed};

const MAGIC: &[u8; 4] = b"PFNN";
const VERSION: u16 = 1;

/// Samples per parallel gradient chunk. Fixed so reductions are chunked the
/// same way for every worker count.
const GRAD_CHUNK: usize = 64;

/// Model metadata carried by a checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetMeta {
    pub d: usize,
    pub d_mu: usize,
    pub model_name: String,
}

/// Feedforward flow-map network. Parameters live in one flat vector laid out
/// per layer as a row-major `out x in` weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMapNet {
    pub layer_sizes: Vec<usize>,
    params: Vec<f64>,
    pub c_scale: f64,
    pub meta: NetMeta,
}

fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl FlowMapNet {
    /// Layer sizes for a model: input `d + d_mu + d`, the hidden widths,
    /// output `d`.
    pub fn layer_sizes_for(d: usize, d_mu: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(2 * d + d_mu);
        sizes.extend_from_slice(hidden);
        sizes.push(d);
        sizes
    }

    fn validate_sizes(layer_sizes: &[usize], c_scale: f64, meta: &NetMeta) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput("degenerate layer sizes".into()));
        }
        if layer_sizes[0] != 2 * meta.d + meta.d_mu || *layer_sizes.last().unwrap() != meta.d {
            return Err(Error::ShapeMismatch {
                expected: format!("input {} / output {}", 2 * meta.d + meta.d_mu, meta.d),
                got: format!(
                    "input {} / output {}",
                    layer_sizes[0],
                    layer_sizes.last().unwrap()
                ),
            });
        }
        if !(c_scale.is_finite() && c_scale != 0.0) {
            return Err(Error::InvalidInput(format!("bad c_scale {c_scale}")));
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], c_scale: f64, meta: NetMeta, seed: RngSeed) -> Result<Self> {
        Self::validate_sizes(layer_sizes, c_scale, &meta)?;
        let mut rng = seed.rng();
        let mut params = vec![0.0; param_count(layer_sizes)];
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[offset..offset + fan_in * fan_out] {
                *p = bound * (2.0 * rng.gen::<f64>() - 1.0);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
            c_scale,
            meta,
        })
    }

    /// All-zero parameters; forwards to the identity flow map `x -> x`.
    pub fn zeros(layer_sizes: &[usize], c_scale: f64, meta: NetMeta) -> Result<Self> {
        Self::validate_sizes(layer_sizes, c_scale, &meta)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
            c_scale,
            meta,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Raw network output for one already-concatenated input row.
    pub fn forward_raw(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut act = input.to_vec();
        let mut offset = 0;
        let n_layers = self.layer_sizes.len() - 1;
        for (li, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut sum = biases[o];
                for (wv, av) in row.iter().zip(&act) {
                    sum += wv * av;
                }
                next[o] = if li + 1 < n_layers { sum.tanh() } else { sum };
            }
            act = next;
            offset += n_in * n_out + n_out;
        }
        act
    }

    /// Displacement prediction `G(x, mu, z)`: raw output divided by
    /// `c_scale`.
    pub fn forward(&self, x: &[f64], mu: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.meta.d || mu.len() != self.meta.d_mu || z.len() != self.meta.d {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "(x, mu, z) of shape ({}, {}, {})",
                    self.meta.d, self.meta.d_mu, self.meta.d
                ),
                got: format!("({}, {}, {})", x.len(), mu.len(), z.len()),
            });
        }
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(x);
        input.extend_from_slice(mu);
        input.extend_from_slice(z);
        let raw = self.forward_raw(&input);
        Ok(raw.iter().map(|v| v / self.c_scale).collect())
    }

    /// Raw outputs for `n` concatenated input rows, written to `out`.
    pub fn forward_batch_raw(&self, inputs: &[f64], n: usize, out: &mut Vec<f64>) {
        let in_dim = self.input_dim();
        debug_assert_eq!(inputs.len(), n * in_dim);
        let n_layers = self.layer_sizes.len() - 1;
        let mut act = inputs.to_vec();
        let mut offset = 0;
        for (li, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let biases = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut next = vec![0.0; n * n_out];
            for s in 0..n {
                let row_in = &act[s * n_in..(s + 1) * n_in];
                let row_out = &mut next[s * n_out..(s + 1) * n_out];
                for o in 0..n_out {
                    let wrow = &weights[o * n_in..(o + 1) * n_in];
                    let mut sum = biases[o];
                    for (wv, av) in wrow.iter().zip(row_in) {
                        sum += wv * av;
                    }
                    row_out[o] = if li + 1 < n_layers { sum.tanh() } else { sum };
                }
            }
            act = next;
            offset += n_in * n_out + n_out;
        }
        out.clear();
        out.extend_from_slice(&act);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(MAGIC)?;
        w.u16(VERSION)?;
        w.u64(self.layer_sizes.len() as u64)?;
        for &s in &self.layer_sizes {
            w.u64(s as u64)?;
        }
        w.f64(self.c_scale)?;
        w.u64(self.meta.d as u64)?;
        w.u64(self.meta.d_mu as u64)?;
        w.str(&self.meta.model_name)?;
        w.f64_slice(&self.params)?;
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?), path);
        r.expect_magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let n_layers = r.count("layer", 1 << 10)?;
        if n_layers < 2 {
            return Err(r.fail("checkpoint needs at least two layer sizes"));
        }
        let mut layer_sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            layer_sizes.push(r.count("layer width", 1 << 20)?);
        }
        let c_scale = r.f64()?;
        let d = r.count("state dimension", 1 << 16)?;
        let d_mu = r.count("parameter dimension", 1 << 16)?;
        let model_name = r.str()?;
        let meta = NetMeta { d, d_mu, model_name };
        Self::validate_sizes(&layer_sizes, c_scale, &meta)
            .map_err(|e| r.fail(e.to_string()))?;
        let params = r.f64_vec(param_count(&layer_sizes))?;
        r.expect_eof()?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(r.fail("non-finite parameter"));
        }
        Ok(Self {
            layer_sizes,
            params,
            c_scale,
            meta,
        })
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub val_fraction: f64,
    pub max_epochs: usize,
    pub seed: RngSeed,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidInput("val_fraction must lie in (0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidInput("patience must be >= 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidInput(
                "batch_size and max_epochs must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Training history and stopping bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// 1-based epoch after which training stopped.
    pub stopped_epoch: usize,
}

fn batch_inputs_targets(
    labels: &LabeledDataset,
    idxs: &[usize],
    c_scale: f64,
    inputs: &mut Vec<f64>,
    targets: &mut Vec<f64>,
) {
    inputs.clear();
    targets.clear();
    for &m in idxs {
        let s = labels.sample(m);
        inputs.extend_from_slice(s.x_n);
        inputs.extend_from_slice(s.mu);
        inputs.extend_from_slice(s.z);
        for (xh, x) in s.x_hat_np1.iter().zip(s.x_n) {
            targets.push(c_scale * (xh - x));
        }
    }
}

/// Forward + reverse pass over one contiguous chunk; returns the summed
/// squared error and accumulates parameter gradients (summed, not averaged).
fn chunk_loss_grad(
    net: &FlowMapNet,
    inputs: &[f64],
    targets: &[f64],
    n: usize,
    grad: &mut [f64],
) -> f64 {
    let sizes = &net.layer_sizes;
    let n_layers = sizes.len() - 1;
    // Forward, keeping activations per layer.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    acts.push(inputs.to_vec());
    let mut offset = 0;
    for (li, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &net.params[offset..offset + n_in * n_out];
        let biases = &net.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let prev = &acts[li];
        let mut next = vec![0.0; n * n_out];
        for s in 0..n {
            let row_in = &prev[s * n_in..(s + 1) * n_in];
            let row_out = &mut next[s * n_out..(s + 1) * n_out];
            for o in 0..n_out {
                let wrow = &weights[o * n_in..(o + 1) * n_in];
                let mut sum = biases[o];
                for (wv, av) in wrow.iter().zip(row_in) {
                    sum += wv * av;
                }
                row_out[o] = if li + 1 < n_layers { sum.tanh() } else { sum };
            }
        }
        acts.push(next);
        offset += n_in * n_out + n_out;
    }

    let out_dim = *sizes.last().unwrap();
    let output = acts.last().unwrap();
    let mut loss = 0.0;
    // delta = dL/d(pre-activation), starting from d/d(out) of sum of squares.
    let mut delta: Vec<f64> = output
        .iter()
        .zip(targets)
        .map(|(&o, &t)| {
            let e = o - t;
            loss += e * e;
            2.0 * e
        })
        .collect();
    debug_assert_eq!(delta.len(), n * out_dim);

    // Reverse through the layers.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    for li in (0..n_layers).rev() {
        let (n_in, n_out) = (sizes[li], sizes[li + 1]);
        let offset = offsets[li];
        let weights = &net.params[offset..offset + n_in * n_out];
        let (gw, gb) = {
            let g = &mut grad[offset..offset + n_in * n_out + n_out];
            g.split_at_mut(n_in * n_out)
        };
        let prev = &acts[li];
        let mut prev_delta = vec![0.0; n * n_in];
        for s in 0..n {
            let d_row = &delta[s * n_out..(s + 1) * n_out];
            let a_row = &prev[s * n_in..(s + 1) * n_in];
            let pd_row = &mut prev_delta[s * n_in..(s + 1) * n_in];
            for o in 0..n_out {
                let dv = d_row[o];
                gb[o] += dv;
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                let wrow = &weights[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += dv * a_row[i];
                    pd_row[i] += dv * wrow[i];
                }
            }
        }
        if li > 0 {
            // Chain through the tanh of the previous layer.
            let prev_act = &acts[li];
            for (pd, &a) in prev_delta.iter_mut().zip(prev_act) {
                *pd *= 1.0 - a * a;
            }
        }
        delta = prev_delta;
    }
    loss
}

/// Mean squared-error loss over the index batch plus its gradient with
/// respect to every parameter. Parallel over fixed-size chunks with a
/// sequential chunk-order reduction, so results do not depend on worker
/// count.
pub fn loss_and_gradient(
    net: &FlowMapNet,
    labels: &LabeledDataset,
    idxs: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if idxs.is_empty() {
        return Err(Error::InvalidInput("batch is empty".into()));
    }
    if labels.d() != net.meta.d || labels.d_mu() != net.meta.d_mu {
        return Err(Error::ShapeMismatch {
            expected: format!("labels of shape ({}, {})", net.meta.d, net.meta.d_mu),
            got: format!("({}, {})", labels.d(), labels.d_mu()),
        });
    }
    let chunks: Vec<&[usize]> = idxs.chunks(GRAD_CHUNK).collect();
    let partials: Vec<(f64, Vec<f64>)> = chunks
        .into_par_iter()
        .map(|chunk| {
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            batch_inputs_targets(labels, chunk, net.c_scale, &mut inputs, &mut targets);
            let mut grad = vec![0.0; net.param_count()];
            let loss = chunk_loss_grad(net, &inputs, &targets, chunk.len(), &mut grad);
            (loss, grad)
        })
        .collect();

    let inv_n = 1.0 / idxs.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for (l, g) in partials {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    loss *= inv_n;
    for g in &mut grad {
        *g *= inv_n;
    }
    Ok((loss, grad))
}

/// Mean squared-error loss only (validation path).
fn loss_only(net: &FlowMapNet, labels: &LabeledDataset, idxs: &[usize]) -> f64 {
    let chunks: Vec<&[usize]> = idxs.chunks(256).collect();
    let partials: Vec<f64> = chunks
        .into_par_iter()
        .map(|chunk| {
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            batch_inputs_targets(labels, chunk, net.c_scale, &mut inputs, &mut targets);
            let mut out = Vec::new();
            net.forward_batch_raw(&inputs, chunk.len(), &mut out);
            out.iter()
                .zip(&targets)
                .map(|(&o, &t)| (o - t) * (o - t))
                .sum()
        })
        .collect();
    partials.iter().sum::<f64>() / idxs.len() as f64
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn shuffled_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher-Yates, driven by the dedicated substream.
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Trains a network on the labeled dataset and returns the weights of the
/// best validation epoch together with the training log.
pub fn train(
    labels: &LabeledDataset,
    hidden: &[usize],
    c_scale: f64,
    cfg: &TrainConfig,
) -> Result<(FlowMapNet, TrainLog)> {
    cfg.validate()?;
    if labels.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 labeled samples, got {}",
            labels.len()
        )));
    }
    let sizes = FlowMapNet::layer_sizes_for(labels.d(), labels.d_mu(), hidden);
    let meta = NetMeta {
        d: labels.d(),
        d_mu: labels.d_mu(),
        model_name: labels.model_name.clone(),
    };
    let mut net = FlowMapNet::init(&sizes, c_scale, meta, cfg.seed)?;

    let split = shuffled_indices(labels.len(), &mut cfg.seed.substream(1));
    let n_val = ((labels.len() as f64 * cfg.val_fraction).round() as usize)
        .clamp(1, labels.len() - 1);
    let (val_idx, train_idx) = split.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(cfg.learning_rate, net.param_count());
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_params = net.params.clone();
    let mut since_improve = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut rng = cfg.seed.substream(1 + epoch as u64);
        let order = shuffled_indices(train_idx.len(), &mut rng);
        let reordered: Vec<usize> = order.iter().map(|&i| train_idx[i]).collect();
        train_idx = reordered;

        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in train_idx.chunks(cfg.batch_size) {
            let (loss, grad) = loss_and_gradient(&net, labels, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            adam.update(&mut net.params, &grad);
            epoch_loss += loss;
            n_batches += 1;
        }
        let val_loss = loss_only(&net, labels, val_idx);
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log.epochs.push(EpochStats {
            train_loss: epoch_loss / n_batches as f64,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_params.copy_from_slice(&net.params);
            log.best_epoch = epoch;
            since_improve = 0;
        } else {
            since_improve += 1;
        }
        log.stopped_epoch = epoch;
        if since_improve >= cfg.patience {
            break;
        }
    }

    net.params = best_params;
    Ok((net, log))
}

/// One step of the learned map with a fresh standard-normal latent.
pub fn sample_one_step(
    net: &FlowMapNet,
    x: &[f64],
    mu: &[f64],
    seed: RngSeed,
) -> Result<Vec<f64>> {
    let mut rng = seed.substream(0);
    let mut z = vec![0.0; net.meta.d];
    fill_standard_normal(&mut rng, &mut z);
    let disp = net.forward(x, mu, &z)?;
    Ok(x.iter().zip(&disp).map(|(xi, di)| xi + di).collect())
}

/// Iterates the learned one-step map. `x0s` holds `n_traj` stacked initial
/// states; returns one flat ensemble per time index (including step 0).
/// Latents are independent per trajectory and per step: trajectory `t` owns
/// substream `t` and draws its latents in step order.
pub fn rollout_snapshots(
    net: &FlowMapNet,
    x0s: &[f64],
    mu: &[f64],
    n_steps: usize,
    seed: RngSeed,
) -> Result<Vec<Vec<f64>>> {
    let d = net.meta.d;
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be >= 1".into()));
    }
    if x0s.is_empty() || x0s.len() % d != 0 || mu.len() != net.meta.d_mu {
        return Err(Error::ShapeMismatch {
            expected: format!("stacked states of dimension {d}, mu of dimension {}", net.meta.d_mu),
            got: format!("{} state floats, mu {}", x0s.len(), mu.len()),
        });
    }
    let n_traj = x0s.len() / d;

    // Pre-draw latents per trajectory so batching over steps cannot change
    // the stream layout: latents[t] = [z_step0 .. z_step{n-1}].
    let latents: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.substream(t as u64);
            let mut z = vec![0.0; n_steps * d];
            fill_standard_normal(&mut rng, &mut z);
            z
        })
        .collect();

    let in_dim = 2 * d + net.meta.d_mu;
    let mut snapshots = Vec::with_capacity(n_steps + 1);
    snapshots.push(x0s.to_vec());
    let mut current = x0s.to_vec();
    let mut inputs = vec![0.0; n_traj * in_dim];
    for step in 0..n_steps {
        for t in 0..n_traj {
            let row = &mut inputs[t * in_dim..(t + 1) * in_dim];
            row[..d].copy_from_slice(&current[t * d..(t + 1) * d]);
            row[d..d + mu.len()].copy_from_slice(mu);
            row[d + mu.len()..].copy_from_slice(&latents[t][step * d..(step + 1) * d]);
        }
        // Chunked batched forward; chunk boundaries are fixed.
        let raw: Vec<Vec<f64>> = inputs
            .par_chunks(256 * in_dim)
            .map(|chunk| {
                let n = chunk.len() / in_dim;
                let mut out = Vec::new();
                net.forward_batch_raw(chunk, n, &mut out);
                out
            })
            .collect();
        let mut flat_idx = 0usize;
        for block in raw {
            for v in block {
                current[flat_idx] += v / net.c_scale;
                flat_idx += 1;
            }
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        snapshots.push(current.clone());
    }
    Ok(snapshots)
}

/// Terminal ensemble of [`rollout_snapshots`].
pub fn rollout(
    net: &FlowMapNet,
    x0s: &[f64],
    mu: &[f64],
    n_steps: usize,
    seed: RngSeed,
) -> Result<Vec<f64>> {
    Ok(rollout_snapshots(net, x0s, mu, n_steps, seed)?
        .pop()
        .expect("snapshots non-empty"))
}
