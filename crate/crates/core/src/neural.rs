//! Multilayer perceptron that maps one decoder step's two received samples to
//! the 16 joint-trellis transition probabilities, trained with a KL
//! divergence loss and Adam.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::receivers::metrics::{AnalyticBranchModel, BranchModel, DecoderSide, JOINT_TRANSITIONS};
use crate::rng::{stream, StreamRole};
use crate::scalar::Real;
use crate::trellis::{build_joint_trellis, Trellis};
use crate::txchain::{apply_channel_with, demux_views, random_bits, turbo_encode, ChannelModel, Interleaver, ViewStep};

/// Floor applied to predicted probabilities inside `ln`.
pub const KLD_FLOOR: f64 = 1e-30;

pub const INPUT_DIM: usize = 2;
pub const OUTPUT_DIM: usize = JOINT_TRANSITIONS;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// 1 or 2; 0 when not tied to a decoder.
    pub decoder: usize,
    pub train_snr_db: Option<f64>,
    pub csi_sigma2: Option<f64>,
}

/// Fully connected network `dims[0] -> ... -> dims[n]`, ReLU on hidden layers
/// and softmax on the output.
///
/// Parameters live in one flat vector; layer `l` stores its `dims[l+1] x
/// dims[l]` row-major weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F = f64> {
    dims: Vec<usize>,
    params: Vec<F>,
    pub meta: ModelMeta,
}

/// Intermediate values kept for back-propagation.
struct Trace<F> {
    /// Layer inputs; `acts[0]` is the network input, the last entry the output.
    acts: Vec<Vec<F>>,
}

impl<F: Real> Mlp<F> {
    /// He-normal weights, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        let mut rng = stream(seed, 0, StreamRole::Init);
        for l in 0..m.num_layers() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let off = m.offset(l);
            for w in &mut m.params[off..off + fan_in * fan_out] {
                let z: f64 = rng.sample(StandardNormal);
                *w = F::cst(z * scale);
            }
        }
        Ok(m)
    }

    /// All-zero parameters.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::ModelDimension(format!("invalid layer sizes {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![F::zero(); n],
            meta: ModelMeta::default(),
        })
    }

    /// The branch-metric architecture `[2, h1, h2, 16]`.
    pub fn branch_model(hidden: [usize; 2], seed: u64) -> Result<Self> {
        Self::new(&[INPUT_DIM, hidden[0], hidden[1], OUTPUT_DIM], seed)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.dims[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[F], &[F]) {
        let off = self.offset(l);
        let nw = self.dims[l] * self.dims[l + 1];
        let (w, rest) = self.params[off..].split_at(nw);
        (w, &rest[..self.dims[l + 1]])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [F], &mut [F]) {
        let off = self.offset(l);
        let nw = self.dims[l] * self.dims[l + 1];
        let nb = self.dims[l + 1];
        let (w, rest) = self.params[off..].split_at_mut(nw);
        (w, &mut rest[..nb])
    }

    fn trace(&self, input: &[F]) -> Result<Trace<F>> {
        if input.len() != self.dims[0] {
            return Err(Error::LengthMismatch {
                what: "network input",
                expected: self.dims[0],
                actual: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let (w, b) = self.layer(l);
            let x = &acts[l];
            let mut z: Vec<F> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * x.len()..(o + 1) * x.len()];
                *zo += row.iter().zip(x).map(|(&a, &c)| a * c).sum::<F>();
            }
            if l == last {
                softmax_in_place(&mut z);
            } else {
                for v in &mut z {
                    *v = v.max(F::zero());
                }
            }
            acts.push(z);
        }
        Ok(Trace { acts })
    }

    /// Output probabilities for one input.
    pub fn forward(&self, input: &[F]) -> Result<Vec<F>> {
        Ok(self.trace(input)?.acts.pop().unwrap_or_default())
    }

    /// KL loss against `label` and its gradient with respect to every parameter
    /// (same layout as [`Mlp::params`]).
    pub fn backward(&self, input: &[F], label: &[F]) -> Result<(F, Vec<F>)> {
        let mut grad = vec![F::zero(); self.params.len()];
        let loss = self.accumulate_gradient(input, label, F::one(), &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds `scale * d loss / d params` into `grad` and returns the loss.
    fn accumulate_gradient(&self, input: &[F], label: &[F], scale: F, grad: &mut [F]) -> Result<F> {
        let out_dim = *self.dims.last().unwrap_or(&0);
        if label.len() != out_dim {
            return Err(Error::LengthMismatch {
                what: "label",
                expected: out_dim,
                actual: label.len(),
            });
        }
        let tr = self.trace(input)?;
        let q = &tr.acts[self.num_layers()];
        let loss = kld_loss(label, q);
        // d/dz of KL(p || softmax(z)) = q * sum(p) - p
        let p_sum: F = label.iter().copied().sum();
        let mut delta: Vec<F> = q.iter().zip(label).map(|(&qi, &pi)| qi * p_sum - pi).collect();
        for l in (0..self.num_layers()).rev() {
            let x = &tr.acts[l];
            let off = self.offset(l);
            let nw = self.dims[l] * self.dims[l + 1];
            for (o, &d) in delta.iter().enumerate() {
                let gd = scale * d;
                for (g, &xi) in grad[off + o * x.len()..off + (o + 1) * x.len()].iter_mut().zip(x) {
                    *g += gd * xi;
                }
                grad[off + nw + o] += gd;
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![F::zero(); x.len()];
            for (o, &d) in delta.iter().enumerate() {
                for (pv, &wi) in prev.iter_mut().zip(&w[o * x.len()..(o + 1) * x.len()]) {
                    *pv += wi * d;
                }
            }
            // ReLU: the stored activation is zero exactly where the unit is off
            for (pv, &a) in prev.iter_mut().zip(x) {
                if a <= F::zero() {
                    *pv = F::zero();
                }
            }
            delta = prev;
        }
        Ok(loss)
    }

    /// Mean loss over a set of samples.
    pub fn mean_loss(&self, data: &TrainingSet, idx: &[usize]) -> Result<f64> {
        if idx.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &i in idx {
            let x = to_f::<F>(&data.inputs[i]);
            let q = self.forward(&x)?;
            total += kld_loss(&to_f::<F>(&data.labels[i]), &q).to_f64().unwrap_or(f64::NAN);
        }
        Ok(total / idx.len() as f64)
    }
}

fn to_f<F: Real>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::cst(x)).collect()
}

fn softmax_in_place<F: Real>(z: &mut [F]) {
    let m = z.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// `sum p_i ln(p_i / max(q_i, floor))`, skipping `p_i = 0`.
pub fn kld_loss<F: Real>(p: &[F], q: &[F]) -> F {
    let floor = F::cst(KLD_FLOOR);
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > F::zero())
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(floor).ln()))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<F = f64> {
    pub config: AdamConfig,
    m: Vec<F>,
    v: Vec<F>,
    steps: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![F::zero(); num_params],
            v: vec![F::zero(); num_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update of `params` along `-grads`.
    pub fn step(&mut self, params: &mut [F], grads: &[F]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch {
                what: "optimizer state vs parameters/gradients",
                expected: self.m.len(),
                actual: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.steps += 1;
        let c = &self.config;
        let (b1, b2) = (F::cst(c.beta1), F::cst(c.beta2));
        let t = self.steps as i32;
        let bc1 = F::one() - F::cst(c.beta1.powi(t));
        let bc2 = F::one() - F::cst(c.beta2.powi(t));
        let (lr, eps) = (F::cst(c.learning_rate), F::cst(c.epsilon));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (F::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (F::one() - b2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// `(y_k, P(y_k | s', s))` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub labels: Vec<[f64; OUTPUT_DIM]>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: [f64; INPUT_DIM], label: [f64; OUTPUT_DIM]) {
        self.inputs.push(input);
        self.labels.push(label);
    }
}

/// Adds independent `N(0, sigma2_e)` noise to every tap.
pub fn noisy_taps<R: Rng + ?Sized>(taps: &[f64], sigma2_e: f64, rng: &mut R) -> Result<Vec<f64>> {
    if sigma2_e.is_nan() || sigma2_e < 0.0 {
        return Err(Error::InvalidInput(format!(
            "CSI noise variance must be >= 0, got {sigma2_e}"
        )));
    }
    let s = sigma2_e.sqrt();
    Ok(taps
        .iter()
        .map(|&h| {
            let z: f64 = rng.sample(StandardNormal);
            h + s * z
        })
        .collect())
}

/// Simulates `n_codewords` through the true channel `ch` and labels every step
/// of the chosen decoder's view with the normalized analytic transition
/// probabilities. With `csi_sigma2`, each codeword's labels use a fresh noisy
/// copy of the taps.
pub fn gen_training_data(
    n_codewords: usize,
    ch: &ChannelModel,
    side: DecoderSide,
    rsc: &Trellis,
    interleaver: &Interleaver,
    csi_sigma2: Option<f64>,
    seed: u64,
) -> Result<TrainingSet> {
    if n_codewords == 0 {
        return Err(Error::InvalidInput("need at least one training codeword".into()));
    }
    let joint = build_joint_trellis(rsc)?;
    let k = interleaver.len();
    let mut out = TrainingSet::default();
    let clean = AnalyticBranchModel::new(ch.clone(), side, &joint)?;
    for i in 0..n_codewords as u64 {
        let u = random_bits(k, &mut stream(seed, i, StreamRole::Message));
        let cw = turbo_encode(&u, rsc, interleaver)?;
        let y = apply_channel_with(&cw.multiplexed(), ch, &mut stream(seed, i, StreamRole::ChannelNoise));
        let (v1, v2) = demux_views(&y, interleaver)?;
        let view = match side {
            DecoderSide::First => v1,
            DecoderSide::Second => v2,
        };
        let noisy;
        let model = match csi_sigma2 {
            Some(s2e) => {
                let taps = noisy_taps(&ch.taps, s2e, &mut stream(seed, i, StreamRole::CsiNoise))?;
                noisy = AnalyticBranchModel::new(ChannelModel::with_taps(taps, ch.noise_variance)?, side, &joint)?;
                &noisy
            }
            None => &clean,
        };
        for step in &view {
            out.push(step.y, model.branch_probs(step)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            patience: 5,
            validation_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training KLD per epoch (averaged over the epoch's mini-batches).
    pub train_loss: Vec<f64>,
    /// Mean validation KLD after each epoch.
    pub validation_loss: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Shuffled mini-batch Adam training. The best parameters by validation loss
/// are restored at the end.
pub fn train<F: Real>(
    model: &mut Mlp<F>,
    data: &TrainingSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainHistory> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::InvalidInput("invalid training configuration".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut stream(seed, 0, StreamRole::Shuffle));
    let n_val = ((data.len() as f64 * cfg.validation_fraction).round() as usize).min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut opt = Adam::<F>::new(model.params.len(), cfg.adam);
    let mut hist = TrainHistory::default();
    let mut best = (f64::INFINITY, model.params.clone());
    let mut stale = 0;
    let mut grad = vec![F::zero(); model.params.len()];
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut stream(seed, epoch as u64 + 1, StreamRole::Shuffle));
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = F::zero());
            let scale = F::one() / F::cst(batch.len() as f64);
            for &i in batch {
                let x = to_f::<F>(&data.inputs[i]);
                let p = to_f::<F>(&data.labels[i]);
                let l = model.accumulate_gradient(&x, &p, scale, &mut grad)?;
                epoch_loss += l.to_f64().unwrap_or(f64::NAN);
            }
            opt.step(&mut model.params, &grad)?;
        }
        hist.train_loss.push(epoch_loss / train_idx.len() as f64);
        let val = if val_idx.is_empty() {
            *hist.train_loss.last().unwrap_or(&f64::NAN)
        } else {
            model.mean_loss(data, val_idx)?
        };
        hist.validation_loss.push(val);
        if val < best.0 {
            best = (val, model.params.clone());
            hist.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(hist)
}

impl<F: Real> BranchModel for Mlp<F> {
    fn branch_probs(&self, step: &ViewStep) -> Result<[f64; JOINT_TRANSITIONS]> {
        let q = self.forward(&[F::cst(step.y[0]), F::cst(step.y[1])])?;
        if q.len() != JOINT_TRANSITIONS {
            return Err(Error::ModelDimension(format!(
                "branch model must output {JOINT_TRANSITIONS} probabilities, got {}",
                q.len()
            )));
        }
        let mut out = [0.0; JOINT_TRANSITIONS];
        for (o, v) in out.iter_mut().zip(q) {
            *o = v.to_f64().unwrap_or(0.0);
        }
        Ok(out)
    }
}

pub const MODEL_FORMAT: &str = "bcjrnet-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    meta: ModelMeta,
    layer_dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

/// Serializes a model as versioned JSON.
pub fn model_to_string<F: Real>(m: &Mlp<F>) -> Result<String> {
    let layers = (0..m.num_layers())
        .map(|l| {
            let (w, b) = m.layer(l);
            LayerDoc {
                weights: w.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                bias: b.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            }
        })
        .collect();
    let doc = ModelDoc {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        meta: m.meta.clone(),
        layer_dims: m.dims.clone(),
        layers,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a branch model (`16` outputs) from [`model_to_string`] output.
pub fn model_from_str<F: Real>(text: &str) -> Result<Mlp<F>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => {
            return Err(Error::ModelVersion {
                expected: MODEL_VERSION,
                found: u32::try_from(v).unwrap_or(u32::MAX),
            })
        }
        None => return Err(Error::MalformedModel("missing version".into())),
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
    if doc.format != MODEL_FORMAT {
        return Err(Error::MalformedModel(format!("unknown format '{}'", doc.format)));
    }
    let dims = &doc.layer_dims;
    if dims.first() != Some(&INPUT_DIM) || dims.last() != Some(&OUTPUT_DIM) {
        return Err(Error::ModelDimension(format!(
            "expected {INPUT_DIM} inputs and {OUTPUT_DIM} outputs, got layer sizes {dims:?}"
        )));
    }
    let mut m = Mlp::<F>::zeros(dims)?;
    if doc.layers.len() != m.num_layers() {
        return Err(Error::ModelDimension(format!(
            "{} layer blocks for {} layers",
            doc.layers.len(),
            m.num_layers()
        )));
    }
    for (l, layer) in doc.layers.iter().enumerate() {
        let (w, b) = m.layer_mut(l);
        if layer.weights.len() != w.len() || layer.bias.len() != b.len() {
            return Err(Error::ModelDimension(format!("layer {l} parameter count")));
        }
        for (dst, &src) in w.iter_mut().zip(&layer.weights).chain(b.iter_mut().zip(&layer.bias)) {
            *dst = F::cst(src);
        }
    }
    m.meta = doc.meta;
    Ok(m)
}

pub fn save_model<F: Real>(m: &Mlp<F>, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(m)?).map_err(io_err(path))
}

pub fn load_model<F: Real>(path: &Path) -> Result<Mlp<F>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    model_from_str(&text)
}
