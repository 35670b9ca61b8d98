//! 1-D convolutional networks with in-repo reverse-mode gradients.
//!
//! Architectures are declarative layer lists ([`LayerSpec`]); training is
//! minibatch gradient descent on cross-entropy with optional exponential
//! moving averaging of the weights ([`Ema`]). A [`TwoStreamArchitecture`]
//! runs two convolutional stacks on a pair of inputs and fuses them by
//! channel concatenation at the last convolutional layer.

pub(crate) mod net;
mod optim;

pub use optim::Ema;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{LabeledDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, ChaCha8Rng};

use net::{
    backprop_sample, backward_stage, ce_loss_grad, compile, forward_logits, forward_stage,
    init_params, zero_like, Cache, CLayer, Compiler, Mode, Net,
};

use super::{quantize_f32, softmax, ClassList, Prediction, TrainConfig};

fn default_stride() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// One declarative layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default = "default_true")]
        relu: bool,
    },
    MaxPool {
        width: usize,
    },
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
        #[serde(default = "default_true")]
        relu: bool,
    },
    Softmax,
    /// Parallel convolutional branches over the same input, concatenated
    /// along the channel axis. All branches must end at the same length.
    Parallel {
        branches: Vec<Vec<LayerSpec>>,
    },
}

/// Convenience constructors used by the presets.
impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel, stride, relu: true }
    }

    pub fn pool(width: usize) -> Self {
        LayerSpec::MaxPool { width }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units, relu: true }
    }

    pub fn dense_linear(units: usize) -> Self {
        LayerSpec::Dense { units, relu: false }
    }
}

/// A single-input network: convolutional stage, dense head, final softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnArchitecture {
    pub input_length: usize,
    pub layers: Vec<LayerSpec>,
}

impl CnnArchitecture {
    /// Verify the layer shapes chain and the head ends in softmax over
    /// `n_classes`.
    pub fn shape_check(&self, n_classes: usize) -> Result<()> {
        compile(self, n_classes).map(|_| ())
    }

    /// Number of convolutional layers (counting branches).
    pub fn conv_layer_count(&self) -> usize {
        fn count(layers: &[LayerSpec]) -> usize {
            layers
                .iter()
                .map(|l| match l {
                    LayerSpec::Conv { .. } => 1,
                    LayerSpec::Parallel { branches } => branches.iter().map(|b| count(b)).sum(),
                    _ => 0,
                })
                .sum()
        }
        count(&self.layers)
    }

    /// Number of dense layers.
    pub fn dense_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Dense { .. })).count()
    }
}

/// The fixed Liu-style baseline for full-size Raman grids.
pub fn liu_baseline(n_classes: usize, input_length: usize, dropout: f64) -> CnnArchitecture {
    CnnArchitecture {
        input_length,
        layers: vec![
            LayerSpec::conv(16, 21, 1),
            LayerSpec::pool(2),
            LayerSpec::conv(32, 11, 1),
            LayerSpec::pool(2),
            LayerSpec::conv(64, 5, 1),
            LayerSpec::pool(2),
            LayerSpec::dense(512),
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::dense_linear(n_classes),
            LayerSpec::Softmax,
        ],
    }
}

/// The lighter "4 convolutional + 2 fully connected" network used for the
/// pair-combined experiments.
pub fn simple4(n_classes: usize, input_length: usize, dropout: f64) -> CnnArchitecture {
    CnnArchitecture {
        input_length,
        layers: vec![
            LayerSpec::conv(8, 7, 2),
            LayerSpec::pool(2),
            LayerSpec::conv(16, 5, 1),
            LayerSpec::pool(2),
            LayerSpec::conv(16, 3, 1),
            LayerSpec::conv(32, 3, 1),
            LayerSpec::pool(2),
            LayerSpec::dense(64),
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::dense_linear(n_classes),
            LayerSpec::Softmax,
        ],
    }
}

/// A trained, frozen CNN.
#[derive(Debug, Clone)]
pub struct CnnModel {
    pub arch: CnnArchitecture,
    pub classes: ClassList,
    pub ema_decay: f64,
    /// Mean training loss per epoch, for diagnostics.
    pub train_loss: Vec<f64>,
    pub(crate) params: Vec<Vec<f64>>,
    pub(crate) ema: Option<Vec<Vec<f64>>>,
    pub(crate) net: Net,
}

impl CnnModel {
    pub(crate) fn assemble(
        arch: CnnArchitecture,
        classes: ClassList,
        ema_decay: f64,
        train_loss: Vec<f64>,
        params: Vec<Vec<f64>>,
        ema: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let net = compile(&arch, classes.len())?;
        for (tensor, &expect) in params.iter().zip(&net.shapes) {
            if tensor.len() != expect {
                return Err(Error::ModelFile("weight tensor shape mismatch".into()));
            }
        }
        Ok(Self { arch, classes, ema_decay, train_loss, params, ema, net })
    }

    pub(crate) fn weight_tensors(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub(crate) fn ema_tensors(&self) -> Option<&[Vec<f64>]> {
        self.ema.as_deref()
    }
}

/// Train a CNN classifier on a labeled dataset.
pub fn train_cnn(
    train: &LabeledDataset,
    arch: &CnnArchitecture,
    cfg: &TrainConfig,
) -> Result<CnnModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyClass);
    }
    if arch.input_length != train.grid().n_points {
        return Err(Error::Arch(format!(
            "architecture expects length {}, dataset provides {}",
            arch.input_length,
            train.grid().n_points
        )));
    }
    let net = compile(arch, train.n_species())?;
    let rows = train.rows();
    let labels = train.labels();
    let mut params = init_params(&net.shapes, &net.fan_in, &mut rng_from_seed(derive_seed(cfg.seed, 0x1217)));
    let outcome = run_training(&net.shapes, &mut params, rows.len(), cfg, |i, p, g, rng| {
        backprop_sample(&net, p, rows[i], labels[i], rng, g)
    })?;
    freeze(arch.clone(), ClassList::from(train.species_names()), cfg, params, outcome)
}

fn freeze(
    arch: CnnArchitecture,
    classes: ClassList,
    cfg: &TrainConfig,
    mut params: Vec<Vec<f64>>,
    outcome: TrainOutcome,
) -> Result<CnnModel> {
    for tensor in &mut params {
        quantize_f32(tensor);
    }
    let ema = outcome.shadow.map(|mut shadow| {
        for tensor in &mut shadow {
            quantize_f32(tensor);
        }
        shadow
    });
    CnnModel::assemble(arch, classes, cfg.ema_decay, outcome.epoch_losses, params, ema)
}

/// Predict from a preprocessed spectrum. With `use_ema`, the EMA shadow
/// weights are used when the model was trained with a nonzero decay.
pub fn predict_cnn(model: &CnnModel, values: &[f64], use_ema: bool) -> Result<Prediction> {
    if values.len() != model.net.input_len {
        return Err(Error::Arch(format!(
            "input has {} points, model expects {}",
            values.len(),
            model.net.input_len
        )));
    }
    let weights = match (&model.ema, use_ema) {
        (Some(ema), true) => ema,
        _ => &model.params,
    };
    let mut caches = Vec::new();
    let logits = forward_logits(&model.net, weights, values, &mut Mode::Eval, &mut caches);
    Prediction::new(model.classes.clone(), softmax(&logits))
}

pub(crate) struct TrainOutcome {
    pub(crate) epoch_losses: Vec<f64>,
    pub(crate) shadow: Option<Vec<Vec<f64>>>,
}

/// Shared minibatch loop: seeded shuffling, gradient averaging, optimizer
/// step, EMA update after every step, NaN detection.
pub(crate) fn run_training<F>(
    shapes: &[usize],
    params: &mut Vec<Vec<f64>>,
    n_samples: usize,
    cfg: &TrainConfig,
    mut sample_step: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &[Vec<f64>], &mut [Vec<f64>], &mut ChaCha8Rng) -> f64,
{
    let mut optimizer = optim::Optim::new(cfg.optimizer, shapes);
    let mut ema =
        (cfg.ema_decay > 0.0).then(|| Ema::new(params.clone(), cfg.ema_decay));
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.seed, 0x50f1));
    let mut dropout_rng = rng_from_seed(derive_seed(cfg.seed, 0xd209));
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = zero_like(shapes);
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += sample_step(i, params, &mut grads, &mut dropout_rng);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged);
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for x in g.iter_mut() {
                    *x *= scale;
                }
            }
            optimizer.step(params, &grads, cfg.learning_rate);
            if let Some(e) = &mut ema {
                e.update(params);
            }
            epoch_loss += batch_loss;
        }
        epoch_losses.push(epoch_loss / n_samples as f64);
    }
    Ok(TrainOutcome { epoch_losses, shadow: ema.map(Ema::into_shadow) })
}

/// Two input branches fused by channel concatenation at the last
/// convolutional layer, with a shared dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStreamArchitecture {
    pub input_length_a: usize,
    pub input_length_b: usize,
    pub stream_a: Vec<LayerSpec>,
    pub stream_b: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
}

impl TwoStreamArchitecture {
    pub fn shape_check(&self, n_classes: usize) -> Result<()> {
        compile_two_stream(self, n_classes).map(|_| ())
    }
}

/// Default two-stream network: two light conv stacks plus a small head.
/// Both inputs must share one length so the streams end at equal lengths.
pub fn two_stream_default(
    n_classes: usize,
    input_length: usize,
    dropout: f64,
) -> TwoStreamArchitecture {
    let stream = vec![
        LayerSpec::conv(8, 7, 2),
        LayerSpec::pool(2),
        LayerSpec::conv(16, 5, 1),
        LayerSpec::pool(2),
    ];
    TwoStreamArchitecture {
        input_length_a: input_length,
        input_length_b: input_length,
        stream_a: stream.clone(),
        stream_b: stream,
        head: vec![
            LayerSpec::dense(64),
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::dense_linear(n_classes),
            LayerSpec::Softmax,
        ],
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TwoStreamNet {
    pub a: Vec<CLayer>,
    pub b: Vec<CLayer>,
    pub head: Vec<CLayer>,
    pub shapes: Vec<usize>,
    pub fan_in: Vec<usize>,
    pub split: usize,
    pub input_len_a: usize,
    pub input_len_b: usize,
}

pub(crate) fn compile_two_stream(
    arch: &TwoStreamArchitecture,
    n_classes: usize,
) -> Result<TwoStreamNet> {
    let mut compiler = Compiler::new();
    let (a, ch_a, len_a) = compiler.conv_stage(&arch.stream_a, 1, arch.input_length_a)?;
    let (b, ch_b, len_b) = compiler.conv_stage(&arch.stream_b, 1, arch.input_length_b)?;
    if len_a != len_b {
        return Err(Error::Arch(format!(
            "streams end at different lengths ({len_a} vs {len_b}); cannot concatenate"
        )));
    }
    let head = compiler.dense_stage(&arch.head, (ch_a + ch_b) * len_a, n_classes)?;
    Ok(TwoStreamNet {
        a,
        b,
        head,
        shapes: compiler.shapes,
        fan_in: compiler.fan_in,
        split: ch_a * len_a,
        input_len_a: arch.input_length_a,
        input_len_b: arch.input_length_b,
    })
}

fn two_stream_logits(
    net: &TwoStreamNet,
    params: &[Vec<f64>],
    xa: &[f64],
    xb: &[f64],
    mode: &mut Mode,
    caches_a: &mut Vec<Cache>,
    caches_b: &mut Vec<Cache>,
    caches_head: &mut Vec<Cache>,
) -> Vec<f64> {
    let fa = forward_stage(&net.a, params, xa.to_vec(), mode, caches_a);
    let fb = forward_stage(&net.b, params, xb.to_vec(), mode, caches_b);
    let mut fused = fa;
    fused.extend_from_slice(&fb);
    forward_stage(&net.head, params, fused, mode, caches_head)
}

fn two_stream_backprop(
    net: &TwoStreamNet,
    params: &[Vec<f64>],
    xa: &[f64],
    xb: &[f64],
    target: usize,
    rng: &mut ChaCha8Rng,
    grads: &mut [Vec<f64>],
) -> f64 {
    let (mut ca, mut cb, mut ch) = (Vec::new(), Vec::new(), Vec::new());
    let mut mode = Mode::Train(rng);
    let logits = two_stream_logits(net, params, xa, xb, &mut mode, &mut ca, &mut cb, &mut ch);
    let (loss, dlogits) = ce_loss_grad(&logits, target);
    let dfused = backward_stage(&net.head, params, &mut ch, dlogits, grads);
    let (da, db) = dfused.split_at(net.split);
    backward_stage(&net.a, params, &mut ca, da.to_vec(), grads);
    backward_stage(&net.b, params, &mut cb, db.to_vec(), grads);
    loss
}

/// A trained, frozen two-stream CNN.
#[derive(Debug, Clone)]
pub struct TwoStreamModel {
    pub arch: TwoStreamArchitecture,
    pub classes: ClassList,
    pub ema_decay: f64,
    pub train_loss: Vec<f64>,
    pub(crate) params: Vec<Vec<f64>>,
    pub(crate) ema: Option<Vec<Vec<f64>>>,
    pub(crate) net: TwoStreamNet,
}

impl TwoStreamModel {
    pub(crate) fn assemble(
        arch: TwoStreamArchitecture,
        classes: ClassList,
        ema_decay: f64,
        train_loss: Vec<f64>,
        params: Vec<Vec<f64>>,
        ema: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let net = compile_two_stream(&arch, classes.len())?;
        for (tensor, &expect) in params.iter().zip(&net.shapes) {
            if tensor.len() != expect {
                return Err(Error::ModelFile("weight tensor shape mismatch".into()));
            }
        }
        Ok(Self { arch, classes, ema_decay, train_loss, params, ema, net })
    }

    pub(crate) fn weight_tensors(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub(crate) fn ema_tensors(&self) -> Option<&[Vec<f64>]> {
        self.ema.as_deref()
    }
}

/// Train the two-stream network on paired samples end to end.
pub fn train_two_stream_cnn(
    pairs: &PairedDataset,
    arch: &TwoStreamArchitecture,
    cfg: &TrainConfig,
) -> Result<TwoStreamModel> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyClass);
    }
    let first = &pairs.pairs[0];
    if arch.input_length_a != first.spectrum_a.values().len()
        || arch.input_length_b != first.spectrum_b.values().len()
    {
        return Err(Error::Arch("architecture input lengths do not match the pairs".into()));
    }
    let net = compile_two_stream(arch, pairs.species.len())?;
    let mut params = init_params(&net.shapes, &net.fan_in, &mut rng_from_seed(derive_seed(cfg.seed, 0x1217)));
    let outcome = run_training(&net.shapes, &mut params, pairs.len(), cfg, |i, p, g, rng| {
        let sample = &pairs.pairs[i];
        two_stream_backprop(
            &net,
            p,
            sample.spectrum_a.values(),
            sample.spectrum_b.values(),
            sample.species_id,
            rng,
            g,
        )
    })?;
    let mut params = params;
    for tensor in &mut params {
        quantize_f32(tensor);
    }
    let ema = outcome.shadow.map(|mut shadow| {
        for tensor in &mut shadow {
            quantize_f32(tensor);
        }
        shadow
    });
    TwoStreamModel::assemble(
        arch.clone(),
        ClassList::new(pairs.species.clone()),
        cfg.ema_decay,
        outcome.epoch_losses,
        params,
        ema,
    )
}

/// Predict from a pair of preprocessed spectra.
pub fn predict_two_stream(model: &TwoStreamModel, a: &[f64], b: &[f64]) -> Result<Prediction> {
    if a.len() != model.net.input_len_a || b.len() != model.net.input_len_b {
        return Err(Error::Arch("pair lengths do not match the model".into()));
    }
    let weights = model.ema.as_ref().unwrap_or(&model.params);
    let (mut ca, mut cb, mut ch) = (Vec::new(), Vec::new(), Vec::new());
    let logits = two_stream_logits(
        &model.net,
        weights,
        a,
        b,
        &mut Mode::Eval,
        &mut ca,
        &mut cb,
        &mut ch,
    );
    Prediction::new(model.classes.clone(), softmax(&logits))
}

/// Exposes loss and analytic gradients of a small network so an external
/// finite-difference oracle can validate the backward pass. Requires a
/// dropout-free architecture (the loss must be deterministic).
pub struct GradientProbe {
    kind: ProbeKind,
    params: Vec<Vec<f64>>,
}

enum ProbeKind {
    Single { net: Net, rows: Vec<Vec<f64>>, labels: Vec<usize> },
    Two { net: TwoStreamNet, pairs: Vec<(Vec<f64>, Vec<f64>)>, labels: Vec<usize> },
}

fn has_dropout(layers: &[LayerSpec]) -> bool {
    layers.iter().any(|l| match l {
        LayerSpec::Dropout { rate } => *rate > 0.0,
        LayerSpec::Parallel { branches } => branches.iter().any(|b| has_dropout(b)),
        _ => false,
    })
}

impl GradientProbe {
    pub fn single(
        arch: &CnnArchitecture,
        n_classes: usize,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if has_dropout(&arch.layers) {
            return Err(Error::Arch("gradient probe requires a dropout-free network".into()));
        }
        let net = compile(arch, n_classes)?;
        let params = init_params(&net.shapes, &net.fan_in, &mut rng_from_seed(seed));
        Ok(Self { kind: ProbeKind::Single { net, rows, labels }, params })
    }

    pub fn two_stream(
        arch: &TwoStreamArchitecture,
        n_classes: usize,
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
        labels: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if has_dropout(&arch.stream_a) || has_dropout(&arch.stream_b) || has_dropout(&arch.head) {
            return Err(Error::Arch("gradient probe requires a dropout-free network".into()));
        }
        let net = compile_two_stream(arch, n_classes)?;
        let params = init_params(&net.shapes, &net.fan_in, &mut rng_from_seed(seed));
        Ok(Self { kind: ProbeKind::Two { net, pairs, labels }, params })
    }

    pub fn n_tensors(&self) -> usize {
        self.params.len()
    }

    pub fn tensor_len(&self, t: usize) -> usize {
        self.params[t].len()
    }

    pub fn nudge(&mut self, t: usize, i: usize, delta: f64) {
        self.params[t][i] += delta;
    }

    /// Mean cross-entropy loss over the probe samples.
    pub fn loss(&self) -> f64 {
        let mut rng = rng_from_seed(0);
        match &self.kind {
            ProbeKind::Single { net, rows, labels } => {
                let mut total = 0.0;
                for (x, &y) in rows.iter().zip(labels) {
                    let mut caches = Vec::new();
                    let logits =
                        forward_logits(net, &self.params, x, &mut Mode::Train(&mut rng), &mut caches);
                    total += ce_loss_grad(&logits, y).0;
                }
                total / rows.len() as f64
            }
            ProbeKind::Two { net, pairs, labels } => {
                let mut total = 0.0;
                for ((xa, xb), &y) in pairs.iter().zip(labels) {
                    let (mut ca, mut cb, mut ch) = (Vec::new(), Vec::new(), Vec::new());
                    let logits = two_stream_logits(
                        net,
                        &self.params,
                        xa,
                        xb,
                        &mut Mode::Train(&mut rng),
                        &mut ca,
                        &mut cb,
                        &mut ch,
                    );
                    total += ce_loss_grad(&logits, y).0;
                }
                total / pairs.len() as f64
            }
        }
    }

    /// Analytic mean gradients from the backward pass.
    pub fn grads(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(0);
        match &self.kind {
            ProbeKind::Single { net, rows, labels } => {
                let mut grads = zero_like(&net.shapes);
                for (x, &y) in rows.iter().zip(labels) {
                    backprop_sample(net, &self.params, x, y, &mut rng, &mut grads);
                }
                let scale = 1.0 / rows.len() as f64;
                for g in &mut grads {
                    for v in g.iter_mut() {
                        *v *= scale;
                    }
                }
                grads
            }
            ProbeKind::Two { net, pairs, labels } => {
                let mut grads = zero_like(&net.shapes);
                for ((xa, xb), &y) in pairs.iter().zip(labels) {
                    two_stream_backprop(net, &self.params, xa, xb, y, &mut rng, &mut grads);
                }
                let scale = 1.0 / pairs.len() as f64;
                for g in &mut grads {
                    for v in g.iter_mut() {
                        *v *= scale;
                    }
                }
                grads
            }
        }
    }
}
