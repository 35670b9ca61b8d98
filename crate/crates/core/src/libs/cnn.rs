//! The CNN composition regressor, trained on synthetic spectra of random
//! compositions.
//!
//! The network ends in a softmax over the line table's elements, so outputs
//! are valid compositions by construction; the loss is the mean absolute
//! error against the target fractions. The trained network is an ordinary
//! [`CnnModel`] whose "classes" are element symbols, which gives persistence
//! and EMA prediction for free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::nn::net::{
    backward_stage, compile, forward_logits, init_params, Mode,
};
use crate::learners::nn::{run_training, CnnArchitecture, CnnModel, LayerSpec};
use crate::learners::{predict_cnn, quantize_f32, softmax, ClassList, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed, normal};
use crate::spectra::{normalize_unit, GridSpec, Spectrum};

use super::synth::{random_composition, synth_libs_raw, MissingLinePolicy};
use super::{ElementComposition, LineTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LibsCnnConfig {
    /// Synthetic training spectra to generate.
    pub n_samples: usize,
    /// Components per random composition are drawn from 1..=max_components.
    pub max_components: usize,
    /// Gaussian line width for synthesis.
    pub sigma_nm: f64,
    /// Proportional noise applied to the training spectra.
    pub noise_sigma: f64,
    pub train: TrainConfig,
}

impl Default for LibsCnnConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            max_components: 6,
            sigma_nm: super::synth::DEFAULT_SIGMA_NM,
            noise_sigma: 0.02,
            train: TrainConfig { epochs: 20, dropout_rate: 0.0, ema_decay: 0.99, ..Default::default() },
        }
    }
}

/// Downsampling conv stack sized for LIBS grids, ending in a softmax over
/// the element list.
pub fn libs_cnn_arch(n_elements: usize, input_length: usize) -> CnnArchitecture {
    CnnArchitecture {
        input_length,
        layers: vec![
            LayerSpec::conv(8, 15, 4),
            LayerSpec::pool(2),
            LayerSpec::conv(16, 9, 2),
            LayerSpec::pool(2),
            LayerSpec::conv(32, 5, 2),
            LayerSpec::pool(2),
            LayerSpec::dense(64),
            LayerSpec::dense_linear(n_elements),
            LayerSpec::Softmax,
        ],
    }
}

/// Gradient of the MAE loss through the softmax head.
fn mae_loss_grad(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let n = probs.len() as f64;
    let loss = probs.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let gp: Vec<f64> = probs.iter().zip(target).map(|(p, t)| (p - t).signum() / n).collect();
    let dot: f64 = gp.iter().zip(&probs).map(|(g, p)| g * p).sum();
    let dlogits: Vec<f64> = probs.iter().zip(&gp).map(|(p, g)| p * (g - dot)).collect();
    (loss, dlogits)
}

/// Train the regressor on synthetic spectra of random compositions drawn
/// from the table's elements (those with lines inside the grid).
pub fn train_libs_cnn(
    lines: &LineTable,
    grid: &GridSpec,
    cfg: &LibsCnnConfig,
) -> Result<CnnModel> {
    cfg.train.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let elements = lines.elements_within(grid.start, grid.end);
    if elements.len() < 2 {
        return Err(Error::Config("need at least two elements with lines in the grid".into()));
    }

    // Synthetic training set: spectra plus target fraction vectors.
    let mut gen_rng = rng_from_seed(derive_seed(cfg.train.seed, 0x11b5));
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_samples);
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let comp = random_composition(&elements, cfg.max_components, &mut gen_rng);
        let mut raw =
            synth_libs_raw(&comp, lines, grid, cfg.sigma_nm, MissingLinePolicy::Error)?;
        if cfg.noise_sigma > 0.0 {
            for v in &mut raw {
                *v *= 1.0 + cfg.noise_sigma * normal(&mut gen_rng);
            }
        }
        rows.push(normalize_unit(&raw));
        targets.push(elements.iter().map(|e| comp.fraction(e)).collect());
    }

    let arch = libs_cnn_arch(elements.len(), grid.n_points);
    let net = compile(&arch, elements.len())?;
    let mut params = init_params(
        &net.shapes,
        &net.fan_in,
        &mut rng_from_seed(derive_seed(cfg.train.seed, 0x1217)),
    );
    let outcome = run_training(&net.shapes, &mut params, rows.len(), &cfg.train, |i, p, g, rng| {
        let mut caches = Vec::new();
        let mut mode = Mode::Train(rng);
        let logits = forward_logits(&net, p, &rows[i], &mut mode, &mut caches);
        let (loss, dlogits) = mae_loss_grad(&logits, &targets[i]);
        let dconv = backward_stage(&net.dense, p, &mut caches, dlogits, g);
        backward_stage(&net.conv, p, &mut caches, dconv, g);
        loss
    })?;
    for tensor in &mut params {
        quantize_f32(tensor);
    }
    let ema = outcome.shadow.map(|mut shadow| {
        for tensor in &mut shadow {
            quantize_f32(tensor);
        }
        shadow
    });
    CnnModel::assemble(
        arch,
        ClassList::new(elements),
        cfg.train.ema_decay,
        outcome.epoch_losses,
        params,
        ema,
    )
}

/// Predict the elemental composition of a LIBS spectrum.
pub fn predict_libs_cnn(model: &CnnModel, spectrum: &Spectrum) -> Result<ElementComposition> {
    let prediction = predict_cnn(model, spectrum.values(), true)?;
    ElementComposition::from_weights(
        model
            .classes
            .names()
            .iter()
            .zip(prediction.scores())
            .map(|(e, &s)| (e.clone(), s)),
    )
}
