//! One-vs-rest linear SVM trained by subgradient descent on L2-regularized
//! hinge loss. Decision margins are mapped to scores with a softmax so SVM
//! outputs combine with the other classifiers' predictions.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

use rand::seq::SliceRandom;

use super::{quantize_f32, softmax, ClassList, Prediction};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { epochs: 60, learning_rate: 0.01, regularization: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    pub classes: ClassList,
    pub n_features: usize,
    /// One row of `n_features` weights plus a bias per class.
    pub weights: Vec<f64>,
}

impl SvmModel {
    pub fn margin(&self, class: usize, x: &[f64]) -> f64 {
        let row = &self.weights[class * (self.n_features + 1)..(class + 1) * (self.n_features + 1)];
        let (w, b) = row.split_at(self.n_features);
        w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[0]
    }
}

/// Hinge loss of one sample at a given margin.
pub fn hinge_loss(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

/// Train one-vs-rest on the rows of a labeled dataset.
pub fn train_linear_svm(train: &LabeledDataset, cfg: &SvmConfig) -> Result<SvmModel> {
    let rows = train.rows();
    let labels = train.labels();
    train_svm_raw(&rows, &labels, ClassList::from(train.species_names()), cfg)
}

/// Train on raw feature rows; used both for spectra and for concatenated
/// prediction vectors in SVM fusion.
pub fn train_svm_raw(
    rows: &[&[f64]],
    labels: &[usize],
    classes: ClassList,
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    if rows.is_empty() {
        return Err(Error::EmptyClass);
    }
    let present: std::collections::HashSet<usize> = labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::SingleClass);
    }
    let n_features = rows[0].len();
    let n_classes = classes.len();
    let stride = n_features + 1;
    let mut weights = vec![0.0; n_classes * stride];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x5f4d));
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = rows[i];
            for class in 0..n_classes {
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let row = &mut weights[class * stride..(class + 1) * stride];
                let (w, b) = row.split_at_mut(n_features);
                let margin = y * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[0]);
                let shrink = 1.0 - cfg.learning_rate * cfg.regularization;
                if margin < 1.0 {
                    for (wi, xi) in w.iter_mut().zip(x) {
                        *wi = *wi * shrink + cfg.learning_rate * y * xi;
                    }
                    b[0] += cfg.learning_rate * y;
                } else {
                    for wi in w.iter_mut() {
                        *wi *= shrink;
                    }
                }
            }
        }
    }
    quantize_f32(&mut weights);
    Ok(SvmModel { classes, n_features, weights })
}

/// Softmax over per-class margins.
pub fn predict_svm(model: &SvmModel, x: &[f64]) -> Prediction {
    let margins: Vec<f64> = (0..model.classes.len()).map(|c| model.margin(c, x)).collect();
    Prediction::new(model.classes.clone(), softmax(&margins)).expect("softmax is valid")
}

/// A linear SVM over concatenated prediction pairs, for late fusion.
#[derive(Debug, Clone)]
pub struct FusionSvmModel {
    pub svm: SvmModel,
}
