//! Classifier families sharing one training/prediction contract.
//!
//! All classifiers consume preprocessed spectra (fixed-length vectors in
//! `[0, 1]`) and emit a [`Prediction`]: a nonnegative, L1-normalized score
//! vector over a class list. Model parameters are rounded to `f32` when a
//! model is frozen, so the on-disk format (raw little-endian `f32` arrays) is
//! lossless and save/load/predict round-trips are bit-exact.

pub mod ensemble;
pub mod knn;
pub mod nn;
pub mod persist;
pub mod svm;
pub mod trees;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ensemble::{build_ensemble6, predict_ensemble, train_ensemble6, EnsembleModel};
pub use knn::{predict_knn, train_knn_weighted, KnnModel};
pub use nn::{
    predict_cnn, predict_two_stream, train_cnn, train_two_stream_cnn, CnnArchitecture, CnnModel,
    LayerSpec, TwoStreamArchitecture, TwoStreamModel,
};
pub use persist::{load_model, load_model_full, save_model, save_model_full, SpectrumContract};
pub use svm::{predict_svm, train_linear_svm, FusionSvmModel, SvmConfig, SvmModel};
pub use trees::{predict_trees, train_extra_trees, ForestModel, TreesConfig};

/// An immutable, cheaply clonable list of class names. Index = class id.
#[derive(Debug, Clone)]
pub struct ClassList(Arc<Vec<String>>);

impl ClassList {
    pub fn new(names: Vec<String>) -> Self {
        Self(Arc::new(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.0[id]
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }
}

impl PartialEq for ClassList {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl From<&[String]> for ClassList {
    fn from(names: &[String]) -> Self {
        Self::new(names.to_vec())
    }
}

impl Serialize for ClassList {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassList {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Self::new(Vec::<String>::deserialize(d)?))
    }
}

/// A nonnegative score vector over a class list, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    classes: ClassList,
    scores: Vec<f64>,
}

impl Prediction {
    /// Validate and L1-normalize `scores`.
    pub fn new(classes: ClassList, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != classes.len() {
            return Err(Error::ClassMismatch);
        }
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Arch("prediction scores must be finite and nonnegative".into()));
        }
        let sum: f64 = scores.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let scores = scores.into_iter().map(|s| s / sum).collect();
        Ok(Self { classes, scores })
    }

    /// The uniform prediction.
    pub fn uniform(classes: ClassList) -> Self {
        let n = classes.len();
        Self { classes, scores: vec![1.0 / n as f64; n] }
    }

    pub fn classes(&self) -> &ClassList {
        &self.classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, class_id: usize) -> f64 {
        self.scores[class_id]
    }

    /// Highest-scoring class id; ties break toward the lowest id.
    pub fn argmax(&self) -> usize {
        argmax_tie_lowest(&self.scores)
    }

    /// The `n` best (class id, score) pairs, best first.
    pub fn top(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|i| (i, self.scores[i])).collect()
    }
}

/// Index of the maximum, ties broken toward the lowest index.
pub fn argmax_tie_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient-descent hyperparameters shared by the CNN-family trainers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Rate for dropout layers built by the architecture presets.
    pub dropout_rate: f64,
    /// Decay of the exponential moving average of the weights; 0 disables.
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            dropout_rate: 0.5,
            ema_decay: 0.999,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999 }
    }
}

/// Any frozen classifier, ready for prediction and persistence.
#[derive(Debug, Clone)]
pub enum Model {
    Knn(KnnModel),
    Trees(ForestModel),
    Svm(SvmModel),
    Cnn(CnnModel),
    Ensemble(EnsembleModel),
    TwoStream(TwoStreamModel),
    FusionSvm(FusionSvmModel),
}

impl Model {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Knn(_) => "knn",
            Model::Trees(_) => "trees",
            Model::Svm(_) => "svm",
            Model::Cnn(_) => "cnn",
            Model::Ensemble(_) => "ensemble6",
            Model::TwoStream(_) => "two-stream",
            Model::FusionSvm(_) => "fusion-svm",
        }
    }

    pub fn classes(&self) -> &ClassList {
        match self {
            Model::Knn(m) => &m.classes,
            Model::Trees(m) => &m.classes,
            Model::Svm(m) => &m.classes,
            Model::Cnn(m) => &m.classes,
            Model::Ensemble(m) => &m.classes,
            Model::TwoStream(m) => &m.classes,
            Model::FusionSvm(m) => &m.svm.classes,
        }
    }

    /// Predict from a single preprocessed spectrum.
    pub fn predict(&self, values: &[f64]) -> Result<Prediction> {
        match self {
            Model::Knn(m) => predict_knn(m, values),
            Model::Trees(m) => Ok(predict_trees(m, values)),
            Model::Svm(m) => Ok(predict_svm(m, values)),
            Model::Cnn(m) => predict_cnn(m, values, true),
            Model::Ensemble(m) => m.predict(values),
            Model::TwoStream(_) => {
                Err(Error::Arch("two-stream models need a pair of spectra".into()))
            }
            Model::FusionSvm(_) => {
                Err(Error::Arch("fusion models combine two predictions, not a spectrum".into()))
            }
        }
    }

    /// Predict from a pair of preprocessed spectra (two-stream models).
    pub fn predict_pair(&self, a: &[f64], b: &[f64]) -> Result<Prediction> {
        match self {
            Model::TwoStream(m) => predict_two_stream(m, a, b),
            _ => Err(Error::Arch(format!("{} is not a two-stream model", self.kind_name()))),
        }
    }
}

/// Round every value to the nearest `f32`, in place. Frozen models hold only
/// f32-representable weights so binary persistence is exact.
pub(crate) fn quantize_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_normalizes_and_validates() {
        let classes = ClassList::new(vec!["a".into(), "b".into()]);
        let p = Prediction::new(classes.clone(), vec![2.0, 6.0]).unwrap();
        assert_eq!(p.scores(), &[0.25, 0.75]);
        assert!((p.scores().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(Prediction::new(classes.clone(), vec![1.0]).is_err());
        assert!(Prediction::new(classes.clone(), vec![-1.0, 2.0]).is_err());
        assert!(Prediction::new(classes, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_tie_lowest(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax_tie_lowest(&[0.5, 0.5]), 0);
        assert_eq!(argmax_tie_lowest(&[1.0]), 0);
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let s = softmax(&[1.0, 2.0, 3.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted = softmax(&[1001.0, 1002.0, 1003.0]);
        for (a, b) in s.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn class_list_equality_by_contents() {
        let a = ClassList::new(vec!["x".into(), "y".into()]);
        let b = ClassList::new(vec!["x".into(), "y".into()]);
        let c = ClassList::new(vec!["x".into()]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn top_n_orders_by_score_then_id() {
        let classes = ClassList::new(vec!["a".into(), "b".into(), "c".into()]);
        let p = Prediction::new(classes, vec![0.3, 0.4, 0.3]).unwrap();
        let top = p.top(3);
        assert_eq!(top[0].0, 1);
        assert_eq!(top[1].0, 0);
        assert_eq!(top[2].0, 2);
    }

    #[test]
    fn quantize_is_idempotent() {
        let mut v = vec![0.1, std::f64::consts::PI, 1e-20];
        quantize_f32(&mut v);
        let first = v.clone();
        quantize_f32(&mut v);
        assert_eq!(v, first);
        assert_eq!(v[0], 0.1f32 as f64);
    }
}
