//! Weighted-neighbors classifier.
//!
//! Prediction scores each class by the sum of cosine similarities of its
//! members among the query's k most similar training spectra, then
//! L1-normalizes.

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};

use super::{quantize_f32, ClassList, Prediction};

#[derive(Debug, Clone)]
pub struct KnnModel {
    pub k: usize,
    pub n_features: usize,
    pub classes: ClassList,
    /// Row-major training matrix, one row per training spectrum.
    pub data: Vec<f64>,
    pub labels: Vec<u32>,
    /// Cached L2 norms of the rows, recomputed on load.
    pub(crate) norms: Vec<f64>,
}

impl KnnModel {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    pub(crate) fn compute_norms(data: &[f64], n_features: usize) -> Vec<f64> {
        data.chunks_exact(n_features)
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

/// Freeze the training set into a k-NN model. `k` larger than the training
/// set is clamped.
pub fn train_knn_weighted(train: &LabeledDataset, k: usize) -> Result<KnnModel> {
    if train.is_empty() {
        return Err(Error::EmptyClass);
    }
    let n_features = train.grid().n_points;
    let mut data = Vec::with_capacity(train.len() * n_features);
    let mut labels = Vec::with_capacity(train.len());
    for (spectrum, label) in train.samples() {
        data.extend_from_slice(spectrum.values());
        labels.push(label as u32);
    }
    quantize_f32(&mut data);
    let norms = KnnModel::compute_norms(&data, n_features);
    Ok(KnnModel {
        k: k.max(1).min(train.len()),
        n_features,
        classes: ClassList::from(train.species_names()),
        data,
        labels,
        norms,
    })
}

/// Score a query spectrum against the model's reference set.
pub fn predict_knn(model: &KnnModel, values: &[f64]) -> Result<Prediction> {
    if values.len() != model.n_features {
        return Err(Error::Arch(format!(
            "query has {} features, model expects {}",
            values.len(),
            model.n_features
        )));
    }
    let qnorm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if qnorm == 0.0 {
        return Err(Error::ZeroVector);
    }
    // Similarity to every row; zero-norm rows score 0.
    let mut sims: Vec<(f64, usize)> = (0..model.n_rows())
        .map(|i| {
            let row = model.row(i);
            let sim = if model.norms[i] == 0.0 {
                0.0
            } else {
                let dot: f64 = row.iter().zip(values).map(|(a, b)| a * b).sum();
                dot / (model.norms[i] * qnorm)
            };
            (sim, i)
        })
        .collect();
    sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut scores = vec![0.0; model.classes.len()];
    for &(sim, i) in sims.iter().take(model.k) {
        scores[model.labels[i] as usize] += sim.max(0.0);
    }
    if scores.iter().sum::<f64>() <= 0.0 {
        // Query orthogonal to all neighbors: no evidence for any class.
        return Ok(Prediction::uniform(model.classes.clone()));
    }
    Prediction::new(model.classes.clone(), scores)
}
