//! Extremely randomized trees.
//!
//! Geurts-style: at each node a random subset of features is drawn, one
//! uniform-random threshold per drawn feature within the node's value range,
//! and the split with the best Gini reduction wins. No bootstrap — every tree
//! sees the full training set. Leaves store class histograms; prediction is
//! the mean of per-tree leaf distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, sample_indices, ChaCha8Rng};

use rand::Rng;

use super::{ClassList, Prediction};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreesConfig {
    pub n_trees: usize,
    /// Features drawn per node; defaults to ceil(sqrt(d)).
    pub k_features: Option<usize>,
    pub min_split: usize,
    pub seed: u64,
}

impl Default for TreesConfig {
    fn default() -> Self {
        Self { n_trees: 100, k_features: None, min_split: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { dist: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_dist<'a>(&'a self, x: &[f64]) -> &'a [f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    pub classes: ClassList,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

struct Builder<'a> {
    rows: Vec<&'a [f64]>,
    labels: &'a [usize],
    n_classes: usize,
    k_features: usize,
    min_split: usize,
}

impl Builder<'_> {
    fn gini(counts: &[usize], total: usize) -> f64 {
        let inv = 1.0 / total as f64;
        1.0 - counts
            .iter()
            .map(|&c| {
                let p = c as f64 * inv;
                p * p
            })
            .sum::<f64>()
    }

    fn counts(&self, indices: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn leaf(&self, counts: &[usize], n: usize, nodes: &mut Vec<Node>) -> usize {
        let dist: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        nodes.push(Node::Leaf { dist });
        nodes.len() - 1
    }

    fn build(&self, indices: &[usize], rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let counts = self.counts(indices);
        let n = indices.len();
        let pure = counts.iter().any(|&c| c == n);
        if pure || n < self.min_split {
            return self.leaf(&counts, n, nodes);
        }

        let d = self.rows[0].len();
        let candidates = sample_indices(rng, d, self.k_features.min(d));
        let parent_gini = Self::gini(&counts, n);
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        for feature in candidates {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &i in indices {
                let v = self.rows[i][feature];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !(hi > lo) {
                continue; // constant feature in this node
            }
            let threshold = lo + rng.gen_range(0.0..1.0) * (hi - lo);
            let mut left_counts = vec![0usize; self.n_classes];
            let mut n_left = 0usize;
            for &i in indices {
                if self.rows[i][feature] < threshold {
                    left_counts[self.labels[i]] += 1;
                    n_left += 1;
                }
            }
            let n_right = n - n_left;
            if n_left == 0 || n_right == 0 {
                continue;
            }
            let right_counts: Vec<usize> =
                counts.iter().zip(&left_counts).map(|(c, l)| c - l).collect();
            let gain = parent_gini
                - (n_left as f64 / n as f64) * Self::gini(&left_counts, n_left)
                - (n_right as f64 / n as f64) * Self::gini(&right_counts, n_right);
            if best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, feature, threshold));
            }
        }

        let Some((_, feature, threshold)) = best else {
            return self.leaf(&counts, n, nodes);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            indices.iter().partition(|&&i| self.rows[i][feature] < threshold);
        // Reserve the split slot, then build children.
        let at = nodes.len();
        nodes.push(Node::Leaf { dist: Vec::new() });
        let left = self.build(&left_idx, rng, nodes);
        let right = self.build(&right_idx, rng, nodes);
        nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

/// Train an extremely randomized forest. Bit-deterministic given
/// `cfg.seed`: each tree draws from its own derived stream, so the result is
/// independent of thread scheduling.
pub fn train_extra_trees(train: &LabeledDataset, cfg: &TreesConfig) -> Result<ForestModel> {
    if train.is_empty() {
        return Err(Error::EmptyClass);
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("n_trees must be positive".into()));
    }
    let rows = train.rows();
    let labels = train.labels();
    let d = train.grid().n_points;
    let builder = Builder {
        rows,
        labels: &labels,
        n_classes: train.n_species(),
        k_features: cfg.k_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).max(1),
        min_split: cfg.min_split.max(2),
    };
    let all: Vec<usize> = (0..train.len()).collect();
    let trees: Vec<Tree> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, t as u64));
            let mut nodes = Vec::new();
            builder.build(&all, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok(ForestModel {
        classes: ClassList::from(train.species_names()),
        n_features: d,
        trees,
    })
}

/// Mean of the per-tree leaf distributions, L1-normalized.
pub fn predict_trees(model: &ForestModel, values: &[f64]) -> Prediction {
    let mut scores = vec![0.0; model.classes.len()];
    for tree in &model.trees {
        for (s, d) in scores.iter_mut().zip(tree.leaf_dist(values)) {
            *s += d;
        }
    }
    Prediction::new(model.classes.clone(), scores).expect("leaf distributions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{GridSpec, Meta, Spectrum, SpectrumKind};

    fn dataset(rows: &[(&str, Vec<f64>)]) -> LabeledDataset {
        let n = rows[0].1.len();
        let grid = GridSpec::new(0.0, (n - 1) as f64, n).unwrap();
        let mut ds = LabeledDataset::new(SpectrumKind::Raman, grid);
        for (name, values) in rows {
            let s = Spectrum::new(grid, values.clone(), SpectrumKind::Raman, Meta::new()).unwrap();
            ds.push(s, name).unwrap();
        }
        ds
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let ds = dataset(&[("A", vec![0.1, 0.2]), ("A", vec![0.3, 0.4])]);
        let model =
            train_extra_trees(&ds, &TreesConfig { n_trees: 3, ..Default::default() }).unwrap();
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert!(matches!(&tree.nodes[0], Node::Leaf { dist } if dist == &vec![1.0]));
        }
    }

    #[test]
    fn separable_two_samples_learned_exactly() {
        // Only one informative feature; any random threshold between the two
        // values separates them, so training accuracy is 1 for any tree.
        let ds = dataset(&[("A", vec![0.0, 0.5]), ("B", vec![1.0, 0.5])]);
        for n_trees in [1, 5] {
            let model = train_extra_trees(
                &ds,
                &TreesConfig { n_trees, k_features: Some(2), seed: 4, ..Default::default() },
            )
            .unwrap();
            assert_eq!(predict_trees(&model, &[0.0, 0.5]).argmax(), 0);
            assert_eq!(predict_trees(&model, &[1.0, 0.5]).argmax(), 1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<(String, Vec<f64>)> = (0..40)
            .map(|i| {
                let c = i % 4;
                let v: Vec<f64> = (0..10)
                    .map(|j| ((i * 31 + j * 17 + c * 7) % 100) as f64 / 100.0)
                    .collect();
                (format!("c{c}"), v)
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>)> = rows.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
        let ds = dataset(&refs);
        let cfg = TreesConfig { n_trees: 20, seed: 99, ..Default::default() };
        let m1 = train_extra_trees(&ds, &cfg).unwrap();
        let m2 = train_extra_trees(&ds, &cfg).unwrap();
        let probe: Vec<f64> = (0..10).map(|j| j as f64 / 10.0).collect();
        assert_eq!(predict_trees(&m1, &probe).scores(), predict_trees(&m2, &probe).scores());
        // Structural equality too.
        assert_eq!(
            serde_json::to_string(&m1.trees).unwrap(),
            serde_json::to_string(&m2.trees).unwrap()
        );
    }

    #[test]
    fn perfect_training_accuracy_on_separable_fixture() {
        let rows: Vec<(String, Vec<f64>)> = (0..50)
            .map(|i| {
                let c = i % 2;
                let base = if c == 0 { 0.1 } else { 0.9 };
                let v: Vec<f64> =
                    (0..8).map(|j| base + 0.005 * ((i + j) % 7) as f64).collect();
                (format!("c{c}"), v)
            })
            .collect();
        let refs: Vec<(&str, Vec<f64>)> = rows.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
        let ds = dataset(&refs);
        let model = train_extra_trees(
            &ds,
            &TreesConfig { n_trees: 50, seed: 1, ..Default::default() },
        )
        .unwrap();
        for (s, label) in ds.samples() {
            assert_eq!(predict_trees(&model, s.values()).argmax(), label);
        }
    }
}
