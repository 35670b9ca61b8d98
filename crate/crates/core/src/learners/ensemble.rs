//! The six-architecture CNN ensemble.
//!
//! Two Liu-style conv/pool stacks with different widths, two variants built
//! around parallel feature-extraction branches, and two VGG-lite networks
//! with six convolutional layers and two or three dense layers. All members
//! train with EMA weight averaging and predict with the shadow weights; the
//! ensemble prediction is the arithmetic mean of the member predictions.

use rayon::prelude::*;

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::nn::{predict_cnn, train_cnn, CnnArchitecture, CnnModel, LayerSpec};
use super::{ClassList, Prediction, TrainConfig};

/// The six member architectures, in a fixed order.
pub fn build_ensemble6(n_classes: usize, input_length: usize) -> Vec<CnnArchitecture> {
    let dropout = 0.5;
    let head = |units: usize| {
        vec![
            LayerSpec::dense(units),
            LayerSpec::Dropout { rate: dropout },
            LayerSpec::dense_linear(n_classes),
            LayerSpec::Softmax,
        ]
    };

    let liu_a = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::conv(8, 21, 3),
                LayerSpec::pool(2),
                LayerSpec::conv(16, 11, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(32, 5, 1),
                LayerSpec::pool(2),
            ],
            head(96),
        ]
        .concat(),
    };
    let liu_b = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::conv(12, 21, 3),
                LayerSpec::pool(2),
                LayerSpec::conv(24, 11, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(48, 5, 1),
                LayerSpec::pool(4),
            ],
            head(128),
        ]
        .concat(),
    };
    // Parallel branches with different receptive fields; the kernel/stride
    // combinations keep both branches at the same output length for any
    // input length.
    let featex_a = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::Parallel {
                    branches: vec![
                        vec![LayerSpec::conv(8, 21, 3)],
                        vec![LayerSpec::conv(8, 9, 3), LayerSpec::conv(8, 5, 1)],
                    ],
                },
                LayerSpec::pool(2),
                LayerSpec::conv(24, 7, 1),
                LayerSpec::pool(4),
            ],
            head(96),
        ]
        .concat(),
    };
    let featex_b = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::Parallel {
                    branches: vec![
                        vec![LayerSpec::conv(12, 15, 3)],
                        vec![LayerSpec::conv(12, 9, 3), LayerSpec::conv(12, 3, 1)],
                    ],
                },
                LayerSpec::pool(2),
                LayerSpec::conv(32, 5, 1),
                LayerSpec::pool(4),
            ],
            head(96),
        ]
        .concat(),
    };
    let vgg_a = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::conv(8, 7, 2),
                LayerSpec::conv(8, 5, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(16, 5, 1),
                LayerSpec::conv(16, 3, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(32, 3, 1),
                LayerSpec::conv(32, 3, 1),
                LayerSpec::pool(2),
            ],
            head(96),
        ]
        .concat(),
    };
    let vgg_b = CnnArchitecture {
        input_length,
        layers: [
            vec![
                LayerSpec::conv(8, 9, 2),
                LayerSpec::conv(8, 5, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(16, 5, 1),
                LayerSpec::conv(16, 3, 1),
                LayerSpec::pool(2),
                LayerSpec::conv(24, 3, 1),
                LayerSpec::conv(24, 3, 1),
                LayerSpec::pool(4),
            ],
            vec![
                LayerSpec::dense(96),
                LayerSpec::Dropout { rate: dropout },
                LayerSpec::dense(48),
                LayerSpec::dense_linear(n_classes),
                LayerSpec::Softmax,
            ],
        ]
        .concat(),
    };
    vec![liu_a, liu_b, featex_a, featex_b, vgg_a, vgg_b]
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub classes: ClassList,
    pub members: Vec<CnnModel>,
}

impl EnsembleModel {
    pub fn predict(&self, values: &[f64]) -> Result<Prediction> {
        let refs: Vec<&CnnModel> = self.members.iter().collect();
        predict_ensemble(&refs, values)
    }
}

/// Train all six members concurrently with independent derived seeds; the
/// result is deterministic regardless of thread count.
pub fn train_ensemble6(train: &LabeledDataset, cfg: &TrainConfig) -> Result<EnsembleModel> {
    let archs = build_ensemble6(train.n_species(), train.grid().n_points);
    let members: Vec<CnnModel> = archs
        .par_iter()
        .enumerate()
        .map(|(i, arch)| {
            let member_cfg =
                TrainConfig { seed: derive_seed(cfg.seed, 0xe6 + i as u64), ..cfg.clone() };
            train_cnn(train, arch, &member_cfg)
        })
        .collect::<Result<_>>()?;
    Ok(EnsembleModel { classes: ClassList::from(train.species_names()), members })
}

/// Arithmetic mean of the member predictions (EMA weights), L1-normalized.
pub fn predict_ensemble(models: &[&CnnModel], values: &[f64]) -> Result<Prediction> {
    let first = models.first().ok_or(Error::EmptyClass)?;
    let mut scores = vec![0.0; first.classes.len()];
    for model in models {
        if model.classes != first.classes {
            return Err(Error::ClassMismatch);
        }
        let p = predict_cnn(model, values, true)?;
        for (s, v) in scores.iter_mut().zip(p.scores()) {
            *s += v;
        }
    }
    Prediction::new(first.classes.clone(), scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_architectures_with_expected_structure() {
        let archs = build_ensemble6(20, 1715);
        assert_eq!(archs.len(), 6);
        for (i, arch) in archs.iter().enumerate() {
            arch.shape_check(20).unwrap_or_else(|e| panic!("arch {i}: {e}"));
        }
        // The two VGG-lite members have 6 conv layers and 2 / 3 dense layers.
        assert_eq!(archs[4].conv_layer_count(), 6);
        assert_eq!(archs[5].conv_layer_count(), 6);
        assert_eq!(archs[4].dense_layer_count(), 2);
        assert_eq!(archs[5].dense_layer_count(), 3);
        // The FeatEx members contain a parallel block.
        for arch in &archs[2..4] {
            assert!(arch
                .layers
                .iter()
                .any(|l| matches!(l, LayerSpec::Parallel { .. })));
        }
    }

    #[test]
    fn architectures_work_on_other_grid_lengths() {
        for len in [600usize, 1715, 7001] {
            for (i, arch) in build_ensemble6(5, len).iter().enumerate() {
                arch.shape_check(5).unwrap_or_else(|e| panic!("len {len} arch {i}: {e}"));
            }
        }
    }

    #[test]
    fn member_order_does_not_change_the_prediction() {
        use crate::learners::nn::{train_cnn, LayerSpec};
        use crate::learners::TrainConfig;
        use crate::spectra::{GridSpec, Meta, Spectrum, SpectrumKind};
        let grid = GridSpec::new(0.0, 15.0, 16).unwrap();
        let mut ds = LabeledDataset::new(SpectrumKind::Raman, grid);
        for i in 0..8 {
            let mut v = vec![0.0; 16];
            v[if i % 2 == 0 { 3 } else { 12 }] = 1.0;
            v[(i * 5) % 16] = 0.4;
            let s = Spectrum::new(grid, v, SpectrumKind::Raman, Meta::new()).unwrap();
            ds.push(s, if i % 2 == 0 { "lo" } else { "hi" }).unwrap();
        }
        let arch = |k: usize| CnnArchitecture {
            input_length: 16,
            layers: vec![
                LayerSpec::conv(2, k, 1),
                LayerSpec::dense(4),
                LayerSpec::dense_linear(2),
                LayerSpec::Softmax,
            ],
        };
        let cfg = TrainConfig { epochs: 4, dropout_rate: 0.0, ..Default::default() };
        let m1 = train_cnn(&ds, &arch(3), &cfg).unwrap();
        let m2 = train_cnn(&ds, &arch(5), &TrainConfig { seed: 9, ..cfg }).unwrap();
        let q = ds.sample(0).0.values();
        let forward = predict_ensemble(&[&m1, &m2], q).unwrap();
        let backward = predict_ensemble(&[&m2, &m1], q).unwrap();
        for (a, b) in forward.scores().iter().zip(backward.scores()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_identical_members_is_that_prediction() {
        // Exercised through the Prediction algebra: mean of identical
        // predictions re-normalizes to the same vector.
        let classes = ClassList::new(vec!["a".into(), "b".into()]);
        let p = Prediction::new(classes.clone(), vec![0.7, 0.3]).unwrap();
        let mut scores = vec![0.0; 2];
        for _ in 0..3 {
            for (s, v) in scores.iter_mut().zip(p.scores()) {
                *s += v;
            }
        }
        let mean = Prediction::new(classes, scores).unwrap();
        assert!((mean.score(0) - 0.7).abs() < 1e-12);
    }
}
