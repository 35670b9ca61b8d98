//! Training-set augmentation.
//!
//! Each technique appends exactly one synthetic copy per training sample, so
//! every class's count doubles. Originals are never modified or dropped, and
//! augmented values stay in `[0, 1]`.
//!
//! The magnitudes (shift range, offset range, noise sigma, the
//! offset/slope/multiply ranges, the SMOTE neighbor count) are configurable
//! so experiments can sweep them; the defaults are small relative to the
//! unit normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::Result;
use crate::rng::{derive_seed, normal, rng_from_seed, ChaCha8Rng};
use crate::spectra::Spectrum;

/// Which augmentation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    #[default]
    None,
    /// Shift left/right by a few bins.
    Shift,
    /// Add one random value to every bin.
    Offset,
    /// Multiplicative noise proportional to each bin's magnitude.
    Noise,
    /// Offset + slope + multiply, after Bjerrum et al.
    Bjerrum,
    /// Interpolate toward a same-class nearest neighbor.
    Smote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    /// Maximum shift magnitude in bins (offset drawn from [-s, s] \ {0}).
    pub shift_max_bins: usize,
    /// Half-width of the uniform additive offset.
    pub offset_range: f64,
    /// Standard deviation of the proportional noise.
    pub noise_sigma: f64,
    /// Multiplier range half-width around 1 for the Bjerrum transform.
    pub bjerrum_multiply: f64,
    /// Offset and slope half-widths for the Bjerrum transform.
    pub bjerrum_offset: f64,
    pub bjerrum_slope: f64,
    /// Neighbor count for SMOTE (capped at class size - 1).
    pub smote_k: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            shift_max_bins: 5,
            offset_range: 0.1,
            noise_sigma: 0.05,
            bjerrum_multiply: 0.1,
            bjerrum_offset: 0.05,
            bjerrum_slope: 0.05,
            smote_k: 5,
        }
    }
}

/// Apply `technique` to a training set, doubling each class.
pub fn apply(
    technique: Technique,
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    match technique {
        Technique::None => Ok(train.clone()),
        Technique::Shift => augment_shift(train, seed, params),
        Technique::Offset => augment_offset(train, seed, params),
        Technique::Noise => augment_proportional_noise(train, seed, params),
        Technique::Bjerrum => augment_offset_slope_multiply(train, seed, params),
        Technique::Smote => augment_smote(train, seed, params),
    }
}

fn with_copies<F>(train: &LabeledDataset, mut make: F) -> Result<LabeledDataset>
where
    F: FnMut(usize, &Spectrum) -> Vec<f64>,
{
    let mut out = train.clone();
    for i in 0..train.len() {
        let (spectrum, species_id) = train.sample(i);
        let values = make(i, spectrum);
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut copy = Spectrum::new(*spectrum.grid(), values, spectrum.kind(), spectrum.meta().clone())?;
        copy.meta_mut().insert("augmented".into(), "true".into());
        let name = train.species_name(species_id).to_string();
        out.push(copy, &name)?;
    }
    Ok(out)
}

fn sample_rng(seed: u64, sample: usize) -> ChaCha8Rng {
    rng_from_seed(derive_seed(seed, sample as u64))
}

/// Shift each spectrum by a nonzero integer offset in [-s, s]; vacated bins
/// are zero-filled.
pub fn augment_shift(
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    let s = params.shift_max_bins.max(1) as i64;
    with_copies(train, |i, spectrum| {
        let mut rng = sample_rng(seed, i);
        // Draw from the 2s nonzero offsets.
        let r = rng.gen_range(0..2 * s);
        let offset = if r < s { r - s } else { r - s + 1 };
        let v = spectrum.values();
        let n = v.len() as i64;
        (0..n)
            .map(|j| {
                let src = j - offset;
                if src >= 0 && src < n {
                    v[src as usize].clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    })
}

/// Add a single uniform draw to every bin of the copy.
pub fn augment_offset(
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    let r = params.offset_range;
    with_copies(train, |i, spectrum| {
        let mut rng = sample_rng(seed, i);
        let delta = rng.gen_range(-r..r);
        spectrum.values().iter().map(|v| (v + delta).clamp(0.0, 1.0)).collect()
    })
}

/// Multiply each bin by `1 + eps` with independent zero-mean Gaussian `eps`.
pub fn augment_proportional_noise(
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    let sigma = params.noise_sigma;
    with_copies(train, |i, spectrum| {
        let mut rng = sample_rng(seed, i);
        spectrum
            .values()
            .iter()
            .map(|v| (v * (1.0 + sigma * normal(&mut rng))).clamp(0.0, 1.0))
            .collect()
    })
}

/// The Bjerrum/chemometrics transform: `m*v + a + b*t` with `t` the
/// normalized grid coordinate.
pub fn augment_offset_slope_multiply(
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    with_copies(train, |i, spectrum| {
        let mut rng = sample_rng(seed, i);
        let m = rng.gen_range(1.0 - params.bjerrum_multiply..1.0 + params.bjerrum_multiply);
        let a = rng.gen_range(-params.bjerrum_offset..params.bjerrum_offset);
        let b = rng.gen_range(-params.bjerrum_slope..params.bjerrum_slope);
        let n = spectrum.values().len();
        spectrum
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let t = j as f64 / (n - 1) as f64;
                (m * v + a + b * t).clamp(0.0, 1.0)
            })
            .collect()
    })
}

/// SMOTE: for each sample, interpolate toward one of its k nearest same-class
/// neighbors (Euclidean). Classes with a single sample fall back to the
/// additive-offset augmentation for that sample.
pub fn augment_smote(
    train: &LabeledDataset,
    seed: u64,
    params: &AugmentParams,
) -> Result<LabeledDataset> {
    let groups = train.indices_by_species();
    // Precompute per-sample neighbor lists within its class.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); train.len()];
    for group in &groups {
        if group.len() < 2 {
            continue;
        }
        let k = params.smote_k.max(1).min(group.len() - 1);
        for &i in group {
            let xi = train.sample(i).0.values();
            let mut dists: Vec<(f64, usize)> = group
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let xj = train.sample(j).0.values();
                    let d2: f64 =
                        xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2, j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbors[i] = dists.into_iter().take(k).map(|(_, j)| j).collect();
        }
    }
    let offset_range = params.offset_range;
    with_copies(train, |i, spectrum| {
        let mut rng = sample_rng(seed, i);
        if neighbors[i].is_empty() {
            let delta = rng.gen_range(-offset_range..offset_range);
            return spectrum.values().iter().map(|v| (v + delta).clamp(0.0, 1.0)).collect();
        }
        let z = neighbors[i][rng.gen_range(0..neighbors[i].len())];
        let lambda: f64 = rng.gen_range(0.0..1.0);
        let zv = train.sample(z).0.values();
        spectrum
            .values()
            .iter()
            .zip(zv)
            .map(|(x, z)| (x + lambda * (z - x)).clamp(0.0, 1.0))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{GridSpec, Meta, SpectrumKind};

    fn ds_from(rows: &[(&str, Vec<f64>)]) -> LabeledDataset {
        let n = rows[0].1.len();
        let grid = GridSpec::new(0.0, (n - 1) as f64, n).unwrap();
        let mut ds = LabeledDataset::new(SpectrumKind::Raman, grid);
        for (name, values) in rows {
            let s = Spectrum::new(grid, values.clone(), SpectrumKind::Raman, Meta::new()).unwrap();
            ds.push(s, name).unwrap();
        }
        ds
    }

    fn class_counts(ds: &LabeledDataset) -> Vec<usize> {
        ds.indices_by_species().iter().map(Vec::len).collect()
    }

    #[test]
    fn every_technique_doubles_and_stays_in_range() {
        let ds = ds_from(&[
            ("A", vec![0.0, 0.2, 1.0, 0.3, 0.0]),
            ("A", vec![0.1, 0.3, 0.9, 0.2, 0.0]),
            ("A", vec![0.0, 0.25, 0.95, 0.25, 0.05]),
            ("B", vec![0.9, 0.1, 0.0, 0.0, 0.4]),
            ("B", vec![0.8, 0.2, 0.1, 0.0, 0.5]),
            ("C", vec![0.5, 0.5, 0.5, 0.4, 0.6]),
        ]);
        let before = class_counts(&ds);
        let params = AugmentParams::default();
        for technique in [
            Technique::Shift,
            Technique::Offset,
            Technique::Noise,
            Technique::Bjerrum,
            Technique::Smote,
        ] {
            let aug = apply(technique, &ds, 7, &params).unwrap();
            let after = class_counts(&aug);
            assert_eq!(
                after,
                before.iter().map(|c| c * 2).collect::<Vec<_>>(),
                "{technique:?}"
            );
            // Originals unchanged, in order.
            for i in 0..ds.len() {
                assert_eq!(aug.sample(i).0.values(), ds.sample(i).0.values());
            }
            for (s, _) in aug.samples() {
                assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
            // Determinism.
            let again = apply(technique, &ds, 7, &params).unwrap();
            for i in 0..aug.len() {
                assert_eq!(aug.sample(i).0.values(), again.sample(i).0.values());
            }
        }
    }

    #[test]
    fn shift_moves_bins() {
        // A single spike: the augmented copy must be the same spike moved by
        // a nonzero offset within +/- 5.
        let ds = ds_from(&[("A", {
            let mut v = vec![0.0; 32];
            v[16] = 1.0;
            v
        })]);
        let aug = augment_shift(&ds, 3, &AugmentParams::default()).unwrap();
        let copy = aug.sample(1).0.values();
        let pos = copy.iter().position(|&v| v == 1.0).unwrap();
        assert_ne!(pos, 16);
        assert!((pos as i64 - 16).unsigned_abs() <= 5);
        assert_eq!(copy.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn shift_index_arithmetic() {
        // Contract: index i takes value from i - offset. For offset +2,
        // [0,0,1,0,0] -> [0,0,0,0,1].
        let v = [0.0, 0.0, 1.0, 0.0, 0.0];
        let offset = 2i64;
        let shifted: Vec<f64> = (0..5i64)
            .map(|j| {
                let src = j - offset;
                if (0..5).contains(&src) {
                    v[src as usize]
                } else {
                    0.0
                }
            })
            .collect();
        assert_eq!(shifted, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn noise_keeps_zero_bins_zero() {
        let ds = ds_from(&[("A", vec![0.0, 0.5, 0.0, 1.0])]);
        let aug = augment_proportional_noise(&ds, 11, &AugmentParams::default()).unwrap();
        let copy = aug.sample(1).0.values();
        assert_eq!(copy[0], 0.0);
        assert_eq!(copy[2], 0.0);
        assert_ne!(copy[1], 0.5);
    }

    #[test]
    fn smote_stays_in_class_convex_hull() {
        let ds = ds_from(&[
            ("A", vec![0.0, 0.0, 0.2, 0.1]),
            ("A", vec![1.0, 1.0, 0.4, 0.3]),
            ("A", vec![0.5, 0.2, 0.3, 0.2]),
        ]);
        for seed in 0..200 {
            let aug = augment_smote(&ds, seed, &AugmentParams::default()).unwrap();
            for i in ds.len()..aug.len() {
                let v = aug.sample(i).0.values();
                for d in 0..v.len() {
                    let lo = (0..ds.len())
                        .map(|j| ds.sample(j).0.values()[d])
                        .fold(f64::INFINITY, f64::min);
                    let hi = (0..ds.len())
                        .map(|j| ds.sample(j).0.values()[d])
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert!(v[d] >= lo - 1e-12 && v[d] <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn smote_two_point_class_lies_on_segment() {
        let ds = ds_from(&[("A", vec![0.0, 0.0]), ("A", vec![1.0, 1.0])]);
        let aug = augment_smote(&ds, 5, &AugmentParams::default()).unwrap();
        for i in 2..4 {
            let v = aug.sample(i).0.values();
            assert!((v[0] - v[1]).abs() < 1e-12, "{v:?} not on the diagonal");
            assert!((0.0..=1.0).contains(&v[0]));
        }
    }

    #[test]
    fn smote_singleton_class_falls_back() {
        let ds = ds_from(&[("A", vec![0.3, 0.6]), ("B", vec![0.1, 0.2]), ("B", vec![0.2, 0.3])]);
        let aug = augment_smote(&ds, 9, &AugmentParams::default()).unwrap();
        assert_eq!(class_counts(&aug), vec![2, 4]);
        // The singleton's copy is an offset of the original: constant shift.
        let orig = ds.sample(0).0.values();
        let copy = aug.sample(3).0.values();
        let d0 = copy[0] - orig[0];
        let d1 = copy[1] - orig[1];
        assert!((d0 - d1).abs() < 1e-12);
    }
}
