//! Synthetic fixture datasets.
//!
//! The real spectral archives cannot be redistributed, so the experiment
//! harness and the test suite run on generated stand-ins: Gaussian-peak
//! "mineral" libraries with controlled within-class variation, and a
//! two-modality fixture whose modalities carry complementary information.

use rand::Rng;

use crate::rng::{derive_seed, normal, rng_from_seed, ChaCha8Rng};
use crate::spectra::{normalize_unit, GridSpec, Meta, Spectrum, SpectrumKind};

use super::LabeledDataset;

/// One synthetic mineral class: fixed peak positions/widths/heights.
#[derive(Debug, Clone)]
struct ClassTemplate {
    /// (center bin, sigma in bins, amplitude)
    peaks: Vec<(f64, f64, f64)>,
}

impl ClassTemplate {
    fn sample(n_points: usize, rng: &mut ChaCha8Rng) -> Self {
        let n_peaks = rng.gen_range(3..=6);
        let peaks = (0..n_peaks)
            .map(|_| {
                let center = rng.gen_range(0.05..0.95) * n_points as f64;
                let sigma = rng.gen_range(4.0..12.0);
                let amp = rng.gen_range(0.3..1.0);
                (center, sigma, amp)
            })
            .collect();
        Self { peaks }
    }

    /// Render one spectrum with within-class jitter and proportional noise.
    fn render(&self, n_points: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v = vec![0.0; n_points];
        for &(center, sigma, amp) in &self.peaks {
            let c = center + rng.gen_range(-2.0..2.0);
            let a = amp * rng.gen_range(0.9..1.1);
            add_gaussian(&mut v, c, sigma, a);
        }
        for x in &mut v {
            *x *= 1.0 + 0.03 * normal(rng);
        }
        normalize_unit(&v)
    }
}

fn add_gaussian(values: &mut [f64], center: f64, sigma: f64, amplitude: f64) {
    let lo = ((center - 5.0 * sigma).floor().max(0.0)) as usize;
    let hi = ((center + 5.0 * sigma).ceil() as usize).min(values.len().saturating_sub(1));
    for (i, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = (i as f64 - center) / sigma;
        *v += amplitude * (-0.5 * d * d).exp();
    }
}

/// A library of `n_classes` synthetic mineral species with `per_class`
/// spectra each, on `grid`.
pub fn gaussian_library(
    n_classes: usize,
    per_class: usize,
    grid: GridSpec,
    kind: SpectrumKind,
    seed: u64,
) -> LabeledDataset {
    let mut ds = LabeledDataset::new(kind, grid);
    for class in 0..n_classes {
        let mut template_rng = rng_from_seed(derive_seed(seed, class as u64));
        let template = ClassTemplate::sample(grid.n_points, &mut template_rng);
        let name = format!("synthetic-{class:03}");
        for sample in 0..per_class {
            let mut rng = rng_from_seed(derive_seed(
                seed,
                (1 + class as u64) << 20 | sample as u64,
            ));
            let values = template.render(grid.n_points, &mut rng);
            let mut meta = Meta::new();
            meta.insert("name".into(), name.clone());
            let spectrum = Spectrum::new(grid, values, kind, meta).expect("synthetic in range");
            ds.push(spectrum, &name).expect("grid matches");
        }
    }
    ds
}

/// Two-modality fixture with complementary information.
///
/// Classes are indexed by (pair, half): class = 2*pair + half. Modality A
/// spectra depend only on the pair index, modality B spectra only on the
/// half index, so neither modality alone can identify the class but the two
/// together can.
pub fn complementary_pair(
    n_pairs: usize,
    per_class: usize,
    n_points: usize,
    seed: u64,
) -> (LabeledDataset, LabeledDataset) {
    let grid = GridSpec::new(0.0, (n_points - 1) as f64, n_points).expect("valid grid");
    let mut ds_a = LabeledDataset::new(SpectrumKind::Raman, grid);
    let mut ds_b = LabeledDataset::new(SpectrumKind::Vnir, grid);

    // Pair signatures spread across the grid; half signatures at fixed spots.
    let pair_center = |p: usize| (p as f64 + 0.5) / n_pairs as f64 * 0.9 * n_points as f64;
    let half_center = |h: usize| (0.25 + 0.5 * h as f64) * n_points as f64;

    for pair in 0..n_pairs {
        for half in 0..2 {
            let class = 2 * pair + half;
            let name = format!("pairclass-{class:03}");
            for sample in 0..per_class {
                let mut rng = rng_from_seed(derive_seed(
                    seed,
                    (class as u64) << 32 | sample as u64,
                ));
                let jitter = rng.gen_range(-1.5..1.5);
                let mut a = vec![0.0; n_points];
                add_gaussian(&mut a, pair_center(pair) + jitter, 4.0, 1.0);
                for x in &mut a {
                    *x *= 1.0 + 0.05 * normal(&mut rng);
                }
                let jitter_b = rng.gen_range(-1.5..1.5);
                let mut b = vec![0.0; n_points];
                add_gaussian(&mut b, half_center(half) + jitter_b, 4.0, 1.0);
                for x in &mut b {
                    *x *= 1.0 + 0.05 * normal(&mut rng);
                }
                let sa =
                    Spectrum::new(grid, normalize_unit(&a), SpectrumKind::Raman, Meta::new())
                        .expect("in range");
                let sb = Spectrum::new(grid, normalize_unit(&b), SpectrumKind::Vnir, Meta::new())
                    .expect("in range");
                ds_a.push(sa, &name).expect("grid matches");
                ds_b.push(sb, &name).expect("grid matches");
            }
        }
    }
    (ds_a, ds_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_shape_and_determinism() {
        let grid = GridSpec::new(0.0, 199.0, 200).unwrap();
        let ds = gaussian_library(5, 4, grid, SpectrumKind::Raman, 42);
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.n_species(), 5);
        let ds2 = gaussian_library(5, 4, grid, SpectrumKind::Raman, 42);
        for i in 0..ds.len() {
            assert_eq!(ds.sample(i).0.values(), ds2.sample(i).0.values());
        }
        // Different seed, different data.
        let ds3 = gaussian_library(5, 4, grid, SpectrumKind::Raman, 43);
        assert_ne!(ds.sample(0).0.values(), ds3.sample(0).0.values());
    }

    #[test]
    fn complementary_structure() {
        let (a, b) = complementary_pair(3, 2, 100, 7);
        assert_eq!(a.len(), 12);
        assert_eq!(a.n_species(), 6);
        assert_eq!(a.species_names(), b.species_names());
        // A-spectra of the two halves of one pair peak in the same place.
        let peak_bin = |s: &Spectrum| {
            s.values()
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .unwrap()
        };
        let a0 = peak_bin(a.sample(0).0); // class 0 (pair 0, half 0)
        let a1 = peak_bin(a.sample(2).0); // class 1 (pair 0, half 1)
        assert!((a0 as i64 - a1 as i64).abs() <= 4, "{a0} vs {a1}");
        // B-spectra of the two halves peak in different places.
        let b0 = peak_bin(b.sample(0).0);
        let b1 = peak_bin(b.sample(2).0);
        assert!((b0 as i64 - b1 as i64).abs() > 20, "{b0} vs {b1}");
    }
}
