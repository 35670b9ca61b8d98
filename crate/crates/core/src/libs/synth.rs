//! Theoretical LIBS spectra: Gaussian line profiles weighted by composition.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;
use crate::spectra::{normalize_unit, GridSpec, Meta, Spectrum, SpectrumKind};

use super::{ElementComposition, LineTable};

/// Default Gaussian line width.
pub const DEFAULT_SIGMA_NM: f64 = 0.2;

/// What to do with composition elements that have no lines in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingLinePolicy {
    Error,
    Skip,
}

/// Unnormalized synthetic intensities:
/// `I(lambda) = sum_e comp_e * sum_lines I_line * exp(-(lambda - lambda_line)^2 / (2 sigma^2))`.
pub fn synth_libs_raw(
    comp: &ElementComposition,
    lines: &LineTable,
    grid: &GridSpec,
    sigma_nm: f64,
    missing: MissingLinePolicy,
) -> Result<Vec<f64>> {
    if !(sigma_nm > 0.0) {
        return Err(Error::Config("sigma_nm must be positive".into()));
    }
    let step = grid.step();
    let mut values = vec![0.0; grid.n_points];
    for (element, fraction) in comp.iter() {
        if !lines.has_element(element) {
            match missing {
                MissingLinePolicy::Error => {
                    return Err(Error::MissingLines(element.to_string()));
                }
                MissingLinePolicy::Skip => continue,
            }
        }
        for line in lines.lines_for(element) {
            let center = line.wavelength_nm;
            if center < grid.start - 6.0 * sigma_nm || center > grid.end + 6.0 * sigma_nm {
                continue;
            }
            let amp = fraction * line.intensity;
            // Only evaluate within +/- 6 sigma of the line.
            let lo = ((center - 6.0 * sigma_nm - grid.start) / step).floor().max(0.0) as usize;
            let hi =
                (((center + 6.0 * sigma_nm - grid.start) / step).ceil() as usize).min(grid.n_points - 1);
            for (i, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let d = (grid.position(i) - center) / sigma_nm;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
    }
    Ok(values)
}

/// Normalized synthetic spectrum on `grid`.
pub fn synth_libs_spectrum(
    comp: &ElementComposition,
    lines: &LineTable,
    grid: &GridSpec,
    sigma_nm: f64,
    missing: MissingLinePolicy,
) -> Result<Spectrum> {
    let raw = synth_libs_raw(comp, lines, grid, sigma_nm, missing)?;
    Spectrum::new(*grid, normalize_unit(&raw), SpectrumKind::Libs, Meta::new())
}

/// A random composition over 1..=max_components of the given elements, with
/// flat-Dirichlet weights.
pub fn random_composition(
    elements: &[String],
    max_components: usize,
    rng: &mut ChaCha8Rng,
) -> ElementComposition {
    assert!(!elements.is_empty(), "need at least one element");
    let k = rng.gen_range(1..=max_components.min(elements.len()));
    let chosen = crate::rng::sample_indices(rng, elements.len(), k);
    // Dirichlet(1) = normalized standard exponentials.
    let weights: Vec<(String, f64)> = chosen
        .into_iter()
        .map(|i| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            (elements[i].clone(), -u.ln())
        })
        .collect();
    ElementComposition::from_weights(weights).expect("positive weights")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn table() -> LineTable {
        LineTable::from_csv(
            b"element,stage,wavelength_nm,rel_intensity\n\
              Na,1,500.0,1000\n\
              Ca,1,600.0,500\nCa,2,610.0,250\n",
        )
        .unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::new(400.0, 700.0, 3001).unwrap()
    }

    #[test]
    fn single_line_is_one_gaussian_bump() {
        let comp = ElementComposition::from_weights(vec![("Na".to_string(), 1.0)]).unwrap();
        let s = synth_libs_spectrum(&comp, &table(), &grid(), 0.2, MissingLinePolicy::Error)
            .unwrap();
        let peak_bin = s
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(peak_bin, grid().nearest_index(500.0));
        assert_eq!(s.values()[peak_bin], 1.0);
        // Far from the line everything is ~0.
        assert!(s.values()[0] < 1e-12);
    }

    #[test]
    fn mixture_is_pointwise_superposition_before_normalization() {
        let na = ElementComposition::from_weights(vec![("Na".to_string(), 1.0)]).unwrap();
        let ca = ElementComposition::from_weights(vec![("Ca".to_string(), 1.0)]).unwrap();
        let half = ElementComposition::from_weights(vec![
            ("Na".to_string(), 1.0),
            ("Ca".to_string(), 1.0),
        ])
        .unwrap();
        let t = table();
        let g = grid();
        let raw_na = synth_libs_raw(&na, &t, &g, 0.2, MissingLinePolicy::Error).unwrap();
        let raw_ca = synth_libs_raw(&ca, &t, &g, 0.2, MissingLinePolicy::Error).unwrap();
        let raw_mix = synth_libs_raw(&half, &t, &g, 0.2, MissingLinePolicy::Error).unwrap();
        for i in 0..g.n_points {
            let expect = 0.5 * raw_na[i] + 0.5 * raw_ca[i];
            assert!((raw_mix[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linearity_in_composition_on_random_pairs() {
        let t = table();
        let g = GridSpec::new(450.0, 650.0, 801).unwrap();
        let mut rng = rng_from_seed(9);
        use rand::Rng;
        for _ in 0..20 {
            let wa: f64 = rng.gen_range(0.1..1.0);
            let wb: f64 = rng.gen_range(0.1..1.0);
            let comp = ElementComposition::from_weights(vec![
                ("Na".to_string(), wa),
                ("Ca".to_string(), wb),
            ])
            .unwrap();
            let mix = synth_libs_raw(&comp, &t, &g, 0.3, MissingLinePolicy::Error).unwrap();
            let na = ElementComposition::from_weights(vec![("Na".to_string(), 1.0)]).unwrap();
            let ca = ElementComposition::from_weights(vec![("Ca".to_string(), 1.0)]).unwrap();
            let pure_na = synth_libs_raw(&na, &t, &g, 0.3, MissingLinePolicy::Error).unwrap();
            let pure_ca = synth_libs_raw(&ca, &t, &g, 0.3, MissingLinePolicy::Error).unwrap();
            let fa = comp.fraction("Na");
            let fb = comp.fraction("Ca");
            for i in 0..g.n_points {
                let expect = fa * pure_na[i] + fb * pure_ca[i];
                assert!((mix[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_lines_policy() {
        let comp = ElementComposition::from_weights(vec![
            ("Na".to_string(), 1.0),
            ("Fe".to_string(), 1.0),
        ])
        .unwrap();
        let t = table();
        let g = grid();
        assert!(matches!(
            synth_libs_raw(&comp, &t, &g, 0.2, MissingLinePolicy::Error),
            Err(Error::MissingLines(_))
        ));
        // Skip mode: identical to the spectrum without the missing element.
        let skipped = synth_libs_raw(&comp, &t, &g, 0.2, MissingLinePolicy::Skip).unwrap();
        let na_only = ElementComposition::from_weights(vec![("Na".to_string(), 1.0)]).unwrap();
        let reference = synth_libs_raw(&na_only, &t, &g, 0.2, MissingLinePolicy::Error).unwrap();
        for i in 0..g.n_points {
            assert!((skipped[i] - 0.5 * reference[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_compositions_are_valid_and_deterministic() {
        let elements: Vec<String> = ["Na", "Ca", "Fe", "Mg", "Si", "O"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut r1 = rng_from_seed(4);
        let mut r2 = rng_from_seed(4);
        for _ in 0..50 {
            let a = random_composition(&elements, 6, &mut r1);
            let b = random_composition(&elements, 6, &mut r2);
            assert_eq!(a, b);
            let sum: f64 = a.iter().map(|(_, v)| v).sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(a.len() >= 1 && a.len() <= 6);
        }
    }
}
