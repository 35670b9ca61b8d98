//! The cosine-similarity composition estimator and composition-based mineral
//! matching.
//!
//! Line intensities are binned into coarse wavelength bins and L2-normalized
//! into one weighted vector per element; a queried spectrum's detected peaks
//! form the same kind of vector, and per-element cosine similarities (floored
//! and L1-normalized) serve as the composition estimate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::spectra::{GridSpec, Spectrum};

use crate::learners::{ClassList, Prediction};

use super::peaks::{detect_peaks, MIN_PEAK_HEIGHT, MIN_PEAK_PROMINENCE};
use super::{ElementComposition, LineTable, MineralTable};

/// Default wavelength bin width for the weighted vectors.
pub const WEIGHT_BIN_NM: f64 = 0.3;

/// Per-element similarities below this are dropped before normalization;
/// suppresses spurious trace elements.
pub const SIMILARITY_FLOOR: f64 = 0.01;

/// Sparse weighted vector over wavelength bins.
pub type WeightedVector = BTreeMap<i64, f64>;

fn bin_of(wavelength: f64, start: f64, bin_nm: f64) -> i64 {
    ((wavelength - start) / bin_nm).floor() as i64
}

fn l2_normalize(v: &mut WeightedVector) {
    let norm: f64 = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.values_mut() {
            *x /= norm;
        }
    }
}

fn sparse_cosine(a: &WeightedVector, b: &WeightedVector) -> f64 {
    // Both are L2-normalized; the dot product is the cosine.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(bin, x)| large.get(bin).map(|y| x * y))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// One L2-normalized weighted vector per element: its line intensities
/// summed into `bin_nm`-wide wavelength bins over the grid range.
pub fn element_weight_vectors(
    lines: &LineTable,
    grid: &GridSpec,
    bin_nm: f64,
) -> BTreeMap<String, WeightedVector> {
    let mut out = BTreeMap::new();
    for element in lines.elements() {
        let mut v = WeightedVector::new();
        for line in lines.lines_for(&element) {
            if line.wavelength_nm < grid.start || line.wavelength_nm > grid.end {
                continue;
            }
            *v.entry(bin_of(line.wavelength_nm, grid.start, bin_nm)).or_insert(0.0) +=
                line.intensity;
        }
        if v.is_empty() {
            continue;
        }
        l2_normalize(&mut v);
        out.insert(element, v);
    }
    out
}

/// Estimate the elemental composition of a LIBS spectrum by cosine
/// similarity between its peak vector and each element's line vector.
/// Returns the composition and the raw per-element similarities.
pub fn estimate_composition_cosine(
    spectrum: &Spectrum,
    lines: &LineTable,
) -> Result<(ElementComposition, Vec<(String, f64)>)> {
    let peaks = detect_peaks(spectrum, MIN_PEAK_HEIGHT, MIN_PEAK_PROMINENCE);
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    let grid = spectrum.grid();
    let mut query = WeightedVector::new();
    for p in &peaks.peaks {
        *query.entry(bin_of(p.wavelength_nm, grid.start, WEIGHT_BIN_NM)).or_insert(0.0) +=
            p.height;
    }
    l2_normalize(&mut query);

    let vectors = element_weight_vectors(lines, grid, WEIGHT_BIN_NM);
    let similarities: Vec<(String, f64)> = vectors
        .iter()
        .map(|(element, v)| (element.clone(), sparse_cosine(&query, v)))
        .collect();

    let mut floored: Vec<(String, f64)> = similarities
        .iter()
        .filter(|(_, s)| *s >= SIMILARITY_FLOOR)
        .cloned()
        .collect();
    if floored.is_empty() {
        // Nothing clears the floor; fall back to the raw similarities so the
        // estimate stays total.
        floored = similarities.clone();
    }
    let composition = ElementComposition::from_weights(floored).map_err(|_| Error::NoPeaks)?;
    Ok((composition, similarities))
}

/// Score each mineral by the cosine similarity between the estimated
/// composition and the mineral's formula composition, L1-normalized into a
/// prediction.
pub fn match_mineral_by_composition(
    est: &ElementComposition,
    minerals: &MineralTable,
) -> Result<Prediction> {
    if minerals.is_empty() {
        return Err(Error::EmptyClass);
    }
    let scores: Vec<f64> = minerals.iter().map(|(_, comp)| est.cosine(comp)).collect();
    let classes = ClassList::new(minerals.iter().map(|(name, _)| name.clone()).collect());
    if scores.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroVector);
    }
    Prediction::new(classes, scores)
}
