//! Spectral value types and the preprocessing pipeline shared by the Raman
//! and VNIR paths.
//!
//! A [`RawSpectrum`] is whatever came out of an archive file: an irregular,
//! strictly increasing position axis with matching intensities. Preprocessing
//! resamples it onto a fixed [`GridSpec`] by linear interpolation and rescales
//! intensities to the unit interval, producing a [`Spectrum`] that every
//! classifier consumes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which spectroscopic method produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Raman,
    Vnir,
    Libs,
}

impl std::fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectrumKind::Raman => write!(f, "raman"),
            SpectrumKind::Vnir => write!(f, "vnir"),
            SpectrumKind::Libs => write!(f, "libs"),
        }
    }
}

impl std::str::FromStr for SpectrumKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raman" => Ok(SpectrumKind::Raman),
            "vnir" => Ok(SpectrumKind::Vnir),
            "libs" => Ok(SpectrumKind::Libs),
            other => Err(Error::Parse(format!("unknown spectrum kind `{other}`"))),
        }
    }
}

/// Free-form provenance metadata (source id, mineral name, quality flag).
pub type Meta = BTreeMap<String, String>;

/// A spectrum as measured: positions in cm^-1 (Raman) or nm (VNIR/LIBS).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSpectrum {
    positions: Vec<f64>,
    intensities: Vec<f64>,
    kind: SpectrumKind,
    meta: Meta,
}

impl RawSpectrum {
    /// Validates: at least two points, strictly increasing positions, finite
    /// intensities.
    pub fn new(
        positions: Vec<f64>,
        intensities: Vec<f64>,
        kind: SpectrumKind,
        meta: Meta,
    ) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidSpectrum(format!(
                "need at least 2 points, got {}",
                positions.len()
            )));
        }
        if positions.len() != intensities.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} positions but {} intensities",
                positions.len(),
                intensities.len()
            )));
        }
        if positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSpectrum(
                "positions must be strictly increasing".into(),
            ));
        }
        if positions.iter().chain(intensities.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpectrum("non-finite value".into()));
        }
        Ok(Self { positions, intensities, kind, meta })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Meta {
        &mut self.meta
    }
}

/// A uniform sampling grid: `n_points` positions from `start` to `end`
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn new(start: f64, end: f64, n_points: usize) -> Result<Self> {
        if !(start < end) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidGrid(format!("bad range [{start}, {end}]")));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("need >= 2 points, got {n_points}")));
        }
        Ok(Self { start, end, n_points })
    }

    /// The Raman grid: 85 to 1800 cm^-1, 1715 samples.
    pub fn raman() -> Self {
        Self { start: 85.0, end: 1800.0, n_points: 1715 }
    }

    /// The VNIR grid: 350 to 4000 nm; the sample count matches the Raman grid
    /// so two-stream fusion sees equal-length inputs.
    pub fn vnir() -> Self {
        Self { start: 350.0, end: 4000.0, n_points: 1715 }
    }

    /// Default LIBS synthesis grid: 200 to 900 nm at 0.1 nm.
    pub fn libs() -> Self {
        Self { start: 200.0, end: 900.0, n_points: 7001 }
    }

    pub fn grid_for(kind: SpectrumKind) -> Self {
        match kind {
            SpectrumKind::Raman => Self::raman(),
            SpectrumKind::Vnir => Self::vnir(),
            SpectrumKind::Libs => Self::libs(),
        }
    }

    pub fn step(&self) -> f64 {
        (self.end - self.start) / (self.n_points - 1) as f64
    }

    pub fn position(&self, i: usize) -> f64 {
        // Endpoint-exact: i = 0 gives start, i = n-1 gives end.
        let t = i as f64 / (self.n_points - 1) as f64;
        self.start * (1.0 - t) + self.end * t
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.position(i))
    }

    /// Index of the grid point nearest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.start) / self.step()).round();
        (raw.max(0.0) as usize).min(self.n_points - 1)
    }
}

/// A preprocessed spectrum: values in `[0, 1]` on a fixed grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    grid: GridSpec,
    values: Vec<f64>,
    kind: SpectrumKind,
    meta: Meta,
}

impl Spectrum {
    pub fn new(grid: GridSpec, values: Vec<f64>, kind: SpectrumKind, meta: Meta) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidSpectrum(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.n_points
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidSpectrum("values must lie in [0, 1]".into()));
        }
        Ok(Self { grid, values, kind, meta })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Meta {
        &mut self.meta
    }
}

/// Resample a raw spectrum onto `grid` by linear interpolation.
///
/// Grid points outside the measured range are set to 0 rather than
/// extrapolated. Points that coincide with a raw position reproduce that
/// intensity exactly.
pub fn resample_linear(raw: &RawSpectrum, grid: &GridSpec) -> Vec<f64> {
    let xs = raw.positions();
    let ys = raw.intensities();
    let mut out = Vec::with_capacity(grid.n_points);
    for x in grid.positions() {
        if x < xs[0] || x > xs[xs.len() - 1] {
            out.push(0.0);
            continue;
        }
        // First raw position strictly greater than x.
        let hi = xs.partition_point(|&p| p <= x);
        if hi == 0 {
            out.push(ys[0]);
            continue;
        }
        let lo = hi - 1;
        if xs[lo] == x || hi == xs.len() {
            out.push(ys[lo]);
            continue;
        }
        let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        out.push(ys[lo] * (1.0 - t) + ys[hi] * t);
    }
    out
}

/// Rescale values to `[0, 1]` via `(v - min) / (max - min)`.
///
/// A constant vector maps to all zeros: a flat trace carries no shape
/// information that a classifier could use.
pub fn normalize_unit(values: &[f64]) -> Vec<f64> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !(max > min) {
        return vec![0.0; values.len()];
    }
    let span = max - min;
    values.iter().map(|&v| (v - min) / span).collect()
}

/// Full preprocessing: resample onto `grid`, normalize, wrap as [`Spectrum`].
pub fn preprocess(raw: &RawSpectrum, grid: &GridSpec) -> Result<Spectrum> {
    let values = normalize_unit(&resample_linear(raw, grid));
    Spectrum::new(*grid, values, raw.kind(), raw.meta().clone())
}

/// Cosine similarity `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    assert_eq!(a.len(), b.len(), "cosine_similarity: length mismatch");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - cosine_similarity`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Elementwise arithmetic mean of a class of spectra.
pub fn class_mean(spectra: &[Spectrum]) -> Result<Vec<f64>> {
    let first = spectra.first().ok_or(Error::EmptyClass)?;
    let n = first.values().len();
    let mut mean = vec![0.0; n];
    for s in spectra {
        assert_eq!(s.values().len(), n, "class_mean: grid mismatch");
        for (m, v) in mean.iter_mut().zip(s.values()) {
            *m += v;
        }
    }
    let inv = 1.0 / spectra.len() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Drop spectra whose cosine distance from the class mean exceeds `threshold`.
///
/// The mean is computed once over the full input, not iteratively. If every
/// spectrum would be dropped, the single one closest to the mean is kept so a
/// class never ends up empty. Zero-norm spectra (flat traces) are treated as
/// maximally distant.
pub fn remove_outliers(class_spectra: &[Spectrum], threshold: f64) -> Result<Vec<Spectrum>> {
    if class_spectra.is_empty() {
        return Err(Error::EmptyClass);
    }
    let mean = class_mean(class_spectra)?;
    let dist = |s: &Spectrum| cosine_distance(s.values(), &mean).unwrap_or(2.0);
    let kept: Vec<Spectrum> = class_spectra
        .iter()
        .filter(|s| dist(s) <= threshold)
        .cloned()
        .collect();
    if !kept.is_empty() {
        return Ok(kept);
    }
    let closest = class_spectra
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| dist(a).total_cmp(&dist(b)).then(i.cmp(j)))
        .map(|(_, s)| s.clone())
        .expect("nonempty");
    Ok(vec![closest])
}

/// Default outlier threshold on cosine distance.
pub const OUTLIER_THRESHOLD: f64 = 0.5;
