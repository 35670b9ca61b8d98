//! Mineral identification from multispectral data.
//!
//! This crate classifies mineral species from three kinds of spectra —
//! vibrational Raman scattering, visible/near-infrared reflectance (VNIR) and
//! laser-induced breakdown spectroscopy (LIBS) — and from fused pairs of them.
//!
//! The pieces:
//!
//! * [`spectra`] — spectral value types and the shared preprocessing pipeline
//!   (linear resampling onto a fixed grid, \[0, 1\] normalization, cosine-based
//!   outlier removal).
//! * [`datasets`] — archive parsers, labeled dataset assembly, split protocols
//!   and cross-modality pairing.
//! * [`augment`] — training-set augmentation techniques, each doubling the
//!   per-class sample count.
//! * [`learners`] — from-scratch classifiers: weighted k-NN, extremely
//!   randomized trees, linear SVM, 1-D CNNs (with EMA weight averaging, a
//!   six-architecture ensemble and a two-stream variant) plus model
//!   persistence.
//! * [`libs`] — LIBS element-composition estimation: emission-line tables,
//!   synthetic spectra, peak detection, a cosine estimator, a CNN regressor,
//!   formula parsing and composition-based mineral matching.
//! * [`fusion`] — late-fusion rules over prediction pairs (average, product,
//!   squared product, learned SVM combiner).
//! * [`eval`] — seeded cross-validation experiments, accuracy statistics and
//!   analysis exports.
//!
//! Everything is deterministic given explicit seeds; no global RNG state is
//! consulted anywhere.

pub mod augment;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod learners;
pub mod libs;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
