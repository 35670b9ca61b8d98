//! Dataset assembly from a JSON manifest.
//!
//! A manifest names the spectrum files of one modality:
//!
//! ```json
//! {
//!   "kind": "raman",
//!   "entries": [
//!     {"file": "quartz_r1.txt", "format": "rruff", "species": "Quartz"},
//!     {"file": "calcite.csv",   "format": "csv",   "species": "Calcite"}
//!   ]
//! }
//! ```
//!
//! File paths are resolved relative to the manifest's directory. Every
//! spectrum is resampled and normalized onto the kind's default grid; species
//! ids are assigned by first appearance, so assembly is deterministic given
//! manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{preprocess, GridSpec, SpectrumKind};

use super::{parse_csv_xy, parse_rruff_text, LabeledDataset};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub format: String,
    pub species: String,
}

/// Build a [`LabeledDataset`] from a manifest file.
pub fn build_dataset<P: AsRef<Path>>(manifest_path: P) -> Result<LabeledDataset> {
    let path = manifest_path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Manifest(format!("bad JSON: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    build_dataset_from(&manifest, base)
}

/// Build from an already-parsed manifest, resolving files against `base`.
pub fn build_dataset_from(manifest: &Manifest, base: &Path) -> Result<LabeledDataset> {
    let kind: SpectrumKind = manifest
        .kind
        .parse()
        .map_err(|_| Error::Manifest(format!("unknown kind `{}`", manifest.kind)))?;
    if manifest.entries.is_empty() {
        return Err(Error::Manifest("manifest lists no entries".into()));
    }
    let grid = GridSpec::grid_for(kind);
    let mut ds = LabeledDataset::new(kind, grid);
    for entry in &manifest.entries {
        let file = base.join(&entry.file);
        let bytes = std::fs::read(&file)
            .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", file.display())))?;
        let mut raw = match entry.format.to_lowercase().as_str() {
            "rruff" => parse_rruff_text(&bytes, kind),
            "csv" => parse_csv_xy(&bytes, kind),
            other => return Err(Error::Manifest(format!("unknown format `{other}`"))),
        }
        .map_err(|e| Error::Manifest(format!("{}: {e}", file.display())))?;
        raw.meta_mut().insert("source".into(), entry.file.clone());
        raw.meta_mut().insert("name".into(), entry.species.clone());
        let spectrum = preprocess(&raw, &grid)?;
        ds.push(spectrum, &entry.species)?;
    }
    Ok(ds)
}
