//! File plumbing shared by the subcommands: atomic writes, format guessing,
//! prediction JSON.

use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use spectramin::datasets::{parse_csv_xy, parse_rruff_text};
use spectramin::error::{Error, Result};
use spectramin::learners::{ClassList, Prediction, TrainConfig};
use spectramin::spectra::{RawSpectrum, SpectrumKind};

/// Write via a sibling temp file and atomic rename, so a failed run never
/// leaves a partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn from_value_or_default<T: DeserializeOwned + Default>(
    value: Option<serde_json::Value>,
) -> Result<T> {
    match value {
        Some(v) => serde_json::from_value(v).map_err(|e| Error::Config(format!("config: {e}"))),
        None => Ok(T::default()),
    }
}

/// CNN-family config files: `{"arch": "simple4", "train": { ... }}`.
pub fn classifier_train_config(
    value: Option<serde_json::Value>,
) -> Result<(String, TrainConfig)> {
    #[derive(Deserialize)]
    #[serde(default)]
    struct CnnFileConfig {
        arch: String,
        train: TrainConfig,
    }
    impl Default for CnnFileConfig {
        fn default() -> Self {
            Self { arch: "simple4".into(), train: TrainConfig::default() }
        }
    }
    let cfg: CnnFileConfig = from_value_or_default(value)?;
    Ok((cfg.arch, cfg.train))
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Rruff,
    Csv,
}

/// Parse a spectrum file, guessing the format from the extension when no
/// flag is given (`.txt` is RRUFF-style, `.csv` two-column CSV).
pub fn parse_spectrum_file(
    path: &Path,
    format: Option<FormatArg>,
    kind: SpectrumKind,
) -> Result<RawSpectrum> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let format = match format {
        Some(f) => f,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => FormatArg::Rruff,
            Some("csv") => FormatArg::Csv,
            other => {
                return Err(Error::Config(format!(
                    "cannot guess format from extension {other:?}; pass --format"
                )))
            }
        },
    };
    match format {
        FormatArg::Rruff => parse_rruff_text(&bytes, kind),
        FormatArg::Csv => parse_csv_xy(&bytes, kind),
    }
    .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// The prediction interchange schema.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionFile {
    pub classes: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top: Vec<TopEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TopEntry {
    pub species: String,
    pub score: f64,
}

impl PredictionFile {
    pub fn to_prediction(&self) -> Result<Prediction> {
        Prediction::new(ClassList::new(self.classes.clone()), self.scores.clone())
    }
}

pub fn prediction_to_json(p: &Prediction, model: &str, seed: u64, top: usize) -> PredictionFile {
    PredictionFile {
        classes: p.classes().names().to_vec(),
        scores: p.scores().to_vec(),
        model: model.to_string(),
        seed,
        top: p
            .top(top)
            .into_iter()
            .map(|(id, score)| TopEntry { species: p.classes().name(id).to_string(), score })
            .collect(),
    }
}

pub fn prediction_from_file(path: &Path) -> Result<Prediction> {
    let file: PredictionFile = read_json(path)?;
    file.to_prediction()
}
