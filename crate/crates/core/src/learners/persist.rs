//! Model files: a JSON descriptor plus raw little-endian `f32` arrays.
//!
//! Layout:
//!
//! ```text
//! magic "SMDL" | version u32 LE | descriptor length u64 LE | descriptor JSON | f32 arrays
//! ```
//!
//! The descriptor carries the model kind, its non-array state (class lists,
//! architectures, tree structures) and the name/length of every float array,
//! in payload order. Frozen models hold only f32-representable weights, so a
//! save/load round trip reproduces predictions bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{GridSpec, SpectrumKind};

use super::knn::KnnModel;
use super::nn::{CnnArchitecture, CnnModel, TwoStreamArchitecture, TwoStreamModel};
use super::svm::{FusionSvmModel, SvmModel};
use super::trees::{ForestModel, Tree};
use super::{ClassList, EnsembleModel, Model};

const MAGIC: &[u8; 4] = b"SMDL";
const VERSION: u32 = 1;

/// The preprocessing a model's inputs went through: raw spectra must be
/// resampled onto this grid (and unit-normalized) before prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumContract {
    pub kind: SpectrumKind,
    pub grid: GridSpec,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    version: u32,
    kind: String,
    /// Input contracts: empty if unknown, one per input stream otherwise.
    #[serde(default)]
    contracts: Vec<SpectrumContract>,
    meta: serde_json::Value,
    arrays: Vec<ArrayInfo>,
}

#[derive(Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct KnnMeta {
    k: usize,
    n_features: usize,
    classes: ClassList,
    labels: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct TreesMeta {
    classes: ClassList,
    n_features: usize,
    trees: Vec<Tree>,
}

#[derive(Serialize, Deserialize)]
struct SvmMeta {
    classes: ClassList,
    n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct CnnMeta {
    arch: CnnArchitecture,
    classes: ClassList,
    ema_decay: f64,
    has_ema: bool,
}

#[derive(Serialize, Deserialize)]
struct TwoStreamMeta {
    arch: TwoStreamArchitecture,
    classes: ClassList,
    ema_decay: f64,
    has_ema: bool,
}

#[derive(Serialize, Deserialize)]
struct EnsembleMeta {
    classes: ClassList,
    members: Vec<CnnMeta>,
}

struct Payload {
    kind: &'static str,
    meta: serde_json::Value,
    arrays: Vec<(String, Vec<f64>)>,
}

fn cnn_meta(m: &CnnModel) -> CnnMeta {
    CnnMeta {
        arch: m.arch.clone(),
        classes: m.classes.clone(),
        ema_decay: m.ema_decay,
        has_ema: m.ema_tensors().is_some(),
    }
}

fn cnn_arrays(prefix: &str, m: &CnnModel, arrays: &mut Vec<(String, Vec<f64>)>) {
    for (i, tensor) in m.weight_tensors().iter().enumerate() {
        arrays.push((format!("{prefix}w{i}"), tensor.clone()));
    }
    if let Some(ema) = m.ema_tensors() {
        for (i, tensor) in ema.iter().enumerate() {
            arrays.push((format!("{prefix}e{i}"), tensor.clone()));
        }
    }
}

fn build_payload(model: &Model) -> Result<Payload> {
    Ok(match model {
        Model::Knn(m) => Payload {
            kind: "knn",
            meta: serde_json::to_value(KnnMeta {
                k: m.k,
                n_features: m.n_features,
                classes: m.classes.clone(),
                labels: m.labels.clone(),
            })?,
            arrays: vec![("data".into(), m.data.clone())],
        },
        Model::Trees(m) => Payload {
            kind: "trees",
            meta: serde_json::to_value(TreesMeta {
                classes: m.classes.clone(),
                n_features: m.n_features,
                trees: m.trees.clone(),
            })?,
            arrays: Vec::new(),
        },
        Model::Svm(m) => Payload {
            kind: "svm",
            meta: serde_json::to_value(SvmMeta {
                classes: m.classes.clone(),
                n_features: m.n_features,
            })?,
            arrays: vec![("weights".into(), m.weights.clone())],
        },
        Model::FusionSvm(m) => Payload {
            kind: "fusion-svm",
            meta: serde_json::to_value(SvmMeta {
                classes: m.svm.classes.clone(),
                n_features: m.svm.n_features,
            })?,
            arrays: vec![("weights".into(), m.svm.weights.clone())],
        },
        Model::Cnn(m) => {
            let mut arrays = Vec::new();
            cnn_arrays("", m, &mut arrays);
            Payload { kind: "cnn", meta: serde_json::to_value(cnn_meta(m))?, arrays }
        }
        Model::TwoStream(m) => {
            let mut arrays = Vec::new();
            for (i, tensor) in m.weight_tensors().iter().enumerate() {
                arrays.push((format!("w{i}"), tensor.clone()));
            }
            if let Some(ema) = m.ema_tensors() {
                for (i, tensor) in ema.iter().enumerate() {
                    arrays.push((format!("e{i}"), tensor.clone()));
                }
            }
            Payload {
                kind: "two-stream",
                meta: serde_json::to_value(TwoStreamMeta {
                    arch: m.arch.clone(),
                    classes: m.classes.clone(),
                    ema_decay: m.ema_decay,
                    has_ema: m.ema_tensors().is_some(),
                })?,
                arrays,
            }
        }
        Model::Ensemble(m) => {
            let mut arrays = Vec::new();
            for (i, member) in m.members.iter().enumerate() {
                cnn_arrays(&format!("m{i}."), member, &mut arrays);
            }
            Payload {
                kind: "ensemble6",
                meta: serde_json::to_value(EnsembleMeta {
                    classes: m.classes.clone(),
                    members: m.members.iter().map(cnn_meta).collect(),
                })?,
                arrays,
            }
        }
    })
}

/// Serialize a model to `path`, via a sibling temp file and atomic rename.
pub fn save_model<P: AsRef<Path>>(model: &Model, path: P) -> Result<()> {
    save_model_full(model, &[], path)
}

/// Like [`save_model`] but records the input preprocessing contracts
/// (one per input stream).
pub fn save_model_full<P: AsRef<Path>>(
    model: &Model,
    contracts: &[SpectrumContract],
    path: P,
) -> Result<()> {
    let path = path.as_ref();
    let payload = build_payload(model)?;
    let descriptor = Descriptor {
        version: VERSION,
        kind: payload.kind.to_string(),
        contracts: contracts.to_vec(),
        meta: payload.meta,
        arrays: payload
            .arrays
            .iter()
            .map(|(name, data)| ArrayInfo { name: name.clone(), len: data.len() })
            .collect(),
    };
    let descriptor_json = serde_json::to_vec(&descriptor)?;
    let mut bytes =
        Vec::with_capacity(16 + descriptor_json.len() + payload.arrays.iter().map(|(_, a)| a.len() * 4).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(descriptor_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&descriptor_json);
    for (_, data) in &payload.arrays {
        for &v in data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct ArrayReader {
    names: Vec<String>,
    arrays: Vec<Vec<f64>>,
    cursor: usize,
}

impl ArrayReader {
    fn take(&mut self, expect_name: &str) -> Result<Vec<f64>> {
        if self.cursor >= self.arrays.len() {
            return Err(Error::ModelFile(format!("missing array `{expect_name}`")));
        }
        if self.names[self.cursor] != expect_name {
            return Err(Error::ModelFile(format!(
                "expected array `{expect_name}`, found `{}`",
                self.names[self.cursor]
            )));
        }
        let out = std::mem::take(&mut self.arrays[self.cursor]);
        self.cursor += 1;
        Ok(out)
    }

    fn take_prefixed(&mut self, prefix: &str, letter: char, count: usize) -> Result<Vec<Vec<f64>>> {
        (0..count).map(|i| self.take(&format!("{prefix}{letter}{i}"))).collect()
    }
}

/// Read a model file written by [`save_model`].
pub fn load_model<P: AsRef<Path>>(path: P) -> Result<Model> {
    load_model_full(path).map(|(model, _)| model)
}

/// Read a model plus its recorded input contracts.
pub fn load_model_full<P: AsRef<Path>>(path: P) -> Result<(Model, Vec<SpectrumContract>)> {
    let bytes = std::fs::read(path.as_ref())?;
    if bytes.len() < 16 {
        return Err(Error::ModelFile("file truncated before header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::ModelFile("bad magic: not a model file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported model version {version} (expected {VERSION})"
        )));
    }
    let desc_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let desc_end = 16usize
        .checked_add(desc_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::ModelFile("file truncated inside descriptor".into()))?;
    let descriptor: Descriptor = serde_json::from_slice(&bytes[16..desc_end])
        .map_err(|e| Error::ModelFile(format!("bad descriptor: {e}")))?;
    if descriptor.version != VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported descriptor version {}",
            descriptor.version
        )));
    }

    let mut offset = desc_end;
    let mut names = Vec::with_capacity(descriptor.arrays.len());
    let mut arrays = Vec::with_capacity(descriptor.arrays.len());
    for info in &descriptor.arrays {
        let nbytes = info.len * 4;
        if offset + nbytes > bytes.len() {
            return Err(Error::ModelFile(format!("file truncated inside array `{}`", info.name)));
        }
        let data: Vec<f64> = bytes[offset..offset + nbytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        offset += nbytes;
        names.push(info.name.clone());
        arrays.push(data);
    }
    if offset != bytes.len() {
        return Err(Error::ModelFile("trailing bytes after last array".into()));
    }
    let mut reader = ArrayReader { names, arrays, cursor: 0 };

    let model = match descriptor.kind.as_str() {
        "knn" => {
            let meta: KnnMeta = serde_json::from_value(descriptor.meta)?;
            let data = reader.take("data")?;
            if data.len() != meta.labels.len() * meta.n_features {
                return Err(Error::ModelFile("knn data size mismatch".into()));
            }
            let norms = KnnModel::compute_norms(&data, meta.n_features);
            Model::Knn(KnnModel {
                k: meta.k,
                n_features: meta.n_features,
                classes: meta.classes,
                data,
                labels: meta.labels,
                norms,
            })
        }
        "trees" => {
            let meta: TreesMeta = serde_json::from_value(descriptor.meta)?;
            Model::Trees(ForestModel {
                classes: meta.classes,
                n_features: meta.n_features,
                trees: meta.trees,
            })
        }
        "svm" | "fusion-svm" => {
            let meta: SvmMeta = serde_json::from_value(descriptor.meta)?;
            let weights = reader.take("weights")?;
            if weights.len() != meta.classes.len() * (meta.n_features + 1) {
                return Err(Error::ModelFile("svm weight size mismatch".into()));
            }
            let svm = SvmModel { classes: meta.classes, n_features: meta.n_features, weights };
            if descriptor.kind == "svm" {
                Model::Svm(svm)
            } else {
                Model::FusionSvm(FusionSvmModel { svm })
            }
        }
        "cnn" => {
            let meta: CnnMeta = serde_json::from_value(descriptor.meta)?;
            let model = load_cnn("", &meta, &mut reader)?;
            Model::Cnn(model)
        }
        "two-stream" => {
            let meta: TwoStreamMeta = serde_json::from_value(descriptor.meta)?;
            let n = count_tensors(&descriptor.arrays, "w");
            let params = reader.take_prefixed("", 'w', n)?;
            let ema = if meta.has_ema { Some(reader.take_prefixed("", 'e', n)?) } else { None };
            Model::TwoStream(TwoStreamModel::assemble(
                meta.arch,
                meta.classes,
                meta.ema_decay,
                Vec::new(),
                params,
                ema,
            )?)
        }
        "ensemble6" => {
            let meta: EnsembleMeta = serde_json::from_value(descriptor.meta)?;
            let mut members = Vec::with_capacity(meta.members.len());
            for (i, member_meta) in meta.members.iter().enumerate() {
                members.push(load_cnn(&format!("m{i}."), member_meta, &mut reader)?);
            }
            Model::Ensemble(EnsembleModel { classes: meta.classes, members })
        }
        other => return Err(Error::ModelFile(format!("unknown model kind `{other}`"))),
    };
    Ok((model, descriptor.contracts))
}

fn count_tensors(arrays: &[ArrayInfo], prefix: &str) -> usize {
    arrays
        .iter()
        .filter(|a| {
            a.name.strip_prefix(prefix).is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit()))
        })
        .count()
}

fn load_cnn(prefix: &str, meta: &CnnMeta, reader: &mut ArrayReader) -> Result<CnnModel> {
    // Count this member's weight tensors by probing names.
    let mut n = 0;
    while reader.cursor + n < reader.names.len()
        && reader.names[reader.cursor + n] == format!("{prefix}w{n}")
    {
        n += 1;
    }
    if n == 0 {
        return Err(Error::ModelFile("cnn model lists no weight tensors".into()));
    }
    let params = reader.take_prefixed(prefix, 'w', n)?;
    let ema = if meta.has_ema { Some(reader.take_prefixed(prefix, 'e', n)?) } else { None };
    CnnModel::assemble(
        meta.arch.clone(),
        meta.classes.clone(),
        meta.ema_decay,
        Vec::new(),
        params,
        ema,
    )
}
