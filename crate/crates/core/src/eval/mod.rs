//! Seeded cross-validation experiments.
//!
//! An [`ExperimentSpec`] describes one experiment: dataset references, split
//! protocol, classifier(s), augmentation, fusion rule and run count. Run `r`
//! uses seed `base_seed + r`; runs are independent, so they may execute
//! concurrently, and results aggregate by run index regardless of thread
//! count.

mod exports;
mod metrics;
mod pca;

pub use exports::{
    class_mean_std_export, export_violin_data, pca_export, render_report_md, summarize,
    verify_accuracies, MethodSummary,
};
pub use metrics::{accuracy_ci, composition_mae};
pub use pca::pca_project;

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentParams, Technique};
use crate::datasets::{
    pair_by_species, split_leave_one_out, split_three_per_species, LabeledDataset, PairedDataset,
    SplitProtocol, DEFAULT_PAIR_CAP,
};
use crate::error::{Error, Result};
use crate::fusion::{apply_fused_svm, fuse_average, fuse_multiply, fuse_square_multiply, fuse_svm};
use crate::learners::{
    train_cnn, train_ensemble6, train_extra_trees, train_knn_weighted, train_linear_svm,
    train_two_stream_cnn, Model, Prediction, SvmConfig, TrainConfig, TreesConfig,
};
use crate::libs::{
    estimate_composition_cosine, match_mineral_by_composition, predict_libs_cnn, synth_libs_raw,
    train_libs_cnn, LibsCnnConfig, LineTable, MineralTable, MissingLinePolicy,
};
use crate::rng::{derive_seed, normal, rng_from_seed};
use crate::spectra::{normalize_unit, GridSpec, Meta, Spectrum, SpectrumKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// One dataset, one classifier.
    Classification,
    /// Two paired datasets with late fusion or a two-stream network.
    Fusion,
    /// Composition estimation on synthetic mineral spectra (violin data).
    LibsComposition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    Trees {
        #[serde(default)]
        config: TreesConfig,
    },
    Svm {
        #[serde(default)]
        config: SvmConfig,
    },
    Cnn {
        #[serde(default)]
        arch: ArchPreset,
        #[serde(default)]
        train: TrainConfig,
    },
    Ensemble6 {
        #[serde(default)]
        train: TrainConfig,
    },
    /// Composition estimation + mineral matching; needs `lines` and
    /// `minerals`.
    LibsCosine,
    LibsCnn {
        #[serde(default)]
        config: LibsCnnConfig,
    },
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::Trees { .. } => "trees",
            ClassifierSpec::Svm { .. } => "svm",
            ClassifierSpec::Cnn { .. } => "cnn",
            ClassifierSpec::Ensemble6 { .. } => "ensemble6",
            ClassifierSpec::LibsCosine => "libs-cosine",
            ClassifierSpec::LibsCnn { .. } => "libs-cnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArchPreset {
    #[default]
    Simple4,
    Liu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionRule {
    Ave,
    Mul,
    /// Squares the b-side (composition) prediction before multiplying.
    Sq,
    Svm,
    TwoStream,
}

impl FusionRule {
    fn method_name(&self) -> &'static str {
        match self {
            FusionRule::Ave => "fused:ave",
            FusionRule::Mul => "fused:mul",
            FusionRule::Sq => "fused:sq",
            FusionRule::Svm => "fused:svm",
            FusionRule::TwoStream => "two-stream",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub technique: Technique,
    pub params: AugmentParams,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { technique: Technique::None, params: AugmentParams::default() }
    }
}

/// Synthesis settings for LIBS composition experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LibsSpec {
    pub grid_start: f64,
    pub grid_end: f64,
    pub grid_points: usize,
    pub sigma_nm: f64,
    /// Proportional noise on the queried synthetic spectra.
    pub noise_sigma: f64,
    /// Train and evaluate the CNN estimator alongside the cosine one.
    pub cnn: Option<LibsCnnConfig>,
}

impl Default for LibsSpec {
    fn default() -> Self {
        Self {
            grid_start: 200.0,
            grid_end: 900.0,
            grid_points: 7001,
            sigma_nm: 0.2,
            noise_sigma: 0.03,
            cnn: None,
        }
    }
}

impl LibsSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid_start, self.grid_end, self.grid_points)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSpec {
    /// Species whose spectra feed the 2-component PCA export.
    pub pca_species: Vec<String>,
    /// Species for the per-point mean/std export.
    pub mean_std_species: Vec<String>,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self { pca_species: Vec::new(), mean_std_species: Vec::new() }
    }
}

fn default_n_runs() -> usize {
    30
}

fn default_pair_cap() -> usize {
    DEFAULT_PAIR_CAP
}

fn default_protocol() -> SplitProtocol {
    SplitProtocol::ThreePerSpecies
}

/// The experiment config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub dataset_b: Option<String>,
    #[serde(default)]
    pub lines: Option<String>,
    #[serde(default)]
    pub minerals: Option<String>,
    #[serde(default = "default_protocol")]
    pub protocol: SplitProtocol,
    #[serde(default)]
    pub classifier: Option<ClassifierSpec>,
    #[serde(default)]
    pub classifier_b: Option<ClassifierSpec>,
    #[serde(default)]
    pub fusion: Option<FusionRule>,
    #[serde(default)]
    pub augment: AugmentSpec,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_pair_cap")]
    pub pair_cap: usize,
    #[serde(default)]
    pub libs: LibsSpec,
    #[serde(default)]
    pub analysis: Option<AnalysisSpec>,
}

impl ExperimentSpec {
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_slice(&std::fs::read(path)?)?;
        if spec.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        Ok(spec)
    }
}

/// A spec with its referenced inputs loaded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub dataset: Option<LabeledDataset>,
    pub dataset_b: Option<LabeledDataset>,
    pub lines: Option<LineTable>,
    pub minerals: Option<MineralTable>,
}

impl Experiment {
    /// Load everything the spec references, resolving paths against `base`.
    pub fn load(spec: ExperimentSpec, base: &Path) -> Result<Self> {
        let resolve = |p: &String| base.join(p);
        let dataset = spec.dataset.as_ref().map(|p| LabeledDataset::load(resolve(p))).transpose()?;
        let dataset_b =
            spec.dataset_b.as_ref().map(|p| LabeledDataset::load(resolve(p))).transpose()?;
        let lines = spec.lines.as_ref().map(|p| LineTable::load(resolve(p))).transpose()?;
        let minerals =
            spec.minerals.as_ref().map(|p| crate::libs::load_mineral_table(resolve(p))).transpose()?;
        Ok(Self { spec, dataset, dataset_b, lines, minerals })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub true_label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub method: String,
    pub run: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub per_sample: Vec<SampleOutcome>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub composition_sims: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    /// Method names in report order.
    pub methods: Vec<String>,
    pub runs: Vec<RunResult>,
}

/// Execute all runs. `jobs` > 1 runs them on a thread pool; aggregation is
/// an ordered reduction by run index either way.
pub fn run_experiment(exp: &Experiment, jobs: usize) -> Result<ExperimentResult> {
    let spec = &exp.spec;
    if spec.n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    let per_run: Vec<Vec<RunResult>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..spec.n_runs)
                .into_par_iter()
                .map(|r| execute_run(exp, r).map_err(|e| run_error(r, e)))
                .collect::<Result<_>>()
        })?
    } else {
        (0..spec.n_runs)
            .map(|r| execute_run(exp, r).map_err(|e| run_error(r, e)))
            .collect::<Result<_>>()?
    };

    let mut methods = Vec::new();
    for results in &per_run {
        for r in results {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
    }
    let runs: Vec<RunResult> = per_run.into_iter().flatten().collect();
    verify_accuracies(&runs)?;
    Ok(ExperimentResult { name: spec.name.clone(), methods, runs })
}

fn run_error(run: usize, e: Error) -> Error {
    Error::Config(format!("run {run}: {e}"))
}

fn execute_run(exp: &Experiment, run: usize) -> Result<Vec<RunResult>> {
    let seed = exp.spec.base_seed.wrapping_add(run as u64);
    match exp.spec.kind {
        ExperimentKind::Classification => classification_run(exp, run, seed),
        ExperimentKind::Fusion => fusion_run(exp, run, seed),
        ExperimentKind::LibsComposition => libs_composition_run(exp, run, seed),
    }
}

// ---------------------------------------------------------------------------
// Classifier plumbing
// ---------------------------------------------------------------------------

/// A trained per-run predictor: either a frozen model or a composition
/// matcher bound to a mineral table.
enum Predictor {
    Model(Model),
    LibsCosine { lines: LineTable, minerals: MineralTable },
    LibsCnn { model: crate::learners::CnnModel, minerals: MineralTable },
}

impl Predictor {
    fn predict(&self, spectrum: &Spectrum) -> Result<Prediction> {
        match self {
            Predictor::Model(m) => m.predict(spectrum.values()),
            Predictor::LibsCosine { lines, minerals } => {
                let (est, _) = estimate_composition_cosine(spectrum, lines)?;
                match_mineral_by_composition(&est, minerals)
            }
            Predictor::LibsCnn { model, minerals } => {
                let est = predict_libs_cnn(model, spectrum)?;
                match_mineral_by_composition(&est, minerals)
            }
        }
    }
}

/// Restrict the mineral table to a dataset's species, in species-id order,
/// so composition-based predictions share the dataset's class list.
fn minerals_for_species(minerals: &MineralTable, species: &[String]) -> Result<MineralTable> {
    species
        .iter()
        .map(|name| {
            minerals
                .iter()
                .find(|(m, _)| m.eq_ignore_ascii_case(name.trim()))
                .map(|(_, comp)| (name.clone(), comp.clone()))
                .ok_or_else(|| Error::Config(format!("no formula for species `{name}`")))
        })
        .collect()
}

fn train_predictor(
    spec: &ClassifierSpec,
    train: &LabeledDataset,
    exp: &Experiment,
    seed: u64,
) -> Result<Predictor> {
    Ok(match spec {
        ClassifierSpec::Knn { k } => Predictor::Model(Model::Knn(train_knn_weighted(train, *k)?)),
        ClassifierSpec::Trees { config } => {
            let cfg = TreesConfig { seed, ..config.clone() };
            Predictor::Model(Model::Trees(train_extra_trees(train, &cfg)?))
        }
        ClassifierSpec::Svm { config } => {
            let cfg = SvmConfig { seed, ..config.clone() };
            Predictor::Model(Model::Svm(train_linear_svm(train, &cfg)?))
        }
        ClassifierSpec::Cnn { arch, train: tc } => {
            let cfg = TrainConfig { seed, ..tc.clone() };
            let arch = match arch {
                ArchPreset::Simple4 => crate::learners::nn::simple4(
                    train.n_species(),
                    train.grid().n_points,
                    cfg.dropout_rate,
                ),
                ArchPreset::Liu => crate::learners::nn::liu_baseline(
                    train.n_species(),
                    train.grid().n_points,
                    cfg.dropout_rate,
                ),
            };
            Predictor::Model(Model::Cnn(train_cnn(train, &arch, &cfg)?))
        }
        ClassifierSpec::Ensemble6 { train: tc } => {
            let cfg = TrainConfig { seed, ..tc.clone() };
            Predictor::Model(Model::Ensemble(train_ensemble6(train, &cfg)?))
        }
        ClassifierSpec::LibsCosine => {
            let lines = exp.lines.clone().ok_or_else(|| {
                Error::Config("libs-cosine classifier needs a `lines` table".into())
            })?;
            let minerals = minerals_for_species(
                exp.minerals.as_ref().ok_or_else(|| {
                    Error::Config("libs-cosine classifier needs a `minerals` table".into())
                })?,
                train.species_names(),
            )?;
            Predictor::LibsCosine { lines, minerals }
        }
        ClassifierSpec::LibsCnn { config } => {
            let lines = exp.lines.clone().ok_or_else(|| {
                Error::Config("libs-cnn classifier needs a `lines` table".into())
            })?;
            let minerals = minerals_for_species(
                exp.minerals.as_ref().ok_or_else(|| {
                    Error::Config("libs-cnn classifier needs a `minerals` table".into())
                })?,
                train.species_names(),
            )?;
            let cfg = LibsCnnConfig {
                train: TrainConfig { seed, ..config.train.clone() },
                ..config.clone()
            };
            let model = train_libs_cnn(&lines, train.grid(), &cfg)?;
            Predictor::LibsCnn { model, minerals }
        }
    })
}

fn score_predictions(
    method: &str,
    run: usize,
    seed: u64,
    outcomes: Vec<SampleOutcome>,
) -> RunResult {
    let correct = outcomes
        .iter()
        .filter(|s| crate::learners::argmax_tie_lowest(&s.scores) == s.true_label)
        .count();
    let accuracy =
        if outcomes.is_empty() { 0.0 } else { correct as f64 / outcomes.len() as f64 };
    RunResult {
        method: method.to_string(),
        run,
        seed,
        accuracy,
        per_sample: outcomes,
        composition_sims: None,
    }
}

// ---------------------------------------------------------------------------
// Classification runs
// ---------------------------------------------------------------------------

fn classification_run(exp: &Experiment, run: usize, seed: u64) -> Result<Vec<RunResult>> {
    let spec = &exp.spec;
    let ds = exp
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("classification experiment needs `dataset`".into()))?;
    let classifier = spec
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Config("classification experiment needs `classifier`".into()))?;
    let plan = match spec.protocol {
        SplitProtocol::ThreePerSpecies => split_three_per_species(ds, seed),
        SplitProtocol::LeaveOneOutPerSpecies => split_leave_one_out(ds, seed),
    };
    plan.validate(ds.len())?;
    assert_disjoint(&plan.train_indices, &plan.test_indices)?;
    if plan.test_indices.is_empty() {
        return Err(Error::Config(
            "split leaves no test samples; every species went entirely to training".into(),
        ));
    }

    let train = ds.subset(&plan.train_indices);
    let train = augment::apply(
        spec.augment.technique,
        &train,
        derive_seed(seed, 0xa06),
        &spec.augment.params,
    )?;
    let predictor = train_predictor(classifier, &train, exp, derive_seed(seed, 0x7247))?;

    let mut outcomes = Vec::with_capacity(plan.test_indices.len());
    for &i in &plan.test_indices {
        let (spectrum, label) = ds.sample(i);
        let p = predictor.predict(spectrum)?;
        outcomes.push(SampleOutcome { true_label: label, scores: p.scores().to_vec() });
    }
    Ok(vec![score_predictions(classifier.name(), run, seed, outcomes)])
}

fn assert_disjoint(train: &[usize], test: &[usize]) -> Result<()> {
    let train_set: BTreeSet<usize> = train.iter().copied().collect();
    if test.iter().any(|i| train_set.contains(i)) {
        return Err(Error::Config("train and test sets overlap".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Fusion runs
// ---------------------------------------------------------------------------

/// Hold out one pair per species with at least two pairs; everything else
/// trains.
fn split_pairs_leave_one_out(paired: &PairedDataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut rng = rng_from_seed(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in paired.indices_by_species() {
        let mut idx = group;
        idx.shuffle(&mut rng);
        if idx.len() >= 2 {
            test.push(idx[0]);
            train.extend_from_slice(&idx[1..]);
        } else {
            train.extend_from_slice(&idx);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Materialize one side of a set of pairs as a training dataset,
/// deduplicated by source index, with the paired species index.
fn side_dataset(
    paired: &PairedDataset,
    indices: &[usize],
    side_a: bool,
    kind: SpectrumKind,
) -> Result<LabeledDataset> {
    let first = &paired.pairs[indices[0]];
    let grid = if side_a { *first.spectrum_a.grid() } else { *first.spectrum_b.grid() };
    let mut ds = LabeledDataset::with_species(kind, grid, paired.species.clone());
    let mut seen = BTreeSet::new();
    for &i in indices {
        let pair = &paired.pairs[i];
        let source = if side_a { pair.a_index } else { pair.b_index };
        if !seen.insert(source) {
            continue;
        }
        let spectrum = if side_a { pair.spectrum_a.clone() } else { pair.spectrum_b.clone() };
        ds.push(spectrum, &paired.species[pair.species_id])?;
    }
    Ok(ds)
}

fn fusion_run(exp: &Experiment, run: usize, seed: u64) -> Result<Vec<RunResult>> {
    let spec = &exp.spec;
    let ds_a = exp
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("fusion experiment needs `dataset`".into()))?;
    let ds_b = exp
        .dataset_b
        .as_ref()
        .ok_or_else(|| Error::Config("fusion experiment needs `dataset_b`".into()))?;
    let rule = spec
        .fusion
        .ok_or_else(|| Error::Config("fusion experiment needs `fusion`".into()))?;

    let paired = pair_by_species(ds_a, ds_b, spec.pair_cap, derive_seed(seed, 0xba17))?;
    let (train_idx, test_idx) = split_pairs_leave_one_out(&paired, derive_seed(seed, 0x5b17));
    if test_idx.is_empty() {
        return Err(Error::Config("no species has enough pairs to test".into()));
    }

    if rule == FusionRule::TwoStream {
        return two_stream_run(exp, &paired, &train_idx, &test_idx, run, seed);
    }

    let classifier_a = spec
        .classifier
        .as_ref()
        .ok_or_else(|| Error::Config("fusion experiment needs `classifier`".into()))?;
    let classifier_b = spec
        .classifier_b
        .as_ref()
        .ok_or_else(|| Error::Config("fusion experiment needs `classifier_b`".into()))?;

    let train_side = |idx: &[usize], side_a: bool| -> Result<LabeledDataset> {
        side_dataset(&paired, idx, side_a, if side_a { ds_a.kind() } else { ds_b.kind() })
    };

    let predictor_a =
        train_predictor(classifier_a, &train_side(&train_idx, true)?, exp, derive_seed(seed, 0xa))?;
    let predictor_b =
        train_predictor(classifier_b, &train_side(&train_idx, false)?, exp, derive_seed(seed, 0xb))?;

    // Predictions for the shared test pairs.
    let mut pa = Vec::with_capacity(test_idx.len());
    let mut pb = Vec::with_capacity(test_idx.len());
    let mut labels = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        let pair = &paired.pairs[i];
        pa.push(predictor_a.predict(&pair.spectrum_a)?);
        pb.push(predictor_b.predict(&pair.spectrum_b)?);
        labels.push(pair.species_id);
    }

    let outcome_of = |preds: &[Prediction]| -> Vec<SampleOutcome> {
        preds
            .iter()
            .zip(&labels)
            .map(|(p, &label)| SampleOutcome { true_label: label, scores: p.scores().to_vec() })
            .collect()
    };

    let fused: Vec<Prediction> = match rule {
        FusionRule::Ave => pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| fuse_average(a, b))
            .collect::<Result<_>>()?,
        FusionRule::Mul => pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| fuse_multiply(a, b))
            .collect::<Result<_>>()?,
        // The b side is the composition-based prediction.
        FusionRule::Sq => pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| fuse_square_multiply(b, a))
            .collect::<Result<_>>()?,
        FusionRule::Svm => {
            let model = train_fusion_svm(exp, &paired, &train_idx, classifier_a, classifier_b, seed)?;
            pa.iter()
                .zip(&pb)
                .map(|(a, b)| apply_fused_svm(&model, a, b))
                .collect::<Result<_>>()?
        }
        FusionRule::TwoStream => unreachable!("handled above"),
    };

    Ok(vec![
        score_predictions(&format!("a:{}", classifier_a.name()), run, seed, outcome_of(&pa)),
        score_predictions(&format!("b:{}", classifier_b.name()), run, seed, outcome_of(&pb)),
        score_predictions(rule.method_name(), run, seed, outcome_of(&fused)),
    ])
}

/// Build the SVM combiner's training pairs from a 3-fold split of the
/// training pairs, so the combiner never sees predictions made on data its
/// base classifiers trained on.
fn train_fusion_svm(
    exp: &Experiment,
    paired: &PairedDataset,
    train_idx: &[usize],
    classifier_a: &ClassifierSpec,
    classifier_b: &ClassifierSpec,
    seed: u64,
) -> Result<crate::learners::FusionSvmModel> {
    use rand::seq::SliceRandom;
    let ds_a_kind = exp.dataset.as_ref().expect("checked").kind();
    let ds_b_kind = exp.dataset_b.as_ref().expect("checked").kind();

    let mut shuffled = train_idx.to_vec();
    shuffled.shuffle(&mut rng_from_seed(derive_seed(seed, 0xf01d)));
    let n_folds = 3.min(shuffled.len());
    let mut triples = Vec::new();
    for fold in 0..n_folds {
        let held: Vec<usize> =
            shuffled.iter().copied().skip(fold).step_by(n_folds).collect();
        let rest: Vec<usize> =
            shuffled.iter().copied().filter(|i| !held.contains(i)).collect();
        if rest.is_empty() || held.is_empty() {
            continue;
        }
        let fold_a = side_dataset(paired, &rest, true, ds_a_kind)?;
        let fold_b = side_dataset(paired, &rest, false, ds_b_kind)?;
        let pa = train_predictor(classifier_a, &fold_a, exp, derive_seed(seed, 0xa0 + fold as u64))?;
        let pb = train_predictor(classifier_b, &fold_b, exp, derive_seed(seed, 0xb0 + fold as u64))?;
        for &i in &held {
            let pair = &paired.pairs[i];
            triples.push((
                pa.predict(&pair.spectrum_a)?,
                pb.predict(&pair.spectrum_b)?,
                pair.species_id,
            ));
        }
    }
    fuse_svm(&triples, &SvmConfig { seed: derive_seed(seed, 0x53), ..Default::default() })
}

fn two_stream_run(
    exp: &Experiment,
    paired: &PairedDataset,
    train_idx: &[usize],
    test_idx: &[usize],
    run: usize,
    seed: u64,
) -> Result<Vec<RunResult>> {
    let train_pairs = PairedDataset {
        species: paired.species.clone(),
        pairs: train_idx.iter().map(|&i| paired.pairs[i].clone()).collect(),
    };
    let (dropout, mut cfg) = match &exp.spec.classifier {
        Some(ClassifierSpec::Cnn { train, .. }) => (train.dropout_rate, train.clone()),
        _ => (0.5, TrainConfig::default()),
    };
    cfg.seed = derive_seed(seed, 0x25);
    let len_a = train_pairs.pairs[0].spectrum_a.values().len();
    let arch = crate::learners::nn::two_stream_default(paired.species.len(), len_a, dropout);
    let model = train_two_stream_cnn(&train_pairs, &arch, &cfg)?;
    let mut outcomes = Vec::with_capacity(test_idx.len());
    for &i in test_idx {
        let pair = &paired.pairs[i];
        let p = crate::learners::predict_two_stream(
            &model,
            pair.spectrum_a.values(),
            pair.spectrum_b.values(),
        )?;
        outcomes.push(SampleOutcome { true_label: pair.species_id, scores: p.scores().to_vec() });
    }
    Ok(vec![score_predictions(FusionRule::TwoStream.method_name(), run, seed, outcomes)])
}

// ---------------------------------------------------------------------------
// LIBS composition runs
// ---------------------------------------------------------------------------

fn libs_composition_run(exp: &Experiment, run: usize, seed: u64) -> Result<Vec<RunResult>> {
    let spec = &exp.spec;
    let lines = exp
        .lines
        .as_ref()
        .ok_or_else(|| Error::Config("libs-composition experiment needs `lines`".into()))?;
    let minerals = exp
        .minerals
        .as_ref()
        .ok_or_else(|| Error::Config("libs-composition experiment needs `minerals`".into()))?;
    let grid = spec.libs.grid()?;

    // Only minerals with at least one line-covered element can be queried.
    let usable: MineralTable = minerals
        .iter()
        .filter(|(_, comp)| comp.elements().any(|e| lines.has_element(e)))
        .cloned()
        .collect();
    if usable.is_empty() {
        return Err(Error::Config("no mineral has elements covered by the line table".into()));
    }

    let cnn_model = spec
        .libs
        .cnn
        .as_ref()
        .map(|cfg| {
            let cfg = LibsCnnConfig {
                train: TrainConfig { seed: derive_seed(seed, 0xcc), ..cfg.train.clone() },
                ..cfg.clone()
            };
            train_libs_cnn(lines, &grid, &cfg)
        })
        .transpose()?;

    let mut rng = rng_from_seed(derive_seed(seed, 0x4e0));
    let mut cosine_outcomes = Vec::new();
    let mut cosine_sims = Vec::new();
    let mut cnn_outcomes = Vec::new();
    let mut cnn_sims = Vec::new();
    for (true_idx, (_, truth)) in usable.iter().enumerate() {
        let mut raw =
            synth_libs_raw(truth, lines, &grid, spec.libs.sigma_nm, MissingLinePolicy::Skip)?;
        if spec.libs.noise_sigma > 0.0 {
            for v in &mut raw {
                *v *= 1.0 + spec.libs.noise_sigma * normal(&mut rng);
            }
        }
        let spectrum =
            Spectrum::new(grid, normalize_unit(&raw), SpectrumKind::Libs, Meta::new())?;

        let (est, _) = estimate_composition_cosine(&spectrum, lines)?;
        let p = match_mineral_by_composition(&est, &usable)?;
        cosine_sims.push(est.cosine(truth));
        cosine_outcomes.push(SampleOutcome { true_label: true_idx, scores: p.scores().to_vec() });

        if let Some(model) = &cnn_model {
            let est = predict_libs_cnn(model, &spectrum)?;
            let p = match_mineral_by_composition(&est, &usable)?;
            cnn_sims.push(est.cosine(truth));
            cnn_outcomes.push(SampleOutcome { true_label: true_idx, scores: p.scores().to_vec() });
        }
    }

    let mut results = Vec::new();
    let mut cosine = score_predictions("libs-cosine", run, seed, cosine_outcomes);
    cosine.composition_sims = Some(cosine_sims);
    results.push(cosine);
    if cnn_model.is_some() {
        let mut cnn = score_predictions("libs-cnn", run, seed, cnn_outcomes);
        cnn.composition_sims = Some(cnn_sims);
        results.push(cnn);
    }
    Ok(results)
}
