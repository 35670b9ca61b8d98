//! Command-line pipeline: ingest spectra, split, augment, train, predict,
//! estimate LIBS compositions, fuse predictions, run experiments.
//!
//! Exit codes: 0 success, 1 input/validation error, 2 runtime error. All
//! randomness is controlled by explicit `--seed` flags (or the
//! `SPECTRAMIN_SEED` environment variable as a fallback); outputs are written
//! atomically via a sibling temp file.

mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use spectramin::augment::{self, AugmentParams, Technique};
use spectramin::datasets::{
    build_dataset, pair_by_species, split_leave_one_out, split_three_per_species, LabeledDataset,
    SplitPlan, DEFAULT_PAIR_CAP,
};
use spectramin::error::{Error, Result};
use spectramin::eval::{
    class_mean_std_export, export_violin_data, pca_export, render_report_md, run_experiment,
    summarize, Experiment, ExperimentSpec,
};
use spectramin::fusion::{
    apply_fused_svm, fuse_average, fuse_multiply_flagged, fuse_square_multiply_flagged, fuse_svm,
    restrict_to_common,
};
use spectramin::learners::{
    load_model_full, save_model_full, train_cnn, train_ensemble6, train_extra_trees,
    train_knn_weighted, train_linear_svm, train_two_stream_cnn, Model, Prediction,
    SpectrumContract, SvmConfig, TreesConfig,
};
use spectramin::libs::{
    estimate_composition_cosine, match_mineral_by_composition, predict_libs_cnn, train_libs_cnn,
    ElementComposition, LibsCnnConfig, LineTable,
};
use spectramin::spectra::{preprocess, GridSpec, SpectrumKind};

use io::{
    classifier_train_config, parse_spectrum_file, prediction_from_file, prediction_to_json,
    read_json, write_atomic, FormatArg, PredictionFile,
};

#[derive(Parser)]
#[command(name = "spectramin", version, about = "Mineral identification from multispectral data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    #[value(name = "three-per-species")]
    ThreePerSpecies,
    #[value(name = "loo")]
    Loo,
}

#[derive(Clone, Copy, ValueEnum)]
enum TechniqueArg {
    None,
    Shift,
    Offset,
    Noise,
    Bjerrum,
    Smote,
}

impl From<TechniqueArg> for Technique {
    fn from(t: TechniqueArg) -> Self {
        match t {
            TechniqueArg::None => Technique::None,
            TechniqueArg::Shift => Technique::Shift,
            TechniqueArg::Offset => Technique::Offset,
            TechniqueArg::Noise => Technique::Noise,
            TechniqueArg::Bjerrum => Technique::Bjerrum,
            TechniqueArg::Smote => Technique::Smote,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Knn,
    Trees,
    Svm,
    Cnn,
    Ensemble6,
    #[value(name = "two-stream")]
    TwoStream,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Ave,
    Mul,
    Sq,
    Svm,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMethod {
    Cosine,
    Cnn,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset file from a manifest of spectrum files.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce a reproducible train/test split plan.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        protocol: ProtocolArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Augment the training subset of a dataset (doubling each class).
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        /// Split plan; when given, only its training samples are augmented.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        technique: TechniqueArg,
        /// JSON file of augmentation magnitudes (defaults otherwise).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier and save the frozen model.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Second dataset, for two-stream training (paired by species).
        #[arg(long)]
        dataset_b: Option<PathBuf>,
        /// Split plan; when given, training uses only its train indices.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        model: ModelArg,
        /// Model hyperparameters as JSON (kind-specific; see README).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = DEFAULT_PAIR_CAP)]
        pair_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank species for a spectrum file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Second input for two-stream models.
        #[arg(long)]
        input_b: Option<PathBuf>,
        /// Input format; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<FormatArg>,
        #[arg(long, default_value_t = 5)]
        top: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the prediction JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LIBS composition tools.
    Libs {
        #[command(subcommand)]
        command: LibsCommand,
    },
    /// Late-fuse two prediction JSON files.
    Fuse {
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        rule: RuleArg,
        /// Trained combiner for --rule svm.
        #[arg(long)]
        svm_model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the SVM fusion combiner from held-out prediction pairs.
    FuseTrain {
        /// JSON list of `{ "a": prediction, "b": prediction, "label": species }`.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a cross-validation experiment from a config file.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run-level parallelism; 1 is fully sequential.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum LibsCommand {
    /// Synthesize a theoretical LIBS spectrum from a composition.
    Synth {
        #[arg(long)]
        lines: PathBuf,
        /// JSON map of element -> weight (normalized to fractions).
        #[arg(long)]
        composition: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long, default_value_t = 200.0)]
        grid_start: f64,
        #[arg(long, default_value_t = 900.0)]
        grid_end: f64,
        #[arg(long, default_value_t = 7001)]
        grid_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate elemental composition from a LIBS spectrum.
    Estimate {
        #[arg(long)]
        lines: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<FormatArg>,
        #[arg(long, value_enum)]
        method: EstimateMethod,
        /// Trained regressor, required for --method cnn.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Mineral table; when given, a mineral ranking is included.
        #[arg(long)]
        minerals: Option<PathBuf>,
        #[arg(long, default_value_t = 200.0)]
        grid_start: f64,
        #[arg(long, default_value_t = 900.0)]
        grid_end: f64,
        #[arg(long, default_value_t = 7001)]
        grid_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the CNN composition regressor on synthetic spectra.
    TrainCnn {
        #[arg(long)]
        lines: PathBuf,
        /// LibsCnnConfig JSON (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200.0)]
        grid_start: f64,
        #[arg(long, default_value_t = 900.0)]
        grid_end: f64,
        #[arg(long, default_value_t = 7001)]
        grid_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("SPECTRAMIN_SEED").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) =>
        {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 1 } else { 2 });
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { manifest, out } => {
            let ds = build_dataset(&manifest)?;
            eprintln!(
                "ingested {} spectra, {} species ({})",
                ds.len(),
                ds.n_species(),
                ds.kind()
            );
            write_atomic(&out, &serde_json::to_vec_pretty(&ds)?)
        }
        Command::Split { dataset, protocol, seed, out } => {
            let ds = LabeledDataset::load(&dataset)?;
            let seed = resolve_seed(seed);
            let plan = match protocol {
                ProtocolArg::ThreePerSpecies => split_three_per_species(&ds, seed),
                ProtocolArg::Loo => split_leave_one_out(&ds, seed),
            };
            eprintln!(
                "split: {} train / {} test",
                plan.train_indices.len(),
                plan.test_indices.len()
            );
            write_atomic(&out, &serde_json::to_vec_pretty(&plan)?)
        }
        Command::Augment { dataset, plan, technique, params, seed, out } => {
            let ds = LabeledDataset::load(&dataset)?;
            let train = match plan {
                Some(p) => {
                    let plan = SplitPlan::load(&p)?;
                    plan.validate(ds.len())?;
                    ds.subset(&plan.train_indices)
                }
                None => ds,
            };
            let params: AugmentParams =
                params.map(|p| read_json(&p)).transpose()?.unwrap_or_default();
            let augmented =
                augment::apply(technique.into(), &train, resolve_seed(seed), &params)?;
            eprintln!("augmented: {} -> {} samples", train.len(), augmented.len());
            write_atomic(&out, &serde_json::to_vec_pretty(&augmented)?)
        }
        Command::Train { dataset, dataset_b, plan, model, config, seed, pair_cap, out } => {
            cmd_train(dataset, dataset_b, plan, model, config, resolve_seed(seed), pair_cap, &out)
        }
        Command::Predict { model, input, input_b, format, top, seed, out } => {
            cmd_predict(&model, &input, input_b.as_deref(), format, top, resolve_seed(seed), out)
        }
        Command::Libs { command } => cmd_libs(command),
        Command::Fuse { pred_a, pred_b, rule, svm_model, out } => {
            cmd_fuse(&pred_a, &pred_b, rule, svm_model.as_deref(), out)
        }
        Command::FuseTrain { pairs, seed, out } => cmd_fuse_train(&pairs, resolve_seed(seed), &out),
        Command::Evaluate { config, out, jobs } => cmd_evaluate(&config, &out, jobs),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    dataset: PathBuf,
    dataset_b: Option<PathBuf>,
    plan: Option<PathBuf>,
    model_arg: ModelArg,
    config: Option<PathBuf>,
    seed: u64,
    pair_cap: usize,
    out: &Path,
) -> Result<()> {
    let ds = LabeledDataset::load(&dataset)?;
    let train = match &plan {
        Some(p) => {
            let plan = SplitPlan::load(p)?;
            plan.validate(ds.len())?;
            ds.subset(&plan.train_indices)
        }
        None => ds.clone(),
    };
    let config_json: Option<serde_json::Value> = config.map(|p| read_json(&p)).transpose()?;
    let contract = SpectrumContract { kind: train.kind(), grid: *train.grid() };

    let (model, contracts): (Model, Vec<SpectrumContract>) = match model_arg {
        ModelArg::Knn => {
            #[derive(serde::Deserialize, Default)]
            #[serde(default)]
            struct KnnCfg {
                k: usize,
            }
            let mut cfg: KnnCfg = io::from_value_or_default(config_json)?;
            if cfg.k == 0 {
                cfg.k = 5;
            }
            (Model::Knn(train_knn_weighted(&train, cfg.k)?), vec![contract])
        }
        ModelArg::Trees => {
            let mut cfg: TreesConfig = io::from_value_or_default(config_json)?;
            cfg.seed = seed;
            (Model::Trees(train_extra_trees(&train, &cfg)?), vec![contract])
        }
        ModelArg::Svm => {
            let mut cfg: SvmConfig = io::from_value_or_default(config_json)?;
            cfg.seed = seed;
            (Model::Svm(train_linear_svm(&train, &cfg)?), vec![contract])
        }
        ModelArg::Cnn => {
            let (arch_name, mut cfg) = classifier_train_config(config_json)?;
            cfg.seed = seed;
            let arch = match arch_name.as_str() {
                "liu" => spectramin::learners::nn::liu_baseline(
                    train.n_species(),
                    train.grid().n_points,
                    cfg.dropout_rate,
                ),
                "simple4" => spectramin::learners::nn::simple4(
                    train.n_species(),
                    train.grid().n_points,
                    cfg.dropout_rate,
                ),
                other => return Err(Error::Config(format!("unknown arch preset `{other}`"))),
            };
            (Model::Cnn(train_cnn(&train, &arch, &cfg)?), vec![contract])
        }
        ModelArg::Ensemble6 => {
            let (_, mut cfg) = classifier_train_config(config_json)?;
            cfg.seed = seed;
            (Model::Ensemble(train_ensemble6(&train, &cfg)?), vec![contract])
        }
        ModelArg::TwoStream => {
            let db_path = dataset_b
                .ok_or_else(|| Error::Config("two-stream training needs --dataset-b".into()))?;
            let ds_b = LabeledDataset::load(&db_path)?;
            let train_b = match &plan {
                Some(p) => {
                    let plan = SplitPlan::load(p)?;
                    plan.validate(ds_b.len())?;
                    ds_b.subset(&plan.train_indices)
                }
                None => ds_b.clone(),
            };
            let pairs = pair_by_species(&train, &train_b, pair_cap, seed)?;
            let (_, mut cfg) = classifier_train_config(config_json)?;
            cfg.seed = seed;
            let arch = spectramin::learners::nn::two_stream_default(
                pairs.species.len(),
                train.grid().n_points,
                cfg.dropout_rate,
            );
            let contract_b = SpectrumContract { kind: train_b.kind(), grid: *train_b.grid() };
            (
                Model::TwoStream(train_two_stream_cnn(&pairs, &arch, &cfg)?),
                vec![contract, contract_b],
            )
        }
    };
    save_model_full(&model, &contracts, out)?;
    eprintln!("trained {} model -> {}", model.kind_name(), out.display());
    Ok(())
}

fn cmd_predict(
    model_path: &Path,
    input: &Path,
    input_b: Option<&Path>,
    format: Option<FormatArg>,
    top: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let (model, contracts) = load_model_full(model_path)?;
    let contract = contracts.first().ok_or_else(|| {
        Error::ModelFile("model file records no preprocessing contract; cannot resample".into())
    })?;
    let prediction = match (&model, input_b) {
        (Model::TwoStream(_), Some(path_b)) => {
            let contract_b = contracts
                .get(1)
                .ok_or_else(|| Error::ModelFile("two-stream model lacks the b-side contract".into()))?;
            let a = load_spectrum(input, format, contract)?;
            let b = load_spectrum(path_b, format, contract_b)?;
            model.predict_pair(a.values(), b.values())?
        }
        (Model::TwoStream(_), None) => {
            return Err(Error::Config("two-stream models need --input-b".into()));
        }
        (_, _) => {
            let s = load_spectrum(input, format, contract)?;
            model.predict(s.values())?
        }
    };
    let file = prediction_to_json(&prediction, model.kind_name(), seed, top);
    emit(out, &serde_json::to_vec_pretty(&file)?)
}

fn load_spectrum(
    path: &Path,
    format: Option<FormatArg>,
    contract: &SpectrumContract,
) -> Result<spectramin::spectra::Spectrum> {
    let raw = parse_spectrum_file(path, format, contract.kind)?;
    preprocess(&raw, &contract.grid)
}

fn cmd_libs(command: LibsCommand) -> Result<()> {
    match command {
        LibsCommand::Synth { lines, composition, sigma, grid_start, grid_end, grid_points, out } => {
            let table = LineTable::load(&lines)?;
            let weights: std::collections::BTreeMap<String, f64> = read_json(&composition)?;
            let comp = ElementComposition::from_weights(weights)?;
            let grid = GridSpec::new(grid_start, grid_end, grid_points)?;
            let spectrum = spectramin::libs::synth_libs_spectrum(
                &comp,
                &table,
                &grid,
                sigma,
                spectramin::libs::MissingLinePolicy::Error,
            )?;
            let mut csv = String::from("wavelength_nm,intensity\n");
            for (i, x) in grid.positions().enumerate() {
                csv.push_str(&format!("{x},{}\n", spectrum.values()[i]));
            }
            write_atomic(&out, csv.as_bytes())
        }
        LibsCommand::Estimate {
            lines,
            input,
            format,
            method,
            model,
            minerals,
            grid_start,
            grid_end,
            grid_points,
            out,
        } => {
            let table = LineTable::load(&lines)?;
            let minerals = minerals.map(spectramin::libs::load_mineral_table).transpose()?;
            let (composition, similarities) = match method {
                EstimateMethod::Cosine => {
                    let grid = GridSpec::new(grid_start, grid_end, grid_points)?;
                    let contract = SpectrumContract { kind: SpectrumKind::Libs, grid };
                    let s = load_spectrum(&input, format, &contract)?;
                    let (comp, sims) = estimate_composition_cosine(&s, &table)?;
                    (comp, Some(sims))
                }
                EstimateMethod::Cnn => {
                    let model_path = model.ok_or_else(|| {
                        Error::Config("--method cnn needs --model".into())
                    })?;
                    let (loaded, contracts) = load_model_full(&model_path)?;
                    let Model::Cnn(cnn) = &loaded else {
                        return Err(Error::ModelFile("not a composition regressor".into()));
                    };
                    let contract = contracts.first().copied().unwrap_or(SpectrumContract {
                        kind: SpectrumKind::Libs,
                        grid: GridSpec::new(grid_start, grid_end, grid_points)?,
                    });
                    let s = load_spectrum(&input, format, &contract)?;
                    (predict_libs_cnn(cnn, &s)?, None)
                }
            };
            #[derive(serde::Serialize)]
            struct EstimateOut {
                method: &'static str,
                composition: std::collections::BTreeMap<String, f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                similarities: Option<std::collections::BTreeMap<String, f64>>,
                #[serde(skip_serializing_if = "Option::is_none")]
                minerals: Option<Vec<(String, f64)>>,
            }
            let ranking = minerals
                .map(|table| -> Result<Vec<(String, f64)>> {
                    let p = match_mineral_by_composition(&composition, &table)?;
                    Ok(p.top(10)
                        .into_iter()
                        .map(|(id, score)| (p.classes().name(id).to_string(), score))
                        .collect())
                })
                .transpose()?;
            let out_file = EstimateOut {
                method: match method {
                    EstimateMethod::Cosine => "cosine",
                    EstimateMethod::Cnn => "cnn",
                },
                composition: composition.iter().map(|(e, v)| (e.to_string(), v)).collect(),
                similarities: similarities
                    .map(|sims| sims.into_iter().collect()),
                minerals: ranking,
            };
            emit(out, &serde_json::to_vec_pretty(&out_file)?)
        }
        LibsCommand::TrainCnn { lines, config, seed, grid_start, grid_end, grid_points, out } => {
            let table = LineTable::load(&lines)?;
            let grid = GridSpec::new(grid_start, grid_end, grid_points)?;
            let mut cfg: LibsCnnConfig =
                config.map(|p| read_json(&p)).transpose()?.unwrap_or_default();
            cfg.train.seed = resolve_seed(seed.into());
            let model = train_libs_cnn(&table, &grid, &cfg)?;
            let contract = SpectrumContract { kind: SpectrumKind::Libs, grid };
            save_model_full(&Model::Cnn(model), &[contract], &out)?;
            eprintln!("trained libs regressor -> {}", out.display());
            Ok(())
        }
    }
}

fn cmd_fuse(
    pred_a: &Path,
    pred_b: &Path,
    rule: RuleArg,
    svm_model: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<()> {
    let a = prediction_from_file(pred_a)?;
    let b = prediction_from_file(pred_b)?;
    let (a, b) = if a.classes() == b.classes() {
        (a, b)
    } else {
        eprintln!("warning: class lists differ; restricting to the common species");
        restrict_to_common(&a, &b)?
    };
    let (fused, degenerate, name): (Prediction, bool, &str) = match rule {
        RuleArg::Ave => (fuse_average(&a, &b)?, false, "fuse:ave"),
        RuleArg::Mul => {
            let (p, d) = fuse_multiply_flagged(&a, &b)?;
            (p, d, "fuse:mul")
        }
        RuleArg::Sq => {
            // The a side is the composition-based (LIBS) prediction.
            let (p, d) = fuse_square_multiply_flagged(&a, &b)?;
            (p, d, "fuse:sq")
        }
        RuleArg::Svm => {
            let path = svm_model
                .ok_or_else(|| Error::Config("--rule svm needs --svm-model".into()))?;
            let (model, _) = load_model_full(path)?;
            let Model::FusionSvm(fusion) = &model else {
                return Err(Error::ModelFile("not a fusion-svm model".into()));
            };
            (apply_fused_svm(fusion, &a, &b)?, false, "fuse:svm")
        }
    };
    if degenerate {
        eprintln!("warning: product was zero everywhere; returning the uniform prediction");
    }
    let file = prediction_to_json(&fused, name, 0, fused.classes().len().min(10));
    emit(out, &serde_json::to_vec_pretty(&file)?)
}

fn cmd_fuse_train(pairs_path: &Path, seed: u64, out: &Path) -> Result<()> {
    #[derive(serde::Deserialize)]
    struct PairEntry {
        a: PredictionFile,
        b: PredictionFile,
        label: String,
    }
    let entries: Vec<PairEntry> = read_json(pairs_path)?;
    if entries.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let mut triples = Vec::with_capacity(entries.len());
    for e in &entries {
        let a = e.a.to_prediction()?;
        let b = e.b.to_prediction()?;
        let label = a
            .classes()
            .position(&e.label)
            .ok_or_else(|| Error::Config(format!("label `{}` not in class list", e.label)))?;
        triples.push((a, b, label));
    }
    let model = fuse_svm(&triples, &SvmConfig { seed, ..Default::default() })?;
    save_model_full(&Model::FusionSvm(model), &[], out)?;
    eprintln!("trained fusion svm -> {}", out.display());
    Ok(())
}

fn cmd_evaluate(config: &Path, out_dir: &Path, jobs: usize) -> Result<()> {
    let spec = ExperimentSpec::from_file(config)?;
    let base = config.parent().unwrap_or_else(|| Path::new("."));
    let exp = Experiment::load(spec, base)?;
    let result = run_experiment(&exp, jobs.max(1))?;
    let summary = summarize(&result)?;

    std::fs::create_dir_all(out_dir)?;

    #[derive(serde::Serialize)]
    struct AnalysisOut {
        pca_explained_variance: Vec<f64>,
    }
    let mut analysis_out = None;
    if let (Some(analysis), Some(ds)) = (&exp.spec.analysis, &exp.dataset) {
        if !analysis.pca_species.is_empty() {
            let (csv, explained) = pca_export(ds, &analysis.pca_species)?;
            write_atomic(&out_dir.join("pca.csv"), csv.as_bytes())?;
            analysis_out = Some(AnalysisOut { pca_explained_variance: explained });
        }
        if !analysis.mean_std_species.is_empty() {
            let csv = class_mean_std_export(ds, &analysis.mean_std_species)?;
            write_atomic(&out_dir.join("meanstd.csv"), csv.as_bytes())?;
        }
    }
    if let Some(violin) = export_violin_data(&result) {
        write_atomic(&out_dir.join("violin.csv"), violin.as_bytes())?;
    }

    #[derive(serde::Serialize)]
    struct ResultsFile<'a> {
        name: &'a str,
        spec: &'a ExperimentSpec,
        summary: &'a [spectramin::eval::MethodSummary],
        #[serde(skip_serializing_if = "Option::is_none")]
        analysis: Option<AnalysisOut>,
        runs: &'a [spectramin::eval::RunResult],
    }
    let results = ResultsFile {
        name: &result.name,
        spec: &exp.spec,
        summary: &summary,
        analysis: analysis_out,
        runs: &result.runs,
    };
    write_atomic(&out_dir.join("results.json"), &serde_json::to_vec_pretty(&results)?)?;
    let report = render_report_md(&result.name, &summary);
    write_atomic(&out_dir.join("report.md"), report.as_bytes())?;

    for s in &summary {
        let ci = s.ci95.map(|h| format!(" ± {h:.4}")).unwrap_or_default();
        eprintln!(
            "{}{}: {:.4}{ci} over {} runs",
            if s.best { "* " } else { "  " },
            s.method,
            s.mean_accuracy,
            s.n_runs
        );
    }
    Ok(())
}

fn emit(out: Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(&path, bytes),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}
