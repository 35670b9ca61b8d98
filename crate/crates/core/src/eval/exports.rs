//! Analysis exports: violin-plot data, per-class mean/std curves, PCA
//! projections, and the per-method report in Markdown + JSON.

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};

use super::metrics::accuracy_ci;
use super::pca::pca_project;
use super::{ExperimentResult, RunResult};

/// Rows `(algorithm, sample_id, cosine_similarity)` for external violin
/// plotting; `None` when no run recorded composition similarities.
pub fn export_violin_data(result: &ExperimentResult) -> Option<String> {
    let mut out = String::from("algorithm,sample_id,cosine_similarity\n");
    let mut any = false;
    for method in &result.methods {
        let mut sample_id = 0usize;
        for run in result.runs.iter().filter(|r| &r.method == method) {
            if let Some(sims) = &run.composition_sims {
                any = true;
                for s in sims {
                    out.push_str(&format!("{method},{sample_id},{s}\n"));
                    sample_id += 1;
                }
            }
        }
    }
    any.then_some(out)
}

/// Per grid point, the mean and population standard deviation of each listed
/// species' spectra: rows `(species, position, mean, stddev)`.
pub fn class_mean_std_export(ds: &LabeledDataset, species: &[String]) -> Result<String> {
    let mut out = String::from("species,position,mean,stddev\n");
    for name in species {
        let id = ds
            .species_id(name)
            .ok_or_else(|| Error::Config(format!("species `{name}` not in dataset")))?;
        let rows: Vec<&[f64]> = ds
            .samples()
            .filter(|(_, sid)| *sid == id)
            .map(|(s, _)| s.values())
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyClass);
        }
        let n = rows.len() as f64;
        for (j, pos) in ds.grid().positions().enumerate() {
            let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            out.push_str(&format!("{name},{pos},{mean},{}\n", var.sqrt()));
        }
    }
    Ok(out)
}

/// Two-component PCA projection of the listed species' spectra:
/// rows `(species, sample_id, pc1, pc2)` plus the explained variances.
pub fn pca_export(ds: &LabeledDataset, species: &[String]) -> Result<(String, Vec<f64>)> {
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for name in species {
        let id = ds
            .species_id(name)
            .ok_or_else(|| Error::Config(format!("species `{name}` not in dataset")))?;
        for (s, sid) in ds.samples() {
            if sid == id {
                rows.push((name.clone(), s.values().to_vec()));
            }
        }
    }
    if rows.len() < 2 {
        return Err(Error::Config("pca export needs at least 2 spectra".into()));
    }
    let data: Vec<Vec<f64>> = rows.iter().map(|(_, v)| v.clone()).collect();
    let (proj, explained) = pca_project(&data, 2)?;
    let mut out = String::from("species,sample_id,pc1,pc2\n");
    for (i, (name, _)) in rows.iter().enumerate() {
        out.push_str(&format!("{name},{i},{},{}\n", proj[i][0], proj[i][1]));
    }
    Ok((out, explained))
}

/// Per-method accuracy summary; the best mean is flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n_runs: usize,
    pub mean_accuracy: f64,
    /// 95% confidence half-width; absent for a single run.
    pub ci95: Option<f64>,
    pub best: bool,
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// Summarize per-method accuracies. Numbers are rounded to 4 decimals so the
/// JSON twin and the Markdown table carry identical values.
pub fn summarize(result: &ExperimentResult) -> Result<Vec<MethodSummary>> {
    let mut out = Vec::new();
    for method in &result.methods {
        let accs: Vec<f64> = result
            .runs
            .iter()
            .filter(|r| &r.method == method)
            .map(|r| r.accuracy)
            .collect();
        let (mean, hw) = accuracy_ci(&accs)?;
        out.push(MethodSummary {
            method: method.clone(),
            n_runs: accs.len(),
            mean_accuracy: round4(mean),
            ci95: hw.map(round4),
            best: false,
        });
    }
    if let Some(best) = out
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.mean_accuracy.total_cmp(&b.1.mean_accuracy).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
    {
        out[best].best = true;
    }
    Ok(out)
}

/// Render the Markdown report: one row per method, best method in bold.
pub fn render_report_md(name: &str, summaries: &[MethodSummary]) -> String {
    let mut out = format!("# Experiment report: {name}\n\n");
    out.push_str("| Method | Runs | Accuracy | 95% CI |\n");
    out.push_str("|---|---|---|---|\n");
    for s in summaries {
        let method =
            if s.best { format!("**{}**", s.method) } else { s.method.clone() };
        let acc = if s.best {
            format!("**{:.4}**", s.mean_accuracy)
        } else {
            format!("{:.4}", s.mean_accuracy)
        };
        let ci = match s.ci95 {
            Some(hw) => format!("± {hw:.4}"),
            None => "—".to_string(),
        };
        out.push_str(&format!("| {method} | {} | {acc} | {ci} |\n", s.n_runs));
    }
    out.push_str("\nThe bold row is the highest mean accuracy.\n");
    out
}

/// Re-derive each run's accuracy from its stored per-sample predictions;
/// errors if any stored accuracy disagrees.
pub fn verify_accuracies(runs: &[RunResult]) -> Result<()> {
    for run in runs {
        if run.per_sample.is_empty() {
            continue;
        }
        let correct = run
            .per_sample
            .iter()
            .filter(|s| crate::learners::argmax_tie_lowest(&s.scores) == s.true_label)
            .count();
        let recomputed = correct as f64 / run.per_sample.len() as f64;
        if (recomputed - run.accuracy).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "run {} ({}) accuracy {} != recomputed {}",
                run.run, run.method, run.accuracy, recomputed
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SampleOutcome;
    use crate::spectra::{GridSpec, Meta, Spectrum, SpectrumKind};

    fn result_with(methods: &[(&str, Vec<f64>)]) -> ExperimentResult {
        let mut runs = Vec::new();
        for (method, accs) in methods {
            for (i, &a) in accs.iter().enumerate() {
                runs.push(RunResult {
                    method: method.to_string(),
                    run: i,
                    seed: i as u64,
                    accuracy: a,
                    per_sample: Vec::new(),
                    composition_sims: None,
                });
            }
        }
        ExperimentResult {
            name: "t".into(),
            methods: methods.iter().map(|(m, _)| m.to_string()).collect(),
            runs,
        }
    }

    #[test]
    fn summary_flags_best_and_rounds() {
        let result = result_with(&[
            ("knn", vec![0.8, 0.82]),
            ("trees", vec![0.91, 0.93]),
        ]);
        let summary = summarize(&result).unwrap();
        assert_eq!(summary.len(), 2);
        assert!(!summary[0].best);
        assert!(summary[1].best);
        assert!((summary[1].mean_accuracy - 0.92).abs() < 1e-12);
        let md = render_report_md("t", &summary);
        assert!(md.contains("**trees**"));
        assert!(md.contains("| knn | 2 |"));
        // The markdown number equals the JSON twin's rounded value.
        assert!(md.contains(&format!("{:.4}", summary[0].mean_accuracy)));
    }

    #[test]
    fn violin_rows_per_algorithm() {
        let mut result = result_with(&[("libs-cosine", vec![0.5]), ("libs-cnn", vec![0.5])]);
        result.runs[0].composition_sims = Some(vec![0.9, 0.8, 0.7]);
        result.runs[1].composition_sims = Some(vec![0.6, 0.5, 0.4]);
        let csv = export_violin_data(&result).unwrap();
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[1], "libs-cosine,0,0.9");
        assert_eq!(lines[4], "libs-cnn,0,0.6");
        // No similarities recorded -> no export.
        let empty = result_with(&[("knn", vec![0.5])]);
        assert!(export_violin_data(&empty).is_none());
    }

    #[test]
    fn mean_std_hand_case() {
        let grid = GridSpec::new(0.0, 1.0, 2).unwrap();
        let mut ds = LabeledDataset::new(SpectrumKind::Raman, grid);
        ds.push(
            Spectrum::new(grid, vec![0.0, 1.0], SpectrumKind::Raman, Meta::new()).unwrap(),
            "A",
        )
        .unwrap();
        ds.push(
            Spectrum::new(grid, vec![1.0, 1.0], SpectrumKind::Raman, Meta::new()).unwrap(),
            "A",
        )
        .unwrap();
        let csv = class_mean_std_export(&ds, &["A".to_string()]).unwrap();
        let lines: Vec<&str> = csv.trim().lines().collect();
        // mean 0.5, population std 0.5 at position 0; mean 1 std 0 at 1.
        assert_eq!(lines[1], "A,0,0.5,0.5");
        assert_eq!(lines[2], "A,1,1,0");
    }

    #[test]
    fn verify_accuracies_catches_mismatch() {
        let mut runs = vec![RunResult {
            method: "knn".into(),
            run: 0,
            seed: 0,
            accuracy: 1.0,
            per_sample: vec![SampleOutcome { true_label: 1, scores: vec![0.9, 0.1] }],
            composition_sims: None,
        }];
        assert!(verify_accuracies(&runs).is_err());
        runs[0].accuracy = 0.0;
        assert!(verify_accuracies(&runs).is_ok());
    }
}
