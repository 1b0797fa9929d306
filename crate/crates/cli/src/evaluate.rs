use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use cosparse_core::artifacts::Model;
use cosparse_core::datapipe::{load_house, manifest_path, read_day_matrix_csv, HouseManifest};
use cosparse_core::metrics::MetricsReport;
use cosparse_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{absolute, csv_text, ensure_dir, pick_path, write_json, write_snapshot, write_text, Layer};
use crate::disagg::{DisaggReport, REPORT_FILE};
use crate::pipeline::score;
use crate::Globals;

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// Directory written by `disaggregate`.
    #[arg(long)]
    pub estimates: Option<PathBuf>,
    /// Ground-truth house dataset directory or manifest.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateRun {
    pub estimates: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub house_id: String,
    pub model: Model,
    pub days: usize,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

pub fn resolve(g: &Globals, a: &EvaluateArgs) -> Result<(EvaluateRun, PathBuf)> {
    let layer = Layer::load(g.config.as_deref(), "evaluate")?;
    let mut run: EvaluateRun = layer.parse()?;
    run.estimates = Some(pick_path(a.estimates.as_ref(), &layer, run.estimates.as_ref(), "estimates")?);
    run.truth = Some(pick_path(a.truth.as_ref(), &layer, run.truth.as_ref(), "truth")?);
    let out = match (&g.out, &run.out) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => layer.rebase(o)?,
        (None, None) => absolute(&PathBuf::from("out"))?,
    };
    Ok((run, out))
}

fn read_report(dir: &Path) -> Result<DisaggReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// Every estimated appliance must have a truth channel whose file exists.
fn check_truth(report: &DisaggReport, truth: &Path) -> Result<()> {
    let mpath = manifest_path(truth);
    let manifest = HouseManifest::read(&mpath)?;
    let dir = mpath.parent().unwrap_or(Path::new("."));
    for e in &report.appliances {
        let ch = manifest
            .appliances
            .iter()
            .find(|c| c.label == e.label)
            .ok_or_else(|| Error::Mismatch(format!("no truth channel for appliance `{}`", e.label)))?;
        let file = dir.join(&ch.file);
        if !file.is_file() {
            return Err(Error::Mismatch(format!("truth file for appliance `{}` missing: {}", e.label, file.display())));
        }
    }
    Ok(())
}

pub fn run(g: &Globals, a: &EvaluateArgs) -> Result<()> {
    let (run, out) = resolve(g, a)?;
    let est_dir = run.estimates.as_ref().expect("resolved");
    let truth_path = run.truth.as_ref().expect("resolved");
    let report = read_report(est_dir)?;
    check_truth(&report, truth_path)?;

    let estimates = report
        .appliances
        .iter()
        .map(|e| read_day_matrix_csv(&est_dir.join(&e.file), &e.label))
        .collect::<Result<Vec<_>>>()?;
    let days = estimates[0].day_labels().to_vec();
    let truth = load_house(truth_path)?;
    if truth.slots_per_day() != estimates[0].slots_per_day() {
        return Err(Error::Mismatch(format!(
            "estimates have {} slots per day, truth {}",
            estimates[0].slots_per_day(),
            truth.slots_per_day()
        )));
    }
    if let Some(d) = days.iter().find(|d| !truth.aggregate().day_labels().contains(d)) {
        return Err(Error::Mismatch(format!("truth has no data for estimated day {d}")));
    }
    let cols: Vec<usize> =
        truth.aggregate().day_labels().iter().enumerate().filter(|(_, d)| days.contains(d)).map(|(i, _)| i).collect();
    let truth = truth.select_days(&cols)?;
    let metrics = score(&estimates, &truth)?;

    let eval =
        EvaluationReport { house_id: truth.house_id().to_string(), model: report.model, days: days.len(), metrics };
    ensure_dir(&out)?;
    write_json(&out.join("metrics.json"), &eval)?;
    let mut header = ["house", "model", "days", "accuracy"].map(String::from).to_vec();
    header.extend(eval.metrics.appliances.iter().map(|l| format!("ne:{l}")));
    let mut row =
        vec![eval.house_id.clone(), eval.model.to_string(), eval.days.to_string(), eval.metrics.accuracy.to_string()];
    row.extend(
        eval.metrics.per_appliance_normalized_error.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()),
    );
    let csv = csv_text(header, vec![row])?;
    write_text(&out.join("metrics.csv"), &csv)?;
    write_snapshot(&out, "evaluate", &run)?;
    println!("evaluate: accuracy {:.4} over {} days -> {}", eval.metrics.accuracy, eval.days, out.display());
    Ok(())
}
