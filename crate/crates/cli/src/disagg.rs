use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use cosparse_core::artifacts::{Model, TrainArtifacts};
use cosparse_core::datapipe::{file_stem, load_house, write_day_matrix_csv};
use cosparse_core::disagg::{DisaggOptions, Subproblem};
use cosparse_core::synthesis::SynthesisControls;
use cosparse_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{absolute, ensure_dir, pick_path, write_json, write_snapshot, Layer};
use crate::pipeline::{disaggregate_model, parse_range, select_days};
use crate::Globals;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Default, Args)]
pub struct DisaggArgs {
    /// Trained artifacts JSON.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
    /// House dataset directory or manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Day columns to disaggregate, as START:END (end exclusive).
    #[arg(long, value_parser = parse_range)]
    pub days: Option<[usize; 2]>,
    /// Keep negative estimate entries.
    #[arg(long)]
    pub no_clip: bool,
    /// Solve each appliance's sub-problem to convergence, at most this many
    /// inner passes.
    #[arg(long)]
    pub max_inner: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisaggRun {
    pub artifacts: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub days: Option<[usize; 2]>,
    pub options: DisaggOptions,
    /// Shrinkage settings used when the artifacts hold a synthesis model.
    pub synthesis: SynthesisControls,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    pub label: String,
    pub file: String,
}

/// Run report written next to the estimate CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisaggReport {
    pub model: Model,
    pub house_id: String,
    pub appliances: Vec<EstimateFile>,
    pub days: Vec<String>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub sum_residual: f64,
    pub clipped: bool,
    pub clipped_fraction: Vec<f64>,
}

pub fn resolve(g: &Globals, a: &DisaggArgs) -> Result<(DisaggRun, PathBuf)> {
    let layer = Layer::load(g.config.as_deref(), "disaggregate")?;
    let mut run: DisaggRun = layer.parse()?;
    run.artifacts = Some(pick_path(a.artifacts.as_ref(), &layer, run.artifacts.as_ref(), "artifacts")?);
    run.data = Some(pick_path(a.data.as_ref(), &layer, run.data.as_ref(), "data")?);
    if a.days.is_some() {
        run.days = a.days;
    }
    if a.no_clip {
        run.options.clip = false;
    }
    if let Some(max_inner) = a.max_inner {
        let tol = match run.options.subproblem {
            Subproblem::Converged { tol, .. } => tol,
            Subproblem::SinglePass => 1e-10,
        };
        run.options.subproblem = Subproblem::Converged { max_inner, tol };
    }
    if let Some(s) = g.seed {
        run.synthesis.seed = s;
    }
    run.synthesis.validate()?;
    let out = match (&g.out, &run.out) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => layer.rebase(o)?,
        (None, None) => absolute(&PathBuf::from("out"))?,
    };
    Ok((run, out))
}

/// Fails with the symmetric difference when the label sets differ.
pub fn check_appliances(model: &[String], data: &[String]) -> Result<()> {
    let a: BTreeSet<&String> = model.iter().collect();
    let b: BTreeSet<&String> = data.iter().collect();
    if a == b {
        return Ok(());
    }
    let only = |x: &BTreeSet<&String>, y: &BTreeSet<&String>| {
        x.difference(y).map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
    };
    Err(Error::Mismatch(format!(
        "appliance sets differ; only in artifacts: [{}]; only in dataset: [{}]",
        only(&a, &b),
        only(&b, &a)
    )))
}

pub fn run(g: &Globals, a: &DisaggArgs) -> Result<()> {
    let (run, out) = resolve(g, a)?;
    let art = TrainArtifacts::read(run.artifacts.as_ref().expect("resolved"))?;
    let house = select_days(&load_house(run.data.as_ref().expect("resolved"))?, run.days)?;
    check_appliances(&art.appliances(), &house.labels())?;
    let res = disaggregate_model(&art, house.aggregate(), &run.options, &run.synthesis)?;

    ensure_dir(&out)?;
    let mut files = Vec::new();
    for m in res.day_matrices(house.aggregate())? {
        let file = format!("{}.csv", file_stem(m.channel_id()));
        write_day_matrix_csv(&out.join(&file), &m)?;
        files.push(EstimateFile { label: m.channel_id().to_string(), file });
    }
    let report = DisaggReport {
        model: art.model,
        house_id: house.house_id().to_string(),
        appliances: files,
        days: house.aggregate().day_labels().iter().map(|d| d.to_string()).collect(),
        iterations: res.iterations(),
        converged: res.converged,
        objective_trace: res.objective_trace.clone(),
        sum_residual: res.sum_residual,
        clipped: res.clipped,
        clipped_fraction: res.clipped_fraction.clone(),
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    write_snapshot(&out, "disaggregate", &run)?;
    println!(
        "disaggregate: {} appliances x {} days, {} iterations, sum residual {:.3e} -> {}",
        report.appliances.len(),
        report.days.len(),
        report.iterations,
        report.sum_residual,
        out.display()
    );
    Ok(())
}
