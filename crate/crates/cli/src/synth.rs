use std::path::PathBuf;

use clap::Args;
use cosparse_core::datapipe::{synth_generate, write_house, SynthConfig};
use cosparse_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, ensure_dir, write_json, write_snapshot, Layer};
use crate::{CliError, Globals};

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    /// Built-in configuration: disjoint_support or household.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of days to generate.
    #[arg(long)]
    pub days: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRun {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<SynthConfig>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ApplianceSummary {
    label: String,
    mean_watts: f64,
    active_fraction: f64,
}

#[derive(Debug, Serialize)]
struct GenerationReport {
    house_id: String,
    seed: u64,
    days: usize,
    slots_per_day: usize,
    coverage: f64,
    appliances: Vec<ApplianceSummary>,
}

/// Accepts a run config or a bare synthetic dataset config.
fn load(g: &Globals) -> Result<(SynthRun, Layer)> {
    let layer = Layer::load(g.config.as_deref(), "synth")?;
    let run = if layer.fields.contains_key("appliances") {
        SynthRun { dataset: Some(layer.parse()?), ..SynthRun::default() }
    } else {
        layer.parse()?
    };
    Ok((run, layer))
}

pub fn resolve(g: &Globals, a: &SynthArgs) -> Result<(SynthRun, PathBuf), CliError> {
    let (mut run, layer) = load(g)?;
    if let Some(p) = &a.preset {
        run.preset = Some(p.clone());
        run.dataset = None;
    }
    let mut cfg = match (run.dataset.take(), run.preset.take()) {
        (Some(d), _) => d,
        (None, Some(p)) => SynthConfig::preset(&p)?,
        (None, None) => {
            return Err(CliError::Usage {
                command: "synth",
                msg: "synth needs --config <FILE> or --preset <NAME>".into(),
            })
        }
    };
    if let Some(d) = a.days {
        cfg.days = d;
    }
    cfg.validate()?;
    if let Some(s) = g.seed {
        run.seed = s;
    }
    let out = match (&g.out, &run.out) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => layer.rebase(o)?,
        (None, None) => absolute(&PathBuf::from("out"))?,
    };
    run.dataset = Some(cfg);
    Ok((run, out))
}

pub fn run(g: &Globals, a: &SynthArgs) -> Result<(), CliError> {
    let (run, out) = resolve(g, a)?;
    let cfg = run.dataset.as_ref().expect("resolved");
    let house = synth_generate(cfg, run.seed)?;
    ensure_dir(&out)?;
    write_house(&out, &house)?;
    let n = (house.slots_per_day() * house.days()) as f64;
    let appliances = house
        .appliances()
        .iter()
        .map(|m| ApplianceSummary {
            label: m.channel_id().to_string(),
            mean_watts: m.total_energy() / n,
            active_fraction: m.values().iter().filter(|v| **v > 0.0).count() as f64 / n,
        })
        .collect();
    let report = GenerationReport {
        house_id: house.house_id().to_string(),
        seed: run.seed,
        days: house.days(),
        slots_per_day: house.slots_per_day(),
        coverage: house.coverage(),
        appliances,
    };
    write_json(&out.join("generation_report.json"), &report)?;
    write_snapshot(&out, "synth", &run)?;
    println!("synth: {} appliances x {} days -> {}", house.appliances().len(), house.days(), out.display());
    Ok(())
}
