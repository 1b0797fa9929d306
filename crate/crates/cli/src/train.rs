use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use cosparse_core::analysis::{BregmanInit, BregmanVariant, Hyperparams, IncoherenceVariant};
use cosparse_core::artifacts::Model;
use cosparse_core::datapipe::{file_stem, load_house};
use cosparse_core::synthesis::SynthesisControls;
use cosparse_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, ensure_dir, parse_enum, pick_path, write_snapshot, write_text, Layer};
use crate::pipeline::{parse_range, select_days, train_model};
use crate::Globals;

pub const ARTIFACTS_FILE: &str = "artifacts.json";

/// Hyperparameter flags shared by `train` and `benchmark`.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Atoms per appliance dictionary.
    #[arg(long)]
    pub atoms: Option<usize>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub ls_eps: Option<f64>,
    /// standard or paper_literal.
    #[arg(long, value_parser = parse_enum::<BregmanVariant>)]
    pub bregman_variant: Option<BregmanVariant>,
    /// literal_dxd or cross_gram_pxp.
    #[arg(long, value_parser = parse_enum::<IncoherenceVariant>)]
    pub incoherence_variant: Option<IncoherenceVariant>,
    /// ones or zeros.
    #[arg(long, value_parser = parse_enum::<BregmanInit>)]
    pub bregman_init: Option<BregmanInit>,
}

impl HyperArgs {
    pub fn apply(&self, h: &mut Hyperparams) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { h.$f = v; })*};
        }
        set!(lambda, mu, eta, gamma, atoms, max_outer, tol, ls_eps, bregman_variant, incoherence_variant, bregman_init);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// House dataset directory or manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// simple, distinctive, disaggregating or synthesis.
    #[arg(long, value_parser = parse_enum::<Model>)]
    pub model: Option<Model>,
    /// Day columns to train on, as START:END (end exclusive).
    #[arg(long, value_parser = parse_range)]
    pub days: Option<[usize; 2]>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub model: Model,
    pub days: Option<[usize; 2]>,
    pub hyperparams: Hyperparams,
    pub synthesis: SynthesisControls,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            model: Model::Simple,
            days: None,
            hyperparams: Hyperparams::default(),
            synthesis: SynthesisControls::default(),
            out: None,
        }
    }
}

/// Copies the run seed into the nested solver settings.
pub fn sync_seeds(seed: u64, h: &mut Hyperparams, c: &mut SynthesisControls) {
    h.seed = seed;
    c.seed = seed;
}

pub fn resolve(g: &Globals, a: &TrainArgs) -> Result<(TrainRun, PathBuf)> {
    let layer = Layer::load(g.config.as_deref(), "train")?;
    let mut run: TrainRun = layer.parse()?;
    run.data = Some(pick_path(a.data.as_ref(), &layer, run.data.as_ref(), "data")?);
    if let Some(m) = a.model {
        run.model = m;
    }
    if a.days.is_some() {
        run.days = a.days;
    }
    a.hyper.apply(&mut run.hyperparams);
    if let Some(s) = g.seed {
        run.seed = s;
    }
    sync_seeds(run.seed, &mut run.hyperparams, &mut run.synthesis);
    run.hyperparams.validate()?;
    run.synthesis.validate()?;
    let out = match (&g.out, &run.out) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => layer.rebase(o)?,
        (None, None) => absolute(&PathBuf::from("out"))?,
    };
    Ok((run, out))
}

pub fn run(g: &Globals, a: &TrainArgs) -> Result<()> {
    let (run, out) = resolve(g, a)?;
    let house = select_days(&load_house(run.data.as_ref().expect("resolved"))?, run.days)?;
    let art = train_model(&house, run.model, &run.hyperparams, &run.synthesis)?;

    ensure_dir(&out)?;
    art.write(&out.join(ARTIFACTS_FILE))?;
    let traces = out.join("traces");
    ensure_dir(&traces)?;
    // Synthesis traces open with the objective at initialization.
    let first = usize::from(run.model != Model::Synthesis);
    for t in &art.traces {
        let mut csv = String::from("iteration,objective,constraint_residual\n");
        for (k, f) in t.objective.iter().enumerate() {
            let r = t.constraint_residual.get(k).map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(csv, "{},{f},{r}", k + first);
        }
        write_text(&traces.join(format!("{}.csv", file_stem(&t.appliance))), &csv)?;
    }
    write_snapshot(&out, "train", &run)?;
    println!(
        "train: {} model, {} dictionaries on {} days -> {}",
        run.model,
        art.dictionaries.len(),
        house.days(),
        out.display()
    );
    for t in &art.traces {
        println!("  {}: {} iterations, converged = {}", t.appliance, t.iterations(), t.converged);
    }
    Ok(())
}
