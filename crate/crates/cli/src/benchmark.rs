//! Training-volume sweeps: every (house, fraction, model, replication) cell
//! runs split, train, disaggregate and evaluate independently.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cosparse_core::analysis::Hyperparams;
use cosparse_core::artifacts::Model;
use cosparse_core::datapipe::{
    load_house, split_testing_mode, split_training_mode, synth_generate, HouseDataset, SynthConfig,
};
use cosparse_core::disagg::DisaggOptions;
use cosparse_core::metrics::{paired_t_test, summarize_splits, Alpha};
use cosparse_core::synthesis::SynthesisControls;
use cosparse_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{absolute, csv_text, ensure_dir, parse_enum, write_snapshot, write_text, Layer};
use crate::pipeline::{disaggregate_model, score, train_model};
use crate::train::{sync_seeds, HyperArgs};
use crate::Globals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Random day splits inside each house.
    #[default]
    Training,
    /// Train on one whole house, test on every other house.
    Testing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetHouse {
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathHouse {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HouseSource {
    Preset(PresetHouse),
    Path(PathHouse),
}

impl HouseSource {
    pub fn load(&self) -> Result<HouseDataset> {
        match self {
            HouseSource::Preset(p) => {
                let mut cfg = SynthConfig::preset(&p.preset)?;
                if let Some(d) = p.days {
                    cfg.days = d;
                }
                synth_generate(&cfg, p.seed)
            }
            HouseSource::Path(p) => load_house(&p.path),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated training fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Comma-separated models.
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<Model>)]
    pub models: Option<Vec<Model>>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkRun {
    /// Base seed; replication `r` uses `seed + r` for its split and solvers.
    pub seed: u64,
    pub houses: Vec<HouseSource>,
    pub protocol: Protocol,
    pub fractions: Vec<f64>,
    pub models: Vec<Model>,
    pub replications: usize,
    pub alpha: Alpha,
    pub threads: Option<usize>,
    pub hyperparams: Hyperparams,
    pub synthesis: SynthesisControls,
    pub disagg: DisaggOptions,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for BenchmarkRun {
    fn default() -> Self {
        Self {
            seed: 0,
            houses: vec![HouseSource::Preset(PresetHouse { preset: "household".into(), seed: 0, days: None })],
            protocol: Protocol::Training,
            fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            models: Model::ALL.to_vec(),
            replications: 20,
            alpha: Alpha::P01,
            threads: None,
            hyperparams: Hyperparams::default(),
            synthesis: SynthesisControls::default(),
            disagg: DisaggOptions::default(),
            out: None,
        }
    }
}

impl BenchmarkRun {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config { field: field.into(), msg });
        if self.houses.is_empty() {
            return bad("houses", "at least one house is required".into());
        }
        if self.models.is_empty() {
            return bad("models", "at least one model is required".into());
        }
        if self.replications == 0 {
            return bad("replications", "must be >= 1".into());
        }
        match self.protocol {
            Protocol::Training => {
                if self.fractions.is_empty() {
                    return bad("fractions", "at least one training fraction is required".into());
                }
                if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
                    return bad("fractions", format!("{f} is outside (0, 1)"));
                }
            }
            Protocol::Testing if self.houses.len() < 2 => {
                return bad("houses", "the testing protocol needs at least 2 houses".into());
            }
            Protocol::Testing => {}
        }
        if self.threads == Some(0) {
            return bad("threads", "must be >= 1".into());
        }
        self.hyperparams.validate()?;
        self.synthesis.validate()
    }
}

pub fn resolve(g: &Globals, a: &BenchmarkArgs) -> Result<(BenchmarkRun, PathBuf)> {
    let layer = Layer::load(g.config.as_deref(), "benchmark")?;
    let mut run: BenchmarkRun = layer.parse()?;
    for h in &mut run.houses {
        if let HouseSource::Path(p) = h {
            p.path = layer.rebase(&p.path)?;
        }
    }
    if let Some(f) = &a.fractions {
        run.fractions = f.clone();
    }
    if let Some(m) = &a.models {
        run.models = m.clone();
    }
    if let Some(r) = a.replications {
        run.replications = r;
    }
    if let Some(p) = a.protocol {
        run.protocol = p;
    }
    if a.threads.is_some() {
        run.threads = a.threads;
    }
    a.hyper.apply(&mut run.hyperparams);
    if let Some(s) = g.seed {
        run.seed = s;
    }
    sync_seeds(run.seed, &mut run.hyperparams, &mut run.synthesis);
    run.validate()?;
    let out = match (&g.out, &run.out) {
        (Some(o), _) => absolute(o)?,
        (None, Some(o)) => layer.rebase(o)?,
        (None, None) => absolute(&PathBuf::from("out"))?,
    };
    Ok((run, out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub house: usize,
    pub fraction: Option<f64>,
    pub model: Model,
    pub replication: usize,
}

/// One evaluated (or failed) disaggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub house: String,
    pub test_house: String,
    pub fraction: Option<f64>,
    pub model: Model,
    pub replication: usize,
    pub accuracy: Option<f64>,
    pub normalized_error: Vec<(String, Option<f64>)>,
    /// Error category and message of a failed cell.
    pub failure: Option<(String, String)>,
}

pub fn cells(run: &BenchmarkRun) -> Vec<Cell> {
    let mut out = Vec::new();
    for house in 0..run.houses.len() {
        match run.protocol {
            Protocol::Training => {
                for &f in &run.fractions {
                    for &model in &run.models {
                        for replication in 0..run.replications {
                            out.push(Cell { house, fraction: Some(f), model, replication });
                        }
                    }
                }
            }
            Protocol::Testing => {
                for &model in &run.models {
                    out.push(Cell { house, fraction: None, model, replication: 0 });
                }
            }
        }
    }
    out
}

/// Distinct display names, suffixing repeated house ids with their index.
fn house_names(houses: &[HouseDataset]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(houses.len());
    for (i, h) in houses.iter().enumerate() {
        let id = h.house_id().to_string();
        names.push(if names.contains(&id) { format!("{id}_{i}") } else { id });
    }
    names
}

struct Context<'a> {
    run: &'a BenchmarkRun,
    houses: &'a [HouseDataset],
    names: &'a [String],
}

impl Context<'_> {
    fn row(&self, cell: &Cell, test: usize) -> Row {
        Row {
            house: self.names[cell.house].clone(),
            test_house: self.names[test].clone(),
            fraction: cell.fraction,
            model: cell.model,
            replication: cell.replication,
            accuracy: None,
            normalized_error: Vec::new(),
            failure: None,
        }
    }

    fn scored(&self, mut row: Row, model: &cosparse_core::artifacts::TrainArtifacts, test: &HouseDataset) -> Row {
        let r = disaggregate_model(model, test.aggregate(), &self.run.disagg, &self.run.synthesis)
            .and_then(|res| res.day_matrices(test.aggregate()))
            .and_then(|est| score(&est, test));
        match r {
            Ok(m) => {
                row.accuracy = Some(m.accuracy);
                row.normalized_error = m.appliances.into_iter().zip(m.per_appliance_normalized_error).collect();
            }
            Err(e) => row.failure = Some((e.category().into(), e.to_string())),
        }
        row
    }

    fn seeded(&self, replication: usize) -> (Hyperparams, SynthesisControls) {
        let mut h = self.run.hyperparams.clone();
        let mut c = self.run.synthesis.clone();
        sync_seeds(self.run.seed.wrapping_add(replication as u64), &mut h, &mut c);
        (h, c)
    }

    fn execute(&self, cell: &Cell) -> Vec<Row> {
        let (h, c) = self.seeded(cell.replication);
        let fail = |rows: Vec<Row>, e: Error| {
            rows.into_iter()
                .map(|mut r| {
                    r.failure = Some((e.category().into(), e.to_string()));
                    r
                })
                .collect()
        };
        match cell.fraction {
            Some(f) => {
                let row = self.row(cell, cell.house);
                let seed = self.run.seed.wrapping_add(cell.replication as u64);
                let trained = split_training_mode(&self.houses[cell.house], f, seed)
                    .and_then(|(train, test)| Ok((train_model(&train, cell.model, &h, &c)?, test)));
                match trained {
                    Ok((model, test)) => vec![self.scored(row, &model, &test)],
                    Err(e) => fail(vec![row], e),
                }
            }
            None => {
                let tests: Vec<usize> = (0..self.houses.len()).filter(|&t| t != cell.house).collect();
                let rows: Vec<Row> = tests.iter().map(|&t| self.row(cell, t)).collect();
                let split = match split_testing_mode(self.houses, cell.house) {
                    Ok(s) => s,
                    Err(e) => return fail(rows, e),
                };
                match train_model(&split.train, cell.model, &h, &c) {
                    Ok(model) => rows.into_iter().zip(&split.test).map(|(r, t)| self.scored(r, &model, t)).collect(),
                    Err(e) => fail(rows, e),
                }
            }
        }
    }
}

/// Runs every cell on a worker pool; rows come back in cell order.
pub fn execute(run: &BenchmarkRun) -> Result<(Vec<Row>, Vec<String>)> {
    let houses = run.houses.iter().map(HouseSource::load).collect::<Result<Vec<_>>>()?;
    let names = house_names(&houses);
    let ctx = Context { run, houses: &houses, names: &names };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config { field: "threads".into(), msg: e.to_string() })?;
    let cells = cells(run);
    let rows: Vec<Vec<Row>> = pool.install(|| cells.par_iter().map(|c| ctx.execute(c)).collect());
    let mut labels: Vec<String> = Vec::new();
    for h in &houses {
        for l in h.labels() {
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
    }
    Ok((rows.into_iter().flatten().collect(), labels))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn results_csv(rows: &[Row], labels: &[String]) -> Result<String> {
    let mut header: Vec<String> =
        ["house", "test_house", "fraction", "model", "replication", "status", "accuracy"].map(String::from).to_vec();
    header.extend(labels.iter().map(|l| format!("ne:{l}")));
    header.push("error".into());
    let body = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.house.clone(),
                r.test_house.clone(),
                opt(r.fraction),
                r.model.to_string(),
                r.replication.to_string(),
                r.failure.as_ref().map_or("ok".into(), |(c, _)| c.clone()),
                opt(r.accuracy),
            ];
            for l in labels {
                v.push(opt(r.normalized_error.iter().find(|(k, _)| k == l).and_then(|(_, e)| *e)));
            }
            v.push(r.failure.as_ref().map(|(_, m)| m.clone()).unwrap_or_default());
            v
        })
        .collect();
    csv_text(header, body)
}

type GroupKey = (String, Option<f64>, Model);

/// Rows sharing (house, fraction, model), in first-appearance order.
fn groups(rows: &[Row]) -> Vec<(GroupKey, Vec<&Row>)> {
    let mut out: Vec<(GroupKey, Vec<&Row>)> = Vec::new();
    for r in rows {
        let key = (r.house.clone(), r.fraction, r.model);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    out
}

pub fn summary_csv(rows: &[Row]) -> Result<String> {
    let header = ["house", "fraction", "model", "cells", "failed", "mean_accuracy", "std_accuracy", "std_defined"]
        .map(String::from)
        .to_vec();
    let body = groups(rows)
        .into_iter()
        .map(|((house, fraction, model), g)| {
            let acc: Vec<f64> = g.iter().filter_map(|r| r.accuracy).collect();
            let s = summarize_splits(&acc).ok();
            vec![
                house,
                opt(fraction),
                model.to_string(),
                g.len().to_string(),
                (g.len() - acc.len()).to_string(),
                opt(s.map(|s| s.mean)),
                opt(s.map(|s| s.std)),
                s.map(|s| s.std_defined.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    csv_text(header, body)
}

pub fn ttests_csv(rows: &[Row], models: &[Model], alpha: Alpha) -> Result<String> {
    let header = [
        "house",
        "fraction",
        "model_a",
        "model_b",
        "pairs",
        "mean_a",
        "mean_b",
        "t",
        "df",
        "critical",
        "alpha",
        "significant",
        "infinite",
        "note",
    ]
    .map(String::from)
    .to_vec();
    let mut keys: Vec<(String, Option<f64>)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.house.clone(), r.fraction)) {
            keys.push((r.house.clone(), r.fraction));
        }
    }
    let mut body = Vec::new();
    for (house, fraction) in keys {
        let of = |m: Model| -> Vec<&Row> {
            rows.iter().filter(|r| r.house == house && r.fraction == fraction && r.model == m).collect()
        };
        for (i, &ma) in models.iter().enumerate() {
            for &mb in &models[i + 1..] {
                let (ra, rb) = (of(ma), of(mb));
                let mut a = Vec::new();
                let mut b = Vec::new();
                for x in &ra {
                    let partner = rb.iter().find(|y| y.replication == x.replication && y.test_house == x.test_house);
                    if let (Some(va), Some(vb)) = (x.accuracy, partner.and_then(|y| y.accuracy)) {
                        a.push(va);
                        b.push(vb);
                    }
                }
                let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
                let mut row = vec![
                    house.clone(),
                    opt(fraction),
                    ma.to_string(),
                    mb.to_string(),
                    a.len().to_string(),
                    opt(mean(&a)),
                    opt(mean(&b)),
                ];
                match paired_t_test(&a, &b, alpha) {
                    Ok(t) => row.extend([
                        t.t.to_string(),
                        t.df.to_string(),
                        t.critical.to_string(),
                        alpha.value().to_string(),
                        t.significant.to_string(),
                        t.infinite.to_string(),
                        String::new(),
                    ]),
                    Err(e) => {
                        row.extend(std::iter::repeat_n(String::new(), 3));
                        row.push(alpha.value().to_string());
                        row.extend([String::new(), String::new(), e.to_string()]);
                    }
                }
                body.push(row);
            }
        }
    }
    csv_text(header, body)
}

/// Mean accuracy in percent per house and model, one block per fraction,
/// each closed by an `aggregate` row averaging the houses.
pub fn table_csv(rows: &[Row], models: &[Model]) -> Result<String> {
    let mut header = vec!["fraction".to_string(), "house".to_string()];
    header.extend(models.iter().map(|m| m.to_string()));
    let mut fractions: Vec<Option<f64>> = Vec::new();
    let mut houses: Vec<String> = Vec::new();
    for r in rows {
        if !fractions.contains(&r.fraction) {
            fractions.push(r.fraction);
        }
        if !houses.contains(&r.house) {
            houses.push(r.house.clone());
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let pct = |v: Option<f64>| v.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_default();
    let mut body = Vec::new();
    for f in fractions {
        let mut per_model: Vec<Vec<f64>> = vec![Vec::new(); models.len()];
        for h in &houses {
            let mut line = vec![opt(f), h.clone()];
            for (k, &m) in models.iter().enumerate() {
                let acc: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.fraction == f && &r.house == h && r.model == m)
                    .filter_map(|r| r.accuracy)
                    .collect();
                let v = mean(&acc);
                if let Some(v) = v {
                    per_model[k].push(v);
                }
                line.push(pct(v));
            }
            body.push(line);
        }
        let mut agg = vec![opt(f), "aggregate".to_string()];
        agg.extend(per_model.iter().map(|v| pct(mean(v))));
        body.push(agg);
    }
    csv_text(header, body)
}

pub fn write_outputs(out: &Path, run: &BenchmarkRun, rows: &[Row], labels: &[String]) -> Result<()> {
    ensure_dir(out)?;
    write_text(&out.join("results.csv"), &results_csv(rows, labels)?)?;
    write_text(&out.join("summary.csv"), &summary_csv(rows)?)?;
    write_text(&out.join("ttests.csv"), &ttests_csv(rows, &run.models, run.alpha)?)?;
    write_text(&out.join("table.csv"), &table_csv(rows, &run.models)?)?;
    write_snapshot(out, "benchmark", run)
}

pub fn run(g: &Globals, a: &BenchmarkArgs) -> Result<()> {
    let (run, out) = resolve(g, a)?;
    let (rows, labels) = execute(&run)?;
    write_outputs(&out, &run, &rows, &labels)?;
    let failed = rows.iter().filter(|r| r.failure.is_some()).count();
    println!("benchmark: {} results, {failed} failed -> {}", rows.len(), out.display());
    if failed == rows.len() {
        let first = rows.iter().find_map(|r| r.failure.as_ref()).map(|(_, m)| m.as_str()).unwrap_or("");
        return Err(Error::Protocol(format!("all {} benchmark cells failed; first failure: {first}", rows.len())));
    }
    Ok(())
}
