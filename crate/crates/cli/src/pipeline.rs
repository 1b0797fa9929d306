//! Model dispatch shared by the single-step commands and the benchmark.

use cosparse_core::analysis::{self, Hyperparams};
use cosparse_core::artifacts::{Model, TrainArtifacts};
use cosparse_core::datapipe::{DayMatrix, HouseDataset};
use cosparse_core::disagg::{disaggregate_with, DisaggOptions, DisaggResult};
use cosparse_core::metrics::{evaluate, MetricsReport};
use cosparse_core::synthesis::{disaggregate_synthesis, train_synthesis, SynthesisControls};
use cosparse_core::{Error, Result};

/// Trains `model` on every appliance of `house`. Synthesis bases are learned
/// per appliance with `h.lambda`, `h.atoms` and appliance seed `h.seed + i`.
pub fn train_model(
    house: &HouseDataset,
    model: Model,
    h: &Hyperparams,
    c: &SynthesisControls,
) -> Result<TrainArtifacts> {
    match model.formulation() {
        Some(form) => analysis::train(house.appliances(), h, form),
        None => {
            h.validate()?;
            let mut dicts = Vec::new();
            let mut traces = Vec::new();
            for (i, a) in house.appliances().iter().enumerate() {
                let ci = SynthesisControls { seed: h.appliance_seed(i), ..c.clone() };
                let fit = train_synthesis(a, h.atoms, h.lambda, &ci)?;
                dicts.push(fit.dict);
                traces.push(fit.trace);
            }
            TrainArtifacts::synthesis(h.clone(), dicts, traces)
        }
    }
}

pub fn disaggregate_model(
    art: &TrainArtifacts,
    aggregate: &DayMatrix,
    opts: &DisaggOptions,
    c: &SynthesisControls,
) -> Result<DisaggResult> {
    if art.slots_per_day() != aggregate.slots_per_day() {
        return Err(Error::Mismatch(format!(
            "model has {} slots per day, aggregate {}",
            art.slots_per_day(),
            aggregate.slots_per_day()
        )));
    }
    if art.model == Model::Synthesis {
        disaggregate_synthesis(aggregate, &art.synthesis_dicts()?, art.hyper.lambda, c, opts.clip)
    } else {
        disaggregate_with(aggregate, &art.analysis_dicts()?, &art.hyper, opts)
    }
}

/// Scores estimates against the same-labelled appliances of `truth`.
pub fn score(estimates: &[DayMatrix], truth: &HouseDataset) -> Result<MetricsReport> {
    let t = estimates
        .iter()
        .map(|e| {
            truth
                .appliance(e.channel_id())
                .cloned()
                .ok_or_else(|| Error::Mismatch(format!("no truth for appliance `{}`", e.channel_id())))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(estimates, &t, truth.aggregate())
}

/// Column range `[start, end)` of the house, or the whole house.
pub fn select_days(house: &HouseDataset, range: Option<[usize; 2]>) -> Result<HouseDataset> {
    match range {
        None => Ok(house.clone()),
        Some([a, b]) if a < b && b <= house.days() => house.select_days(&(a..b).collect::<Vec<_>>()),
        Some([a, b]) => Err(Error::Config {
            field: "days".into(),
            msg: format!("range {a}:{b} is empty or exceeds the {} available days", house.days()),
        }),
    }
}

/// clap parser for `START:END` day ranges.
pub fn parse_range(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let a = a.trim().parse().map_err(|_| format!("bad start `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad end `{b}`"))?;
    Ok([a, b])
}
