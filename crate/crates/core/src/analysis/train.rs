use super::{AnalysisDict, ApplianceTrace, Formulation, Hyperparams, TrainState};
use crate::artifacts::{Model, TrainArtifacts};
use crate::datapipe::DayMatrix;
use crate::error::{Error, Result};
use crate::numkernels::all_finite;

fn relative_change_below(prev: f64, cur: f64, tol: f64) -> bool {
    (cur - prev).abs() <= tol * prev.abs().max(cur.abs())
}

fn diverged(state: &TrainState, i: usize) -> bool {
    let p = &state.parts[i];
    !(all_finite(&p.dict) && all_finite(&p.estimate) && all_finite(&p.proxy) && all_finite(&p.bregman))
}

fn sweep(state: &mut TrainState, i: usize, h: &Hyperparams, form: Formulation) -> Result<()> {
    state.dictionary_step(i, h, form)?;
    state.estimate_step(i, h, form)?;
    state.proxy_step(i, h)?;
    state.bregman_step(i, h)
}

/// Runs one pass of dictionary, estimate, proxy and Bregman steps for every
/// active appliance per outer iteration, in ascending index order.
///
/// Each appliance stops on its own once the relative change of its objective
/// drops below `tol`; a stopped appliance keeps its variables and still
/// couples into the others' updates.
pub(crate) fn run(state: &mut TrainState, h: &Hyperparams, form: Formulation) -> Result<Vec<ApplianceTrace>> {
    let n_app = state.len();
    let mut traces: Vec<ApplianceTrace> =
        state.parts.iter().map(|p| ApplianceTrace { appliance: p.label.clone(), ..Default::default() }).collect();
    let mut active = vec![true; n_app];

    for k in 1..=h.max_outer {
        for i in 0..n_app {
            if !active[i] {
                continue;
            }
            let step = sweep(state, i, h, form);
            let divergence = || Error::Divergence { appliance: state.parts[i].label.clone(), iteration: k };
            let f = state.appliance_objective(i, h, form);
            if diverged(state, i) || !f.is_finite() {
                return Err(divergence());
            }
            step?;
            let t = &mut traces[i];
            if let Some(&prev) = t.objective.last() {
                if relative_change_below(prev, f, h.tol) {
                    active[i] = false;
                    t.converged = true;
                }
            }
            t.objective.push(f);
            t.constraint_residual.push(state.constraint_residual(i));
        }
        state.iteration = k;
        if active.iter().all(|a| !a) {
            break;
        }
    }
    Ok(traces)
}

fn targets(xs: &[DayMatrix]) -> Vec<(String, crate::numkernels::Matrix)> {
    xs.iter().map(|x| (x.channel_id().to_string(), x.values().clone())).collect()
}

fn check_labels(xs: &[DayMatrix]) -> Result<()> {
    for (i, a) in xs.iter().enumerate() {
        if xs[..i].iter().any(|b| b.channel_id() == a.channel_id()) {
            return Err(Error::invalid(format!("duplicate appliance `{}`", a.channel_id())));
        }
    }
    Ok(())
}

/// Trains one appliance's dictionary in isolation.
pub fn train_simple(x: &DayMatrix, h: &Hyperparams) -> Result<(AnalysisDict, ApplianceTrace)> {
    let mut state = TrainState::init(&targets(std::slice::from_ref(x)), h)?;
    let mut traces = run(&mut state, h, Formulation::Simple)?;
    let part = state.parts.pop().expect("one appliance");
    Ok((AnalysisDict::new(part.label, part.dict)?, traces.pop().expect("one trace")))
}

/// Trains all appliances jointly under `form`. The simple formulation trains
/// each appliance independently (appliance `i` seeded with `seed + i`).
pub fn train(xs: &[DayMatrix], h: &Hyperparams, form: Formulation) -> Result<TrainArtifacts> {
    if xs.is_empty() {
        return Err(Error::invalid("training needs at least one appliance"));
    }
    if form != Formulation::Simple && xs.len() < 2 {
        return Err(Error::invalid(format!("{form} training needs at least 2 appliances, got {}", xs.len())));
    }
    check_labels(xs)?;
    let mut state = TrainState::init(&targets(xs), h)?;
    let traces = run(&mut state, h, form)?;
    let dicts = state.parts.into_iter().map(|p| AnalysisDict::new(p.label, p.dict)).collect::<Result<Vec<_>>>()?;
    TrainArtifacts::analysis(Model::from(form), h.clone(), dicts, traces)
}

pub fn train_distinctive(xs: &[DayMatrix], h: &Hyperparams) -> Result<TrainArtifacts> {
    train(xs, h, Formulation::Distinctive)
}

pub fn train_disaggregating(xs: &[DayMatrix], h: &Hyperparams) -> Result<TrainArtifacts> {
    train(xs, h, Formulation::Disaggregating)
}
