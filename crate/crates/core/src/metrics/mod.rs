//! Disaggregation accuracy, normalized error, split summaries and paired
//! t-tests.

mod ttable;

use serde::{Deserialize, Serialize};

use crate::datapipe::DayMatrix;
use crate::error::{Error, Result};

fn check_pair(est: &DayMatrix, truth: &DayMatrix) -> Result<()> {
    if est.values().shape() != truth.values().shape() {
        return Err(Error::invalid(format!(
            "estimate `{}` has shape {:?}, truth `{}` has {:?}",
            est.channel_id(),
            est.values().shape(),
            truth.channel_id(),
            truth.values().shape()
        )));
    }
    Ok(())
}

/// `1 − Σ_t Σ_n |ŷ − y| / (2 Σ_t ȳ)` with `ȳ` the metered aggregate.
///
/// Per slot, the absolute errors are accumulated over appliances first, in
/// list order, then over slots.
pub fn disaggregation_accuracy(est: &[DayMatrix], truth: &[DayMatrix], aggregate: &DayMatrix) -> Result<f64> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::invalid(format!("{} estimates for {} truth channels", est.len(), truth.len())));
    }
    for (e, t) in est.iter().zip(truth) {
        check_pair(e, t)?;
        check_pair(e, aggregate)?;
    }
    let agg = aggregate.values();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..agg.len() {
        let mut slot = 0.0;
        for (e, t) in est.iter().zip(truth) {
            slot += (e.values()[k] - t.values()[k]).abs();
        }
        num += slot;
        den += agg[k];
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::UndefinedMetric("aggregate energy is zero".into()));
    }
    Ok(1.0 - num / (2.0 * den))
}

/// `Σ_t |ŷ_t − y_t| / Σ_t y_t` for one appliance.
pub fn normalized_error(est: &DayMatrix, truth: &DayMatrix) -> Result<f64> {
    check_pair(est, truth)?;
    let den: f64 = truth.values().iter().sum();
    if den == 0.0 {
        return Err(Error::UndefinedMetric(format!("appliance `{}` has zero energy", truth.channel_id())));
    }
    let num: f64 = est.values().iter().zip(truth.values().iter()).map(|(a, b)| (a - b).abs()).sum();
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 when only one value exists.
    pub std: f64,
    /// False when `std` is a placeholder for a single value.
    pub std_defined: bool,
    pub count: usize,
}

/// Mean and sample (n − 1) standard deviation.
pub fn summarize_splits(values: &[f64]) -> Result<SplitSummary> {
    if values.is_empty() {
        return Err(Error::invalid("cannot summarize an empty list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(SplitSummary { mean, std: 0.0, std_defined: false, count: 1 });
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(SplitSummary { mean, std: var.sqrt(), std_defined: true, count: values.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alpha {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.01")]
    P01,
}

impl Alpha {
    pub fn value(self) -> f64 {
        match self {
            Alpha::P05 => 0.05,
            Alpha::P01 => 0.01,
        }
    }

    /// Two-sided critical value; degrees of freedom above 200 use the df = 200
    /// entry.
    pub fn critical(self, df: usize) -> f64 {
        let table = match self {
            Alpha::P05 => &ttable::T_CRIT_05,
            Alpha::P01 => &ttable::T_CRIT_01,
        };
        table[df.clamp(1, table.len()) - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub significant: bool,
    /// Differences are constant and nonzero, so `t` is infinite.
    pub infinite: bool,
}

/// Paired two-sided Student t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: Alpha) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = summarize_splits(&diffs)?;
    let df = diffs.len() - 1;
    let critical = alpha.critical(df);
    if s.mean == 0.0 {
        return Ok(TTest { t: 0.0, df, critical, significant: false, infinite: false });
    }
    if s.std == 0.0 {
        let t = f64::INFINITY.copysign(s.mean);
        return Ok(TTest { t, df, critical, significant: true, infinite: true });
    }
    let t = s.mean / (s.std / (diffs.len() as f64).sqrt());
    Ok(TTest { t, df, critical, significant: t.abs() > critical, infinite: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub appliances: Vec<String>,
    /// `None` where the appliance's true energy is zero.
    pub per_appliance_normalized_error: Vec<Option<f64>>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub split_count: usize,
}

/// Accuracy and normalized errors of one disaggregation run.
pub fn evaluate(est: &[DayMatrix], truth: &[DayMatrix], aggregate: &DayMatrix) -> Result<MetricsReport> {
    let accuracy = disaggregation_accuracy(est, truth, aggregate)?;
    let per_appliance_normalized_error = est
        .iter()
        .zip(truth)
        .map(|(e, t)| match normalized_error(e, t) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(other) => Err(other),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        accuracy,
        appliances: truth.iter().map(|t| t.channel_id().to_string()).collect(),
        per_appliance_normalized_error,
        mean_accuracy: accuracy,
        std_accuracy: 0.0,
        split_count: 1,
    })
}
