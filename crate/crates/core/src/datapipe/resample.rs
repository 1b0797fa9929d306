use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::{epoch_day_to_date, DayMatrix, TimeSeries, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::numkernels::Matrix;

/// Slot-aligned means of one channel. `values[k]` covers
/// `[(first_slot + k)·slot_seconds, (first_slot + k + 1)·slot_seconds)`;
/// `None` marks a window with too few samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSeries {
    pub channel_id: String,
    pub slot_seconds: i64,
    pub first_slot: i64,
    pub values: Vec<Option<f64>>,
}

impl SlotSeries {
    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

/// Native sampling period: the median spacing of consecutive samples.
fn sample_period(ts: &[i64], slot_seconds: i64) -> i64 {
    if ts.len() < 2 {
        return slot_seconds;
    }
    let mut gaps: Vec<i64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    gaps[gaps.len() / 2].max(1)
}

/// Averages samples into aligned windows of `slot_seconds`.
///
/// A window is kept only if it holds at least half of the samples expected at
/// the series' native sampling period.
pub fn resample_mean(ts: &TimeSeries, slot_seconds: i64) -> Result<SlotSeries> {
    if slot_seconds < 1 {
        return Err(Error::invalid(format!("slot_seconds must be >= 1, got {slot_seconds}")));
    }
    if ts.is_empty() {
        return Err(Error::invalid(format!("channel `{}` has no samples", ts.channel_id())));
    }
    let period = sample_period(ts.timestamps(), slot_seconds);
    let expected = (slot_seconds as f64 / period as f64).max(1.0);

    let first_slot = ts.timestamps()[0].div_euclid(slot_seconds);
    let last_slot = ts.timestamps()[ts.len() - 1].div_euclid(slot_seconds);
    let width = (last_slot - first_slot + 1) as usize;
    let mut sums = vec![0.0_f64; width];
    let mut counts = vec![0_usize; width];
    for (&t, &v) in ts.timestamps().iter().zip(ts.values()) {
        let k = (t.div_euclid(slot_seconds) - first_slot) as usize;
        sums[k] += v;
        counts[k] += 1;
    }
    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if (c as f64) < 0.5 * expected { None } else { Some(s / c as f64) })
        .collect();
    Ok(SlotSeries { channel_id: ts.channel_id().to_string(), slot_seconds, first_slot, values })
}

/// A day matrix plus the calendar days that were dropped for missing slots.
#[derive(Debug, Clone, PartialEq)]
pub struct DayBuild {
    pub matrix: DayMatrix,
    pub dropped: Vec<NaiveDate>,
}

/// Reshapes a resampled series into a `slots_per_day × days` matrix on UTC
/// day boundaries. Incomplete days are dropped and reported.
pub fn build_day_matrix(series: &SlotSeries, slots_per_day: usize) -> Result<DayBuild> {
    if slots_per_day == 0 || series.slot_seconds * slots_per_day as i64 != SECONDS_PER_DAY {
        return Err(Error::invalid(format!("{} slots of {} s do not tile a day", slots_per_day, series.slot_seconds)));
    }
    let d = slots_per_day as i64;
    let mut days: BTreeMap<i64, Vec<Option<f64>>> = BTreeMap::new();
    for (k, v) in series.values.iter().enumerate() {
        let slot = series.first_slot + k as i64;
        let row = days.entry(slot.div_euclid(d)).or_insert_with(|| vec![None; slots_per_day]);
        row[slot.rem_euclid(d) as usize] = *v;
    }

    let mut dropped = Vec::new();
    let mut complete: Vec<(i64, Vec<f64>)> = Vec::new();
    for (day, slots) in days {
        match slots.iter().copied().collect::<Option<Vec<f64>>>() {
            Some(col) => complete.push((day, col)),
            None => dropped.push(epoch_day_to_date(day)),
        }
    }
    if complete.is_empty() {
        return Err(Error::EmptyData(format!("channel `{}` has no complete day", series.channel_id)));
    }
    let n = complete.len();
    let mut values = Matrix::zeros(slots_per_day, n);
    for (j, (_, col)) in complete.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    let labels = complete.iter().map(|(day, _)| epoch_day_to_date(*day)).collect();
    Ok(DayBuild { matrix: DayMatrix::new(series.channel_id.clone(), labels, values)?, dropped })
}
