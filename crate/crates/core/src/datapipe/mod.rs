//! Ingestion, resampling, day-matrix construction, split protocols and the
//! synthetic household generator.
//!
//! Day boundaries are UTC midnights. A day matrix has one row per time-of-day
//! slot and one column per calendar day.

mod io;
mod resample;
mod split;
mod synth;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::numkernels::Matrix;

pub use io::{
    file_stem, load_house, load_house_with_report, manifest_path, read_channel_csv, read_day_matrix_csv,
    write_channel_csv, write_day_matrix_csv, write_house, DropReport, HouseManifest, ManifestChannel,
};
pub use resample::{build_day_matrix, resample_mean, DayBuild, SlotSeries};
pub use split::{split_testing_mode, split_training_mode, SplitMode, SplitSpec, TestingSplit};
pub use synth::{synth_generate, ApplianceSpec, Signature, SynthConfig};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Default slot count: 10-minute slots over 24 hours.
pub const DEFAULT_SLOTS_PER_DAY: usize = 144;

/// Raw samples of one channel, timestamps in UTC epoch seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    channel_id: String,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(channel_id: impl Into<String>, timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::invalid(format!("{} timestamps but {} values", timestamps.len(), values.len())));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("timestamps not strictly increasing at index {}", i + 1)));
        }
        Ok(Self { channel_id: channel_id.into(), timestamps, values })
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn epoch_day_to_date(day: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(719_163 + day as i32).expect("epoch day out of calendar range")
}

pub fn date_to_epoch_day(date: NaiveDate) -> i64 {
    (date.num_days_from_ce() - 719_163) as i64
}

/// `d × n` power matrix: rows are time-of-day slots, columns are days.
#[derive(Debug, Clone, PartialEq)]
pub struct DayMatrix {
    channel_id: String,
    day_labels: Vec<NaiveDate>,
    values: Matrix,
}

impl DayMatrix {
    pub fn new(channel_id: impl Into<String>, day_labels: Vec<NaiveDate>, values: Matrix) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyData("day matrix needs at least one slot and one day".into()));
        }
        if day_labels.len() != values.ncols() {
            return Err(Error::invalid(format!("{} day labels for {} columns", day_labels.len(), values.ncols())));
        }
        let mut sorted = day_labels.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("day labels must be distinct"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("day matrix entries must be finite"));
        }
        Ok(Self { channel_id: channel_id.into(), day_labels, values })
    }

    /// Wraps a bare matrix, labelling columns with consecutive days from
    /// 1970-01-01.
    pub fn from_matrix(channel_id: impl Into<String>, values: Matrix) -> Result<Self> {
        let labels = (0..values.ncols() as i64).map(epoch_day_to_date).collect();
        Self::new(channel_id, labels, values)
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn slots_per_day(&self) -> usize {
        self.values.nrows()
    }

    pub fn days(&self) -> usize {
        self.values.ncols()
    }

    pub fn day_labels(&self) -> &[NaiveDate] {
        &self.day_labels
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn total_energy(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn with_channel(mut self, channel_id: impl Into<String>) -> Self {
        self.channel_id = channel_id.into();
        self
    }

    /// Same channel with `values` replaced; shape must be unchanged.
    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::invalid("with_values: shape change"));
        }
        Self::new(self.channel_id.clone(), self.day_labels.clone(), values)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_days(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyData("no days selected".into()));
        }
        let labels = columns.iter().map(|&c| self.day_labels[c]).collect();
        let values = self.values.select_columns(columns);
        Self::new(self.channel_id.clone(), labels, values)
    }

    /// Keeps the days whose labels are in `keep`, preserving column order.
    pub fn restrict_to(&self, keep: &[NaiveDate]) -> Result<Self> {
        let cols: Vec<usize> =
            self.day_labels.iter().enumerate().filter(|(_, d)| keep.contains(d)).map(|(i, _)| i).collect();
        self.select_days(&cols)
    }
}

/// One house: per-appliance day matrices (channel id = appliance label) and
/// the metered aggregate, all on the same days.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseDataset {
    house_id: String,
    appliances: Vec<DayMatrix>,
    aggregate: DayMatrix,
    coverage: f64,
}

impl HouseDataset {
    pub fn new(house_id: impl Into<String>, appliances: Vec<DayMatrix>, aggregate: DayMatrix) -> Result<Self> {
        for a in &appliances {
            if a.values().shape() != aggregate.values().shape() {
                return Err(Error::Mismatch(format!(
                    "appliance `{}` has shape {:?}, aggregate {:?}",
                    a.channel_id(),
                    a.values().shape(),
                    aggregate.values().shape()
                )));
            }
            if a.day_labels() != aggregate.day_labels() {
                return Err(Error::Mismatch(format!(
                    "appliance `{}` covers different days than the aggregate",
                    a.channel_id()
                )));
            }
        }
        let mut labels: Vec<&str> = appliances.iter().map(|a| a.channel_id()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate appliance label"));
        }
        let coverage = coverage(&appliances, &aggregate);
        Ok(Self { house_id: house_id.into(), appliances, aggregate, coverage })
    }

    pub fn house_id(&self) -> &str {
        &self.house_id
    }

    pub fn appliances(&self) -> &[DayMatrix] {
        &self.appliances
    }

    pub fn appliance(&self, label: &str) -> Option<&DayMatrix> {
        self.appliances.iter().find(|a| a.channel_id() == label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.appliances.iter().map(|a| a.channel_id().to_string()).collect()
    }

    pub fn aggregate(&self) -> &DayMatrix {
        &self.aggregate
    }

    /// Fraction of aggregate energy explained by the listed appliances.
    pub fn coverage(&self) -> f64 {
        self.coverage
    }

    pub fn slots_per_day(&self) -> usize {
        self.aggregate.slots_per_day()
    }

    pub fn days(&self) -> usize {
        self.aggregate.days()
    }

    pub fn select_days(&self, columns: &[usize]) -> Result<Self> {
        let appliances = self.appliances.iter().map(|a| a.select_days(columns)).collect::<Result<Vec<_>>>()?;
        Self::new(self.house_id.clone(), appliances, self.aggregate.select_days(columns)?)
    }

    /// Keeps only the named appliances (in the given order); the aggregate is
    /// untouched, so coverage drops accordingly.
    pub fn keep_appliances(&self, labels: &[String]) -> Result<Self> {
        let appliances = labels
            .iter()
            .map(|l| {
                self.appliance(l)
                    .cloned()
                    .ok_or_else(|| Error::Mismatch(format!("house `{}` has no appliance `{l}`", self.house_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.house_id.clone(), appliances, self.aggregate.clone())
    }
}

fn coverage(appliances: &[DayMatrix], aggregate: &DayMatrix) -> f64 {
    let total = aggregate.total_energy();
    if total == 0.0 {
        return if appliances.iter().all(|a| a.total_energy() == 0.0) { 1.0 } else { 0.0 };
    }
    // Slot-wise sums in appliance order, matching how an exact aggregate is built.
    let mut explained = 0.0;
    for k in 0..aggregate.values().len() {
        let mut slot = 0.0;
        for a in appliances {
            slot += a.values()[k];
        }
        explained += slot;
    }
    (explained / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn day_matrix_invariants() {
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let d = DayMatrix::from_matrix("a", m.clone()).unwrap();
        assert_eq!(d.slots_per_day(), 2);
        assert_eq!(d.days(), 2);
        assert_eq!(d.day_labels()[0], NaiveDate::from_ymd_opt(1970, 1, 1).unwrap());

        let dup = vec![d.day_labels()[0]; 2];
        assert!(DayMatrix::new("a", dup, m.clone()).is_err());
        assert!(DayMatrix::new("a", vec![d.day_labels()[0]], m).is_err());
    }

    #[test]
    fn epoch_day_round_trip() {
        for day in [-5, 0, 1, 15_000, 20_000] {
            assert_eq!(date_to_epoch_day(epoch_day_to_date(day)), day);
        }
        assert_eq!(epoch_day_to_date(15_083), NaiveDate::from_ymd_opt(2011, 4, 19).unwrap());
    }

    #[test]
    fn house_coverage() {
        let a = DayMatrix::from_matrix("a", dmatrix![1.0, 1.0]).unwrap();
        let b = DayMatrix::from_matrix("b", dmatrix![2.0, 0.0]).unwrap();
        let agg = DayMatrix::from_matrix("mains", dmatrix![4.0, 4.0]).unwrap();
        let h = HouseDataset::new("h", vec![a, b], agg).unwrap();
        assert!((h.coverage() - 0.5).abs() < 1e-15);
        let only_a = h.keep_appliances(&["a".into()]).unwrap();
        assert!((only_a.coverage() - 0.25).abs() < 1e-15);
        assert!(h.keep_appliances(&["zzz".into()]).is_err());
    }
}
