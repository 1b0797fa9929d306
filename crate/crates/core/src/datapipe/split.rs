use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HouseDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SplitMode {
    /// A random fraction of each house's days trains, the rest tests.
    TrainingMode { fraction: f64 },
    /// One whole house trains, every other house tests.
    TestingMode { house: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(flatten)]
    pub mode: SplitMode,
    pub seed: u64,
    pub replications: usize,
}

impl SplitSpec {
    pub fn validate(&self, house_count: usize) -> Result<()> {
        match self.mode {
            SplitMode::TrainingMode { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                Err(Error::invalid(format!("training fraction must lie in (0, 1), got {fraction}")))
            }
            SplitMode::TestingMode { house } if house >= house_count => {
                Err(Error::invalid(format!("house index {house} out of range for {house_count} houses")))
            }
            _ if self.replications == 0 => Err(Error::invalid("replications must be >= 1")),
            _ => Ok(()),
        }
    }
}

/// Number of training days: `round(fraction · n)`, halves rounded up.
pub fn training_day_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Random day partition; the same columns are taken from every appliance and
/// the aggregate. Both sides keep chronological column order.
pub fn split_training_mode(ds: &HouseDataset, fraction: f64, seed: u64) -> Result<(HouseDataset, HouseDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("training fraction must lie in (0, 1), got {fraction}")));
    }
    let n = ds.days();
    let k = training_day_count(fraction, n);
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("fraction {fraction} of {n} days leaves an empty side ({k} train days)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, test) = order.split_at_mut(k);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select_days(train)?, ds.select_days(test)?))
}

#[derive(Debug, Clone)]
pub struct TestingSplit {
    pub train: HouseDataset,
    pub test: Vec<HouseDataset>,
    /// Appliances present in every house, in the training house's order.
    pub shared: Vec<String>,
    /// Appliances missing from at least one house.
    pub dropped: BTreeSet<String>,
}

pub fn split_testing_mode(houses: &[HouseDataset], train_house: usize) -> Result<TestingSplit> {
    if houses.len() < 2 {
        return Err(Error::Protocol(format!("testing mode needs at least 2 houses, got {}", houses.len())));
    }
    if train_house >= houses.len() {
        return Err(Error::invalid(format!("house index {train_house} out of range for {} houses", houses.len())));
    }
    let sets: Vec<BTreeSet<String>> = houses.iter().map(|h| h.labels().into_iter().collect()).collect();
    let all: BTreeSet<String> = sets.iter().flatten().cloned().collect();
    let common: BTreeSet<String> = sets.iter().skip(1).fold(sets[0].clone(), |acc, s| &acc & s);
    if common.is_empty() {
        return Err(Error::Protocol("no appliance is shared by every house".into()));
    }
    let shared: Vec<String> = houses[train_house].labels().into_iter().filter(|l| common.contains(l)).collect();
    let dropped = &all - &common;

    let train = houses[train_house].keep_appliances(&shared)?;
    let test = houses
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != train_house)
        .map(|(_, h)| h.keep_appliances(&shared))
        .collect::<Result<Vec<_>>>()?;
    Ok(TestingSplit { train, test, shared, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::DayMatrix;
    use crate::numkernels::Matrix;
    use proptest::prelude::*;

    fn house(id: &str, labels: &[&str], days: usize) -> HouseDataset {
        let apps: Vec<DayMatrix> = labels
            .iter()
            .enumerate()
            .map(|(k, l)| {
                DayMatrix::from_matrix(*l, Matrix::from_fn(4, days, |i, j| (k * 100 + i * 10 + j) as f64)).unwrap()
            })
            .collect();
        let agg = apps.iter().fold(Matrix::zeros(4, days), |acc, a| acc + a.values());
        HouseDataset::new(id, apps, DayMatrix::from_matrix("mains", agg).unwrap()).unwrap()
    }

    #[test]
    fn ten_days_twenty_percent() {
        let h = house("h", &["a", "b"], 10);
        let (tr, te) = split_training_mode(&h, 0.2, 3).unwrap();
        assert_eq!(tr.days(), 2);
        assert_eq!(te.days(), 8);
        let mut all: Vec<_> = tr.aggregate().day_labels().to_vec();
        all.extend_from_slice(te.aggregate().day_labels());
        all.sort();
        assert_eq!(all, h.aggregate().day_labels());
        // Same columns for every channel.
        assert_eq!(tr.appliances()[0].day_labels(), tr.aggregate().day_labels());
        let again = split_training_mode(&h, 0.2, 3).unwrap();
        assert_eq!(again.0, tr);
    }

    #[test]
    fn half_rounds_up() {
        let h = house("h", &["a"], 3);
        let (tr, te) = split_training_mode(&h, 0.5, 0).unwrap();
        assert_eq!((tr.days(), te.days()), (2, 1));
    }

    #[test]
    fn degenerate_splits_rejected() {
        let h = house("h", &["a"], 3);
        assert!(split_training_mode(&h, 0.1, 0).is_err());
        assert!(split_training_mode(&h, 0.9, 0).is_err());
        assert!(split_training_mode(&h, 0.0, 0).is_err());
        assert!(split_training_mode(&h, 1.0, 0).is_err());
    }

    #[test]
    fn testing_mode_partition() {
        let houses: Vec<_> = (0..5).map(|i| house(&format!("h{i}"), &["a", "b"], 3)).collect();
        let s = split_testing_mode(&houses, 0).unwrap();
        assert_eq!(s.train.house_id(), "h0");
        assert_eq!(s.test.len(), 4);
        assert!(s.dropped.is_empty());
    }

    #[test]
    fn testing_mode_intersects_labels() {
        let houses = vec![house("x", &["A", "B", "C"], 2), house("y", &["B", "C", "D"], 2)];
        let s = split_testing_mode(&houses, 0).unwrap();
        assert_eq!(s.shared, vec!["B".to_string(), "C".to_string()]);
        assert_eq!(s.dropped, ["A", "D"].iter().map(|s| s.to_string()).collect());
        assert_eq!(s.test[0].labels(), vec!["B".to_string(), "C".to_string()]);
    }

    #[test]
    fn testing_mode_errors() {
        let one = vec![house("x", &["A"], 2)];
        assert!(matches!(split_testing_mode(&one, 0), Err(Error::Protocol(_))));
        let disjoint = vec![house("x", &["A"], 2), house("y", &["B"], 2)];
        assert!(matches!(split_testing_mode(&disjoint, 0), Err(Error::Protocol(_))));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 2usize..40, fraction in 0.01f64..0.99, seed in any::<u64>()) {
            let h = house("h", &["a"], n);
            let k = training_day_count(fraction, n);
            match split_training_mode(&h, fraction, seed) {
                Ok((tr, te)) => {
                    prop_assert_eq!(tr.days(), k);
                    prop_assert_eq!(tr.days() + te.days(), n);
                    let mut all: Vec<_> = tr.aggregate().day_labels().to_vec();
                    all.extend_from_slice(te.aggregate().day_labels());
                    all.sort();
                    prop_assert_eq!(all.as_slice(), h.aggregate().day_labels());
                }
                Err(_) => prop_assert!(k == 0 || k >= n),
            }
        }
    }
}
