//! Synthetic households for desk-scale verification.
//!
//! Each appliance follows a simple signature model inside its active slot
//! band; truncated-at-zero Gaussian noise is added to active slots only, and
//! the aggregate is the exact elementwise sum of the appliances.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{date_to_epoch_day, epoch_day_to_date, DayMatrix, HouseDataset, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::numkernels::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Signature {
    /// One contiguous run at `power` per day covering `duty` of the band.
    TwoState { power: f64, duty: f64 },
    /// One run per day split into equal consecutive phases at `levels`.
    MultiState { levels: Vec<f64>, duty: f64 },
    /// On for `duty · period_slots` slots at the start of every period, with
    /// a random phase per day.
    PeriodicCycler { power: f64, period_slots: usize, duty: f64 },
    /// `base + amplitude · sin(2π (t − φ) / period_slots)` with a random
    /// phase and a daily scale in [0.8, 1.2], clipped at zero.
    ContinuousVarying { base: f64, amplitude: f64, period_slots: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub label: String,
    pub signature: Signature,
    /// Active slot range `[start, end)`; the whole day when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub house_id: String,
    pub days: usize,
    pub slots_per_day: usize,
    pub start_date: NaiveDate,
    /// Standard deviation (watts) of the noise added to active slots.
    pub noise_sigma: f64,
    pub appliances: Vec<ApplianceSpec>,
}

fn config_err(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { field: field.into(), msg: msg.into() }
}

fn check_fraction(field: String, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(config_err(field, format!("must lie in [0, 1], got {v}")))
    }
}

fn check_power(field: String, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config_err(field, format!("must be finite and nonnegative, got {v}")))
    }
}

impl SynthConfig {
    pub const PRESETS: [&'static str; 2] = ["disjoint_support", "household"];

    /// Three noiseless appliances active in non-overlapping thirds of the day.
    pub fn disjoint_support() -> Self {
        let spec = |label: &str, signature, band| ApplianceSpec { label: label.into(), signature, band: Some(band) };
        Self {
            house_id: "disjoint_support".into(),
            days: 30,
            slots_per_day: 144,
            start_date: NaiveDate::from_ymd_opt(2011, 4, 18).unwrap(),
            noise_sigma: 0.0,
            appliances: vec![
                spec("water_heater", Signature::TwoState { power: 1500.0, duty: 0.35 }, [0, 48]),
                spec("dishwasher", Signature::MultiState { levels: vec![1200.0, 200.0, 1800.0], duty: 0.4 }, [48, 96]),
                spec(
                    "heat_pump",
                    Signature::ContinuousVarying { base: 300.0, amplitude: 200.0, period_slots: 48 },
                    [96, 144],
                ),
            ],
        }
    }

    /// Four overlapping appliances with 15 W noise.
    pub fn household() -> Self {
        let spec = |label: &str, signature, band| ApplianceSpec { label: label.into(), signature, band };
        Self {
            house_id: "household".into(),
            days: 40,
            slots_per_day: 144,
            start_date: NaiveDate::from_ymd_opt(2011, 4, 18).unwrap(),
            noise_sigma: 15.0,
            appliances: vec![
                spec("fridge", Signature::PeriodicCycler { power: 150.0, period_slots: 9, duty: 0.35 }, None),
                spec(
                    "air_conditioner",
                    Signature::ContinuousVarying { base: 600.0, amplitude: 500.0, period_slots: 144 },
                    Some([36, 132]),
                ),
                spec(
                    "washer",
                    Signature::MultiState { levels: vec![500.0, 2000.0, 300.0], duty: 0.1 },
                    Some([48, 120]),
                ),
                spec("lighting", Signature::TwoState { power: 250.0, duty: 0.4 }, Some([102, 144])),
            ],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "disjoint_support" => Ok(Self::disjoint_support()),
            "household" => Ok(Self::household()),
            other => Err(config_err(
                "preset",
                format!("unknown preset `{other}`; valid presets: {}", Self::PRESETS.join(", ")),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(config_err("days", "must be >= 1"));
        }
        let d = self.slots_per_day;
        if d == 0 || SECONDS_PER_DAY % d as i64 != 0 {
            return Err(config_err("slots_per_day", format!("{d} slots do not tile a day")));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(config_err("noise_sigma", "must be finite and nonnegative"));
        }
        if self.appliances.is_empty() {
            return Err(config_err("appliances", "at least one appliance is required"));
        }
        for (k, a) in self.appliances.iter().enumerate() {
            let f = |name: &str| format!("appliances[{k}].{name}");
            if a.label.trim().is_empty() || a.label == "mains" {
                return Err(config_err(f("label"), "must be nonempty and not `mains`"));
            }
            if self.appliances[..k].iter().any(|b| b.label == a.label) {
                return Err(config_err(f("label"), format!("duplicate label `{}`", a.label)));
            }
            if let Some([s, e]) = a.band {
                if s >= e || e > d {
                    return Err(config_err(f("band"), format!("[{s}, {e}) is not a nonempty range within {d} slots")));
                }
            }
            match &a.signature {
                Signature::TwoState { power, duty } => {
                    check_power(f("signature.power"), *power)?;
                    check_fraction(f("signature.duty"), *duty)?;
                }
                Signature::MultiState { levels, duty } => {
                    if levels.is_empty() {
                        return Err(config_err(f("signature.levels"), "needs at least one level"));
                    }
                    for (i, l) in levels.iter().enumerate() {
                        check_power(f(&format!("signature.levels[{i}]")), *l)?;
                    }
                    check_fraction(f("signature.duty"), *duty)?;
                }
                Signature::PeriodicCycler { power, period_slots, duty } => {
                    check_power(f("signature.power"), *power)?;
                    check_fraction(f("signature.duty"), *duty)?;
                    if *period_slots == 0 {
                        return Err(config_err(f("signature.period_slots"), "must be >= 1"));
                    }
                }
                Signature::ContinuousVarying { base, amplitude, period_slots } => {
                    check_power(f("signature.base"), *base)?;
                    check_power(f("signature.amplitude"), *amplitude)?;
                    if *period_slots == 0 {
                        return Err(config_err(f("signature.period_slots"), "must be >= 1"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn run_length(duty: f64, band_len: usize) -> usize {
    if duty <= 0.0 {
        0
    } else {
        ((duty * band_len as f64).round() as usize).clamp(1, band_len)
    }
}

/// Noiseless profile of one appliance for one day (length `d`).
fn day_profile(sig: &Signature, band: (usize, usize), d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = band;
    let len = hi - lo;
    let mut col = vec![0.0; d];
    match sig {
        Signature::TwoState { power, duty } => {
            let run = run_length(*duty, len);
            if run > 0 {
                let start = lo + rng.random_range(0..=len - run);
                col[start..start + run].iter_mut().for_each(|v| *v = *power);
            }
        }
        Signature::MultiState { levels, duty } => {
            let run = run_length(*duty, len);
            if run > 0 {
                let start = lo + rng.random_range(0..=len - run);
                for k in 0..run {
                    col[start + k] = levels[k * levels.len() / run];
                }
            }
        }
        Signature::PeriodicCycler { power, period_slots, duty } => {
            let on = run_length(*duty, *period_slots);
            let phase = rng.random_range(0..*period_slots);
            for (t, v) in col.iter_mut().enumerate().take(hi).skip(lo) {
                if (t + phase) % period_slots < on {
                    *v = *power;
                }
            }
        }
        Signature::ContinuousVarying { base, amplitude, period_slots } => {
            let phase: f64 = rng.random_range(0.0..*period_slots as f64);
            let scale: f64 = rng.random_range(0.8..1.2);
            for (t, v) in col.iter_mut().enumerate().take(hi).skip(lo) {
                let angle = 2.0 * std::f64::consts::PI * (t as f64 - phase) / *period_slots as f64;
                *v = (scale * (base + amplitude * angle.sin())).max(0.0);
            }
        }
    }
    col
}

/// Builds a house from `cfg`; identical `(cfg, seed)` give identical data.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<HouseDataset> {
    cfg.validate()?;
    let (d, n) = (cfg.slots_per_day, cfg.days);
    let first = date_to_epoch_day(cfg.start_date);
    let labels: Vec<NaiveDate> = (0..n as i64).map(|k| epoch_day_to_date(first + k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut matrices = Vec::with_capacity(cfg.appliances.len());
    for spec in &cfg.appliances {
        let band = spec.band.map(|[s, e]| (s, e)).unwrap_or((0, d));
        let mut m = Matrix::zeros(d, n);
        for j in 0..n {
            let col = day_profile(&spec.signature, band, d, &mut rng);
            for (i, v) in col.into_iter().enumerate() {
                m[(i, j)] = if v > 0.0 && cfg.noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (v + cfg.noise_sigma * z).max(0.0)
                } else {
                    v
                };
            }
        }
        matrices.push(DayMatrix::new(spec.label.clone(), labels.clone(), m)?);
    }

    let aggregate = Matrix::from_fn(d, n, |i, j| matrices.iter().fold(0.0, |acc, a| acc + a.values()[(i, j)]));
    HouseDataset::new(cfg.house_id.clone(), matrices, DayMatrix::new("mains", labels, aggregate)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(signature: Signature, noise_sigma: f64) -> SynthConfig {
        SynthConfig {
            house_id: "t".into(),
            days: 12,
            slots_per_day: 144,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            noise_sigma,
            appliances: vec![ApplianceSpec { label: "a".into(), signature, band: None }],
        }
    }

    #[test]
    fn noiseless_two_state_levels() {
        let cfg = single(Signature::TwoState { power: 200.0, duty: 0.3 }, 0.0);
        let h = synth_generate(&cfg, 1).unwrap();
        let a = h.appliances()[0].values();
        assert!(a.iter().all(|&v| v == 0.0 || v == 200.0));
        assert_eq!(a, h.aggregate().values());
        for j in 0..12 {
            let on = a.column(j).iter().filter(|&&v| v > 0.0).count();
            assert_eq!(on, 43);
        }
    }

    #[test]
    fn aggregate_is_exact_sum() {
        for preset in SynthConfig::PRESETS {
            let h = synth_generate(&SynthConfig::preset(preset).unwrap(), 9).unwrap();
            let mut sum = Matrix::zeros(h.slots_per_day(), h.days());
            for a in h.appliances() {
                sum += a.values();
            }
            assert_eq!(&sum, h.aggregate().values());
            assert!(h.appliances().iter().all(|a| a.values().iter().all(|&v| v >= 0.0)));
            assert_eq!(h.coverage(), 1.0);
        }
    }

    #[test]
    fn disjoint_preset_has_one_active_appliance_per_slot() {
        let h = synth_generate(&SynthConfig::disjoint_support(), 4).unwrap();
        let m = h.aggregate().values();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let active = h.appliances().iter().filter(|a| a.values()[(i, j)] != 0.0).count();
                assert!(active <= 1, "slot {i} day {j} has {active} active appliances");
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig::household();
        assert_eq!(synth_generate(&cfg, 5).unwrap(), synth_generate(&cfg, 5).unwrap());
        assert_ne!(synth_generate(&cfg, 5).unwrap(), synth_generate(&cfg, 6).unwrap());
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut cfg = SynthConfig::household();
        cfg.appliances[2].band = Some([100, 50]);
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "appliances[2].band"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = single(Signature::TwoState { power: -1.0, duty: 0.3 }, 0.0);
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "appliances[0].signature.power"));
        let mut cfg = single(Signature::TwoState { power: 1.0, duty: 0.3 }, 0.0);
        cfg.slots_per_day = 7;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "slots_per_day"));
        assert!(SynthConfig::preset("nope").is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SynthConfig::household();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SynthConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
