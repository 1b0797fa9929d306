//! Channel CSV files (`timestamp,watts`) and the house manifest.
//!
//! Values are written in Rust's shortest round-trip form, so a write/read
//! cycle reproduces every `f64` bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{build_day_matrix, date_to_epoch_day, resample_mean, DayMatrix, HouseDataset, TimeSeries};
use super::{DEFAULT_SLOTS_PER_DAY, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::numkernels::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub label: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseManifest {
    pub format_version: u32,
    pub house_id: String,
    #[serde(default = "default_slot_seconds")]
    pub slot_seconds: i64,
    #[serde(default = "default_slots_per_day")]
    pub slots_per_day: usize,
    /// File holding the mains (aggregate) channel.
    pub mains: String,
    #[serde(default)]
    pub appliances: Vec<ManifestChannel>,
}

fn default_slot_seconds() -> i64 {
    SECONDS_PER_DAY / DEFAULT_SLOTS_PER_DAY as i64
}

fn default_slots_per_day() -> usize {
    DEFAULT_SLOTS_PER_DAY
}

impl HouseManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Config {
                field: "format_version".into(),
                msg: format!("unsupported manifest version {}", m.format_version),
            });
        }
        Ok(m)
    }
}

/// Resolves a dataset directory to its manifest path; a file path is taken
/// as the manifest itself.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_channel_csv(path: &Path, channel_id: &str) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyData(format!("{} is empty", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse { path: path.into(), line, msg: e.to_string() })?;
        if idx == 0 {
            let header: Vec<&str> = rec.iter().collect();
            if header != ["timestamp", "watts"] {
                return Err(Error::Schema {
                    path: path.into(),
                    line,
                    msg: format!("expected header `timestamp,watts`, found `{}`", header.join(",")),
                });
            }
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let t: i64 = rec[0].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad timestamp `{}`", &rec[0]),
        })?;
        let v: f64 = rec[1].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad watts value `{}`", &rec[1]),
        })?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                let what = if t == prev { "duplicate" } else { "out-of-order" };
                return Err(Error::Schema { path: path.into(), line, msg: format!("{what} timestamp {t}") });
            }
        }
        timestamps.push(t);
        values.push(v);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptyData(format!("{} has no samples", path.display())));
    }
    TimeSeries::new(channel_id, timestamps, values)
}

pub fn write_channel_csv(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut out = String::with_capacity(ts.len() * 24 + 16);
    out.push_str("timestamp,watts\n");
    for (t, v) in ts.timestamps().iter().zip(ts.values()) {
        out.push_str(&format!("{t},{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Days dropped per channel while loading a house.
pub type DropReport = BTreeMap<String, Vec<NaiveDate>>;

fn load_channel(dir: &Path, file: &str, label: &str, m: &HouseManifest, drops: &mut DropReport) -> Result<DayMatrix> {
    let ts = read_channel_csv(&dir.join(file), label)?;
    let build = build_day_matrix(&resample_mean(&ts, m.slot_seconds)?, m.slots_per_day)?;
    if !build.dropped.is_empty() {
        drops.insert(label.to_string(), build.dropped);
    }
    Ok(build.matrix)
}

/// Loads a house from its manifest (or the directory holding it). Only days
/// complete in every channel are kept.
pub fn load_house(path: &Path) -> Result<HouseDataset> {
    load_house_with_report(path).map(|(h, _)| h)
}

pub fn load_house_with_report(path: &Path) -> Result<(HouseDataset, DropReport)> {
    let mpath = manifest_path(path);
    let manifest = HouseManifest::read(&mpath)?;
    let dir = mpath.parent().unwrap_or(Path::new("."));
    let mut drops = DropReport::new();

    let mains = load_channel(dir, &manifest.mains, "mains", &manifest, &mut drops)?;
    let mut appliances = Vec::with_capacity(manifest.appliances.len());
    for ch in &manifest.appliances {
        appliances.push(load_channel(dir, &ch.file, &ch.label, &manifest, &mut drops)?);
    }

    let mut common: Vec<NaiveDate> = mains.day_labels().to_vec();
    for a in &appliances {
        common.retain(|d| a.day_labels().contains(d));
    }
    if common.is_empty() {
        return Err(Error::EmptyData(format!("house `{}` has no day complete in every channel", manifest.house_id)));
    }
    let mains = mains.restrict_to(&common)?;
    let appliances = appliances.iter().map(|a| a.restrict_to(&common)).collect::<Result<Vec<_>>>()?;
    Ok((HouseDataset::new(manifest.house_id.clone(), appliances, mains)?, drops))
}

/// File-name-safe form of a channel label.
pub fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn day_matrix_series(m: &DayMatrix, slot_seconds: i64) -> Result<TimeSeries> {
    let mut ts = Vec::with_capacity(m.values().len());
    let mut vs = Vec::with_capacity(m.values().len());
    for (j, day) in m.day_labels().iter().enumerate() {
        let base = date_to_epoch_day(*day) * SECONDS_PER_DAY;
        for i in 0..m.slots_per_day() {
            ts.push(base + i as i64 * slot_seconds);
            vs.push(m.values()[(i, j)]);
        }
    }
    TimeSeries::new(m.channel_id(), ts, vs)
}

/// Writes one CSV per channel (one sample per slot) plus `manifest.json`.
pub fn write_house(dir: &Path, house: &HouseDataset) -> Result<HouseManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = house.slots_per_day();
    if SECONDS_PER_DAY % d as i64 != 0 {
        return Err(Error::invalid(format!("{d} slots do not divide a day evenly")));
    }
    let slot_seconds = SECONDS_PER_DAY / d as i64;

    let mains = "mains.csv".to_string();
    write_channel_csv(&dir.join(&mains), &day_matrix_series(house.aggregate(), slot_seconds)?)?;
    let mut channels = Vec::new();
    for a in house.appliances() {
        let file = format!("{}.csv", file_stem(a.channel_id()));
        if file == mains || channels.iter().any(|c: &ManifestChannel| c.file == file) {
            return Err(Error::invalid(format!("appliance label `{}` collides with another file", a.channel_id())));
        }
        write_channel_csv(&dir.join(&file), &day_matrix_series(a, slot_seconds)?)?;
        channels.push(ManifestChannel { label: a.channel_id().to_string(), file });
    }
    let manifest = HouseManifest {
        format_version: MANIFEST_VERSION,
        house_id: house.house_id().to_string(),
        slot_seconds,
        slots_per_day: d,
        mains,
        appliances: channels,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Writes a day matrix as `slot,<date>,...` with one row per slot.
pub fn write_day_matrix_csv(path: &Path, m: &DayMatrix) -> Result<()> {
    let mut out = String::with_capacity(m.values().len() * 20 + 16);
    out.push_str("slot");
    for day in m.day_labels() {
        out.push_str(&format!(",{day}"));
    }
    out.push('\n');
    for i in 0..m.slots_per_day() {
        out.push_str(&i.to_string());
        for j in 0..m.days() {
            out.push_str(&format!(",{}", m.values()[(i, j)]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_day_matrix_csv(path: &Path, channel_id: &str) -> Result<DayMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut days = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse { path: path.into(), line, msg: e.to_string() })?;
        if idx == 0 {
            if rec.get(0) != Some("slot") || rec.len() < 2 {
                return Err(Error::Schema { path: path.into(), line, msg: "expected header `slot,<date>,...`".into() });
            }
            for f in rec.iter().skip(1) {
                let d = NaiveDate::parse_from_str(f, "%Y-%m-%d").map_err(|_| Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("bad date `{f}`"),
                })?;
                days.push(d);
            }
            continue;
        }
        if rec.len() != days.len() + 1 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: format!("expected {} fields, found {}", days.len() + 1, rec.len()),
            });
        }
        if rec[0].parse::<usize>().ok() != Some(rows.len()) {
            return Err(Error::Schema { path: path.into(), line, msg: format!("expected slot {}", rows.len()) });
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: path.into(),
                    line,
                    msg: format!("bad watts value `{f}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyData(format!("{} has no slots", path.display())));
    }
    let values = Matrix::from_fn(rows.len(), days.len(), |i, j| rows[i][j]);
    DayMatrix::new(channel_id, days, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "timestamp,watts\n0,1.5\n600,abc\n");
        match read_channel_csv(&p, "a") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let p = write(dir.path(), "b.csv", "timestamp,watts\n0,1.5\n0,2.0\n");
        match read_channel_csv(&p, "b") {
            Err(Error::Schema { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let p = write(dir.path(), "c.csv", "timestamp,watts\n600,1\n0,2\n");
        assert!(matches!(read_channel_csv(&p, "c"), Err(Error::Schema { line: 3, .. })));
        let p = write(dir.path(), "d.csv", "time,power\n0,1\n");
        assert!(matches!(read_channel_csv(&p, "d"), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "");
        assert!(matches!(read_channel_csv(&p, "e"), Err(Error::EmptyData(_))));
        let p = write(dir.path(), "h.csv", "timestamp,watts\n");
        assert!(matches!(read_channel_csv(&p, "h"), Err(Error::EmptyData(_))));
    }

    #[test]
    fn channel_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec![0.1 + 0.2, 1.0 / 3.0, 123456.789012345, 0.0, 1e-17];
        let ts = TimeSeries::new("x", vec![0, 600, 1200, 1800, 2400], vals.clone()).unwrap();
        let p = dir.path().join("x.csv");
        write_channel_csv(&p, &ts).unwrap();
        let back = read_channel_csv(&p, "x").unwrap();
        assert_eq!(back, ts);
    }
}
