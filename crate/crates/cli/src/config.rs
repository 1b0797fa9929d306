//! Layered run configuration: defaults, then a JSON config file, then
//! command-line flags. Every command writes the resolved result as
//! `resolved_config.json`, which is itself a valid `--config` input.

use std::fs;
use std::path::{Path, PathBuf};

use cosparse_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SNAPSHOT_FILE: &str = "resolved_config.json";

/// A parsed config file with its directory, for resolving relative paths.
#[derive(Debug, Clone)]
pub struct Layer {
    pub fields: Map<String, Value>,
    pub base: PathBuf,
}

impl Layer {
    pub fn empty() -> Self {
        Self { fields: Map::new(), base: PathBuf::from(".") }
    }

    /// Reads `path`; a `command` key, when present, must name `command`.
    pub fn read(path: &Path, command: &str) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let Value::Object(mut fields) = value else {
            return Err(Error::Config {
                field: "config".into(),
                msg: format!("{} is not a JSON object", path.display()),
            });
        };
        match fields.remove("command") {
            None => {}
            Some(Value::String(c)) if c == command => {}
            Some(other) => {
                return Err(Error::Config {
                    field: "command".into(),
                    msg: format!("config was written for {other}, not `{command}`"),
                })
            }
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { fields, base })
    }

    pub fn load(path: Option<&Path>, command: &str) -> Result<Self> {
        path.map_or_else(|| Ok(Self::empty()), |p| Self::read(p, command))
    }

    /// Deserializes the layer over the type's defaults.
    pub fn parse<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(Value::Object(self.fields.clone()))
            .map_err(|e| Error::Config { field: field_of(&e.to_string()), msg: e.to_string() })
    }

    /// Resolves a path read from this layer against the file's directory.
    pub fn rebase(&self, p: &Path) -> Result<PathBuf> {
        absolute(&self.base.join(p))
    }
}

fn field_of(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

pub fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

/// Picks the flag value when given, else the config value, each resolved to
/// an absolute path.
pub fn pick_path(flag: Option<&PathBuf>, layer: &Layer, from_file: Option<&PathBuf>, field: &str) -> Result<PathBuf> {
    match (flag, from_file) {
        (Some(p), _) => absolute(p),
        (None, Some(p)) => layer.rebase(p),
        (None, None) => {
            Err(Error::Config { field: field.into(), msg: "required; pass the flag or set it in --config".into() })
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Renders a header and rows as CSV with standard quoting.
pub fn csv_text(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let err = |e: String| Error::InvalidArgument(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| err(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| err(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| err(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Writes `{"command": ..., <resolved fields>}` into `out`.
pub fn write_snapshot<T: Serialize>(out: &Path, command: &str, resolved: &T) -> Result<()> {
    let path = out.join(SNAPSHOT_FILE);
    let Value::Object(fields) = serde_json::to_value(resolved).map_err(|e| Error::json(&path, e))? else {
        unreachable!("run configs serialize to objects");
    };
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(command.into()));
    doc.extend(fields);
    write_json(&path, &Value::Object(doc))
}

/// clap value parser for the snake_case enums shared with config files.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}
