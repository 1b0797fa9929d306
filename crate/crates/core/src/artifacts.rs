//! Versioned JSON document passed from training to disaggregation.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisDict, ApplianceTrace, Formulation, Hyperparams};
use crate::error::{Error, Result};
use crate::numkernels::Matrix;
use crate::synthesis::SynthesisDict;

pub const ARTIFACTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Simple,
    Distinctive,
    Disaggregating,
    Synthesis,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Simple, Model::Distinctive, Model::Disaggregating, Model::Synthesis];

    pub fn name(self) -> &'static str {
        match self {
            Model::Simple => "simple",
            Model::Distinctive => "distinctive",
            Model::Disaggregating => "disaggregating",
            Model::Synthesis => "synthesis",
        }
    }

    /// The analysis formulation, or `None` for the synthesis baseline.
    pub fn formulation(self) -> Option<Formulation> {
        match self {
            Model::Simple => Some(Formulation::Simple),
            Model::Distinctive => Some(Formulation::Distinctive),
            Model::Disaggregating => Some(Formulation::Disaggregating),
            Model::Synthesis => None,
        }
    }
}

impl From<Formulation> for Model {
    fn from(f: Formulation) -> Self {
        match f {
            Formulation::Simple => Model::Simple,
            Formulation::Distinctive => Model::Distinctive,
            Formulation::Disaggregating => Model::Disaggregating,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::invalid(format!(
                "unknown model `{s}` (valid models: simple, distinctive, disaggregating, synthesis)"
            ))
        })
    }
}

/// One appliance's learned operator: `p × d` for analysis models, `d × m`
/// for the synthesis baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub appliance: String,
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainArtifacts {
    pub model: Model,
    pub hyper: Hyperparams,
    pub dictionaries: Vec<Dictionary>,
    pub traces: Vec<ApplianceTrace>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDictionary {
    appliance: String,
    rows: usize,
    cols: usize,
    /// Row-major.
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    format_version: u32,
    model: Model,
    hyperparams: Hyperparams,
    appliances: Vec<String>,
    dictionaries: Vec<WireDictionary>,
    final_residuals: Vec<Option<f64>>,
    traces: Vec<ApplianceTrace>,
}

impl TrainArtifacts {
    fn checked(self) -> Result<Self> {
        if self.dictionaries.is_empty() {
            return Err(Error::invalid("artifacts need at least one dictionary"));
        }
        if self.traces.len() != self.dictionaries.len() {
            return Err(Error::invalid("one trace per dictionary required"));
        }
        let slots = |d: &Dictionary| if self.model == Model::Synthesis { d.matrix.nrows() } else { d.matrix.ncols() };
        let d0 = slots(&self.dictionaries[0]);
        for (i, (d, t)) in self.dictionaries.iter().zip(&self.traces).enumerate() {
            if slots(d) != d0 {
                return Err(Error::invalid(format!(
                    "dictionary `{}` has {} slots, expected {d0}",
                    d.appliance,
                    slots(d)
                )));
            }
            if d.matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("dictionary `{}` has non-finite entries", d.appliance)));
            }
            if t.appliance != d.appliance {
                return Err(Error::invalid(format!("trace {i} belongs to `{}`, not `{}`", t.appliance, d.appliance)));
            }
            if self.dictionaries[..i].iter().any(|o| o.appliance == d.appliance) {
                return Err(Error::invalid(format!("duplicate appliance `{}`", d.appliance)));
            }
        }
        Ok(self)
    }

    pub fn analysis(
        model: Model,
        hyper: Hyperparams,
        dicts: Vec<AnalysisDict>,
        traces: Vec<ApplianceTrace>,
    ) -> Result<Self> {
        if model == Model::Synthesis {
            return Err(Error::invalid("analysis dictionaries cannot form a synthesis model"));
        }
        let dictionaries = dicts.into_iter().map(|d| Dictionary { appliance: d.appliance_id, matrix: d.op }).collect();
        Self { model, hyper, dictionaries, traces }.checked()
    }

    pub fn synthesis(hyper: Hyperparams, dicts: Vec<SynthesisDict>, traces: Vec<ApplianceTrace>) -> Result<Self> {
        let dictionaries =
            dicts.into_iter().map(|d| Dictionary { appliance: d.appliance_id, matrix: d.basis }).collect();
        Self { model: Model::Synthesis, hyper, dictionaries, traces }.checked()
    }

    pub fn appliances(&self) -> Vec<String> {
        self.dictionaries.iter().map(|d| d.appliance.clone()).collect()
    }

    pub fn slots_per_day(&self) -> usize {
        let m = &self.dictionaries[0].matrix;
        if self.model == Model::Synthesis {
            m.nrows()
        } else {
            m.ncols()
        }
    }

    pub fn analysis_dicts(&self) -> Result<Vec<AnalysisDict>> {
        if self.model == Model::Synthesis {
            return Err(Error::Mismatch("artifacts hold a synthesis model, not analysis dictionaries".into()));
        }
        self.dictionaries.iter().map(|d| AnalysisDict::new(d.appliance.clone(), d.matrix.clone())).collect()
    }

    pub fn synthesis_dicts(&self) -> Result<Vec<SynthesisDict>> {
        if self.model != Model::Synthesis {
            return Err(Error::Mismatch(format!("artifacts hold a {} model, not synthesis dictionaries", self.model)));
        }
        self.dictionaries.iter().map(|d| SynthesisDict::new(d.appliance.clone(), d.matrix.clone())).collect()
    }

    pub fn to_json(&self) -> String {
        let wire = Wire {
            format_version: ARTIFACTS_VERSION,
            model: self.model,
            hyperparams: self.hyper.clone(),
            appliances: self.appliances(),
            dictionaries: self
                .dictionaries
                .iter()
                .map(|d| WireDictionary {
                    appliance: d.appliance.clone(),
                    rows: d.matrix.nrows(),
                    cols: d.matrix.ncols(),
                    entries: d.matrix.transpose().as_slice().to_vec(),
                })
                .collect(),
            final_residuals: self.traces.iter().map(|t| t.final_residual()).collect(),
            traces: self.traces.clone(),
        };
        serde_json::to_string_pretty(&wire).expect("artifacts serialize") + "\n"
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let wire: Wire = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        if wire.format_version != ARTIFACTS_VERSION {
            return Err(Error::Config {
                field: "format_version".into(),
                msg: format!("unsupported artifacts version {} (expected {ARTIFACTS_VERSION})", wire.format_version),
            });
        }
        let mut dictionaries = Vec::with_capacity(wire.dictionaries.len());
        for (i, d) in wire.dictionaries.into_iter().enumerate() {
            if d.rows * d.cols != d.entries.len() || d.rows == 0 || d.cols == 0 {
                return Err(Error::Config {
                    field: format!("dictionaries[{i}].entries"),
                    msg: format!("{} entries for a {}×{} matrix", d.entries.len(), d.rows, d.cols),
                });
            }
            dictionaries.push(Dictionary {
                appliance: d.appliance,
                matrix: Matrix::from_row_slice(d.rows, d.cols, &d.entries),
            });
        }
        let names: Vec<&str> = dictionaries.iter().map(|d| d.appliance.as_str()).collect();
        if wire.appliances.iter().map(String::as_str).ne(names.iter().copied()) {
            return Err(Error::Config { field: "appliances".into(), msg: "does not match dictionary order".into() });
        }
        wire.hyperparams.validate()?;
        Self { model: wire.model, hyper: wire.hyperparams, dictionaries, traces: wire.traces }.checked()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}
