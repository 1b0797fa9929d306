//! Analysis co-sparse dictionary learning by Split Bregman iterations.
//!
//! Three formulations share one solver loop:
//!
//! * [`Formulation::Simple`]: each appliance independently solves
//!   `min ‖X − X̂‖² + λ‖D X̂‖₁` through the proxy `Z = D X̂` and the Bregman
//!   variable `B`.
//! * [`Formulation::Distinctive`]: adds the cross-dictionary incoherence
//!   penalty `η Σ_{j≠i} ‖D_iᵀ D_j − I‖²`, which couples the dictionary updates
//!   into a Sylvester equation.
//! * [`Formulation::Disaggregating`]: additionally penalizes the energy other
//!   appliances' dictionaries see in an appliance's estimate,
//!   `γ Σ_{j≠i} ‖D_j X̂_i‖²`.
//!
//! Every sub-step is an exact block minimizer of [`TrainState::augmented_objective`].

mod state;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernels::Matrix;

pub use state::{incoherence, ApplianceState, TrainState};
pub use train::{train, train_disaggregating, train_distinctive, train_simple};

/// Bregman variable update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BregmanVariant {
    /// `B ← B + D X̂ − Z`.
    #[default]
    Standard,
    /// `B ← Z − D X̂ − B`, kept for comparison runs.
    PaperLiteral,
}

/// Orientation of the incoherence penalty between two dictionaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncoherenceVariant {
    /// `‖D_iᵀ D_j − I_d‖²` (slot-by-slot Gram).
    #[default]
    LiteralDxd,
    /// `‖D_i D_jᵀ − I_p‖²` (atom-by-atom Gram).
    CrossGramPxp,
}

/// Initial value of every Bregman variable entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BregmanInit {
    #[default]
    Ones,
    Zeros,
}

impl BregmanInit {
    pub fn value(self) -> f64 {
        match self {
            BregmanInit::Ones => 1.0,
            BregmanInit::Zeros => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Simple,
    Distinctive,
    Disaggregating,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::Simple, Formulation::Distinctive, Formulation::Disaggregating];

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Simple => "simple",
            Formulation::Distinctive => "distinctive",
            Formulation::Disaggregating => "disaggregating",
        }
    }

    pub(crate) fn has_incoherence(self) -> bool {
        self != Formulation::Simple
    }

    pub(crate) fn has_cross_energy(self) -> bool {
        self == Formulation::Disaggregating
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::invalid(format!("unknown formulation `{s}` (expected simple, distinctive or disaggregating)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// ℓ1 weight on the analysis coefficients.
    pub lambda: f64,
    /// Weight of the Bregman penalty `μ‖Z − D X̂ − B‖²`.
    pub mu: f64,
    /// Incoherence weight.
    pub eta: f64,
    /// Cross-appliance dense energy weight.
    pub gamma: f64,
    /// Rows per analysis dictionary (atoms per synthesis dictionary).
    pub atoms: usize,
    pub max_outer: usize,
    /// Relative objective change that stops the outer loop.
    pub tol: f64,
    /// Tikhonov weight of the dictionary update, relative to the trace of
    /// its normal matrix.
    pub ls_eps: f64,
    pub seed: u64,
    pub bregman_variant: BregmanVariant,
    pub incoherence_variant: IncoherenceVariant,
    pub bregman_init: BregmanInit,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            mu: 0.5,
            eta: 0.2,
            gamma: 0.05,
            atoms: 3,
            max_outer: 100,
            tol: 1e-6,
            ls_eps: 1e-8,
            seed: 0,
            bregman_variant: BregmanVariant::Standard,
            incoherence_variant: IncoherenceVariant::LiteralDxd,
            bregman_init: BregmanInit::Ones,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and nonnegative, got {v}")))
            }
        };
        nonneg("lambda", self.lambda)?;
        nonneg("eta", self.eta)?;
        nonneg("gamma", self.gamma)?;
        nonneg("ls_eps", self.ls_eps)?;
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.atoms == 0 {
            return Err(Error::invalid("atoms must be >= 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be >= 1"));
        }
        Ok(())
    }

    /// Seed used for appliance `index` in multi-appliance runs.
    pub fn appliance_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// A learned `p × d` analysis operator.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDict {
    pub appliance_id: String,
    pub op: Matrix,
}

impl AnalysisDict {
    pub fn new(appliance_id: impl Into<String>, op: Matrix) -> Result<Self> {
        if op.nrows() == 0 || op.ncols() == 0 || op.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("analysis dictionary must be nonempty and finite"));
        }
        Ok(Self { appliance_id: appliance_id.into(), op })
    }

    pub fn atoms(&self) -> usize {
        self.op.nrows()
    }

    pub fn slots(&self) -> usize {
        self.op.ncols()
    }
}

/// Per-appliance convergence record of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApplianceTrace {
    pub appliance: String,
    /// Un-augmented objective after each outer iteration.
    pub objective: Vec<f64>,
    /// `‖Z − D X̂‖_F` after each outer iteration.
    pub constraint_residual: Vec<f64>,
    /// Whether the relative-change test fired before `max_outer`.
    pub converged: bool,
}

impl ApplianceTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.constraint_residual.last().copied()
    }
}
