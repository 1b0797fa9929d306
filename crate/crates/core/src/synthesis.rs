//! Synthesis sparse-coding baseline: `X ≈ D Z` with `Z ≥ 0`.
//!
//! Codes come from nonnegative iterative shrinkage on
//! `‖X − D Z‖² + λ‖Z‖₁`; dictionaries from a ridge update followed by
//! column renormalization. Disaggregation codes the aggregate over the
//! concatenated dictionary and reads off `X̂_i = D_i Z_i`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::analysis::ApplianceTrace;
use crate::datapipe::DayMatrix;
use crate::disagg::{finish, DisaggResult};
use crate::error::{Error, Result};
use crate::numkernels::{frobenius_sq, l1_norm, ridge_solve, seeded_gaussian, Matrix};

/// A `d × m` basis with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisDict {
    pub appliance_id: String,
    pub basis: Matrix,
}

impl SynthesisDict {
    pub fn new(appliance_id: impl Into<String>, basis: Matrix) -> Result<Self> {
        if basis.nrows() == 0 || basis.ncols() == 0 || basis.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("synthesis basis must be nonempty and finite"));
        }
        Ok(Self { appliance_id: appliance_id.into(), basis })
    }

    pub fn atoms(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisInit {
    /// Absolute values of seeded Gaussian draws, unit columns.
    #[default]
    Random,
    /// The first `m` columns of the identity (requires `m ≤ d`).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisControls {
    pub max_outer: usize,
    /// Relative objective change that stops dictionary learning.
    pub tol: f64,
    /// Shrinkage iterations per code step.
    pub code_iters: usize,
    /// Relative code change that ends a code step early.
    pub code_tol: f64,
    /// Tikhonov weight of the dictionary update, relative to the trace of its
    /// normal matrix.
    pub ls_eps: f64,
    pub seed: u64,
    pub init: BasisInit,
    /// Shrinkage step; defaults to `0.99 / σ_max(D)²`.
    pub step: Option<f64>,
}

impl Default for SynthesisControls {
    fn default() -> Self {
        Self {
            max_outer: 100,
            tol: 1e-6,
            code_iters: 500,
            code_tol: 1e-10,
            ls_eps: 1e-8,
            seed: 0,
            init: BasisInit::Random,
            step: None,
        }
    }
}

impl SynthesisControls {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer == 0 || self.code_iters == 0 {
            return Err(Error::invalid("max_outer and code_iters must be >= 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite() && self.code_tol >= 0.0 && self.code_tol.is_finite()) {
            return Err(Error::invalid("tol must be positive and code_tol nonnegative"));
        }
        if !(self.ls_eps >= 0.0 && self.ls_eps.is_finite()) {
            return Err(Error::invalid("ls_eps must be finite and nonnegative"));
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("step must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisFit {
    pub dict: SynthesisDict,
    /// `m × n` nonnegative codes.
    pub codes: Matrix,
    /// Objective at initialization followed by its value after each outer
    /// iteration.
    pub trace: ApplianceTrace,
}

/// `‖X − D Z‖² + λ‖Z‖₁`.
pub fn synthesis_objective(x: &Matrix, basis: &Matrix, codes: &Matrix, lambda: f64) -> f64 {
    frobenius_sq(&(x - basis * codes)) + lambda * l1_norm(codes)
}

/// Largest squared singular value of `d`.
fn sigma_max_sq(d: &Matrix) -> f64 {
    SymmetricEigen::new(d.tr_mul(d)).eigenvalues.iter().cloned().fold(0.0, f64::max)
}

fn step_size(d: &Matrix, requested: Option<f64>) -> Result<f64> {
    let s2 = sigma_max_sq(d);
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    let bound = 1.0 / s2;
    match requested {
        Some(step) if step > bound => Err(Error::StepTooLarge { step, bound }),
        Some(step) => Ok(step),
        None => Ok(0.99 * bound),
    }
}

/// Nonnegative iterative shrinkage for `min_{Z ≥ 0} ‖X − D Z‖² + λ‖Z‖₁`
/// from `z0`. Returns the codes and the objective after every iteration.
fn shrink_codes(
    x: &Matrix,
    d: &Matrix,
    z0: Matrix,
    lambda: f64,
    step: f64,
    iters: usize,
    tol: f64,
) -> (Matrix, Vec<f64>) {
    let mut z = z0;
    let mut trace = Vec::new();
    if step == 0.0 {
        z.fill(0.0);
        trace.push(synthesis_objective(x, d, &z, lambda));
        return (z, trace);
    }
    let gram = d.tr_mul(d);
    let dtx = d.tr_mul(x);
    let shift = step * lambda / 2.0;
    for _ in 0..iters {
        let g = &gram * &z - &dtx;
        let next = (&z - g * step).map(|v| (v - shift).max(0.0));
        let change = (&next - &z).norm();
        z = next;
        trace.push(synthesis_objective(x, d, &z, lambda));
        if change <= tol * z.norm().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (z, trace)
}

/// Nonnegative codes of `x` over `basis`.
pub fn sparse_code_nonneg(x: &Matrix, basis: &Matrix, lambda: f64, controls: &SynthesisControls) -> Result<Matrix> {
    controls.validate()?;
    if x.nrows() != basis.nrows() {
        return Err(Error::invalid(format!("basis has {} rows, data {}", basis.nrows(), x.nrows())));
    }
    let step = step_size(basis, controls.step)?;
    let z0 = Matrix::zeros(basis.ncols(), x.ncols());
    Ok(shrink_codes(x, basis, z0, lambda, step, controls.code_iters, controls.code_tol).0)
}

fn initial_basis(d: usize, m: usize, c: &SynthesisControls) -> Result<Matrix> {
    match c.init {
        BasisInit::Random => Ok(seeded_gaussian(m, d, c.seed).transpose().abs()),
        BasisInit::Identity if m <= d => Ok(Matrix::identity(d, m)),
        BasisInit::Identity => Err(Error::invalid(format!("identity init needs m <= d, got m = {m}, d = {d}"))),
    }
}

/// Ridge update nearest the current basis, then unit columns with the
/// scale moved into the codes.
fn dictionary_update(x: &Matrix, d: &Matrix, z: &Matrix, ls_eps: f64) -> Result<(Matrix, Matrix)> {
    let trace = frobenius_sq(z);
    let eps = if trace > 0.0 { ls_eps * trace } else { ls_eps };
    let delta = ridge_solve(&z.transpose(), &(x - d * z).transpose(), eps)?;
    let mut basis = d + delta.transpose();
    let mut codes = z.clone();
    for k in 0..basis.ncols() {
        let norm = basis.column(k).norm();
        if norm > 0.0 {
            basis.column_mut(k).scale_mut(1.0 / norm);
            codes.row_mut(k).scale_mut(norm);
        }
    }
    Ok((basis, codes))
}

/// Learns an `d × m` basis for one appliance by alternating a code step and
/// a dictionary step. A dictionary update that would raise the objective
/// (through the renormalization) is not taken.
pub fn train_synthesis(x: &DayMatrix, m: usize, lambda: f64, controls: &SynthesisControls) -> Result<SynthesisFit> {
    controls.validate()?;
    if m == 0 {
        return Err(Error::invalid("atom count must be >= 1"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let xv = x.values();
    let mut basis = initial_basis(xv.nrows(), m, controls)?;
    let mut codes = Matrix::zeros(m, xv.ncols());
    let mut trace = ApplianceTrace { appliance: x.channel_id().to_string(), ..Default::default() };
    let mut f = synthesis_objective(xv, &basis, &codes, lambda);
    trace.objective.push(f);
    trace.constraint_residual.push(0.0);

    for k in 1..=controls.max_outer {
        let step = step_size(&basis, controls.step)?;
        codes = shrink_codes(xv, &basis, codes, lambda, step, controls.code_iters, controls.code_tol).0;
        let after_codes = synthesis_objective(xv, &basis, &codes, lambda);

        let (nb, nc) = dictionary_update(xv, &basis, &codes, controls.ls_eps)?;
        let candidate = synthesis_objective(xv, &nb, &nc, lambda);
        let next = if candidate <= after_codes {
            basis = nb;
            codes = nc;
            candidate
        } else {
            after_codes
        };
        if !next.is_finite() {
            return Err(Error::Divergence { appliance: x.channel_id().to_string(), iteration: k });
        }
        trace.objective.push(next);
        trace.constraint_residual.push(0.0);
        let prev = f;
        f = next;
        if (f - prev).abs() <= controls.tol * prev.abs().max(f.abs()) {
            trace.converged = true;
            break;
        }
    }
    Ok(SynthesisFit { dict: SynthesisDict::new(x.channel_id(), basis)?, codes, trace })
}

/// Codes the aggregate over the column-concatenated dictionaries and returns
/// `X̂_i = D_i Z_i`. The objective trace records every shrinkage iteration.
pub fn disaggregate_synthesis(
    x_agg: &DayMatrix,
    dicts: &[SynthesisDict],
    lambda: f64,
    controls: &SynthesisControls,
    clip: bool,
) -> Result<DisaggResult> {
    controls.validate()?;
    if dicts.is_empty() {
        return Err(Error::invalid("disaggregation needs at least one dictionary"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let x = x_agg.values();
    let d = x.nrows();
    for dict in dicts {
        if dict.basis.nrows() != d {
            return Err(Error::invalid(format!(
                "dictionary `{}` has {} slots, aggregate {d}",
                dict.appliance_id,
                dict.basis.nrows()
            )));
        }
    }
    let total: usize = dicts.iter().map(|s| s.atoms()).sum();
    let mut basis = Matrix::zeros(d, total);
    let mut offset = 0;
    for dict in dicts {
        basis.view_mut((0, offset), (d, dict.atoms())).copy_from(&dict.basis);
        offset += dict.atoms();
    }
    let step = step_size(&basis, controls.step)?;
    let z0 = Matrix::zeros(total, x.ncols());
    let mut objective_trace = vec![synthesis_objective(x, &basis, &z0, lambda)];
    let (codes, trace) = shrink_codes(x, &basis, z0, lambda, step, controls.code_iters, controls.code_tol);
    let converged = trace.len() < controls.code_iters;
    objective_trace.extend(trace);
    if objective_trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            appliance: dicts[0].appliance_id.clone(),
            iteration: objective_trace.len() - 1,
        });
    }

    let mut estimates = Vec::with_capacity(dicts.len());
    let mut offset = 0;
    for dict in dicts {
        let zi = codes.rows(offset, dict.atoms());
        estimates.push(&dict.basis * zi);
        offset += dict.atoms();
    }
    let labels = dicts.iter().map(|s| s.appliance_id.clone()).collect();
    Ok(finish(x, labels, estimates, objective_trace, clip, converged))
}
