//! Disaggregation with fixed analysis dictionaries.
//!
//! Minimizes `‖X − Σ_i X̂_i‖² + λ Σ_i ‖D_i X̂_i‖₁` by block-coordinate
//! descent over appliances. Each block is the single-appliance problem with
//! target `X − Σ_{j≠i} X̂_j`, solved by Split Bregman.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisDict, BregmanVariant, Hyperparams};
use crate::datapipe::DayMatrix;
use crate::error::{Error, Result};
use crate::numkernels::{all_finite, frobenius_sq, l1_norm, soft_threshold, Matrix};

/// How far each appliance's sub-problem is solved per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Subproblem {
    /// One estimate, proxy and Bregman update.
    SinglePass,
    /// Repeat until the estimate and the constraint residual settle.
    Converged { max_inner: usize, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisaggOptions {
    /// Zero negative entries of the final estimates.
    pub clip: bool,
    pub subproblem: Subproblem,
}

impl Default for DisaggOptions {
    fn default() -> Self {
        Self { clip: true, subproblem: Subproblem::SinglePass }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggResult {
    pub labels: Vec<String>,
    /// One `d × n` estimate per appliance, in dictionary order.
    pub estimates: Vec<Matrix>,
    /// Objective at initialization followed by its value after each outer
    /// iteration.
    pub objective_trace: Vec<f64>,
    /// `‖X − Σ X̂_i‖ / ‖X‖` for the returned estimates.
    pub sum_residual: f64,
    pub clipped: bool,
    /// Share of each estimate's absolute energy removed by clipping.
    pub clipped_fraction: Vec<f64>,
    pub converged: bool,
}

impl DisaggResult {
    pub fn iterations(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }

    /// Wraps the estimates as day matrices sharing the aggregate's day labels.
    pub fn day_matrices(&self, x_agg: &DayMatrix) -> Result<Vec<DayMatrix>> {
        self.labels
            .iter()
            .zip(&self.estimates)
            .map(|(l, e)| Ok(x_agg.with_values(e.clone())?.with_channel(l.clone())))
            .collect()
    }
}

fn check_shapes(x: &Matrix, estimates: &[Matrix], dicts: &[AnalysisDict]) -> Result<()> {
    if dicts.is_empty() {
        return Err(Error::invalid("disaggregation needs at least one dictionary"));
    }
    if estimates.len() != dicts.len() {
        return Err(Error::invalid(format!("{} estimates for {} dictionaries", estimates.len(), dicts.len())));
    }
    for (e, dict) in estimates.iter().zip(dicts) {
        if dict.slots() != x.nrows() {
            return Err(Error::invalid(format!(
                "dictionary `{}` expects {} slots, aggregate has {}",
                dict.appliance_id,
                dict.slots(),
                x.nrows()
            )));
        }
        if e.shape() != x.shape() {
            return Err(Error::invalid(format!(
                "estimate for `{}` has shape {:?}, aggregate {:?}",
                dict.appliance_id,
                e.shape(),
                x.shape()
            )));
        }
    }
    Ok(())
}

fn objective(x: &Matrix, estimates: &[Matrix], dicts: &[AnalysisDict], lambda: f64) -> f64 {
    let mut r = x.clone();
    for e in estimates {
        r -= e;
    }
    let mut f = frobenius_sq(&r);
    for (e, dict) in estimates.iter().zip(dicts) {
        f += lambda * l1_norm(&(&dict.op * e));
    }
    f
}

/// `‖X − Σ_i X̂_i‖² + λ Σ_i ‖D_i X̂_i‖₁`.
pub fn disagg_objective(x_agg: &DayMatrix, estimates: &[Matrix], dicts: &[AnalysisDict], lambda: f64) -> Result<f64> {
    check_shapes(x_agg.values(), estimates, dicts)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    Ok(objective(x_agg.values(), estimates, dicts, lambda))
}

/// Elementwise `max(v, 0)`, with the fraction of absolute energy removed from
/// each matrix (0 for an all-zero matrix).
pub fn clip_nonnegative(estimates: &[Matrix]) -> (Vec<Matrix>, Vec<f64>) {
    estimates
        .iter()
        .map(|e| {
            let total = l1_norm(e);
            let negative: f64 = e.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
            let frac = if total > 0.0 { negative / total } else { 0.0 };
            (e.map(|v| v.max(0.0)), frac)
        })
        .unzip()
}

pub(crate) fn finish(
    x: &Matrix,
    labels: Vec<String>,
    estimates: Vec<Matrix>,
    objective_trace: Vec<f64>,
    clip: bool,
    converged: bool,
) -> DisaggResult {
    let n_app = estimates.len();
    let (estimates, clipped_fraction) = if clip { clip_nonnegative(&estimates) } else { (estimates, vec![0.0; n_app]) };
    let mut r = x.clone();
    for e in &estimates {
        r -= e;
    }
    let xn = x.norm();
    let sum_residual = if xn > 0.0 { r.norm() / xn } else { r.norm() };
    DisaggResult { labels, estimates, objective_trace, sum_residual, clipped: clip, clipped_fraction, converged }
}

pub fn disaggregate(x_agg: &DayMatrix, dicts: &[AnalysisDict], h: &Hyperparams) -> Result<DisaggResult> {
    disaggregate_with(x_agg, dicts, h, &DisaggOptions::default())
}

struct Block<'a> {
    dict: &'a AnalysisDict,
    chol: Cholesky<f64, nalgebra::Dyn>,
    proxy: Matrix,
    bregman: Matrix,
}

impl Block<'_> {
    /// One estimate, proxy and Bregman update against `target`.
    fn pass(&mut self, target: &Matrix, h: &Hyperparams) -> Result<Matrix> {
        let d = &self.dict.op;
        let rhs = target + d.tr_mul(&(&self.proxy - &self.bregman)) * h.mu;
        let est = self.chol.solve(&rhs);
        let dx = d * &est;
        self.proxy = soft_threshold(&(&dx + &self.bregman), h.lambda / (2.0 * h.mu))?;
        self.bregman = match h.bregman_variant {
            BregmanVariant::Standard => &self.bregman + dx - &self.proxy,
            BregmanVariant::PaperLiteral => &self.proxy - dx - &self.bregman,
        };
        Ok(est)
    }
}

pub fn disaggregate_with(
    x_agg: &DayMatrix,
    dicts: &[AnalysisDict],
    h: &Hyperparams,
    opts: &DisaggOptions,
) -> Result<DisaggResult> {
    h.validate()?;
    let x = x_agg.values();
    let n_app = dicts.len();
    let mut estimates = vec![x / n_app.max(1) as f64; n_app];
    check_shapes(x, &estimates, dicts)?;
    if let Subproblem::Converged { max_inner, tol } = opts.subproblem {
        if max_inner == 0 || !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("converged sub-problems need max_inner >= 1 and tol > 0"));
        }
    }
    let labels: Vec<String> = dicts.iter().map(|d| d.appliance_id.clone()).collect();
    if x.iter().all(|v| *v == 0.0) {
        let zeros = vec![Matrix::zeros(x.nrows(), x.ncols()); n_app];
        return Ok(finish(x, labels, zeros, vec![0.0], opts.clip, true));
    }

    let d = x.nrows();
    let mut blocks = Vec::with_capacity(n_app);
    for (dict, est) in dicts.iter().zip(&estimates) {
        let mut normal = dict.op.tr_mul(&dict.op) * h.mu;
        for k in 0..d {
            normal[(k, k)] += 1.0;
        }
        let chol = Cholesky::new(normal).ok_or_else(|| Error::NumericalFailure {
            context: format!("disaggregation normal matrix for `{}`", dict.appliance_id),
            residual: f64::NAN,
        })?;
        blocks.push(Block {
            dict,
            chol,
            proxy: &dict.op * est,
            bregman: Matrix::from_element(dict.atoms(), x.ncols(), h.bregman_init.value()),
        });
    }

    let mut trace = vec![objective(x, &estimates, dicts, h.lambda)];
    let mut converged = false;
    for k in 1..=h.max_outer {
        for i in 0..n_app {
            let mut target = x.clone();
            for (j, e) in estimates.iter().enumerate() {
                if j != i {
                    target -= e;
                }
            }
            let block = &mut blocks[i];
            match opts.subproblem {
                Subproblem::SinglePass => estimates[i] = block.pass(&target, h)?,
                Subproblem::Converged { max_inner, tol } => {
                    for _ in 0..max_inner {
                        let est = block.pass(&target, h)?;
                        let step = (&est - &estimates[i]).norm();
                        estimates[i] = est;
                        let gap = (&block.dict.op * &estimates[i] - &block.proxy).norm();
                        let scale = estimates[i].norm().max(1.0);
                        if step <= tol * scale && gap <= tol * scale {
                            break;
                        }
                    }
                }
            }
            if !all_finite(&estimates[i]) {
                return Err(Error::Divergence { appliance: labels[i].clone(), iteration: k });
            }
        }
        let f = objective(x, &estimates, dicts, h.lambda);
        if !f.is_finite() {
            return Err(Error::Divergence { appliance: labels[n_app - 1].clone(), iteration: k });
        }
        let prev = *trace.last().expect("initial objective");
        trace.push(f);
        if k >= 2 && (f - prev).abs() <= h.tol * prev.abs().max(f.abs()) {
            converged = true;
            break;
        }
    }
    Ok(finish(x, labels, estimates, trace, opts.clip, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernels::testing::random;

    #[test]
    fn clip_examples() {
        let (out, frac) = clip_nonnegative(&[Matrix::from_row_slice(1, 2, &[-1.0, 2.0])]);
        assert_eq!(out[0], Matrix::from_row_slice(1, 2, &[0.0, 2.0]));
        assert_eq!(frac[0], 1.0 / 3.0);
        let pos = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 3.0, 4.0]);
        let (out, frac) = clip_nonnegative(std::slice::from_ref(&pos));
        assert_eq!((out[0].clone(), frac[0]), (pos, 0.0));
        let neg = Matrix::from_element(2, 3, -2.5);
        let (out, frac) = clip_nonnegative(&[neg]);
        assert_eq!((out[0].clone(), frac[0]), (Matrix::zeros(2, 3), 1.0));
    }

    fn brute_objective(x: &Matrix, est: &[Matrix], dicts: &[AnalysisDict], lambda: f64) -> f64 {
        let (d, n) = x.shape();
        let mut f = 0.0;
        for t in 0..d {
            for c in 0..n {
                let mut r = x[(t, c)];
                for e in est {
                    r -= e[(t, c)];
                }
                f += r * r;
            }
        }
        for (e, dict) in est.iter().zip(dicts) {
            for k in 0..dict.atoms() {
                for c in 0..n {
                    let mut v = 0.0;
                    for t in 0..d {
                        v += dict.op[(k, t)] * e[(t, c)];
                    }
                    f += lambda * v.abs();
                }
            }
        }
        f
    }

    #[test]
    fn objective_examples() {
        let x = DayMatrix::from_matrix("mains", random(6, 4, 1)).unwrap();
        let dicts: Vec<_> = (0..3).map(|i| AnalysisDict::new(format!("a{i}"), random(3, 6, 10 + i)).unwrap()).collect();
        let zeros = vec![Matrix::zeros(6, 4); 3];
        assert_eq!(disagg_objective(&x, &zeros, &dicts, 0.7).unwrap(), frobenius_sq(x.values()));

        for seed in 0..5 {
            let est: Vec<_> = (0..3).map(|i| random(6, 4, 50 + seed * 3 + i)).collect();
            let got = disagg_objective(&x, &est, &dicts, 0.3).unwrap();
            let want = brute_objective(x.values(), &est, &dicts, 0.3);
            assert!((got - want).abs() <= 1e-12 * want);
        }

        // Constant columns summing to X, annihilated by a differencing dictionary.
        let xc = DayMatrix::from_matrix("mains", Matrix::from_element(6, 4, 5.0)).unwrap();
        let diff = Matrix::from_fn(2, 6, |k, t| {
            if t == k {
                1.0
            } else if t == k + 1 {
                -1.0
            } else {
                0.0
            }
        });
        let two: Vec<_> = (0..2).map(|i| AnalysisDict::new(format!("c{i}"), diff.clone()).unwrap()).collect();
        let est = [Matrix::from_element(6, 4, 2.0), Matrix::from_element(6, 4, 3.0)];
        assert_eq!(disagg_objective(&xc, &est, &two, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let x = DayMatrix::from_matrix("mains", random(6, 4, 1)).unwrap();
        let bad = vec![AnalysisDict::new("a", random(3, 5, 2)).unwrap()];
        assert!(matches!(disaggregate(&x, &bad, &Hyperparams::default()), Err(Error::InvalidArgument(_))));
        assert!(matches!(disaggregate(&x, &[], &Hyperparams::default()), Err(Error::InvalidArgument(_))));
    }
}
