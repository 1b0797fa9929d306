//! Dense numeric kernels shared by the solvers.
//!
//! Every kernel is a pure function of its inputs. Problem sizes in this crate
//! are small (a handful of atoms, 144 slots, at most a few hundred days), so
//! everything here is a direct method on dense `f64` matrices.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative pivot threshold below which an unregularized normal matrix is
/// treated as singular.
const PIVOT_RTOL: f64 = 1e-14;

/// Relative residual accepted from [`sylvester_solve`].
pub const SYLVESTER_RTOL: f64 = 1e-8;

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn l1_norm(m: &Matrix) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

fn shrink(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Elementwise `sign(v) * max(|v| - theta, 0)`.
pub fn soft_threshold(m: &Matrix, theta: f64) -> Result<Matrix> {
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::invalid(format!("soft threshold must be finite and nonnegative, got {theta}")));
    }
    Ok(m.map(|v| shrink(v, theta)))
}

/// Minimizer of `‖y − aW‖²_F + eps‖W‖²_F`, i.e. the solution of
/// `(aᵀa + eps·I) W = aᵀy`.
///
/// Right-sided problems `min_D ‖R − D X‖` are solved by the caller as the
/// transpose problem `ridge_solve(Xᵀ, Rᵀ, eps)ᵀ`.
pub fn ridge_solve(a: &Matrix, y: &Matrix, eps: f64) -> Result<Matrix> {
    if a.nrows() != y.nrows() {
        return Err(Error::invalid(format!("ridge_solve: a has {} rows but y has {}", a.nrows(), y.nrows())));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::invalid(format!("ridge eps must be finite and nonnegative, got {eps}")));
    }
    if !all_finite(a) || !all_finite(y) {
        return Err(Error::invalid("ridge_solve: non-finite input"));
    }
    let k = a.ncols();
    let mut normal = a.tr_mul(a);
    if eps > 0.0 {
        for i in 0..k {
            normal[(i, i)] += eps;
        }
    }
    let rhs = a.tr_mul(y);
    let chol = match Cholesky::new(normal) {
        Some(c) => c,
        None if eps == 0.0 => return Err(Error::RankDeficient { order: k }),
        None => {
            return Err(Error::NumericalFailure {
                context: "ridge_solve Cholesky factorization".into(),
                residual: f64::NAN,
            })
        }
    };
    if eps == 0.0 {
        let l = chol.l_dirty();
        let diag: Vec<f64> = (0..k).map(|i| l[(i, i)] * l[(i, i)]).collect();
        let max = diag.iter().cloned().fold(0.0_f64, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if max == 0.0 || min <= PIVOT_RTOL * max {
            return Err(Error::RankDeficient { order: k });
        }
    }
    Ok(chol.solve(&rhs))
}

fn symmetric_defect(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Solves `a·D + D·c = e` for symmetric `a` (p×p) and `c` (d×d).
///
/// Both operands are diagonalized; the transformed system is then diagonal
/// with entries `α_k + β_l`. The result is accepted only if the residual is at
/// most `SYLVESTER_RTOL · max(1, ‖e‖_F)`.
pub fn sylvester_solve(a: &Matrix, c: &Matrix, e: &Matrix) -> Result<Matrix> {
    let (p, d) = (a.nrows(), c.nrows());
    if !a.is_square() || !c.is_square() || e.nrows() != p || e.ncols() != d {
        return Err(Error::invalid(format!(
            "sylvester_solve: incompatible shapes a {:?}, c {:?}, e {:?}",
            a.shape(),
            c.shape(),
            e.shape()
        )));
    }
    if !all_finite(a) || !all_finite(c) || !all_finite(e) {
        return Err(Error::invalid("sylvester_solve: non-finite input"));
    }
    let scale_a = a.amax().max(1.0);
    let scale_c = c.amax().max(1.0);
    if symmetric_defect(a) > 1e-10 * scale_a || symmetric_defect(c) > 1e-10 * scale_c {
        return Err(Error::invalid("sylvester_solve: operands must be symmetric"));
    }

    let ea = SymmetricEigen::new(a.clone());
    let ec = SymmetricEigen::new(c.clone());
    let mut t = ea.eigenvectors.tr_mul(e) * &ec.eigenvectors;
    for k in 0..p {
        for l in 0..d {
            let denom = ea.eigenvalues[k] + ec.eigenvalues[l];
            t[(k, l)] /= denom;
        }
    }
    let sol = &ea.eigenvectors * t * ec.eigenvectors.transpose();

    let residual = (a * &sol + &sol * c - e).norm();
    let bound = SYLVESTER_RTOL * e.norm().max(1.0);
    if !residual.is_finite() || residual > bound {
        return Err(Error::NumericalFailure { context: "sylvester_solve".into(), residual });
    }
    Ok(sol)
}

/// `p × d` standard-normal draws from a seeded ChaCha stream, each row scaled
/// to unit Euclidean norm.
pub fn seeded_gaussian(p: usize, d: usize, seed: u64) -> Matrix {
    assert!(p >= 1 && d >= 1, "seeded_gaussian needs p, d >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::from_fn(p, d, |_, _| 0.0);
    // Fill row by row so the draw order is independent of storage layout.
    for i in 0..p {
        for j in 0..d {
            m[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    for i in 0..p {
        let norm = m.row(i).norm();
        if norm > 0.0 {
            m.row_mut(i).scale_mut(1.0 / norm);
        } else {
            m[(i, 0)] = 1.0;
        }
    }
    m
}

/// Symmetric positive definite test matrices and other helpers for the
/// oracle-based tests.
#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    pub fn spd(n: usize, seed: u64) -> Matrix {
        let g = random(n, n, seed);
        g.tr_mul(&g) + Matrix::identity(n, n) * 0.5
    }

    /// `(I ⊗ a + cᵀ ⊗ I) vec(D) = vec(e)` with column-major `vec`, solved by LU.
    pub fn kronecker_sylvester(a: &Matrix, c: &Matrix, e: &Matrix) -> Matrix {
        let (p, d) = (a.nrows(), c.nrows());
        let n = p * d;
        let mut big = Matrix::zeros(n, n);
        for col in 0..d {
            for i in 0..p {
                let row = col * p + i;
                for k in 0..p {
                    big[(row, col * p + k)] += a[(i, k)];
                }
                for l in 0..d {
                    big[(row, l * p + i)] += c[(l, col)];
                }
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(e.as_slice());
        let x = big.lu().solve(&rhs).expect("kronecker oracle singular");
        Matrix::from_column_slice(p, d, x.as_slice())
    }

    /// Least squares on the stacked system `[y; 0] ≈ [a; √eps·I] W` via SVD.
    pub fn stacked_ridge(a: &Matrix, y: &Matrix, eps: f64) -> Matrix {
        let (m, k) = a.shape();
        let mut big_a = Matrix::zeros(m + k, k);
        big_a.view_mut((0, 0), (m, k)).copy_from(a);
        for i in 0..k {
            big_a[(m + i, i)] = eps.sqrt();
        }
        let mut big_y = Matrix::zeros(m + k, y.ncols());
        big_y.view_mut((0, 0), (m, y.ncols())).copy_from(y);
        big_a.svd(true, true).solve(&big_y, 1e-14).unwrap()
    }
}
