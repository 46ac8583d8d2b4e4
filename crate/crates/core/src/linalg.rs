//! Matrix operators used by the closed-form solver updates.
//!
//! Every function here is pure: inputs are borrowed and never mutated.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Dense real matrix. Column-major, so column `j` of a pixel matrix is the
/// spectrum of pixel `j`.
pub type Matrix = DMatrix<f64>;

/// Relative cutoff below which singular values are treated as zero when
/// forming the nuclear-norm subgradient.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SVD_MAX_ITER: usize = 10_000;

/// Thin SVD `A = U diag(s) Vᵀ` with `s` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: Matrix,
    pub singulars: DVector<f64>,
    /// `Vᵀ`, stored transposed as nalgebra produces it.
    pub right_t: Matrix,
}

impl SvdFactors {
    /// Reassemble `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        scaled_product(&self.left, self.singulars.as_slice(), &self.right_t)
    }

    /// `V`, with orthonormal columns.
    pub fn right(&self) -> Matrix {
        self.right_t.transpose()
    }
}

/// Thin SVD of `a`.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    let decomposition = SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(Error::SvdFailure { block: None })?;
    let left = decomposition.u.ok_or(Error::SvdFailure { block: None })?;
    let right_t = decomposition.v_t.ok_or(Error::SvdFailure { block: None })?;
    Ok(SvdFactors {
        left,
        singulars: decomposition.singular_values,
        right_t,
    })
}

/// `sgn(x) max(|x| - eps, 0)`.
#[inline]
pub fn soft_threshold(x: f64, eps: f64) -> f64 {
    if x > eps {
        x - eps
    } else if x < -eps {
        x + eps
    } else {
        0.0
    }
}

/// Elementwise [`soft_threshold`].
pub fn soft_threshold_matrix(a: &Matrix, eps: f64) -> Matrix {
    a.map(|x| soft_threshold(x, eps))
}

/// Singular value thresholding: `U S_tau(Σ) Vᵀ`.
///
/// The result minimizes `‖Z‖_* + 1/(2 tau) ‖Z - A‖_F²`.
pub fn svt(a: &Matrix, tau: f64) -> Result<Matrix> {
    svt_with_norm(a, tau).map(|(z, _)| z)
}

/// [`svt`] that also returns the nuclear norm of the result, which falls out
/// of the thresholded spectrum for free.
pub fn svt_with_norm(a: &Matrix, tau: f64) -> Result<(Matrix, f64)> {
    let factors = svd(a)?;
    let shrunk: Vec<f64> = factors
        .singulars
        .iter()
        .map(|&s| soft_threshold(s, tau))
        .collect();
    let norm = shrunk.iter().sum();
    let kept = shrunk.iter().take_while(|&&s| s > 0.0).count();
    if kept == 0 {
        return Ok((Matrix::zeros(a.nrows(), a.ncols()), 0.0));
    }
    let z = scaled_product(
        &factors.left.columns(0, kept).into_owned(),
        &shrunk[..kept],
        &factors.right_t.rows(0, kept).into_owned(),
    );
    Ok((z, norm))
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(svd(a)?.singulars.sum())
}

/// The `Z = 0` member of the nuclear-norm subdifferential, `U_r V_rᵀ`.
///
/// Singular directions with `σ <= rank_tol * σ_max` are dropped. The zero
/// matrix maps to the zero matrix.
pub fn nuclear_subgradient(a: &Matrix, rank_tol: f64) -> Result<Matrix> {
    Ok(subgradient_from_factors(
        &svd(a)?,
        rank_tol,
        a.nrows(),
        a.ncols(),
    ))
}

pub(crate) fn subgradient_from_factors(
    factors: &SvdFactors,
    rank_tol: f64,
    rows: usize,
    cols: usize,
) -> Matrix {
    let sigma_max = factors.singulars.iter().copied().fold(0.0, f64::max);
    if sigma_max <= 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let cutoff = rank_tol * sigma_max;
    let rank = factors.singulars.iter().filter(|&&s| s > cutoff).count();
    factors.left.columns(0, rank) * factors.right_t.rows(0, rank)
}

/// Largest absolute entry.
pub fn max_norm(a: &Matrix) -> f64 {
    a.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// Copy the listed columns of `a` into a new matrix, in list order.
pub fn gather_columns(a: &Matrix, columns: &[usize]) -> Matrix {
    Matrix::from_fn(a.nrows(), columns.len(), |r, c| a[(r, columns[c])])
}

/// Inverse of [`gather_columns`]: write column `k` of `block` to column
/// `columns[k]` of `dest`.
pub fn scatter_columns(dest: &mut Matrix, columns: &[usize], block: &Matrix) {
    for (k, &col) in columns.iter().enumerate() {
        dest.column_mut(col).copy_from(&block.column(k));
    }
}

fn scaled_product(left: &Matrix, scale: &[f64], right_t: &Matrix) -> Matrix {
    let mut scaled = left.clone();
    for (mut column, &s) in scaled.column_iter_mut().zip(scale) {
        column *= s;
    }
    scaled * right_t
}
