//! Dense linear-algebra helpers shared by the controller and the analysis code.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (smallest pivot {pivot:.3e}, condition estimate {condition:.3e})")]
    Singular { pivot: f64, condition: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Result of a checked LU solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub x: DVector<f64>,
    /// `max |u_ii| / min |u_ii|` of the LU factor.
    pub condition: f64,
    /// `‖A x − b‖_∞`
    pub residual: f64,
}

/// Solves `a x = b` by LU with partial pivoting, rejecting pivots smaller than `pivot_tol`.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>, pivot_tol: f64) -> Result<Solved, LinalgError> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(LinalgError::Dimension(format!(
            "{}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut min_pivot, mut max_pivot) = (f64::INFINITY, 0.0_f64);
    for k in 0..u.nrows() {
        let d = u[(k, k)].abs();
        min_pivot = min_pivot.min(d);
        max_pivot = max_pivot.max(d);
    }
    let condition = if min_pivot > 0.0 { max_pivot / min_pivot } else { f64::INFINITY };
    if !(min_pivot >= pivot_tol) {
        return Err(LinalgError::Singular { pivot: min_pivot, condition });
    }
    let x = lu.solve(b).ok_or(LinalgError::Singular { pivot: min_pivot, condition })?;
    let residual = (a * &x - b).amax();
    Ok(Solved { x, condition, residual })
}

/// Eigenvalues of a general real square matrix, via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// `I_n ⊗ block`.
pub fn block_diagonal(n: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(n * r, n * c);
    for k in 0..n {
        out.view_mut((k * r, k * c), (r, c)).copy_from(block);
    }
    out
}

/// `a ⊗ I_2`, the lift of a vehicle-indexed matrix to planar coordinates.
pub fn kron_i2(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let w = a[(i, j)];
            if w != 0.0 {
                out[(2 * i, 2 * j)] = w;
                out[(2 * i + 1, 2 * j + 1)] = w;
            }
        }
    }
    out
}
