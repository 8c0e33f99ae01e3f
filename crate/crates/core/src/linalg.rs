//! Dense factorizations on `nalgebra` matrices, computed with `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{OtfsError, Result};

// entries below this fraction of the largest magnitude are skipped by `gram`
const SPARSE_DROP: f64 = 1e-15;

fn to_faer(a: &DMatrix<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// `A^H A`, accumulated row by row over the non-negligible entries. Channel
/// matrices carry a few nonzeros per row, so this is far cheaper than a
/// dense product; dense inputs fall back to the dense product.
pub fn gram(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (rows, cols) = a.shape();
    let peak = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let floor = SPARSE_DROP * peak;
    let mut nz: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); rows];
    for j in 0..cols {
        for (i, v) in a.column(j).iter().enumerate() {
            if v.norm() > floor {
                nz[i].push((j, *v));
            }
        }
    }
    let work: usize = nz.iter().map(|r| r.len() * r.len()).sum();
    if work.saturating_mul(4) >= rows * cols * cols {
        return a.adjoint() * a;
    }
    let mut g = DMatrix::zeros(cols, cols);
    for row in &nz {
        for &(p, vp) in row {
            let cp = vp.conj();
            for &(q, vq) in row {
                g[(p, q)] += cp * vq;
            }
        }
    }
    g
}

/// Eigenvalues and orthonormal eigenvectors (as columns) of a Hermitian matrix.
pub fn hermitian_eigen(a: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let evd = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| OtfsError::Numerical(format!("Hermitian eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i].re).collect();
    let u = evd.U();
    Ok((vals, DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| u[(i, j)])))
}

/// Cholesky solve of a Hermitian positive-definite system, with the diagonal
/// of the inverse. `None` when the matrix is not numerically positive definite.
pub fn cholesky_solve(a: &DMatrix<Complex64>, rhs: &DVector<Complex64>) -> Option<(DVector<Complex64>, Vec<f64>)> {
    let llt = to_faer(a).llt(Side::Lower).ok()?;
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = llt.solve(&b);
    let inv = llt.inverse();
    let diag = (0..a.nrows()).map(|i| inv[(i, i)].re).collect();
    Some((DVector::from_fn(rhs.len(), |i, _| x[(i, 0)]), diag))
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let mut sv = to_faer(a).singular_values().map_err(|e| OtfsError::Numerical(format!("SVD failed: {e:?}")))?;
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}
