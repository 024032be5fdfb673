//! Small dense linear-algebra helpers shared by the spectral and distance
//! modules.

use nalgebra::DMatrix;

use crate::error::{LesError, Result};

// Symmetric matrices with eigenvalues below -SPD_EIG_TOLERANCE are rejected
// as non-SPD; anything in [-SPD_EIG_TOLERANCE, EIG_LOG_FLOOR] is treated as
// numerical zero and floored before a log or inverse power.
pub(crate) const SPD_EIG_TOLERANCE: f64 = 1e-10;
pub(crate) const EIG_LOG_FLOOR: f64 = 1e-300;

const EIGEN_MAX_ITERS: usize = 100_000;

/// Full symmetric eigendecomposition with eigenvalues sorted descending
/// (stable: exact ties keep the solver's order) and columns permuted to
/// match.
pub(crate) fn symmetric_eigen_sorted(w: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if w.nrows() != w.ncols() {
        return Err(LesError::Shape(format!(
            "expected a square matrix, got {} x {}",
            w.nrows(),
            w.ncols()
        )));
    }
    let eig = w
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or_else(|| LesError::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).copy_from(&eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Eigendecomposition of an SPD matrix, rejecting eigenvalues below
/// -SPD_EIG_TOLERANCE and flooring the rest at EIG_LOG_FLOOR.
pub(crate) fn spd_eigen(w: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (values, vectors) = symmetric_eigen_sorted(w)?;
    if let Some(min) = values.last() {
        if *min < -SPD_EIG_TOLERANCE {
            return Err(LesError::Numerical(format!(
                "matrix is not positive semidefinite: eigenvalue {min:e}"
            )));
        }
    }
    let values = values.into_iter().map(|v| v.max(EIG_LOG_FLOOR)).collect();
    Ok((values, vectors))
}

/// Matrix logarithm of an SPD matrix via its eigendecomposition.
pub(crate) fn spd_log(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, q) = spd_eigen(w)?;
    Ok(apply_spectral(&values, &q, f64::ln))
}

/// Q f(Lambda) Q^T for a spectral function f.
pub(crate) fn apply_spectral(values: &[f64], q: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = values.len();
    let mut scaled = q.clone();
    for (j, &v) in values.iter().enumerate() {
        let fv = f(v);
        scaled.column_mut(j).scale_mut(fv);
    }
    let mut out = DMatrix::<f64>::zeros(n, n);
    scaled.mul_to(&q.transpose(), &mut out);
    out
}
