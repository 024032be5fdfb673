//! Leading-eigenvalue estimation for SPD operators.
//!
//! The workhorse is the randomized fixed-rank PSD approximation of Tropp,
//! Yurtsever, Udell & Cevher (SIAM J. Matrix Anal. 2017): sketch the operator
//! with an orthonormalized Gaussian test matrix, shift for positive
//! definiteness, and read eigenvalue estimates off the singular values of a
//! triangular solve. An exact dense eigensolver is kept alongside as the
//! oracle, and the a-priori error bounds of the method are evaluated from
//! exact spectra for diagnostics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LesError, Result};
use crate::linalg;
use crate::operator::{operator_matmul, SpdOperator, DEFAULT_BATCH_ROWS, DENSE_AUTO_LIMIT};
use crate::rng::{stream_rng, STREAM_SKETCH};

/// Shift factor mu in nu = mu * ||Y||_F (f64 machine epsilon).
pub const SKETCH_SHIFT_MU: f64 = 2.2e-16;

/// The log-eigenvalue bound of the fixed-rank method holds while
/// |lambda - lambda_hat| / (lambda + gamma) stays below this ratio.
pub const RATIO_CONDITION_LIMIT: f64 = 0.5828;

/// Exact eigensolver is preferred below this operator size.
pub const EXACT_AUTO_LIMIT: usize = 2048;

const CHOLESKY_RETRIES: usize = 3;
const SVD_MAX_ITERS: usize = 200_000;

/// How a [`Spectrum`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMethod {
    Exact,
    Nystrom,
}

/// Leading eigenvalues of an SPD operator, sorted descending, all >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    rank_k: usize,
    sketch_m: usize,
    seed: u64,
    shift_nu: f64,
    method: SpectralMethod,
}

impl Spectrum {
    pub fn new(
        values: Vec<f64>,
        sketch_m: usize,
        seed: u64,
        shift_nu: f64,
        method: SpectralMethod,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(LesError::Config("a spectrum needs at least one value".into()));
        }
        for pair in values.windows(2) {
            if !(pair[0] >= pair[1]) {
                return Err(LesError::Numerical(format!(
                    "spectrum is not sorted descending: {} < {}",
                    pair[0], pair[1]
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(LesError::Numerical("spectrum has a negative or non-finite value".into()));
        }
        let rank_k = values.len();
        Ok(Spectrum {
            values,
            rank_k,
            sketch_m,
            seed,
            shift_nu,
            method,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rank_k(&self) -> usize {
        self.rank_k
    }

    /// Number of sketch columns (0 for the exact path).
    pub fn sketch_m(&self) -> usize {
        self.sketch_m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The shift that was subtracted from the squared singular values.
    pub fn shift_nu(&self) -> f64 {
        self.shift_nu
    }

    pub fn method(&self) -> SpectralMethod {
        self.method
    }

    /// Sum of the values from index `k` onward.
    pub fn tail_sum(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len())..].iter().fold(0.0, |a, &v| a + v)
    }
}

/// A-priori error bounds of the fixed-rank approximation.
///
/// `eig_bound` bounds the expected total eigenvalue error
/// K/(M-K-1) * tail; `log_eig_bound` bounds the gamma-regularized
/// log-eigenvalue error 1.5K/((M-K-1)(lambda_K + gamma)) * tail.
#[derive(Debug, Clone, Copy)]
pub struct ErrorBound {
    pub eig_bound: f64,
    pub log_eig_bound: f64,
    pub tail_sum: f64,
    /// Whether supplied observations satisfy the ratio condition under which
    /// the log bound is derived; true when no observations were given.
    pub validity: bool,
}

/// Estimate the `k` leading eigenvalues of `op` with an `m`-column sketch.
///
/// Per the fixed-rank algorithm: draw a standard-normal N x M test matrix
/// from the seeded generator, orthonormalize it, apply the operator, shift
/// by nu = mu ||Y||_F, Cholesky-factor the small cross matrix, and square the
/// singular values of the triangular solve. The final shift is subtracted
/// from the top `k` squared singular values and recorded on the result.
///
/// If the Cholesky factorization fails, nu is doubled and the small matrix
/// rebuilt, up to 3 retries.
pub fn approx_eigenvalues(op: &SpdOperator, k: usize, m: usize, seed: u64) -> Result<Spectrum> {
    let n = op.size();
    if k == 0 {
        return Err(LesError::Config("rank k must be positive".into()));
    }
    if m < k + 2 {
        return Err(LesError::Config(format!(
            "sketch size m = {m} must be at least k + 2 = {}",
            k + 2
        )));
    }
    if m > n {
        return Err(LesError::Config(format!(
            "sketch size m = {m} exceeds the operator size {n}"
        )));
    }

    // Gaussian test matrix, drawn in a fixed column-major order.
    let mut rng = stream_rng(seed, STREAM_SKETCH);
    let draws: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    let omega = DMatrix::from_column_slice(n, m, &draws);

    // Orthonormal basis for range(Omega).
    let q = omega.qr().q();

    let y = operator_matmul(op, &q, DEFAULT_BATCH_ROWS)?;
    let mut nu = SKETCH_SHIFT_MU * y.norm();

    let mut factored = None;
    for attempt in 0..=CHOLESKY_RETRIES {
        let y_shifted = &y + q.scale(nu);
        let b = q.transpose() * &y_shifted;
        let b_sym = (&b + b.transpose()).scale(0.5);
        match b_sym.cholesky() {
            Some(chol) => {
                factored = Some((chol, y_shifted));
                break;
            }
            None if attempt < CHOLESKY_RETRIES => nu *= 2.0,
            None => {}
        }
    }
    let (chol, y_shifted) = factored.ok_or_else(|| {
        LesError::Numerical(format!(
            "cholesky factorization failed after {CHOLESKY_RETRIES} shift retries (final nu = {nu:e})"
        ))
    })?;

    // T = Y C^-1 with C the upper Cholesky factor; we solve L X = Y^T and use
    // that T^T = X has the same singular values as T.
    let l = chol.l();
    let x = l
        .solve_lower_triangular(&y_shifted.transpose())
        .ok_or_else(|| LesError::Numerical("triangular solve hit a zero pivot".into()))?;
    let svd = x
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or_else(|| LesError::Numerical("singular value decomposition did not converge".into()))?;

    let mut squared: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    squared.sort_by(|a, b| b.total_cmp(a));
    let values: Vec<f64> = squared[..k].iter().map(|&v| (v - nu).max(0.0)).collect();
    Spectrum::new(values, m, seed, nu, SpectralMethod::Nystrom)
}

/// Exact top-`k` eigenvalues of a dense symmetric PSD matrix. Negative
/// numerical eigenvalues are clamped to zero; if `k` exceeds the size, the
/// result is padded with exact zeros.
pub fn matrix_eigenvalues(w: &DMatrix<f64>, k: usize) -> Result<Spectrum> {
    if k == 0 {
        return Err(LesError::Config("rank k must be positive".into()));
    }
    let (raw, _) = linalg::symmetric_eigen_sorted(w)?;
    let mut values: Vec<f64> = raw.into_iter().take(k).map(|v| v.max(0.0)).collect();
    values.resize(k, 0.0);
    Spectrum::new(values, 0, 0, 0.0, SpectralMethod::Exact)
}

/// Exact spectrum of a diffusion operator; implicit operators are densified
/// when small enough and rejected otherwise.
pub fn exact_eigenvalues(op: &SpdOperator, k: usize) -> Result<Spectrum> {
    let w = op.to_dense(DENSE_AUTO_LIMIT)?;
    matrix_eigenvalues(&w, k)
}

/// Evaluate the fixed-rank error bounds from an exact spectrum.
///
/// `full` should hold the complete spectrum of the operator (all N values);
/// the tail beyond index `k` feeds both bounds. When `observed` is given,
/// `validity` reports whether every top-k ratio
/// |lambda_i - lambda_hat_i| / (lambda_i + gamma) is within the regime where
/// the log bound applies.
pub fn error_bounds(
    full: &Spectrum,
    k: usize,
    m: usize,
    gamma: f64,
    observed: Option<&Spectrum>,
) -> Result<ErrorBound> {
    if k == 0 || m <= k + 1 {
        return Err(LesError::Config(format!(
            "bounds need m >= k + 2; got k = {k}, m = {m}"
        )));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(LesError::Config(format!("gamma must be nonnegative, got {gamma}")));
    }
    if full.values().len() < k {
        return Err(LesError::Config(format!(
            "full spectrum has {} values, need at least k = {k}",
            full.values().len()
        )));
    }
    let tail = full.tail_sum(k);
    let denom = (m - k - 1) as f64;
    let eig_bound = k as f64 / denom * tail;
    let lambda_k = full.values()[k - 1];
    let log_eig_bound = 1.5 * k as f64 / (denom * (lambda_k + gamma)) * tail;
    let validity = match observed {
        None => true,
        Some(approx) => {
            if approx.values().len() < k {
                return Err(LesError::Config(format!(
                    "observed spectrum has {} values, need at least k = {k}",
                    approx.values().len()
                )));
            }
            (0..k).all(|i| {
                let lam = full.values()[i];
                (lam - approx.values()[i]).abs() / (lam + gamma) <= RATIO_CONDITION_LIMIT
            })
        }
    };
    Ok(ErrorBound {
        eig_bound,
        log_eig_bound,
        tail_sum: tail,
        validity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_torus2, ToriConfig};
    use crate::operator::{build_operator, OperatorMode};

    fn torus_operator(n: usize, seed: u64) -> SpdOperator {
        let cloud = generate_torus2(&ToriConfig::new(n, seed)).unwrap();
        let d = crate::data::pairwise_sq_dists(&cloud, crate::data::Metric::Euclidean);
        let s = crate::data::kernel_scale(&d, 2.0, 2_000_000).unwrap();
        build_operator(&cloud, s, OperatorMode::Auto).unwrap()
    }

    #[test]
    fn closed_form_two_by_two() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = matrix_eigenvalues(&w, 2).unwrap();
        assert!((s.values()[0] - 3.0).abs() < 1e-12);
        assert!((s.values()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padding_beyond_size() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let s = matrix_eigenvalues(&w, 5).unwrap();
        assert_eq!(s.values().len(), 5);
        assert_eq!(&s.values()[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn diffusion_top_eigenvalue_is_one() {
        let op = torus_operator(120, 3);
        let s = exact_eigenvalues(&op, 10).unwrap();
        assert!((s.values()[0] - 1.0).abs() < 1e-10, "top = {}", s.values()[0]);
        assert!(s.values()[0] <= 1.0 + 1e-8);
    }

    #[test]
    fn approx_on_known_diagonal() {
        // Diagonal operator with geometric spectrum, embedded as a dense
        // kernel via a rank-complete sketch.
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| 0.5_f64.powi(i as i32)).collect();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag.clone()));
        let exact = matrix_eigenvalues(&w, n).unwrap();
        // Compare against the bound with K = 3, M = 8.
        let (k, m) = (3, 8);
        let bound = error_bounds(&exact, k, m, 0.0, None).unwrap();
        // A dense matrix is also a valid operator for the sketch through the
        // matmul contract; emulate by building from the matrix directly.
        let approx = {
            let op = dense_op_for_test(w.clone());
            approx_eigenvalues(&op, k, m, 11).unwrap()
        };
        let err: f64 = (0..k).map(|i| (exact.values()[i] - approx.values()[i]).abs()).sum();
        assert!(
            err <= bound.eig_bound.max(1e-12) * 3.0,
            "error {err} vs bound {}",
            bound.eig_bound
        );
    }

    // Wraps a plain symmetric matrix as an operator for sketch tests.
    fn dense_op_for_test(w: DMatrix<f64>) -> SpdOperator {
        SpdOperator::from_dense_for_tests(w)
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let op = torus_operator(90, 5);
        let a = approx_eigenvalues(&op, 10, 25, 7).unwrap();
        let b = approx_eigenvalues(&op, 10, 25, 7).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(a.shift_nu(), b.shift_nu());
    }

    #[test]
    fn truncation_is_prefix() {
        let op = torus_operator(80, 6);
        let small = approx_eigenvalues(&op, 8, 30, 3).unwrap();
        let large = approx_eigenvalues(&op, 20, 30, 3).unwrap();
        assert_eq!(small.values(), &large.values()[..8]);
    }

    #[test]
    fn permutation_invariant_with_full_sketch() {
        // With m = n the sketch basis spans everything and the estimates
        // coincide with the exact spectrum, so a permuted cloud must give
        // the same spectrum for the same seed.
        let cloud = generate_torus2(&ToriConfig::new(50, 8)).unwrap();
        let n = cloud.n_points();
        let perm: Vec<usize> = (0..n).map(|i| (i * 13 + 5) % n).collect();
        let mut pdata = vec![0.0; n * 3];
        for (dst, &src) in perm.iter().enumerate() {
            pdata[dst * 3..dst * 3 + 3].copy_from_slice(cloud.point(src));
        }
        let pcloud =
            crate::data::PointCloud::new(pdata, 3, "p", crate::data::CloudSource::Generator, None)
                .unwrap();
        let s = 60.0;
        let a = approx_eigenvalues(&build_operator(&cloud, s, OperatorMode::Dense).unwrap(), 12, n, 2)
            .unwrap();
        let b = approx_eigenvalues(&build_operator(&pcloud, s, OperatorMode::Dense).unwrap(), 12, n, 2)
            .unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn exact_vs_approx_within_bound_sweep() {
        // Random PSD matrices: estimates stay within the a-priori bound
        // (checked with slack since a single draw is not the expectation).
        let mut rng = crate::rng::stream_rng(99, 1);
        let n = 60;
        let (k, m) = (6, 20);
        let mut worst = 0.0_f64;
        for trial in 0..50 {
            let g = DMatrix::<f64>::from_fn(n, n, |_, _| {
                rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
            });
            let w = &g * g.transpose() / n as f64;
            let exact = matrix_eigenvalues(&w, n).unwrap();
            let approx = approx_eigenvalues(&dense_op_for_test(w), k, m, trial).unwrap();
            let err: f64 = (0..k).map(|i| (exact.values()[i] - approx.values()[i]).abs()).sum();
            let bound = error_bounds(&exact, k, m, 0.0, None).unwrap().eig_bound;
            worst = worst.max(err / bound);
        }
        assert!(worst < 3.0, "worst error/bound ratio {worst}");
    }

    #[test]
    fn sketch_size_validation() {
        let op = torus_operator(30, 2);
        assert!(approx_eigenvalues(&op, 10, 11, 0).is_err());
        assert!(approx_eigenvalues(&op, 10, 40, 0).is_err());
        assert!(approx_eigenvalues(&op, 10, 12, 0).is_ok());
    }

    #[test]
    fn bound_arithmetic() {
        let vals: Vec<f64> = (0..100).map(|i| 1.0 / (1 + i) as f64).collect();
        let full = Spectrum::new(vals, 0, 0, 0.0, SpectralMethod::Exact).unwrap();
        let b = error_bounds(&full, 50, 100, 1e-8, None).unwrap();
        let coeff = 50.0 / 49.0;
        assert!((b.eig_bound - coeff * full.tail_sum(50)).abs() < 1e-12);
        assert!(error_bounds(&full, 50, 51, 1e-8, None).is_err());
    }

    #[test]
    fn zero_tail_zero_bounds() {
        // Exactly rank-k matrix: tail vanishes, both bounds are zero.
        let mut vals = vec![0.0; 20];
        vals[0] = 1.0;
        vals[1] = 0.5;
        let full = Spectrum::new(vals, 0, 0, 0.0, SpectralMethod::Exact).unwrap();
        let b = error_bounds(&full, 2, 10, 1e-8, None).unwrap();
        assert_eq!(b.eig_bound, 0.0);
        assert_eq!(b.log_eig_bound, 0.0);
    }
}
