//! The SPD diffusion operator built from a point cloud.
//!
//! From a Gaussian affinity K_ij = exp(-d^2(x_i, x_j) / sigma^2), two
//! density normalizations produce the diffusion operator of Coifman & Lafon:
//!
//! ```text
//! Wt = Dt^-1 K Dt^-1          Dt_ii = sum_j K_ij
//! W_dm = D^-1 Wt              D_ii  = sum_j Wt_ij
//! W  = D^1/2 W_dm D^-1/2  =  D^-1/2 Wt D^-1/2
//! ```
//!
//! `W` is symmetric positive-definite, shares its spectrum with the
//! row-stochastic `W_dm`, and has top eigenvalue 1 with eigenvector
//! proportional to sqrt(D).
//!
//! Storage is either dense (the full N x N matrix) or implicit (the cloud
//! plus the two degree vectors, with rows of `W` materialized in batches on
//! demand). Both paths evaluate entries with the same scalar expressions in
//! the same order, so they agree bitwise, and every row accumulates strictly
//! left to right, so results do not depend on the batch size or the number
//! of threads.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::PointCloud;
use crate::error::{LesError, Result};

/// Dense storage is chosen automatically up to this many points
/// (4096^2 f64 is about 134 MB).
pub const DENSE_AUTO_LIMIT: usize = 4096;

/// Default number of rows materialized per batch in implicit mode.
pub const DEFAULT_BATCH_ROWS: usize = 256;

// Kernel entries below this are clamped to zero; they are irrelevant to the
// leading spectrum and denormals are slow.
const KERNEL_FLOOR: f64 = 1e-300;

/// Storage policy for [`build_operator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    /// Dense when `n <= DENSE_AUTO_LIMIT`, implicit otherwise.
    Auto,
    Dense,
    Implicit,
}

enum Storage {
    Dense(DMatrix<f64>),
    Implicit(PointCloud),
}

/// Symmetric positive-definite diffusion operator.
pub struct SpdOperator {
    n: usize,
    sigma2: f64,
    d_tilde: Vec<f64>,
    d_vec: Vec<f64>,
    storage: Storage,
}

#[inline]
fn kernel_entry(a: &[f64], b: &[f64], sigma2: f64) -> f64 {
    let k = (-crate::data::sq_euclidean(a, b) / sigma2).exp();
    if k < KERNEL_FLOOR {
        0.0
    } else {
        k
    }
}

fn fill_kernel_row(cloud: &PointCloud, sigma2: f64, i: usize, buf: &mut [f64]) {
    let xi = cloud.point(i);
    for (j, slot) in buf.iter_mut().enumerate() {
        *slot = kernel_entry(xi, cloud.point(j), sigma2);
    }
}

/// Build the diffusion operator for `cloud` at kernel scale `sigma2`.
///
/// The degree vectors Dt and D are computed at construction (one kernel
/// sweep each in implicit mode); matrix products afterwards cost a single
/// additional sweep.
pub fn build_operator(cloud: &PointCloud, sigma2: f64, mode: OperatorMode) -> Result<SpdOperator> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(LesError::Config(format!(
            "kernel scale sigma2 must be positive and finite, got {sigma2}"
        )));
    }
    let n = cloud.n_points();
    let dense = match mode {
        OperatorMode::Auto => n <= DENSE_AUTO_LIMIT,
        OperatorMode::Dense => true,
        OperatorMode::Implicit => false,
    };
    let op = if dense {
        build_dense(cloud, sigma2)?
    } else {
        build_implicit(cloud.clone(), sigma2)
    };
    for (name, v) in [("d_tilde", &op.d_tilde), ("d_vec", &op.d_vec)] {
        if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(LesError::Numerical(format!(
                "non-finite or nonpositive degree in {name}"
            )));
        }
    }
    Ok(op)
}

fn build_dense(cloud: &PointCloud, sigma2: f64) -> Result<SpdOperator> {
    let n = cloud.n_points();
    let mut w = DMatrix::<f64>::zeros(n, n);

    // Kernel, one column per point; by symmetry column j is also row j.
    w.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| fill_kernel_row(cloud, sigma2, j, col));
    let d_tilde = column_sums(&w);

    // Wt = Dt^-1 K Dt^-1, then D from its row sums.
    w.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v /= d_tilde[i] * d_tilde[j];
            }
        });
    let d_vec = column_sums(&w);

    // W = D^-1/2 Wt D^-1/2.
    w.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v /= (d_vec[i] * d_vec[j]).sqrt();
            }
        });

    Ok(SpdOperator {
        n,
        sigma2,
        d_tilde,
        d_vec,
        storage: Storage::Dense(w),
    })
}

fn build_implicit(cloud: PointCloud, sigma2: f64) -> SpdOperator {
    let n = cloud.n_points();
    let d_tilde: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                fill_kernel_row(&cloud, sigma2, i, buf);
                buf.iter().fold(0.0, |a, &v| a + v)
            },
        )
        .collect();
    let d_vec: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                fill_kernel_row(&cloud, sigma2, i, buf);
                let dti = d_tilde[i];
                buf.iter()
                    .zip(&d_tilde)
                    .fold(0.0, |a, (&k, &dtj)| a + k / (dti * dtj))
            },
        )
        .collect();
    SpdOperator {
        n,
        sigma2,
        d_tilde,
        d_vec,
        storage: Storage::Implicit(cloud),
    }
}

fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    m.as_slice()
        .par_chunks(n)
        .map(|col| col.iter().fold(0.0, |a, &v| a + v))
        .collect()
}

impl SpdOperator {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Row sums of the Gaussian kernel K.
    pub fn d_tilde(&self) -> &[f64] {
        &self.d_tilde
    }

    /// Row sums of the density-normalized kernel Wt.
    pub fn d_vec(&self) -> &[f64] {
        &self.d_vec
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn dense_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.storage {
            Storage::Dense(w) => Some(w),
            Storage::Implicit(_) => None,
        }
    }

    /// Materialize the full matrix, refusing above `limit` rows.
    pub fn to_dense(&self, limit: usize) -> Result<DMatrix<f64>> {
        match &self.storage {
            Storage::Dense(w) => Ok(w.clone()),
            Storage::Implicit(_) => {
                if self.n > limit {
                    return Err(LesError::Config(format!(
                        "operator of size {} exceeds the densification limit {}",
                        self.n, limit
                    )));
                }
                let mut w = DMatrix::<f64>::zeros(self.n, self.n);
                w.as_mut_slice()
                    .par_chunks_mut(self.n)
                    .enumerate()
                    .for_each(|(j, col)| self.fill_w_row(j, col));
                Ok(w)
            }
        }
    }

    /// Write row `i` of W into `buf` (implicit mode; dense rows are read
    /// straight from storage).
    fn fill_w_row(&self, i: usize, buf: &mut [f64]) {
        let Storage::Implicit(cloud) = &self.storage else {
            unreachable!("fill_w_row is only used for implicit storage");
        };
        fill_kernel_row(cloud, self.sigma2, i, buf);
        let dti = self.d_tilde[i];
        let di = self.d_vec[i];
        for (j, v) in buf.iter_mut().enumerate() {
            // Staged exactly like the dense path so both round identically.
            let wt = *v / (dti * self.d_tilde[j]);
            *v = wt / (di * self.d_vec[j]).sqrt();
        }
    }
}

#[cfg(test)]
impl SpdOperator {
    /// Wrap an arbitrary dense symmetric PSD matrix for sketch tests; the
    /// degree vectors are placeholders.
    pub(crate) fn from_dense_for_tests(w: DMatrix<f64>) -> Self {
        let n = w.nrows();
        SpdOperator {
            n,
            sigma2: 1.0,
            d_tilde: vec![1.0; n],
            d_vec: vec![1.0; n],
            storage: Storage::Dense(w),
        }
    }
}

/// Compute `W * V` in row batches of `batch_rows`.
///
/// In implicit mode each batch materializes its rows of W and accumulates
/// the product; output entry (i, c) sums over j in ascending order no matter
/// the batching, so results are bitwise identical for every `batch_rows`.
pub fn operator_matmul(
    op: &SpdOperator,
    v: &DMatrix<f64>,
    batch_rows: usize,
) -> Result<DMatrix<f64>> {
    let n = op.n;
    let mcols = v.ncols();
    if v.nrows() != n {
        return Err(LesError::Shape(format!(
            "operator is {n} x {n} but factor has {} rows",
            v.nrows()
        )));
    }
    if batch_rows == 0 {
        return Err(LesError::Config("batch_rows must be positive".into()));
    }

    // Row-major copy of V so the inner loop streams one contiguous row.
    let mut vrm = vec![0.0; n * mcols];
    for c in 0..mcols {
        let col = v.column(c);
        for j in 0..n {
            vrm[j * mcols + c] = col[j];
        }
    }

    let mut yrm = vec![0.0; n * mcols];
    yrm.par_chunks_mut(batch_rows * mcols)
        .enumerate()
        .for_each(|(bi, out)| {
            let row0 = bi * batch_rows;
            let rows = out.len() / mcols;
            let mut scratch: Vec<f64>;
            let row_slices: Vec<&[f64]> = match &op.storage {
                Storage::Dense(w) => {
                    let ws = w.as_slice();
                    (0..rows).map(|r| &ws[(row0 + r) * n..(row0 + r + 1) * n]).collect()
                }
                Storage::Implicit(_) => {
                    scratch = vec![0.0; rows * n];
                    for (r, chunk) in scratch.chunks_mut(n).enumerate() {
                        op.fill_w_row(row0 + r, chunk);
                    }
                    scratch.chunks(n).collect()
                }
            };
            for j in 0..n {
                let vrow = &vrm[j * mcols..(j + 1) * mcols];
                for (r, wrow) in row_slices.iter().enumerate() {
                    let wj = wrow[j];
                    if wj != 0.0 {
                        let acc = &mut out[r * mcols..(r + 1) * mcols];
                        for (a, &b) in acc.iter_mut().zip(vrow) {
                            *a += wj * b;
                        }
                    }
                }
            }
        });

    let mut y = DMatrix::<f64>::zeros(n, mcols);
    for c in 0..mcols {
        let mut col = y.column_mut(c);
        for j in 0..n {
            col[j] = yrm[j * mcols + c];
        }
    }
    Ok(y)
}

/// Normalize an arbitrary symmetric affinity matrix into the SPD diffusion
/// form, returning (W, Dt, D). Shared by the operator builder and the
/// diffusion embedding of distance matrices.
pub(crate) fn normalize_kernel_dense(mut k: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = k.nrows();
    let d_tilde = column_sums(&k);
    k.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v /= d_tilde[i] * d_tilde[j];
        }
    });
    let d_vec = column_sums(&k);
    k.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v /= (d_vec[i] * d_vec[j]).sqrt();
        }
    });
    (k, d_tilde, d_vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_torus2, CloudSource, ToriConfig};

    fn torus(n: usize, seed: u64) -> PointCloud {
        generate_torus2(&ToriConfig::new(n, seed)).unwrap()
    }

    #[test]
    fn equal_points_rank_one() {
        // Two identical points: K is all ones; after normalization the
        // spectrum is {1, 0}.
        let cloud =
            PointCloud::new(vec![1.0, 2.0, 1.0, 2.0], 2, "dup", CloudSource::Generator, None)
                .unwrap();
        let op = build_operator(&cloud, 1.0, OperatorMode::Dense).unwrap();
        let w = op.dense_matrix().unwrap();
        let eig = w.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!(vals[1].abs() < 1e-12);
    }

    #[test]
    fn dense_symmetric_and_positive() {
        let op = build_operator(&torus(60, 2), 50.0, OperatorMode::Dense).unwrap();
        let w = op.dense_matrix().unwrap();
        for i in 0..60 {
            for j in 0..i {
                assert_eq!(w[(i, j)], w[(j, i)]);
                assert!(w[(i, j)] > 0.0);
            }
        }
    }

    #[test]
    fn implicit_matches_dense_entrywise() {
        let cloud = torus(20, 8);
        let dense = build_operator(&cloud, 40.0, OperatorMode::Dense).unwrap();
        let implicit = build_operator(&cloud, 40.0, OperatorMode::Implicit).unwrap();
        assert_eq!(dense.d_tilde(), implicit.d_tilde());
        assert_eq!(dense.d_vec(), implicit.d_vec());
        let wd = dense.dense_matrix().unwrap();
        let wi = implicit.to_dense(4096).unwrap();
        let max_diff = (wd - wi).abs().max();
        assert!(max_diff <= 1e-13, "paths differ by {max_diff}");
    }

    #[test]
    fn matmul_identity_columns_match_dense() {
        let cloud = torus(30, 3);
        let op = build_operator(&cloud, 60.0, OperatorMode::Implicit).unwrap();
        let dense = build_operator(&cloud, 60.0, OperatorMode::Dense).unwrap();
        let id = DMatrix::<f64>::identity(30, 30);
        let y = operator_matmul(&op, &id, 7).unwrap();
        let w = dense.dense_matrix().unwrap();
        let max_diff = (&y - w).abs().max();
        assert!(max_diff <= 1e-13, "{max_diff}");
    }

    #[test]
    fn top_eigenpair_is_sqrt_degree() {
        let cloud = torus(80, 5);
        let op = build_operator(&cloud, 80.0, OperatorMode::Auto).unwrap();
        let v = DMatrix::from_iterator(80, 1, op.d_vec().iter().map(|d| d.sqrt()));
        let y = operator_matmul(&op, &v, DEFAULT_BATCH_ROWS).unwrap();
        let max_diff = (&y - &v).abs().max();
        assert!(max_diff < 1e-11, "W sqrt(d) != sqrt(d): {max_diff}");
    }

    #[test]
    fn row_stochastic_after_conjugation() {
        // D^-1/2 W D^1/2 = W_dm has unit row sums.
        let cloud = torus(50, 6);
        let op = build_operator(&cloud, 70.0, OperatorMode::Dense).unwrap();
        let w = op.dense_matrix().unwrap();
        for i in 0..50 {
            let di = op.d_vec()[i];
            let mut sum = 0.0;
            for j in 0..50 {
                sum += w[(i, j)] * op.d_vec()[j].sqrt() / di.sqrt();
            }
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn batch_sizes_bitwise_identical() {
        let cloud = torus(33, 7);
        let op = build_operator(&cloud, 55.0, OperatorMode::Implicit).unwrap();
        let v = DMatrix::<f64>::from_fn(33, 4, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y1 = operator_matmul(&op, &v, 1).unwrap();
        let y7 = operator_matmul(&op, &v, 7).unwrap();
        let yn = operator_matmul(&op, &v, 33).unwrap();
        assert_eq!(y1.as_slice(), y7.as_slice());
        assert_eq!(y7.as_slice(), yn.as_slice());
    }

    #[test]
    fn permutation_conjugates_operator() {
        let cloud = torus(24, 9);
        let n = cloud.n_points();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let mut pdata = vec![0.0; n * 3];
        for (dst, &src) in perm.iter().enumerate() {
            pdata[dst * 3..dst * 3 + 3].copy_from_slice(cloud.point(src));
        }
        let pcloud = PointCloud::new(pdata, 3, "perm", CloudSource::Generator, None).unwrap();
        let w = build_operator(&cloud, 45.0, OperatorMode::Dense).unwrap();
        let wp = build_operator(&pcloud, 45.0, OperatorMode::Dense).unwrap();
        let w = w.dense_matrix().unwrap();
        let wp = wp.dense_matrix().unwrap();
        for a in 0..n {
            for b in 0..n {
                let diff = (wp[(a, b)] - w[(perm[a], perm[b])]).abs();
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn scale_covariance() {
        // Scaling coordinates by s and sigma2 by s^2 leaves W unchanged.
        let cloud = torus(40, 10);
        let s = 3.7;
        let scaled = cloud.map_points(3, |p, out| {
            for (o, &v) in out.iter_mut().zip(p) {
                *o = s * v;
            }
        });
        let scaled = scaled.unwrap();
        let w1 = build_operator(&cloud, 30.0, OperatorMode::Dense).unwrap();
        let w2 = build_operator(&scaled, 30.0 * s * s, OperatorMode::Dense).unwrap();
        let diff = (w1.dense_matrix().unwrap() - w2.dense_matrix().unwrap()).abs().max();
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn tiny_sigma_is_permitted() {
        // Rows underflow to a lone diagonal 1; the operator must still build.
        let cloud = torus(12, 1);
        let op = build_operator(&cloud, 1e-9, OperatorMode::Dense).unwrap();
        assert!(op.d_tilde().iter().all(|&d| d >= 1.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let op = build_operator(&torus(10, 1), 30.0, OperatorMode::Dense).unwrap();
        let v = DMatrix::<f64>::zeros(11, 2);
        assert!(operator_matmul(&op, &v, 4).is_err());
    }
}
