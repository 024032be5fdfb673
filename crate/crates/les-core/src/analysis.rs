//! Collection-level analysis: pairwise distance matrices over descriptor
//! sets, diffusion-map embedding of a distance matrix (Coifman & Lafon), and
//! the correlation diagnostics used to relate distances to an external axis
//! such as time or task accuracy.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distances::{default_t_grid, imd_approx, les_distance, DistanceMatrix, LesDescriptor};
use crate::error::{LesError, Result};
use crate::operator::normalize_kernel_dense;
use crate::spectral::{SpectralMethod, Spectrum};

/// Which distance fills the pairwise matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairwiseMethod {
    Les,
    ImdApprox,
}

impl PairwiseMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            PairwiseMethod::Les => "les",
            PairwiseMethod::ImdApprox => "imd-approx",
        }
    }
}

/// Pairwise dataset distances over a descriptor collection. Descriptors are
/// computed once per dataset, so r datasets cost O(r^2 K) comparisons.
pub fn pairwise_distance_matrix(
    descriptors: &[LesDescriptor],
    method: PairwiseMethod,
) -> Result<DistanceMatrix> {
    let r = descriptors.len();
    if r < 2 {
        return Err(LesError::Config(format!(
            "need at least 2 descriptors, got {r}"
        )));
    }
    let first = &descriptors[0];
    let incompatible: Vec<String> = descriptors
        .iter()
        .filter(|d| !first.comparable(d))
        .map(|d| {
            format!(
                "{} (k = {}, gamma = {:e})",
                if d.dataset_name().is_empty() { "<unnamed>" } else { d.dataset_name() },
                d.rank_k(),
                d.gamma()
            )
        })
        .collect();
    if !incompatible.is_empty() {
        return Err(LesError::Comparability(format!(
            "descriptors disagree with {} (k = {}, gamma = {:e}): {}",
            if first.dataset_name().is_empty() { "<unnamed>" } else { first.dataset_name() },
            first.rank_k(),
            first.gamma(),
            incompatible.join(", ")
        )));
    }

    // For the IMD variant, recover eigenvalues from the stored logs once.
    let spectra: Vec<Spectrum> = match method {
        PairwiseMethod::Les => Vec::new(),
        PairwiseMethod::ImdApprox => descriptors
            .iter()
            .map(|d| {
                let mut vals = d.eigenvalues();
                vals.sort_by(|a, b| b.total_cmp(a));
                Spectrum::new(vals, 0, d.seed(), 0.0, SpectralMethod::Exact)
            })
            .collect::<Result<_>>()?,
    };
    let grid = default_t_grid();

    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| ((i + 1)..r).map(move |j| (i, j))).collect();
    let entries: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let d = match method {
                PairwiseMethod::Les => les_distance(&descriptors[i], &descriptors[j]),
                PairwiseMethod::ImdApprox => imd_approx(&spectra[i], &spectra[j], first.gamma(), &grid),
            };
            d.map(|v| ((i, j), v))
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::<f64>::zeros(r, r);
    for ((i, j), v) in entries {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    let labels = descriptors.iter().map(|d| d.dataset_name().to_string()).collect();
    DistanceMatrix::new(values, labels, method.tag())
}

/// Leading diffusion coordinates of a distance matrix.
#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    /// r x m coordinates, column t is eigenvector t+1 of the symmetric
    /// conjugate scaled by its eigenvalue, ordered by descending eigenvalue.
    pub coords: DMatrix<f64>,
    /// The m eigenvalues behind the coordinates (the trivial unit eigenvalue
    /// is excluded).
    pub eigvals: Vec<f64>,
    /// Kernel scale used on the distance matrix.
    pub kernel_scale: f64,
    pub labels: Vec<String>,
}

impl EmbeddingResult {
    /// CSV with columns `label,f1..fm`.
    pub fn to_csv_string(&self) -> String {
        let m = self.coords.ncols();
        let mut out = String::from("label");
        for t in 0..m {
            out.push_str(&format!(",f{}", t + 1));
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&crate::distances::csv_escape(label));
            for t in 0..m {
                out.push_str(&format!(",{}", self.coords[(i, t)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct EmbeddingFile<'a> {
            schema: &'a str,
            labels: &'a [String],
            eigvals: &'a [f64],
            kernel_scale: f64,
            coords: Vec<Vec<f64>>,
        }
        let coords: Vec<Vec<f64>> = (0..self.coords.nrows())
            .map(|i| (0..self.coords.ncols()).map(|j| self.coords[(i, j)]).collect())
            .collect();
        serde_json::to_string(&EmbeddingFile {
            schema: "les-embed-v1",
            labels: &self.labels,
            eigvals: &self.eigvals,
            kernel_scale: self.kernel_scale,
            coords,
        })
        .expect("embedding serializes")
    }
}

/// Diffusion-map embedding of a distance matrix.
///
/// A Gaussian kernel is built from the distances with
/// sigma^2 = scale_multiplier x median of squared off-diagonal entries, the
/// kernel is density-normalized into the symmetric diffusion form, and the
/// eigenvectors 2..m+1 (skipping the trivial leading one) are returned, each
/// scaled by its eigenvalue. Signs are fixed by making the entry of largest
/// magnitude positive.
pub fn diffusion_embed(
    dist: &DistanceMatrix,
    m: usize,
    scale_multiplier: f64,
) -> Result<EmbeddingResult> {
    let r = dist.size();
    if m == 0 {
        return Err(LesError::Config("embedding dimension must be positive".into()));
    }
    if r < m + 2 {
        return Err(LesError::Config(format!(
            "need at least m + 2 = {} datasets for an m = {m} embedding, got {r}",
            m + 2
        )));
    }
    if !(scale_multiplier.is_finite() && scale_multiplier > 0.0) {
        return Err(LesError::Config(format!(
            "scale multiplier must be positive, got {scale_multiplier}"
        )));
    }

    let mut off: Vec<f64> = Vec::with_capacity(r * (r - 1) / 2);
    for i in 0..r {
        for j in (i + 1)..r {
            let v = dist.get(i, j);
            off.push(v * v);
        }
    }
    off.sort_unstable_by(f64::total_cmp);
    let median = if off.len() % 2 == 1 {
        off[off.len() / 2]
    } else {
        0.5 * (off[off.len() / 2 - 1] + off[off.len() / 2])
    };
    if median <= 0.0 {
        return Err(LesError::Numerical(
            "degenerate distance matrix: median off-diagonal distance is zero".into(),
        ));
    }
    let sigma2 = scale_multiplier * median;

    let kernel = DMatrix::<f64>::from_fn(r, r, |i, j| {
        let d = dist.get(i, j);
        (-(d * d) / sigma2).exp()
    });
    let (w, _dt, _dv) = normalize_kernel_dense(kernel);
    let (vals, vecs) = crate::linalg::symmetric_eigen_sorted(&w)?;

    let mut coords = DMatrix::<f64>::zeros(r, m);
    let mut eigvals = Vec::with_capacity(m);
    for t in 0..m {
        let idx = t + 1; // skip the trivial leading eigenvector
        let lambda = vals[idx];
        let v = vecs.column(idx);
        let lead = (0..r).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..r {
            coords[(i, t)] = lambda * sign * v[i];
        }
        eigvals.push(lambda);
    }
    Ok(EmbeddingResult {
        coords,
        eigvals,
        kernel_scale: sigma2,
        labels: dist.labels().to_vec(),
    })
}

/// Correlation kinds; only Pearson is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    Pearson,
}

/// Pearson correlation coefficient between two equal-length series.
pub fn rank_correlation(values: &[f64], reference: &[f64], kind: CorrelationKind) -> Result<f64> {
    let CorrelationKind::Pearson = kind;
    let n = values.len();
    if n != reference.len() {
        return Err(LesError::Shape(format!(
            "series lengths differ: {n} vs {}",
            reference.len()
        )));
    }
    if n < 3 {
        return Err(LesError::Config(format!("need at least 3 observations, got {n}")));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mx = mean(values);
    let my = mean(reference);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in values.iter().zip(reference) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(LesError::Numerical("zero variance in correlation input".into()));
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Aggregators for a list of dissimilarities against reference tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Mean,
    Min,
    Max,
}

pub fn dissimilarity_aggregate(values: &[f64], agg: Aggregate) -> Result<f64> {
    if values.is_empty() {
        return Err(LesError::Config("cannot aggregate an empty list".into()));
    }
    Ok(match agg {
        Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregate::Min => values.iter().cloned().fold(f64::INFINITY, f64::min),
        Aggregate::Max => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::les_descriptor;
    use crate::spectral::Spectrum;

    fn descriptor(values: &[f64], gamma: f64, name: &str) -> LesDescriptor {
        let s = Spectrum::new(values.to_vec(), 0, 0, 0.0, SpectralMethod::Exact).unwrap();
        les_descriptor(&s, gamma).unwrap().with_name(name)
    }

    #[test]
    fn two_copies_zero_matrix() {
        let d = descriptor(&[1.0, 0.5, 0.1], 1e-8, "a");
        let m = pairwise_distance_matrix(&[d.clone(), d.with_name("b")], PairwiseMethod::Les).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.labels(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn entries_match_pairwise_calls() {
        let ds = vec![
            descriptor(&[1.0, 0.5, 0.1], 1e-8, "a"),
            descriptor(&[0.9, 0.4, 0.2], 1e-8, "b"),
            descriptor(&[0.8, 0.6, 0.05], 1e-8, "c"),
        ];
        let m = pairwise_distance_matrix(&ds, PairwiseMethod::Les).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { les_distance(&ds[i], &ds[j]).unwrap() };
                assert_eq!(m.get(i, j), expect);
            }
        }
    }

    #[test]
    fn incompatible_descriptors_listed() {
        let ds = vec![
            descriptor(&[1.0, 0.5], 1e-8, "a"),
            descriptor(&[1.0, 0.5], 1e-5, "b"),
        ];
        let err = pairwise_distance_matrix(&ds, PairwiseMethod::Les).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('a') && msg.contains('b'), "{msg}");
    }

    #[test]
    fn permutation_permutes_matrix() {
        let ds = vec![
            descriptor(&[1.0, 0.5, 0.1], 1e-8, "a"),
            descriptor(&[0.9, 0.4, 0.2], 1e-8, "b"),
            descriptor(&[0.8, 0.6, 0.05], 1e-8, "c"),
            descriptor(&[0.7, 0.3, 0.02], 1e-8, "d"),
        ];
        let m = pairwise_distance_matrix(&ds, PairwiseMethod::Les).unwrap();
        let perm = [2usize, 0, 3, 1];
        let pds: Vec<LesDescriptor> = perm.iter().map(|&i| ds[i].clone()).collect();
        let pm = pairwise_distance_matrix(&pds, PairwiseMethod::Les).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(pm.get(a, b), m.get(perm[a], perm[b]));
            }
        }
    }

    #[test]
    fn imd_variant_produces_matrix() {
        let ds = vec![
            descriptor(&[1.0, 0.5, 0.1], 1e-8, "a"),
            descriptor(&[0.9, 0.4, 0.2], 1e-8, "b"),
        ];
        let m = pairwise_distance_matrix(&ds, PairwiseMethod::ImdApprox).unwrap();
        assert!(m.get(0, 1) > 0.0);
        assert_eq!(m.method(), "imd-approx");
    }

    fn line_matrix(positions: &[f64]) -> DistanceMatrix {
        let r = positions.len();
        let values = DMatrix::from_fn(r, r, |i, j| (positions[i] - positions[j]).abs());
        let labels = (0..r).map(|i| format!("p{i}")).collect();
        DistanceMatrix::new(values, labels, "test").unwrap()
    }

    #[test]
    fn embed_collinear_monotone() {
        let d = line_matrix(&[0.0, 1.0, 2.0]);
        let e = diffusion_embed(&d, 1, 1.0).unwrap();
        let f1: Vec<f64> = (0..3).map(|i| e.coords[(i, 0)]).collect();
        assert!(
            (f1[0] < f1[1] && f1[1] < f1[2]) || (f1[0] > f1[1] && f1[1] > f1[2]),
            "f1 not monotone: {f1:?}"
        );
    }

    #[test]
    fn embed_permutation_consistent() {
        let d = line_matrix(&[0.0, 0.7, 1.9, 3.1, 4.0]);
        let e = diffusion_embed(&d, 2, 1.0).unwrap();
        let perm = [3usize, 1, 4, 0, 2];
        let positions = [3.1, 0.7, 4.0, 0.0, 1.9];
        let dp = line_matrix(&positions);
        let ep = diffusion_embed(&dp, 2, 1.0).unwrap();
        for (a, &src) in perm.iter().enumerate() {
            for t in 0..2 {
                let diff = (ep.coords[(a, t)] - e.coords[(src, t)]).abs();
                assert!(diff < 1e-9, "row {a} coord {t}: {diff}");
            }
        }
    }

    #[test]
    fn embed_boundary_dimension() {
        let d = line_matrix(&[0.0, 1.0, 2.5, 3.0, 5.0]);
        assert!(diffusion_embed(&d, 3, 1.0).is_ok());
        assert!(diffusion_embed(&d, 4, 1.0).is_err());
    }

    #[test]
    fn embed_separates_blocks() {
        // Two tight clusters far apart: f1 signs separate them.
        let d = line_matrix(&[0.0, 0.01, 0.02, 10.0, 10.01, 10.02]);
        let e = diffusion_embed(&d, 1, 1.0).unwrap();
        let left: Vec<f64> = (0..3).map(|i| e.coords[(i, 0)]).collect();
        let right: Vec<f64> = (3..6).map(|i| e.coords[(i, 0)]).collect();
        assert!(
            left.iter().all(|&v| v > 0.0) && right.iter().all(|&v| v < 0.0)
                || left.iter().all(|&v| v < 0.0) && right.iter().all(|&v| v > 0.0),
            "blocks not separated: {left:?} vs {right:?}"
        );
    }

    #[test]
    fn embed_degenerate_rejected() {
        let values = DMatrix::zeros(4, 4);
        let labels = (0..4).map(|i| format!("p{i}")).collect();
        let d = DistanceMatrix::new(values, labels, "test").unwrap();
        assert!(diffusion_embed(&d, 1, 1.0).is_err());
    }

    #[test]
    fn pearson_endpoints_and_oracle() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rank_correlation(&x, &x, CorrelationKind::Pearson).unwrap(), 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(rank_correlation(&x, &neg, CorrelationKind::Pearson).unwrap(), -1.0);

        // Textbook two-pass oracle on a fixed series.
        let a = [0.3, -1.2, 2.5, 0.9, -0.4, 1.7];
        let b = [1.1, 0.2, 2.0, -0.5, 0.8, 1.4];
        let r = rank_correlation(&a, &b, CorrelationKind::Pearson).unwrap();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        assert!((r - cov / (va * vb).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance_rejected() {
        let x = [1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0];
        assert!(rank_correlation(&x, &y, CorrelationKind::Pearson).is_err());
    }

    #[test]
    fn aggregates() {
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(dissimilarity_aggregate(&xs, Aggregate::Mean).unwrap(), 2.0);
        assert_eq!(dissimilarity_aggregate(&xs, Aggregate::Min).unwrap(), 1.0);
        assert_eq!(dissimilarity_aggregate(&xs, Aggregate::Max).unwrap(), 3.0);
        assert!(dissimilarity_aggregate(&[], Aggregate::Mean).is_err());
    }
}
