//! Point clouds: file ingestion, synthetic torus benchmarks, pairwise squared
//! distances, and kernel-scale estimation.
//!
//! Two file formats are supported. CSV is UTF-8 with one sample per row,
//! numeric columns separated by commas or whitespace, and `#` comment lines.
//! The binary format is the magic bytes `LESPC1\0`, then little-endian u64
//! counts N and d, then N·d little-endian f64 values in row-major order.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{LesError, Result};
use crate::rng::{stream_rng, STREAM_MEDIAN_SUBSAMPLE, STREAM_TORUS_ANGLES};

/// Magic prefix of the binary point-cloud format.
pub const BINARY_MAGIC: &[u8; 7] = b"LESPC1\0";

/// Default multiplier for the kernel scale: sigma^2 = 2 median(d^2).
pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 2.0;

/// Default cap on the number of pairs used for the median estimate.
pub const DEFAULT_SUBSAMPLE_CAP: usize = 2_000_000;

// Fixed seed for median subsampling so the scale estimate depends only on
// the data, never on the caller's sketch seed.
const MEDIAN_SAMPLE_SEED: u64 = 0x4c45_535f_4d45_4431;

/// Where a point cloud came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudSource {
    File,
    Generator,
}

/// On-disk representats of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointCloudFormat {
    Csv,
    BinaryF64,
}

/// A dataset of `n` points with `dim` real features, stored row-major.
///
/// Invariants: `n >= 2`, `dim >= 1`, every entry finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    name: String,
    source: CloudSource,
    seed: Option<u64>,
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(
        data: Vec<f64>,
        dim: usize,
        name: impl Into<String>,
        source: CloudSource,
        seed: Option<u64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(LesError::Config("point dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(LesError::Shape(format!(
                "data length {} is not a multiple of dimension {}",
                data.len(),
                dim
            )));
        }
        let n = data.len() / dim;
        if n < 2 {
            return Err(LesError::Config(format!(
                "a point cloud needs at least 2 samples, got {n}"
            )));
        }
        if let Some(row) = first_nonfinite_row(&data, dim) {
            return Err(LesError::Config(format!(
                "non-finite value in sample {row}"
            )));
        }
        Ok(PointCloud {
            name: name.into(),
            source,
            seed,
            n,
            dim,
            data,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> CloudSource {
        self.source
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Row-major storage, length `n * dim`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Apply `f` to every point, producing a cloud of possibly different
    /// dimension. Used for feature transforms in tests and pipelines.
    pub fn map_points(&self, out_dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<PointCloud> {
        let mut data = vec![0.0; self.n * out_dim];
        for i in 0..self.n {
            f(self.point(i), &mut data[i * out_dim..(i + 1) * out_dim]);
        }
        PointCloud::new(data, out_dim, self.name.clone(), self.source, self.seed)
    }
}

impl fmt::Display for PointCloud {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} x {})", self.name, self.n, self.dim)
    }
}

fn first_nonfinite_row(data: &[f64], dim: usize) -> Option<usize> {
    data.iter().position(|v| !v.is_finite()).map(|p| p / dim)
}

/// Configuration for the torus generators.
///
/// `r1` is the major radius shared by every torus; `r2` and `r3` are the
/// minor radii of the 2-torus and 3-torus. `c` scales the innermost minor
/// radius (`r2` for T2, `r3` for T3); `c = 1` gives the base shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToriConfig {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub c: f64,
    pub n_points: usize,
    pub seed: u64,
}

impl ToriConfig {
    /// Radii 10 / 3 / 1 with `c = 1`.
    pub fn new(n_points: usize, seed: u64) -> Self {
        ToriConfig {
            r1: 10.0,
            r2: 3.0,
            r3: 1.0,
            c: 1.0,
            n_points,
            seed,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r1", self.r1), ("r2", self.r2), ("r3", self.r3)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(LesError::Config(format!("torus radius {name} must be positive, got {v}")));
            }
        }
        if !(self.c.is_finite() && self.c > 0.0 && self.c <= 1.0) {
            return Err(LesError::Config(format!(
                "scale factor c must be in (0, 1], got {}",
                self.c
            )));
        }
        if self.n_points < 2 {
            return Err(LesError::Config("n_points must be at least 2".into()));
        }
        Ok(())
    }
}

fn draw_angles(rng: &mut rand_chacha::ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect()
}

#[inline]
pub(crate) fn torus2_coords(r1: f64, r2: f64, t1: f64, t2: f64) -> [f64; 3] {
    let ring = r1 + r2 * t2.cos();
    [ring * t1.cos(), ring * t1.sin(), r2 * t2.sin()]
}

#[inline]
pub(crate) fn torus3_coords(r1: f64, r2: f64, r3: f64, t1: f64, t2: f64, t3: f64) -> [f64; 4] {
    let inner = r2 + r3 * t3.cos();
    let ring = r1 + inner * t2.cos();
    [
        ring * t1.cos(),
        ring * t1.sin(),
        inner * t2.sin(),
        r3 * t3.sin(),
    ]
}

/// Sample a 2-torus embedded in R^3 with minor radius `c * r2`.
///
/// Angles are i.i.d. uniform on [0, 2pi), drawn coordinate-block-wise from a
/// ChaCha20 stream, so the same seed gives the same theta_1, theta_2 blocks
/// in [`generate_torus3`].
pub fn generate_torus2(cfg: &ToriConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let n = cfg.n_points;
    let mut rng = stream_rng(cfg.seed, STREAM_TORUS_ANGLES);
    let theta1 = draw_angles(&mut rng, n);
    let theta2 = draw_angles(&mut rng, n);
    let r2 = cfg.c * cfg.r2;
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        data.extend_from_slice(&torus2_coords(cfg.r1, r2, theta1[i], theta2[i]));
    }
    PointCloud::new(data, 3, "torus2", CloudSource::Generator, Some(cfg.seed))
}

/// Sample a 3-torus embedded in R^4 with innermost minor radius `c * r3`.
pub fn generate_torus3(cfg: &ToriConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let n = cfg.n_points;
    let mut rng = stream_rng(cfg.seed, STREAM_TORUS_ANGLES);
    let theta1 = draw_angles(&mut rng, n);
    let theta2 = draw_angles(&mut rng, n);
    let theta3 = draw_angles(&mut rng, n);
    let r3 = cfg.c * cfg.r3;
    let mut data = Vec::with_capacity(n * 4);
    for i in 0..n {
        data.extend_from_slice(&torus3_coords(
            cfg.r1, cfg.r2, r3, theta1[i], theta2[i], theta3[i],
        ));
    }
    PointCloud::new(data, 4, "torus3", CloudSource::Generator, Some(cfg.seed))
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

fn io_err(path: &Path, source: std::io::Error) -> LesError {
    LesError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> LesError {
    LesError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a point cloud from `path` in the given format.
pub fn load_point_cloud(path: impl AsRef<Path>, format: PointCloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    match format {
        PointCloudFormat::Csv => load_csv(path),
        PointCloudFormat::BinaryF64 => load_binary(path),
    }
}

/// Load a point cloud, sniffing the format from the file's magic bytes.
pub fn load_point_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut head = [0u8; 7];
    let mut file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let read = file.read(&mut head).map_err(|e| io_err(path, e))?;
    drop(file);
    let format = if read == 7 && &head == BINARY_MAGIC {
        PointCloudFormat::BinaryF64
    } else {
        PointCloudFormat::Csv
    };
    load_point_cloud(path, format)
}

fn cloud_name_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut rows = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("ragged row: expected {} columns, found {}", d, fields.len()),
                ))
            }
            _ => {}
        }
        for field in &fields {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, line_no, format!("cannot parse {field:?} as a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value {field:?}")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| parse_err(path, 0, "file contains no data rows"))?;
    if rows < 2 {
        return Err(parse_err(path, 0, format!("need at least 2 samples, found {rows}")));
    }
    PointCloud::new(data, dim, cloud_name_from_path(path), CloudSource::File, None)
}

fn load_binary(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < BINARY_MAGIC.len() + 16 {
        return Err(parse_err(path, 0, "file too short for binary point-cloud header"));
    }
    if &bytes[..7] != BINARY_MAGIC {
        return Err(parse_err(path, 0, "missing LESPC1 magic bytes"));
    }
    let n = u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(bytes[15..23].try_into().unwrap()) as usize;
    let expected = 23 + n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| parse_err(path, 0, "header dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            0,
            format!("expected {expected} bytes for {n} x {dim} values, found {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(n * dim);
    for (i, chunk) in bytes[23..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(parse_err(path, 0, format!("non-finite value in sample {}", i / dim)));
        }
        data.push(v);
    }
    PointCloud::new(data, dim, cloud_name_from_path(path), CloudSource::File, None)
}

/// Write a point cloud to `path`. CSV uses shortest round-trip decimals, so
/// both formats reload bitwise identically.
pub fn save_point_cloud(
    cloud: &PointCloud,
    path: impl AsRef<Path>,
    format: PointCloudFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        PointCloudFormat::Csv => {
            let mut out = String::new();
            for i in 0..cloud.n_points() {
                let row: Vec<String> = cloud.point(i).iter().map(|v| format!("{v}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        PointCloudFormat::BinaryF64 => {
            let mut out = Vec::with_capacity(23 + cloud.data().len() * 8);
            out.extend_from_slice(BINARY_MAGIC);
            out.extend_from_slice(&(cloud.n_points() as u64).to_le_bytes());
            out.extend_from_slice(&(cloud.dim() as u64).to_le_bytes());
            for v in cloud.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
            file.write_all(&out).map_err(|e| io_err(path, e))
        }
    }
}

// ---------------------------------------------------------------------------
// Pairwise distances and kernel scale
// ---------------------------------------------------------------------------

/// Distance used by [`pairwise_sq_dists`]. The custom callback must return a
/// *squared* distance, be symmetric, and vanish on identical inputs.
pub enum Metric<'a> {
    Euclidean,
    Custom(&'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync)),
}

#[inline]
pub(crate) fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Dense matrix of pairwise squared distances: symmetric, zero diagonal.
///
/// Each unordered pair is evaluated once and mirrored, so the result is
/// exactly symmetric and independent of parallelism.
pub fn pairwise_sq_dists(cloud: &PointCloud, metric: Metric<'_>) -> DMatrix<f64> {
    let n = cloud.n_points();
    let eval = |i: usize, j: usize| -> f64 {
        match &metric {
            Metric::Euclidean => sq_euclidean(cloud.point(i), cloud.point(j)),
            Metric::Custom(f) => f(cloud.point(i), cloud.point(j)),
        }
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| eval(i, j)).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn median_inplace(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Result of a kernel-scale estimate.
#[derive(Debug, Clone, Copy)]
pub struct ScaleEstimate {
    pub sigma2: f64,
    /// True when the median was taken over a subsample of pairs.
    pub subsampled: bool,
    pub pairs_used: usize,
}

fn scale_from_samples(mut sample: Vec<f64>, multiplier: f64, subsampled: bool) -> Result<ScaleEstimate> {
    let pairs_used = sample.len();
    let median = median_inplace(&mut sample);
    if median <= 0.0 {
        return Err(LesError::Numerical(
            "degenerate distances: median off-diagonal squared distance is zero".into(),
        ));
    }
    Ok(ScaleEstimate {
        sigma2: multiplier * median,
        subsampled,
        pairs_used,
    })
}

fn validate_scale_args(multiplier: f64, subsample_cap: usize) -> Result<()> {
    if !(multiplier.is_finite() && multiplier > 0.0) {
        return Err(LesError::Config(format!(
            "kernel-scale multiplier must be positive, got {multiplier}"
        )));
    }
    if subsample_cap == 0 {
        return Err(LesError::Config("subsample_cap must be positive".into()));
    }
    Ok(())
}

/// Kernel scale sigma^2 = multiplier x median of off-diagonal squared
/// distances. When the number of pairs exceeds `subsample_cap` the median is
/// taken over a fixed-seed uniform sample of `subsample_cap` pairs.
pub fn kernel_scale(sq_dists: &DMatrix<f64>, multiplier: f64, subsample_cap: usize) -> Result<f64> {
    validate_scale_args(multiplier, subsample_cap)?;
    let n = sq_dists.nrows();
    if sq_dists.ncols() != n || n < 2 {
        return Err(LesError::Shape(format!(
            "distance matrix must be square with at least 2 rows, got {} x {}",
            n,
            sq_dists.ncols()
        )));
    }
    let est = estimate_scale(n, multiplier, subsample_cap, |i, j| sq_dists[(i, j)])?;
    Ok(est.sigma2)
}

/// Kernel scale straight from a cloud, computing only the sampled distances.
/// This is the path for large N, where the full matrix would not fit.
pub fn kernel_scale_from_cloud(
    cloud: &PointCloud,
    multiplier: f64,
    subsample_cap: usize,
) -> Result<ScaleEstimate> {
    validate_scale_args(multiplier, subsample_cap)?;
    estimate_scale(cloud.n_points(), multiplier, subsample_cap, |i, j| {
        sq_euclidean(cloud.point(i), cloud.point(j))
    })
}

fn estimate_scale(
    n: usize,
    multiplier: f64,
    subsample_cap: usize,
    sq_dist: impl Fn(usize, usize) -> f64,
) -> Result<ScaleEstimate> {
    let total_pairs = n * (n - 1) / 2;
    if total_pairs <= subsample_cap {
        let mut sample = Vec::with_capacity(total_pairs);
        for i in 0..n {
            for j in (i + 1)..n {
                sample.push(sq_dist(i, j));
            }
        }
        scale_from_samples(sample, multiplier, false)
    } else {
        let mut rng = stream_rng(MEDIAN_SAMPLE_SEED, STREAM_MEDIAN_SUBSAMPLE);
        let mut sample = Vec::with_capacity(subsample_cap);
        while sample.len() < subsample_cap {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                sample.push(sq_dist(i, j));
            }
        }
        scale_from_samples(sample, multiplier, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud_from_rows(rows: &[&[f64]]) -> PointCloud {
        let dim = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        PointCloud::new(data, dim, "test", CloudSource::Generator, None).unwrap()
    }

    #[test]
    fn csv_parse_basic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "0,0\n1,0\n0,1\n").unwrap();
        let cloud = load_point_cloud(&path, PointCloudFormat::Csv).unwrap();
        assert_eq!(cloud.n_points(), 3);
        assert_eq!(cloud.dim(), 2);
        assert_eq!(cloud.point(1), &[1.0, 0.0]);
    }

    #[test]
    fn csv_whitespace_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "# header\n0 0 1\n\n2 3 4\n").unwrap();
        let cloud = load_point_cloud(&path, PointCloudFormat::Csv).unwrap();
        assert_eq!(cloud.n_points(), 2);
        assert_eq!(cloud.dim(), 3);
    }

    #[test]
    fn csv_nan_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "0,0\n1,nan\n0,1\n").unwrap();
        let err = load_point_cloud(&path, PointCloudFormat::Csv).unwrap_err();
        match err {
            LesError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "0,0\n1,2,3\n").unwrap();
        let err = load_point_cloud(&path, PointCloudFormat::Csv).unwrap_err();
        assert!(matches!(err, LesError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn csv_empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(load_point_cloud(&path, PointCloudFormat::Csv).is_err());
    }

    #[test]
    fn binary_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = generate_torus2(&ToriConfig::new(50, 7)).unwrap();
        for format in [PointCloudFormat::BinaryF64, PointCloudFormat::Csv] {
            let path = dir.path().join(match format {
                PointCloudFormat::BinaryF64 => "t.lespc",
                PointCloudFormat::Csv => "t.csv",
            });
            save_point_cloud(&cloud, &path, format).unwrap();
            let back = load_point_cloud(&path, format).unwrap();
            assert_eq!(back.n_points(), cloud.n_points());
            assert_eq!(back.dim(), cloud.dim());
            assert_eq!(back.data(), cloud.data(), "{format:?} round trip not bitwise");
        }
    }

    #[test]
    fn binary_magic_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTMAGIC_________________").unwrap();
        assert!(load_point_cloud(&path, PointCloudFormat::BinaryF64).is_err());
    }

    #[test]
    fn auto_detect_format() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = generate_torus2(&ToriConfig::new(20, 1)).unwrap();
        let bin = dir.path().join("c.lespc");
        let csv = dir.path().join("c.csv");
        save_point_cloud(&cloud, &bin, PointCloudFormat::BinaryF64).unwrap();
        save_point_cloud(&cloud, &csv, PointCloudFormat::Csv).unwrap();
        assert_eq!(load_point_cloud_auto(&bin).unwrap().data(), cloud.data());
        assert_eq!(load_point_cloud_auto(&csv).unwrap().data(), cloud.data());
    }

    #[test]
    fn torus2_forced_angles() {
        // theta = 0 lands on (r1 + r2, 0, 0).
        let p = torus2_coords(10.0, 3.0, 0.0, 0.0);
        assert_eq!(p, [13.0, 0.0, 0.0]);
    }

    #[test]
    fn torus3_forced_angles() {
        let p = torus3_coords(10.0, 3.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(p, [14.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn torus2_implicit_equation() {
        let cfg = ToriConfig::new(500, 3).with_c(0.6);
        let cloud = generate_torus2(&cfg).unwrap();
        let r2 = cfg.c * cfg.r2;
        for i in 0..cloud.n_points() {
            let p = cloud.point(i);
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - cfg.r1;
            let lhs = ring * ring + p[2] * p[2];
            assert!((lhs - r2 * r2).abs() < 1e-10, "sample {i}: {lhs} vs {}", r2 * r2);
        }
    }

    #[test]
    fn torus3_implicit_equation_and_w_bound() {
        let cfg = ToriConfig::new(500, 4).with_c(0.5);
        let cloud = generate_torus3(&cfg).unwrap();
        let r3 = cfg.c * cfg.r3;
        for i in 0..cloud.n_points() {
            let p = cloud.point(i);
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - cfg.r1;
            let inner = (ring * ring + p[2] * p[2]).sqrt() - cfg.r2;
            let lhs = inner * inner + p[3] * p[3];
            assert!((lhs - r3 * r3).abs() < 1e-10, "sample {i}");
            assert!(p[3].abs() <= r3 + 1e-12);
        }
    }

    #[test]
    fn torus3_shrinks_to_torus2() {
        // Same seed shares the theta_1, theta_2 blocks; as c -> 0 the first
        // three coordinates converge to the T2 sample and w vanishes.
        let n = 200;
        let t2 = generate_torus2(&ToriConfig::new(n, 11)).unwrap();
        let t3 = generate_torus3(&ToriConfig::new(n, 11).with_c(1e-13)).unwrap();
        for i in 0..n {
            let a = t2.point(i);
            let b = t3.point(i);
            for f in 0..3 {
                assert!((a[f] - b[f]).abs() < 1e-12, "sample {i} coord {f}");
            }
            assert!(b[3].abs() <= 1e-13);
        }
        // The exact limit: r3 = 0 zeroes the fourth coordinate identically.
        let p = torus3_coords(10.0, 3.0, 0.0, 1.3, 0.4, 2.2);
        assert_eq!(p[3], 0.0);
        let q = torus2_coords(10.0, 3.0, 1.3, 0.4);
        for f in 0..3 {
            assert_eq!(p[f], q[f]);
        }
    }

    #[test]
    fn torus_mean_z_vanishes() {
        // Monte-Carlo oracle: z = r2 sin(theta2) has zero mean by symmetry.
        let cloud = generate_torus2(&ToriConfig::new(100_000, 5)).unwrap();
        let mean_z: f64 =
            (0..cloud.n_points()).map(|i| cloud.point(i)[2]).sum::<f64>() / cloud.n_points() as f64;
        assert!(mean_z.abs() < 0.1, "mean z = {mean_z}");
    }

    #[test]
    fn fixed_seed_reproducible() {
        let a = generate_torus3(&ToriConfig::new(100, 42)).unwrap();
        let b = generate_torus3(&ToriConfig::new(100, 42)).unwrap();
        assert_eq!(a.data(), b.data());
        let c = generate_torus3(&ToriConfig::new(100, 43)).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn pairwise_345_triangle() {
        let cloud = cloud_from_rows(&[&[0.0, 0.0], &[3.0, 4.0]]);
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        assert_eq!(d[(0, 1)], 25.0);
        assert_eq!(d[(1, 0)], 25.0);
        assert_eq!(d[(0, 0)], 0.0);
    }

    #[test]
    fn pairwise_identical_points() {
        let cloud = cloud_from_rows(&[&[1.5, -2.0], &[1.5, -2.0]]);
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pairwise_matches_double_loop() {
        let cloud = generate_torus2(&ToriConfig::new(25, 9)).unwrap();
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        for i in 0..25 {
            for j in 0..25 {
                let mut acc = 0.0;
                for f in 0..3 {
                    let diff = cloud.point(i)[f] - cloud.point(j)[f];
                    acc += diff * diff;
                }
                assert!((d[(i, j)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_metric_callback() {
        let l1 = |a: &[f64], b: &[f64]| -> f64 {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            d * d
        };
        let cloud = cloud_from_rows(&[&[0.0, 0.0], &[1.0, 2.0]]);
        let d = pairwise_sq_dists(&cloud, Metric::Custom(&l1));
        assert_eq!(d[(0, 1)], 9.0);
    }

    #[test]
    fn kernel_scale_median_times_multiplier() {
        // Off-diagonal squared distances {1, 4, 9}: 3 collinear points.
        let cloud = cloud_from_rows(&[&[0.0], &[1.0], &[3.0]]);
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        let s = kernel_scale(&d, 2.0, 1000).unwrap();
        assert_eq!(s, 8.0);
    }

    #[test]
    fn kernel_scale_degenerate_errors() {
        let cloud = cloud_from_rows(&[&[2.0, 2.0], &[2.0, 2.0], &[2.0, 2.0]]);
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        let err = kernel_scale(&d, 2.0, 1000).unwrap_err();
        assert!(err.to_string().contains("degenerate distances"), "{err}");
    }

    #[test]
    fn subsampled_median_close_to_full() {
        let cloud = generate_torus2(&ToriConfig::new(2000, 13)).unwrap();
        let full = kernel_scale_from_cloud(&cloud, 2.0, usize::MAX >> 1).unwrap();
        assert!(!full.subsampled);
        let sub = kernel_scale_from_cloud(&cloud, 2.0, 100_000).unwrap();
        assert!(sub.subsampled);
        let rel = (sub.sigma2 - full.sigma2).abs() / full.sigma2;
        assert!(rel < 0.10, "subsampled median off by {:.2}%", rel * 100.0);
    }

    #[test]
    fn matrix_and_cloud_scale_agree() {
        let cloud = generate_torus2(&ToriConfig::new(120, 21)).unwrap();
        let d = pairwise_sq_dists(&cloud, Metric::Euclidean);
        let a = kernel_scale(&d, 2.0, DEFAULT_SUBSAMPLE_CAP).unwrap();
        let b = kernel_scale_from_cloud(&cloud, 2.0, DEFAULT_SUBSAMPLE_CAP).unwrap();
        assert_eq!(a, b.sigma2);
    }
}
