//! Torus benchmark: distances between independently sampled 2- and 3-tori
//! across a grid of minor-radius scale factors, with run-time and
//! sample-size stability measurements.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use les_core::data::{generate_torus2, generate_torus3, ToriConfig};
use les_core::distances::{default_t_grid, imd_approx, les_distance};
use les_core::{LesError, Result};

use crate::config::RunConfig;
use crate::pipeline::compute_descriptor_nystrom;

pub const BENCH_SCHEMA: &str = "les-bench-tori-v1";

/// The six unordered pairs of {T2, T2Sc, T3, T3Sc}, in report order.
pub const PAIR_NAMES: [&str; 6] = [
    "T2:T2Sc",
    "T2:T3",
    "T2:T3Sc",
    "T2Sc:T3",
    "T2Sc:T3Sc",
    "T3:T3Sc",
];

const PAIR_INDICES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub config: BenchConfig,
    pub c_grid: Vec<f64>,
    pub pairs: Vec<String>,
    pub les: DistanceStats,
    pub imd: DistanceStats,
    pub timing: Timing,
    pub stability: Stability,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    pub m: usize,
    pub gamma: f64,
    pub sigma_multiplier: f64,
    pub seed: u64,
    pub n_points: usize,
    pub trials: usize,
}

/// Per-c, per-pair statistics over trials.
#[derive(Debug, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timing {
    pub descriptor_seconds_mean: f64,
    pub total_seconds: f64,
}

/// d(T2, T3) at several sample sizes, normalized by the largest size.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stability {
    pub n_grid: Vec<usize>,
    pub ratio: Vec<f64>,
    pub reference_n: usize,
}

/// Validate the report against its own schema: shapes consistent, values
/// finite. Run on every report before it is written.
pub fn validate_report(report: &BenchReport) -> Result<()> {
    if report.schema != BENCH_SCHEMA {
        return Err(LesError::Config(format!("report schema is {:?}", report.schema)));
    }
    if report.pairs.len() != 6 {
        return Err(LesError::Config("report must list 6 torus pairs".into()));
    }
    let nc = report.c_grid.len();
    for (name, stats) in [("les", &report.les), ("imd", &report.imd)] {
        for (field, rows) in [("mean", &stats.mean), ("std", &stats.std)] {
            if rows.len() != nc {
                return Err(LesError::Config(format!("{name}.{field} has {} rows, expected {nc}", rows.len())));
            }
            for row in rows {
                if row.len() != 6 {
                    return Err(LesError::Config(format!("{name}.{field} row width {}", row.len())));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(LesError::Numerical(format!("non-finite entry in {name}.{field}")));
                }
            }
        }
    }
    if report.stability.ratio.len() != report.stability.n_grid.len() {
        return Err(LesError::Config("stability grid and ratios disagree".into()));
    }
    Ok(())
}

struct TrialResult {
    c_index: usize,
    les: [f64; 6],
    imd: [f64; 6],
    descriptor_seconds: f64,
}

fn run_trial(cfg: &RunConfig, n_points: usize, c: f64, c_index: usize, seed_base: u64) -> Result<TrialResult> {
    let base = ToriConfig::new(n_points, 0);
    let clouds = [
        generate_torus2(&ToriConfig { seed: seed_base, ..base })?.with_name("T2"),
        generate_torus2(&ToriConfig { seed: seed_base + 1, c, ..base })?.with_name("T2Sc"),
        generate_torus3(&ToriConfig { seed: seed_base + 2, ..base })?.with_name("T3"),
        generate_torus3(&ToriConfig { seed: seed_base + 3, c, ..base })?.with_name("T3Sc"),
    ];

    let started = Instant::now();
    let mut outputs = Vec::with_capacity(4);
    for cloud in &clouds {
        outputs.push(compute_descriptor_nystrom(cloud, cfg)?);
    }
    let descriptor_seconds = started.elapsed().as_secs_f64() / 4.0;

    let grid = default_t_grid();
    let mut les = [0.0; 6];
    let mut imd = [0.0; 6];
    for (slot, &(a, b)) in PAIR_INDICES.iter().enumerate() {
        les[slot] = les_distance(&outputs[a].descriptor, &outputs[b].descriptor)?;
        imd[slot] = imd_approx(&outputs[a].spectrum, &outputs[b].spectrum, cfg.gamma, &grid)?;
    }
    Ok(TrialResult {
        c_index,
        les,
        imd,
        descriptor_seconds,
    })
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the full benchmark and assemble the report.
pub fn run_bench(
    cfg: &RunConfig,
    c_grid: &[f64],
    n_points: usize,
    trials: usize,
    stability_grid: Option<Vec<usize>>,
) -> Result<BenchReport> {
    if c_grid.is_empty() || c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0 && *c <= 1.0)) {
        return Err(LesError::Config("c grid entries must lie in (0, 1]".into()));
    }
    if trials == 0 {
        return Err(LesError::Config("need at least one trial".into()));
    }
    if cfg.m > n_points {
        return Err(LesError::Config(format!(
            "sketch size m = {} exceeds n_points = {n_points}",
            cfg.m
        )));
    }
    let total_start = Instant::now();

    let jobs: Vec<(usize, usize)> = (0..c_grid.len())
        .flat_map(|ci| (0..trials).map(move |t| (ci, t)))
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(ci, t)| {
            let seed_base = cfg.seed + ((t * c_grid.len() + ci) as u64) * 4;
            run_trial(cfg, n_points, c_grid[ci], ci, seed_base)
        })
        .collect::<Result<_>>()?;

    let mut les_stats = DistanceStats { mean: Vec::new(), std: Vec::new() };
    let mut imd_stats = DistanceStats { mean: Vec::new(), std: Vec::new() };
    for ci in 0..c_grid.len() {
        let mut les_row_mean = Vec::with_capacity(6);
        let mut les_row_std = Vec::with_capacity(6);
        let mut imd_row_mean = Vec::with_capacity(6);
        let mut imd_row_std = Vec::with_capacity(6);
        for slot in 0..6 {
            let ls: Vec<f64> = results
                .iter()
                .filter(|r| r.c_index == ci)
                .map(|r| r.les[slot])
                .collect();
            let is: Vec<f64> = results
                .iter()
                .filter(|r| r.c_index == ci)
                .map(|r| r.imd[slot])
                .collect();
            let (lm, lsd) = mean_std(&ls);
            let (im, isd) = mean_std(&is);
            les_row_mean.push(lm);
            les_row_std.push(lsd);
            imd_row_mean.push(im);
            imd_row_std.push(isd);
        }
        les_stats.mean.push(les_row_mean);
        les_stats.std.push(les_row_std);
        imd_stats.mean.push(imd_row_mean);
        imd_stats.std.push(imd_row_std);
    }
    let descriptor_seconds_mean =
        results.iter().map(|r| r.descriptor_seconds).sum::<f64>() / results.len() as f64;

    // Sample-size stability: d(T2, T3) across a sweep of N, normalized by
    // the largest N in the sweep.
    let n_grid = stability_grid.unwrap_or_else(|| {
        let mut grid: Vec<usize> = [8, 4, 2, 1]
            .iter()
            .map(|div| (n_points / div).max(cfg.m))
            .collect();
        grid.dedup();
        grid
    });
    if n_grid.is_empty() || n_grid.iter().any(|&n| n < cfg.m) {
        return Err(LesError::Config(
            "stability grid entries must be at least the sketch size m".into(),
        ));
    }
    let stab_jobs: Vec<(usize, usize)> = (0..n_grid.len())
        .flat_map(|ni| (0..trials).map(move |t| (ni, t)))
        .collect();
    let stab_results: Vec<(usize, f64)> = stab_jobs
        .par_iter()
        .map(|&(ni, t)| -> Result<(usize, f64)> {
            let seed_base = cfg.seed + 1_000_000 + ((t * n_grid.len() + ni) as u64) * 2;
            let n = n_grid[ni];
            let t2 = generate_torus2(&ToriConfig::new(n, seed_base))?.with_name("T2");
            let t3 = generate_torus3(&ToriConfig::new(n, seed_base + 1))?.with_name("T3");
            let a = compute_descriptor_nystrom(&t2, cfg)?;
            let b = compute_descriptor_nystrom(&t3, cfg)?;
            Ok((ni, les_distance(&a.descriptor, &b.descriptor)?))
        })
        .collect::<Result<_>>()?;
    let per_n_mean: Vec<f64> = (0..n_grid.len())
        .map(|ni| {
            let vals: Vec<f64> = stab_results.iter().filter(|(i, _)| *i == ni).map(|(_, v)| *v).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let reference = *per_n_mean.last().expect("nonempty grid");
    let ratio = per_n_mean.iter().map(|v| v / reference).collect();
    let reference_n = *n_grid.last().expect("nonempty grid");

    let report = BenchReport {
        schema: BENCH_SCHEMA.into(),
        config: BenchConfig {
            k: cfg.k,
            m: cfg.m,
            gamma: cfg.gamma,
            sigma_multiplier: cfg.sigma_multiplier,
            seed: cfg.seed,
            n_points,
            trials,
        },
        c_grid: c_grid.to_vec(),
        pairs: PAIR_NAMES.iter().map(|s| s.to_string()).collect(),
        les: les_stats,
        imd: imd_stats,
        timing: Timing {
            descriptor_seconds_mean,
            total_seconds: total_start.elapsed().as_secs_f64(),
        },
        stability: Stability {
            n_grid,
            ratio,
            reference_n,
        },
    };
    validate_report(&report)?;
    Ok(report)
}
