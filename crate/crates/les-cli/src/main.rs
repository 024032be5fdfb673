//! `les` — spectral signatures and intrinsic distances between datasets.
//!
//! Subcommands:
//!   descriptor   compute one signature file per input dataset
//!   distance     pairwise distance matrix between datasets or signatures
//!   bench-tori   synthetic torus benchmark with timing and stability
//!
//! Exit codes: 0 success, 1 i/o or parse error, 2 configuration or
//! comparability error, 3 numerical failure.

mod bench;
mod config;
mod pipeline;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use les_core::analysis::{diffusion_embed, pairwise_distance_matrix, PairwiseMethod};
use les_core::data::load_point_cloud_auto;
use les_core::distances::LesDescriptor;
use les_core::{LesError, Result};

use config::ConfigArgs;

#[derive(Parser)]
#[command(
    name = "les",
    version,
    about = "Spectral signatures and intrinsic distances between unaligned datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a signature file (les-desc-v1 JSON) per input dataset.
    Descriptor(DescriptorArgs),
    /// Pairwise distance matrix between signatures or raw datasets.
    Distance(DistanceArgs),
    /// Torus benchmark: distance trends over the scale grid, timing, and
    /// sample-size stability.
    BenchTori(BenchArgs),
}

#[derive(Args)]
struct DescriptorArgs {
    /// Input datasets (CSV or LESPC1 binary; format is sniffed).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Directory for the descriptor files (created if missing).
    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DistanceArgs {
    /// Signature files or raw datasets (at least two).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output file for the distance matrix.
    #[arg(long)]
    out: PathBuf,

    /// Distance between signatures: les or imd.
    #[arg(long, default_value = "les")]
    method: String,

    /// Also write an m-dimensional diffusion embedding of the matrix.
    #[arg(long)]
    embed: Option<usize>,

    /// Output format: csv or json.
    #[arg(long, default_value = "csv")]
    format: String,

    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Output file for the JSON report.
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated scale factors in (0, 1].
    #[arg(long = "c-grid", default_value = "1.0,0.8,0.6,0.4,0.2", value_delimiter = ',')]
    c_grid: Vec<f64>,

    /// Points per torus sample.
    #[arg(long = "n-points", default_value_t = 1000)]
    n_points: usize,

    /// Independent trials per scale factor.
    #[arg(long, default_value_t = 10)]
    trials: usize,

    /// Comma-separated sample sizes for the stability sweep
    /// (default n/8, n/4, n/2, n, clamped to the sketch size).
    #[arg(long = "stability-grid", value_delimiter = ',')]
    stability_grid: Option<Vec<usize>>,

    #[command(flatten)]
    config: ConfigArgs,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Descriptor(args) => cmd_descriptor(args),
        Command::Distance(args) => cmd_distance(args),
        Command::BenchTori(args) => cmd_bench_tori(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

/// LES_THREADS caps the worker pool; unset means the rayon default.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("LES_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid LES_THREADS={raw:?}"),
        }
    }
}

/// Write atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| LesError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn descriptor_file_name(used: &mut HashMap<String, usize>, input: &Path) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let count = used.entry(stem.clone()).or_insert(0);
    *count += 1;
    if *count == 1 {
        format!("{stem}.les.json")
    } else {
        format!("{stem}_{count}.les.json")
    }
}

fn cmd_descriptor(args: DescriptorArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    fs::create_dir_all(&args.out).map_err(|e| LesError::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;

    let computed: Vec<(PathBuf, pipeline::DescriptorOutput)> = args
        .inputs
        .par_iter()
        .map(|input| {
            let cloud = load_point_cloud_auto(input)?;
            let output = pipeline::compute_descriptor(&cloud, &cfg).map_err(|e| {
                LesError::Config(format!("{}: {e}", input.display()))
            })?;
            Ok((input.clone(), output))
        })
        .collect::<Result<_>>()?;

    let mut used = HashMap::new();
    for (input, output) in computed {
        for warning in &output.warnings {
            eprintln!("warning: {warning}");
        }
        let file = descriptor_file_name(&mut used, &input);
        let path = args.out.join(file);
        write_atomic(&path, output.descriptor.to_json_string().as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

enum LoadedInput {
    Descriptor(LesDescriptor),
    Raw(PathBuf),
}

fn load_input(path: &Path) -> Result<LoadedInput> {
    let head = fs::read(path).map_err(|e| LesError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if let Ok(text) = std::str::from_utf8(&head) {
        if LesDescriptor::looks_like_descriptor(text) {
            return Ok(LoadedInput::Descriptor(LesDescriptor::from_json_str(text)?));
        }
    }
    Ok(LoadedInput::Raw(path.to_path_buf()))
}

fn cmd_distance(args: DistanceArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let method = match args.method.as_str() {
        "les" => PairwiseMethod::Les,
        "imd" => PairwiseMethod::ImdApprox,
        other => {
            return Err(LesError::Config(format!(
                "--method must be les or imd, got {other:?}"
            )))
        }
    };
    if args.inputs.len() < 2 {
        return Err(LesError::Config("need at least two inputs".into()));
    }
    match args.format.as_str() {
        "csv" | "json" => {}
        other => {
            return Err(LesError::Config(format!(
                "--format must be csv or json, got {other:?}"
            )))
        }
    }

    let loaded: Vec<LoadedInput> = args.inputs.iter().map(|p| load_input(p)).collect::<Result<_>>()?;

    // Raw datasets are embedded first; their descriptors are always
    // materialized next to the output so later runs can reuse them.
    let desc_dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let computed: Vec<(usize, PathBuf, pipeline::DescriptorOutput)> = loaded
        .par_iter()
        .enumerate()
        .filter_map(|(i, input)| match input {
            LoadedInput::Descriptor(_) => None,
            LoadedInput::Raw(path) => Some((i, path.clone())),
        })
        .map(|(i, path)| {
            let cloud = load_point_cloud_auto(&path)?;
            let output = pipeline::compute_descriptor(&cloud, &cfg)?;
            Ok((i, path, output))
        })
        .collect::<Result<_>>()?;

    let mut descriptors: Vec<Option<LesDescriptor>> = loaded
        .into_iter()
        .map(|input| match input {
            LoadedInput::Descriptor(d) => Some(d),
            LoadedInput::Raw(_) => None,
        })
        .collect();
    let mut used = HashMap::new();
    for (i, path, output) in computed {
        for warning in &output.warnings {
            eprintln!("warning: {warning}");
        }
        let file = descriptor_file_name(&mut used, &path);
        write_atomic(&desc_dir.join(file), output.descriptor.to_json_string().as_bytes())?;
        descriptors[i] = Some(output.descriptor);
    }
    let descriptors: Vec<LesDescriptor> = descriptors.into_iter().map(|d| d.unwrap()).collect();

    let matrix = pairwise_distance_matrix(&descriptors, method)?;
    let payload = match args.format.as_str() {
        "csv" => matrix.to_csv_string(),
        _ => matrix.to_json_string(),
    };
    write_atomic(&args.out, payload.as_bytes())?;
    println!("{}", args.out.display());

    if let Some(m) = args.embed {
        let embedding = diffusion_embed(&matrix, m, 1.0)?;
        let (suffix, payload) = match args.format.as_str() {
            "csv" => ("embedding.csv", embedding.to_csv_string()),
            _ => ("embedding.json", embedding.to_json_string()),
        };
        let mut embed_path = args.out.clone();
        embed_path.set_extension(suffix);
        write_atomic(&embed_path, payload.as_bytes())?;
        println!("{}", embed_path.display());
    }
    Ok(())
}

fn cmd_bench_tori(args: BenchArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let report = bench::run_bench(&cfg, &args.c_grid, args.n_points, args.trials, args.stability_grid)?;
    let payload = serde_json::to_string_pretty(&report)
        .map_err(|e| LesError::Config(format!("report serialization failed: {e}")))?;
    write_atomic(&args.out, payload.as_bytes())?;
    println!("{}", args.out.display());
    Ok(())
}
