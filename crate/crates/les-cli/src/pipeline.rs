//! Descriptor computation shared by the subcommands: kernel scale, operator,
//! spectrum, signature.

use les_core::data::{kernel_scale_from_cloud, PointCloud, DEFAULT_SUBSAMPLE_CAP};
use les_core::distances::{les_descriptor, LesDescriptor, SigmaRule};
use les_core::operator::build_operator;
use les_core::spectral::{approx_eigenvalues, exact_eigenvalues, Spectrum};
use les_core::Result;

use crate::config::RunConfig;

pub struct DescriptorOutput {
    pub descriptor: LesDescriptor,
    pub spectrum: Spectrum,
    pub warnings: Vec<String>,
}

/// Compute the signature of one point cloud under `cfg`.
///
/// The exact eigensolver is used at or below `exact_threshold` points and
/// whenever the sketch cannot fit (m > n); ranks beyond the operator size
/// are zero-padded with a warning.
pub fn compute_descriptor(cloud: &PointCloud, cfg: &RunConfig) -> Result<DescriptorOutput> {
    let mut warnings = Vec::new();
    let n = cloud.n_points();

    let scale = kernel_scale_from_cloud(cloud, cfg.sigma_multiplier, DEFAULT_SUBSAMPLE_CAP)?;
    if scale.subsampled {
        warnings.push(format!(
            "kernel scale of {} estimated from a {}-pair subsample",
            cloud.name(),
            scale.pairs_used
        ));
    }

    let op = build_operator(cloud, scale.sigma2, cfg.mode)?;

    let use_exact = n <= cfg.exact_threshold || cfg.m > n || cfg.k >= n;
    let spectrum = if use_exact {
        if cfg.k > n {
            warnings.push(format!(
                "{}: rank k = {} exceeds {} points; spectrum zero-padded",
                cloud.name(),
                cfg.k,
                n
            ));
        }
        exact_eigenvalues(&op, cfg.k)?
    } else {
        approx_eigenvalues(&op, cfg.k, cfg.m, cfg.seed)?
    };

    let descriptor = les_descriptor(&spectrum, cfg.gamma)?
        .with_name(cloud.name())
        .with_sigma_rule(SigmaRule {
            multiplier: cfg.sigma_multiplier,
            metric: "euclidean".into(),
        });
    Ok(DescriptorOutput {
        descriptor,
        spectrum,
        warnings,
    })
}

/// Same pipeline but always on the randomized path, as the benchmark
/// protocol requires. Errors if the sketch does not fit.
pub fn compute_descriptor_nystrom(cloud: &PointCloud, cfg: &RunConfig) -> Result<DescriptorOutput> {
    let mut warnings = Vec::new();
    let scale = kernel_scale_from_cloud(cloud, cfg.sigma_multiplier, DEFAULT_SUBSAMPLE_CAP)?;
    if scale.subsampled {
        warnings.push(format!("kernel scale subsampled for {}", cloud.name()));
    }
    let op = build_operator(cloud, scale.sigma2, cfg.mode)?;
    let spectrum = approx_eigenvalues(&op, cfg.k, cfg.m, cfg.seed)?;
    let descriptor = les_descriptor(&spectrum, cfg.gamma)?
        .with_name(cloud.name())
        .with_sigma_rule(SigmaRule {
            multiplier: cfg.sigma_multiplier,
            metric: "euclidean".into(),
        });
    Ok(DescriptorOutput {
        descriptor,
        spectrum,
        warnings,
    })
}
