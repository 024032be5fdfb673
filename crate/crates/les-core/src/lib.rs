//! Intrinsic, alignment-free distances between datasets.
//!
//! A dataset (any point cloud) is represented by the SPD diffusion operator
//! of its Gaussian affinity graph. The operator's leading eigenvalues are
//! estimated with a randomized fixed-rank sketch, regularized, and logged
//! into a K-dimensional signature; signatures from different datasets are
//! compared by plain Euclidean distance, which lower-bounds the
//! log-Euclidean metric between the operators. Datasets of different sizes,
//! dimensions, and modalities become directly comparable.
//!
//! The pipeline end to end:
//!
//! ```
//! use les_core::data::{generate_torus2, kernel_scale_from_cloud, ToriConfig};
//! use les_core::operator::{build_operator, OperatorMode};
//! use les_core::spectral::exact_eigenvalues;
//! use les_core::distances::{les_descriptor, les_distance};
//!
//! let cloud_a = generate_torus2(&ToriConfig::new(80, 0)).unwrap();
//! let cloud_b = generate_torus2(&ToriConfig::new(80, 1)).unwrap();
//! let mut descriptors = Vec::new();
//! for cloud in [&cloud_a, &cloud_b] {
//!     let scale = kernel_scale_from_cloud(cloud, 2.0, 1_000_000).unwrap();
//!     let op = build_operator(cloud, scale.sigma2, OperatorMode::Auto).unwrap();
//!     let spectrum = exact_eigenvalues(&op, 20).unwrap();
//!     descriptors.push(les_descriptor(&spectrum, 1e-8).unwrap());
//! }
//! let d = les_distance(&descriptors[0], &descriptors[1]).unwrap();
//! assert!(d.is_finite());
//! ```

pub mod analysis;
pub mod data;
pub mod distances;
pub mod error;
mod linalg;
pub mod operator;
mod rng;
pub mod spectral;

pub use error::{LesError, Result};
