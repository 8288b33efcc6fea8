//! Burst pairs, per-domain Gaussians and the feature spaces built on them.

mod bog;
mod burst;
mod gaussians;
mod kmeans;
mod normalize;
mod pan;
mod sizes;
mod sparse;

pub use bog::{pairs_by_domain, BogConfig, BogSpace, FEATURE_SPACE_VERSION};
pub use burst::{
    burst_pairs_signed, extract_burst_pairs, pair_runs, runs, sample_burst_pairs, second_level_domain, BurstPair, Run,
};
pub use gaussians::{
    distinct_points, fit_domain, fit_domain_gaussians, DomainGaussians, Gaussian, DEFAULT_K, DEFAULT_K_GRID,
    VARIANCE_FLOOR,
};
pub use kmeans::{kmeans, KMeans, MAX_LLOYD_ITERS};
pub use normalize::Normalizer;
pub use pan::{pan_features, round_to, PanConfig, PanSpace};
pub use sizes::size_counts;
pub use sparse::SparseVec;
