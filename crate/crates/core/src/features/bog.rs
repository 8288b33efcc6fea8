use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::burst::sample_burst_pairs;
use super::gaussians::{fit_domain_gaussians, DomainGaussians, DEFAULT_K, VARIANCE_FLOOR};
use super::normalize::Normalizer;
use super::sizes::size_counts;
use super::sparse::SparseVec;
use crate::error::{Error, Result};
use crate::trace::{Sample, DEFAULT_MTU};
use crate::util::sha256_hex;

pub const FEATURE_SPACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BogConfig {
    pub mtu: u32,
    pub variance_floor: f64,
    /// K used for every domain unless overridden in `k_per_domain`.
    pub k: usize,
    pub k_per_domain: BTreeMap<String, usize>,
    pub seed: u64,
    /// Densities of pairs farther than this squared Mahalanobis distance
    /// from a mean are dropped, keeping rows sparse. `None` keeps them all.
    pub density_cutoff: Option<f64>,
}

impl Default for BogConfig {
    fn default() -> Self {
        BogConfig {
            mtu: DEFAULT_MTU,
            variance_floor: VARIANCE_FLOOR,
            k: DEFAULT_K,
            k_per_domain: BTreeMap::new(),
            seed: 0,
            density_cutoff: None,
        }
    }
}

/// Fitted Bag-of-Gaussians feature space: Gaussian features for each domain
/// (sorted by name, clusters in index order) followed by packet size counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogSpace {
    pub version: u32,
    pub mtu: u32,
    pub domains: Vec<DomainGaussians>,
    #[serde(default)]
    pub density_cutoff: Option<f64>,
    pub normalizer: Normalizer,
}

/// Burst pairs of the given samples as points, grouped by domain.
pub fn pairs_by_domain<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeMap<String, Vec<[f64; 2]>> {
    let mut m: BTreeMap<String, Vec<[f64; 2]>> = BTreeMap::new();
    for s in samples {
        for p in sample_burst_pairs(s) {
            m.entry(p.domain.clone()).or_default().push(p.point());
        }
    }
    m
}

impl BogSpace {
    pub fn fit(samples: &[&Sample], cfg: &BogConfig) -> Result<BogSpace> {
        let pairs = pairs_by_domain(samples.iter().copied());
        Self::fit_with_pairs(samples, &pairs, cfg)
    }

    /// Like `fit`, reusing burst pairs already grouped by domain.
    pub fn fit_with_pairs(
        samples: &[&Sample],
        pairs: &BTreeMap<String, Vec<[f64; 2]>>,
        cfg: &BogConfig,
    ) -> Result<BogSpace> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("no training samples for feature space".into()));
        }
        let k_for = |d: &str| cfg.k_per_domain.get(d).copied().unwrap_or(cfg.k);
        let domains: Vec<DomainGaussians> = fit_domain_gaussians(pairs, k_for, cfg.variance_floor, cfg.seed)
            .into_values()
            .collect();
        let mut space = BogSpace {
            version: FEATURE_SPACE_VERSION,
            mtu: cfg.mtu,
            domains,
            density_cutoff: cfg.density_cutoff,
            normalizer: Normalizer { min: Vec::new(), max: Vec::new() },
        };
        let raw: Vec<SparseVec> = samples.iter().map(|s| space.raw_features(s)).collect();
        space.normalizer = Normalizer::fit(&raw, space.dim());
        Ok(space)
    }

    pub fn gaussian_dim(&self) -> usize {
        self.domains.iter().map(DomainGaussians::k).sum()
    }

    pub fn dim(&self) -> usize {
        self.gaussian_dim() + 2 * self.mtu as usize
    }

    /// Unnormalized Gaussian part: F[d,i] is the sum over the sample's pairs
    /// at domain d of the density of Gaussian i. Unknown domains add nothing.
    pub fn gaussian_features(&self, sample: &Sample) -> SparseVec {
        let mut offsets = BTreeMap::new();
        let mut off = 0usize;
        for d in &self.domains {
            offsets.insert(d.domain.as_str(), (off, d));
            off += d.k();
        }
        let mut dense = vec![0.0; off];
        for p in sample_burst_pairs(sample) {
            if let Some(&(o, d)) = offsets.get(p.domain.as_str()) {
                let x = p.point();
                for (i, g) in d.clusters.iter().enumerate() {
                    if self.density_cutoff.is_some_and(|c| g.mahalanobis2(x) > c) {
                        continue;
                    }
                    dense[o + i] += g.density(x);
                }
            }
        }
        SparseVec::from_dense(&dense)
    }

    pub fn raw_features(&self, sample: &Sample) -> SparseVec {
        self.gaussian_features(sample).concat(&size_counts(sample, self.mtu))
    }

    /// Normalized feature row, every component in [0, 1].
    pub fn features(&self, sample: &Sample) -> SparseVec {
        self.normalizer.apply(&self.raw_features(sample))
    }

    /// Content hash identifying this space in model files.
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("space serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::gaussians::Gaussian;
    use std::f64::consts::PI;

    fn space_with(mean: [f64; 2]) -> BogSpace {
        BogSpace {
            version: FEATURE_SPACE_VERSION,
            mtu: 1500,
            domains: vec![DomainGaussians {
                domain: "site.com".into(),
                clusters: vec![Gaussian { mean, var: [1.0, 1.0] }],
                inertia: 0.0,
            }],
            density_cutoff: None,
            normalizer: Normalizer { min: vec![0.0; 3001], max: vec![1.0; 3001] },
        }
    }

    #[test]
    fn density_at_mean_and_linearity() {
        let sp = space_with([100.0, 200.0]);
        let one = Sample::from_signed_flows(None, "s", 0, [("site.com", vec![100, -200])]);
        let two = Sample::from_signed_flows(None, "s", 0, [("site.com", vec![100, -200, 100, -200])]);
        let f1 = sp.gaussian_features(&one).get(0);
        assert!((f1 - 1.0 / (2.0 * PI)).abs() < 1e-9);
        assert_eq!(sp.gaussian_features(&two).get(0), 2.0 * f1);
    }

    #[test]
    fn absent_domain_contributes_nothing() {
        let sp = space_with([100.0, 200.0]);
        let s = Sample::from_signed_flows(None, "s", 0, [("other.net", vec![100, -200])]);
        assert_eq!(sp.gaussian_features(&s).nnz(), 0);
        assert_eq!(sp.raw_features(&s).dim, 3001);
    }

    #[test]
    fn fitted_space_normalizes_training_rows() {
        let a = Sample::from_signed_flows(None, "s", 0, [("site.com", vec![300, -5000, -1200])]);
        let b = Sample::from_signed_flows(None, "s", 1, [("site.com", vec![500, -9000]), ("cdn.net", vec![400, -700])]);
        let sp = BogSpace::fit(&[&a, &b], &BogConfig::default()).unwrap();
        assert_eq!(sp.domains.iter().map(|d| d.domain.as_str()).collect::<Vec<_>>(), ["cdn.net", "site.com"]);
        for s in [&a, &b] {
            let f = sp.features(s);
            assert!(f.val.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        assert_eq!(sp.features(&a), sp.features(&a));
        assert_eq!(sp.fingerprint(), sp.clone().fingerprint());
    }
}
