use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use crate::util::rng_for;

pub const DEFAULT_K_GRID: [usize; 5] = [1, 2, 4, 8, 16];
pub const DEFAULT_K: usize = 4;
pub const VARIANCE_FLOOR: f64 = 1.0;

/// Axis-aligned 2-D Gaussian over (out_bytes, in_bytes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: [f64; 2],
    pub var: [f64; 2],
}

impl Gaussian {
    pub fn density(&self, x: [f64; 2]) -> f64 {
        (-0.5 * self.mahalanobis2(x)).exp() / (2.0 * PI * (self.var[0] * self.var[1]).sqrt())
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    pub fn mahalanobis2(&self, x: [f64; 2]) -> f64 {
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        dx * dx / self.var[0] + dy * dy / self.var[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGaussians {
    pub domain: String,
    pub clusters: Vec<Gaussian>,
    /// Sum of squared distances to the assigned means.
    pub inertia: f64,
}

impl DomainGaussians {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }
}

/// Distinct points, which bound the useful cluster count.
pub fn distinct_points(points: &[[f64; 2]]) -> usize {
    points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Fits `k` clusters (capped at the number of distinct points) and one
/// diagonal Gaussian per cluster with population variance, floored.
pub fn fit_domain(domain: &str, points: &[[f64; 2]], k: usize, variance_floor: f64, seed: u64) -> DomainGaussians {
    let k = k.max(1).min(distinct_points(points));
    let km = kmeans(points, k, &mut rng_for(seed, &format!("kmeans/{domain}/{k}")));
    let mut acc = vec![([0.0f64; 2], 0usize); km.centroids.len()];
    for (&a, &p) in km.assignment.iter().zip(points) {
        let m = km.centroids[a];
        acc[a].0[0] += (p[0] - m[0]).powi(2);
        acc[a].0[1] += (p[1] - m[1]).powi(2);
        acc[a].1 += 1;
    }
    let clusters = km
        .centroids
        .iter()
        .zip(&acc)
        .map(|(&mean, &(ss, n))| {
            let n = n.max(1) as f64;
            Gaussian {
                mean,
                var: [(ss[0] / n).max(variance_floor), (ss[1] / n).max(variance_floor)],
            }
        })
        .collect();
    DomainGaussians {
        domain: domain.to_string(),
        clusters,
        inertia: km.inertia,
    }
}

/// Fits every domain at its chosen K. Domains without pairs are skipped.
pub fn fit_domain_gaussians(
    pairs_by_domain: &BTreeMap<String, Vec<[f64; 2]>>,
    k_for: impl Fn(&str) -> usize,
    variance_floor: f64,
    seed: u64,
) -> BTreeMap<String, DomainGaussians> {
    let mut out = BTreeMap::new();
    for (d, pts) in pairs_by_domain {
        if pts.is_empty() {
            log::warn!("domain {d} has no burst pairs; omitted");
            continue;
        }
        out.insert(d.clone(), fit_domain(d, pts, k_for(d), variance_floor, seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_is_floored() {
        let g = fit_domain("d", &[[100.0, 200.0]], 1, VARIANCE_FLOOR, 0);
        assert_eq!(g.clusters, vec![Gaussian { mean: [100.0, 200.0], var: [1.0, 1.0] }]);
        assert!((g.clusters[0].density([100.0, 200.0]) - 1.0 / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn two_groups_give_centroids() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1000.0, 50.0], [1002.0, 50.0]];
        let g = fit_domain("d", &pts, 2, VARIANCE_FLOOR, 3);
        let mut means: Vec<_> = g.clusters.iter().map(|c| c.mean).collect();
        means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(means, vec![[1.0, 0.0], [1001.0, 50.0]]);
        assert!(g.clusters.iter().all(|c| c.var == [1.0, 1.0]));
    }

    #[test]
    fn k_capped_by_distinct_pairs() {
        let g = fit_domain("d", &[[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]], 16, VARIANCE_FLOOR, 0);
        assert_eq!(g.k(), 2);
    }

    #[test]
    fn inertia_not_above_single_cluster() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i * 37 % 11) as f64 * 50.0, (i % 7) as f64 * 300.0]).collect();
        let one = fit_domain("d", &pts, 1, VARIANCE_FLOOR, 1).inertia;
        for k in DEFAULT_K_GRID {
            assert!(fit_domain("d", &pts, k, VARIANCE_FLOOR, 1).inertia <= one + 1e-6);
        }
    }
}
