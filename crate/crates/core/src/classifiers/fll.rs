//! Order-insensitive packet-size distance and a nearest-neighbor classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Sample;

/// Multiset of signed packet sizes as sorted `(size, count)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeMultiset {
    pub counts: Vec<(i32, u32)>,
    pub total: u64,
}

impl SizeMultiset {
    pub fn from_sizes(sizes: &[i32]) -> Self {
        let mut s = sizes.to_vec();
        s.sort_unstable();
        let mut counts: Vec<(i32, u32)> = Vec::new();
        for v in s {
            match counts.last_mut() {
                Some((k, c)) if *k == v => *c += 1,
                _ => counts.push((v, 1)),
            }
        }
        SizeMultiset {
            counts,
            total: sizes.len() as u64,
        }
    }

    pub fn from_sample(sample: &Sample) -> Self {
        Self::from_sizes(&sample.signed_sizes())
    }
}

/// `|s| + |t| - 2 * sum_k min(count_s(k), count_t(k))` over signed sizes.
pub fn fll_distance(s: &SizeMultiset, t: &SizeMultiset) -> u64 {
    let (a, b) = (&s.counts, &t.counts);
    let (mut i, mut j, mut common) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += u64::from(a[i].1.min(b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    s.total + t.total - 2 * common
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub classes: usize,
    pub train: Vec<(SizeMultiset, usize)>,
}

pub fn train_knn(train: Vec<(SizeMultiset, usize)>, classes: usize, k: usize) -> Result<KnnModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if let Some((_, c)) = train.iter().find(|(_, c)| *c >= classes) {
        return Err(Error::InvalidInput(format!("class index {c} out of range")));
    }
    Ok(KnnModel { k, classes, train })
}

impl KnnModel {
    /// Distance-weighted vote of the k nearest neighbors. Neighbors at
    /// distance zero, if any, take all the weight. Equal distances are
    /// ordered by label index, then training order.
    pub fn predict(&self, q: &SizeMultiset) -> Vec<f64> {
        let mut d: Vec<(u64, usize, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, (s, c))| (fll_distance(q, s), *c, i))
            .collect();
        let k = self.k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable(k - 1);
            d.truncate(k);
        }
        d.sort_unstable();
        let mut p = vec![0.0; self.classes];
        if d[0].0 == 0 {
            for &(dist, c, _) in &d {
                if dist == 0 {
                    p[c] += 1.0;
                }
            }
        } else {
            for &(dist, c, _) in &d {
                p[c] += 1.0 / dist as f64;
            }
        }
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &[i32]) -> SizeMultiset {
        SizeMultiset::from_sizes(s)
    }

    #[test]
    fn distance_examples() {
        let s = m(&[100, -200]);
        assert_eq!(fll_distance(&s, &s), 0);
        assert_eq!(fll_distance(&s, &m(&[100, -300])), 2);
        assert_eq!(fll_distance(&s, &m(&[])), 2);
        assert_eq!(fll_distance(&m(&[5, 5, 5]), &m(&[5])), 2);
    }

    #[test]
    fn exact_match_wins() {
        let knn = train_knn(vec![(m(&[1, 2]), 0), (m(&[1, 3]), 1)], 2, 1).unwrap();
        assert_eq!(knn.predict(&m(&[1, 2])), vec![1.0, 0.0]);
    }

    #[test]
    fn equidistant_split_evenly() {
        let knn = train_knn(vec![(m(&[1, 2]), 0), (m(&[1, 3]), 1)], 2, 2).unwrap();
        assert_eq!(knn.predict(&m(&[1, 4])), vec![0.5, 0.5]);
    }
}
