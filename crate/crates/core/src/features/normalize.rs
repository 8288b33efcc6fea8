use serde::{Deserialize, Serialize};

use super::sparse::SparseVec;

/// Per-feature min-max scaling fitted on training rows. Values outside the
/// training range are clipped; a feature constant in training maps to 0.
/// Inputs are non-negative (every feature here is a count or a density), so
/// implicit zeros stay zero and rows stay sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[SparseVec], dim: usize) -> Normalizer {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut present = vec![0usize; dim];
        for r in rows {
            for (i, x) in r.iter() {
                min[i] = min[i].min(x);
                max[i] = max[i].max(x);
                present[i] += 1;
            }
        }
        for i in 0..dim {
            if present[i] < rows.len() {
                min[i] = min[i].min(0.0);
                max[i] = max[i].max(0.0);
            }
            if present[i] == 0 {
                min[i] = 0.0;
                max[i] = 0.0;
            }
        }
        Normalizer { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn apply(&self, x: &SparseVec) -> SparseVec {
        debug_assert_eq!(x.dim, self.dim());
        let mut out = SparseVec::zeros(x.dim);
        for (i, v) in x.iter() {
            let (lo, hi) = (self.min[i], self.max[i]);
            let z = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
            if z != 0.0 {
                out.idx.push(i as u32);
                out.val.push(z);
            }
        }
        out
    }
}
