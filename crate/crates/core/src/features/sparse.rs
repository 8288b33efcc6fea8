use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse non-negative feature row with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVec {
    pub dim: usize,
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec {
            dim,
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    /// Builds a row from unordered `(index, value)` entries; duplicates are
    /// summed and exact zeros dropped.
    pub fn from_entries(dim: usize, mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut v = SparseVec::zeros(dim);
        for (i, x) in entries {
            debug_assert!((i as usize) < dim);
            if v.idx.last() == Some(&i) {
                *v.val.last_mut().expect("paired") += x;
            } else {
                v.idx.push(i);
                v.val.push(x);
            }
        }
        v.drop_zeros();
        v
    }

    pub fn from_dense(x: &[f64]) -> Self {
        let mut v = SparseVec::zeros(x.len());
        for (i, &a) in x.iter().enumerate() {
            if a != 0.0 {
                v.idx.push(i as u32);
                v.val.push(a);
            }
        }
        v
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for (&i, &x) in self.idx.iter().zip(&self.val) {
            d[i as usize] = x;
        }
        d
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        match self.idx.binary_search(&(i as u32)) {
            Ok(k) => self.val[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&i, &x)| (i as usize, x))
    }

    /// Appends `other` after this row's last index.
    pub fn concat(mut self, other: &SparseVec) -> SparseVec {
        let off = self.dim as u32;
        self.idx.extend(other.idx.iter().map(|i| i + off));
        self.val.extend_from_slice(&other.val);
        self.dim += other.dim;
        self
    }

    pub(crate) fn drop_zeros(&mut self) {
        let mut k = 0;
        for j in 0..self.idx.len() {
            if self.val[j] != 0.0 {
                self.idx[k] = self.idx[j];
                self.val[k] = self.val[j];
                k += 1;
            }
        }
        self.idx.truncate(k);
        self.val.truncate(k);
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.val.iter().position(|x| !x.is_finite()) {
            Some(k) => Err(Error::InvalidInput(format!("non-finite feature at index {}", self.idx[k]))),
            None => Ok(()),
        }
    }
}
