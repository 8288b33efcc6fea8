//! Multinomial naive Bayes over packet size counts.

use serde::{Deserialize, Serialize};

use super::logreg::softmax;
use crate::error::{Error, Result};
use crate::features::SparseVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub dim: usize,
    pub classes: usize,
    pub alpha: f64,
    pub log_prior: Vec<f64>,
    /// Row-major `classes x dim` log event probabilities.
    pub log_theta: Vec<f64>,
}

pub fn train_nb(x: &[SparseVec], y: &[usize], classes: usize, alpha: f64) -> Result<NbModel> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
    }
    let dim = x[0].dim;
    let mut counts = vec![0.0; classes * dim];
    let mut docs = vec![0usize; classes];
    for (r, &c) in x.iter().zip(y) {
        if r.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: r.dim });
        }
        r.check_finite()?;
        if c >= classes {
            return Err(Error::InvalidInput(format!("class index {c} out of range")));
        }
        docs[c] += 1;
        for (i, v) in r.iter() {
            counts[c * dim + i] += v;
        }
    }
    if docs.iter().filter(|&&d| d > 0).count() < 2 {
        return Err(Error::InvalidInput("training data has a single class".into()));
    }
    let n = x.len() as f64;
    let log_prior = docs
        .iter()
        .map(|&d| if d > 0 { (d as f64 / n).ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut log_theta = vec![0.0; classes * dim];
    for c in 0..classes {
        let row = &counts[c * dim..(c + 1) * dim];
        let total: f64 = row.iter().sum::<f64>() + alpha * dim as f64;
        for i in 0..dim {
            log_theta[c * dim + i] = ((row[i] + alpha) / total).ln();
        }
    }
    Ok(NbModel {
        dim,
        classes,
        alpha,
        log_prior,
        log_theta,
    })
}

impl NbModel {
    pub fn log_joint(&self, x: &SparseVec) -> Result<Vec<f64>> {
        if x.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim,
            });
        }
        Ok((0..self.classes)
            .map(|c| {
                let row = &self.log_theta[c * self.dim..(c + 1) * self.dim];
                self.log_prior[c] + x.iter().map(|(i, v)| v * row[i]).sum::<f64>()
            })
            .collect())
    }

    pub fn predict(&self, x: &SparseVec) -> Result<Vec<f64>> {
        Ok(softmax(&self.log_joint(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_two_by_two() {
        // Class 0 saw counts (3, 1), class 1 saw (1, 1) twice over.
        let x = vec![
            SparseVec::from_dense(&[3.0, 1.0]),
            SparseVec::from_dense(&[1.0, 0.0]),
            SparseVec::from_dense(&[0.0, 1.0]),
        ];
        let m = train_nb(&x, &[0, 1, 1], 2, 1.0).unwrap();
        // theta0 = (4/6, 2/6), theta1 = (2/4, 2/4); priors 1/3, 2/3.
        let q = SparseVec::from_dense(&[2.0, 1.0]);
        let j0 = (1.0f64 / 3.0) * (4.0f64 / 6.0).powi(2) * (2.0 / 6.0);
        let j1 = (2.0f64 / 3.0) * 0.5f64.powi(3);
        let p = m.predict(&q).unwrap();
        assert!((p[0] - j0 / (j0 + j1)).abs() < 1e-12);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_counts_follow_priors() {
        let r = SparseVec::from_dense(&[1.0, 1.0]);
        let m = train_nb(&[r.clone(), r.clone(), r.clone()], &[0, 0, 1], 2, 1.0).unwrap();
        let p = m.predict(&r).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
    }
}
