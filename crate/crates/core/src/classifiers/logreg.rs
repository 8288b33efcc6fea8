//! Multinomial (softmax) logistic regression with an L2 penalty on weights.
//!
//! Minimizes `||W||^2 / (2C) + sum_i -log softmax(W x_i + b)[y_i]`; the bias
//! is not penalized. Only feature columns nonzero somewhere in training get
//! weights, since the others cannot move the objective off zero.

use serde::{Deserialize, Serialize};

use super::lbfgs::{minimize, LbfgsConfig};
use crate::error::{Error, Result};
use crate::features::SparseVec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub memory: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c: 128.0,
            max_iter: 1000,
            tol: 1e-5,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub dim: usize,
    pub classes: usize,
    pub c: f64,
    /// Feature indices that carry weights, ascending.
    pub active: Vec<u32>,
    /// Row-major `active.len() x classes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Training data restricted to its active columns.
pub struct LogRegProblem {
    classes: usize,
    c: f64,
    rows: Vec<(Vec<u32>, Vec<f64>)>,
    y: Vec<usize>,
    active: Vec<u32>,
    dim: usize,
}

impl LogRegProblem {
    pub fn new(x: &[SparseVec], y: &[usize], classes: usize, c: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("no training rows".into()));
        }
        let dim = x[0].dim;
        let mut used = vec![false; dim];
        let mut seen = vec![false; classes];
        for (r, &label) in x.iter().zip(y) {
            if r.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.dim });
            }
            r.check_finite()?;
            if label >= classes {
                return Err(Error::InvalidInput(format!("class index {label} out of range")));
            }
            seen[label] = true;
            for (i, _) in r.iter() {
                used[i] = true;
            }
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::InvalidInput("training data has a single class".into()));
        }
        let mut compact = vec![u32::MAX; dim];
        let mut active = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                compact[i] = active.len() as u32;
                active.push(i as u32);
            }
        }
        let rows = x
            .iter()
            .map(|r| (r.idx.iter().map(|&i| compact[i as usize]).collect(), r.val.clone()))
            .collect();
        if !(c > 0.0) {
            return Err(Error::Config(format!("regularization C must be positive, got {c}")));
        }
        Ok(LogRegProblem {
            classes,
            c,
            rows,
            y: y.to_vec(),
            active,
            dim,
        })
    }

    /// Length of the parameter vector: weights then biases.
    pub fn n_params(&self) -> usize {
        (self.active.len() + 1) * self.classes
    }

    pub fn objective_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.classes;
        let m = self.active.len();
        let (wm, b) = w.split_at(m * k);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (gw, gb) = grad.split_at_mut(m * k);
        let mut scores = vec![0.0; k];
        let mut f = 0.0;
        for ((idx, val), &yi) in self.rows.iter().zip(&self.y) {
            scores.copy_from_slice(b);
            for (&j, &x) in idx.iter().zip(val) {
                let row = &wm[j as usize * k..(j as usize + 1) * k];
                scores.iter_mut().zip(row).for_each(|(s, wv)| *s += x * wv);
            }
            let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for s in scores.iter_mut() {
                *s = (*s - mx).exp();
                z += *s;
            }
            f += z.ln() - (scores[yi].ln());
            scores.iter_mut().for_each(|s| *s /= z);
            scores[yi] -= 1.0;
            gb.iter_mut().zip(&scores).for_each(|(g, p)| *g += p);
            for (&j, &x) in idx.iter().zip(val) {
                let row = &mut gw[j as usize * k..(j as usize + 1) * k];
                row.iter_mut().zip(&scores).for_each(|(g, p)| *g += x * p);
            }
        }
        let inv_c = 1.0 / self.c;
        let mut reg = 0.0;
        for (g, &wv) in gw.iter_mut().zip(wm) {
            reg += wv * wv;
            *g += wv * inv_c;
        }
        f + 0.5 * inv_c * reg
    }
}

pub fn train_logreg(x: &[SparseVec], y: &[usize], classes: usize, cfg: &LogRegConfig) -> Result<LogRegModel> {
    let p = LogRegProblem::new(x, y, classes, cfg.c)?;
    let lb = LbfgsConfig {
        memory: cfg.memory,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    };
    let r = minimize(|w, g| p.objective_and_gradient(w, g), vec![0.0; p.n_params()], &lb);
    let m = p.active.len() * classes;
    log::debug!(
        "logreg: {} rows, {} active features, {} iterations, |g| = {:.3e}",
        p.rows.len(),
        p.active.len(),
        r.iterations,
        r.grad_norm
    );
    Ok(LogRegModel {
        dim: p.dim,
        classes,
        c: cfg.c,
        active: p.active,
        weights: r.x[..m].to_vec(),
        bias: r.x[m..].to_vec(),
        iterations: r.iterations,
        grad_norm: r.grad_norm,
        converged: r.converged,
    })
}

impl LogRegModel {
    /// Class scores `W x + b`.
    pub fn decision(&self, x: &SparseVec) -> Result<Vec<f64>> {
        if x.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim,
            });
        }
        let k = self.classes;
        let mut s = self.bias.clone();
        for (i, v) in x.iter() {
            if let Ok(j) = self.active.binary_search(&(i as u32)) {
                let row = &self.weights[j * k..(j + 1) * k];
                s.iter_mut().zip(row).for_each(|(a, w)| *a += v * w);
            }
        }
        Ok(s)
    }

    pub fn predict(&self, x: &SparseVec) -> Result<Vec<f64>> {
        Ok(softmax(&self.decision(x)?))
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}
