use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// Sorted, deduplicated class labels; a class index is a position here.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelRegistry {
    labels: Vec<Label>,
}

impl LabelRegistry {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        let mut labels: Vec<Label> = labels.into_iter().collect();
        labels.sort();
        labels.dedup();
        LabelRegistry { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, l: &Label) -> Option<usize> {
        self.labels.binary_search(l).ok()
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn encode(&self, l: &Label) -> Result<usize> {
        self.index_of(l).ok_or_else(|| Error::UnknownLabel(l.to_string()))
    }
}

/// Probability per registry class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDist {
    pub probs: Vec<f64>,
}

impl PredictionDist {
    pub fn new(probs: Vec<f64>) -> Self {
        PredictionDist { probs }
    }

    pub fn uniform(n: usize) -> Self {
        PredictionDist {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Most probable class; the smallest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.probs.iter().all(|&p| p >= 0.0 && p.is_finite()) && (self.probs.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}
