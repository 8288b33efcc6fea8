//! Hidden Markov model over the site graph, decoded with Viterbi.
//!
//! States are page labels. The initial distribution is uniform, each link
//! out of a page is equally likely, and a page with no links loops to itself.
//! The per-step score of a state is the classifier's posterior for it.
//! All arithmetic is in log space.

use serde::{Deserialize, Serialize};

use crate::classifiers::{PredictionDist, TrainedModel};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::sitegraph::SiteGraph;
use crate::trace::Sample;

pub const EMISSION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    states: Vec<Label>,
    log_pi: f64,
    /// Per state `i`, the `(j, log A[i][j])` entries with nonzero mass, by `j`.
    outgoing: Vec<Vec<(usize, f64)>>,
    /// Dense `log A` when smoothing is on.
    dense: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedPath {
    pub states: Vec<usize>,
    pub labels: Vec<Label>,
    pub log_score: f64,
}

/// Builds the model with binary link structure.
pub fn build_hmm(g: &SiteGraph) -> Result<SequenceModel> {
    build_hmm_smoothed(g, 0.0)
}

/// Mixes `epsilon` of a uniform transition into every row.
pub fn build_hmm_smoothed(g: &SiteGraph, epsilon: f64) -> Result<SequenceModel> {
    if g.is_empty() {
        return Err(Error::InvalidInput("cannot build a sequence model from an empty graph".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("transition smoothing must be in [0, 1], got {epsilon}")));
    }
    let n = g.len();
    let g = g.with_sink_loops();
    let outgoing: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let out = g.out_neighbors(i);
            let lp = -(out.len() as f64).ln();
            out.iter().map(|&j| (j, lp)).collect()
        })
        .collect();
    let dense = (epsilon > 0.0).then(|| {
        let mut a = vec![epsilon / n as f64; n * n];
        for i in 0..n {
            let out = g.out_neighbors(i);
            for &j in out {
                a[i * n + j] += (1.0 - epsilon) / out.len() as f64;
            }
        }
        a.into_iter().map(f64::ln).collect()
    });
    Ok(SequenceModel {
        states: g.labels().to_vec(),
        log_pi: -(n as f64).ln(),
        outgoing,
        dense,
    })
}

impl SequenceModel {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Label] {
        &self.states
    }

    pub fn initial(&self) -> f64 {
        self.log_pi.exp()
    }

    /// Transition probability `A[i][j]`.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.log_transition(i, j).exp()
    }

    pub fn log_transition(&self, i: usize, j: usize) -> f64 {
        if let Some(d) = &self.dense {
            return d[i * self.len() + j];
        }
        match self.outgoing[i].binary_search_by_key(&j, |e| e.0) {
            Ok(k) => self.outgoing[i][k].1,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Smallest successor `j` maximizing `log A[i][j] + score[j]`.
    fn best_successor(&self, i: usize, score: &[f64]) -> (usize, f64) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        match &self.dense {
            Some(d) => {
                let n = self.len();
                for (j, &s) in score.iter().enumerate() {
                    let v = d[i * n + j] + s;
                    if v > best {
                        best = v;
                        arg = j;
                    }
                }
            }
            None => {
                for &(j, la) in &self.outgoing[i] {
                    let v = la + score[j];
                    if v > best {
                        best = v;
                        arg = j;
                    }
                }
                if best == f64::NEG_INFINITY {
                    arg = self.outgoing[i].first().map_or(i, |e| e.0);
                }
            }
        }
        (arg, best)
    }
}

/// Most likely state sequence given per-step scores over `m.states()`.
///
/// Best suffix scores are computed back to front, then the path is read
/// front to back taking the smallest state index among equal scores, so ties
/// resolve to the lexicographically smallest optimal path.
pub fn viterbi(m: &SequenceModel, emissions: &[Vec<f64>]) -> Result<DecodedPath> {
    let n = m.len();
    if emissions.is_empty() {
        return Err(Error::InvalidInput("no emissions to decode".into()));
    }
    if let Some(e) = emissions.iter().find(|e| e.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: e.len() });
    }
    let log_e = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let steps = emissions.len();
    // beta[t][i]: best score of steps t.. given state i at step t.
    let mut beta: Vec<Vec<f64>> = vec![Vec::new(); steps];
    beta[steps - 1] = emissions[steps - 1].iter().map(|&p| log_e(p)).collect();
    for t in (0..steps - 1).rev() {
        let nb = &beta[t + 1];
        let cur: Vec<f64> = (0..n)
            .map(|i| {
                let best = m.best_successor(i, nb).1;
                log_e(emissions[t][i]) + best
            })
            .collect();
        beta[t] = cur;
    }
    let mut first = 0usize;
    for i in 1..n {
        if beta[0][i] > beta[0][first] {
            first = i;
        }
    }
    let score = m.log_pi + beta[0][first];
    if score == f64::NEG_INFINITY || score.is_nan() {
        return Err(Error::NoValidPath);
    }
    let mut states = Vec::with_capacity(steps);
    states.push(first);
    for t in 1..steps {
        let prev = states[t - 1];
        states.push(m.best_successor(prev, &beta[t]).0);
    }
    Ok(DecodedPath {
        labels: states.iter().map(|&s| m.states[s].clone()).collect(),
        states,
        log_score: score,
    })
}

/// Log-score of a given state path.
pub fn path_log_score(m: &SequenceModel, emissions: &[Vec<f64>], path: &[usize]) -> f64 {
    let log_e = |p: f64| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let mut s = m.log_pi + log_e(emissions[0][path[0]]);
    for t in 1..path.len() {
        s += m.log_transition(path[t - 1], path[t]) + log_e(emissions[t][path[t]]);
    }
    s
}

/// For each state, the classifier class carrying the same label, if any.
pub fn state_classes(m: &SequenceModel, model: &TrainedModel) -> Vec<Option<usize>> {
    m.states.iter().map(|l| model.labels.index_of(l)).collect()
}

/// Classifier output over states: floored, then renormalized.
pub fn emission_from(dist: &PredictionDist, classes: &[Option<usize>]) -> Vec<f64> {
    let mut e: Vec<f64> = classes
        .iter()
        .map(|c| c.map_or(0.0, |c| dist.probs[c]).max(EMISSION_FLOOR))
        .collect();
    let z: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= z);
    e
}

pub fn decode_predictions(m: &SequenceModel, classes: &[Option<usize>], dists: &[PredictionDist]) -> Result<DecodedPath> {
    let em: Vec<Vec<f64>> = dists.iter().map(|d| emission_from(d, classes)).collect();
    viterbi(m, &em)
}

/// Classifies each sample of one session in order, then decodes.
pub fn refine_session(model: &TrainedModel, m: &SequenceModel, samples: &[&Sample]) -> Result<DecodedPath> {
    let classes = state_classes(m, model);
    let dists = samples.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    decode_predictions(m, &classes, &dists)
}
