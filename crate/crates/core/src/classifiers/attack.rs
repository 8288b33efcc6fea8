//! The four attacks as trainable units: feature extraction plus classifier.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::fll::{train_knn, KnnModel, SizeMultiset};
use super::logreg::{train_logreg, LogRegConfig, LogRegModel};
use super::nb::{train_nb, NbModel};
use super::registry::{LabelRegistry, PredictionDist};
use crate::error::{Error, Result};
use crate::features::{distinct_points, pairs_by_domain, size_counts, BogConfig, BogSpace, PanConfig, PanSpace, SparseVec};
use crate::label::Label;
use crate::trace::{Sample, DEFAULT_MTU};
use crate::util::{rng_for, sha256_hex};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Bog,
    Ll,
    PanLr,
    WangFll,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Bog, AttackKind::Ll, AttackKind::PanLr, AttackKind::WangFll];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Bog => "bog",
            AttackKind::Ll => "ll",
            AttackKind::PanLr => "pan_lr",
            AttackKind::WangFll => "wang_fll",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack {s:?} (expected bog, ll, pan_lr or wang_fll)")))
    }
}

/// How the BoG attack picks the cluster count per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum KSelection {
    /// Use `BogConfig::k` (and its per-domain overrides).
    Fixed,
    /// Greedy over domains, most pairs first: keep the grid value with the
    /// best accuracy on a seeded held-out share of the training samples.
    Validation { k_grid: Vec<usize>, holdout: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub mtu: u32,
    pub bog: BogConfig,
    pub k_selection: KSelection,
    pub pan: PanConfig,
    pub logreg: LogRegConfig,
    pub nb_alpha: f64,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            mtu: DEFAULT_MTU,
            bog: BogConfig::default(),
            k_selection: KSelection::Fixed,
            pan: PanConfig::default(),
            logreg: LogRegConfig::default(),
            nb_alpha: 1.0,
            knn_k: 1,
            seed: 0,
        }
    }
}

impl AttackConfig {
    fn bog_config(&self) -> BogConfig {
        BogConfig {
            mtu: self.mtu,
            seed: self.seed,
            ..self.bog.clone()
        }
    }

    fn pan_config(&self) -> PanConfig {
        PanConfig {
            mtu: self.mtu,
            ..self.pan.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelBody {
    Bog { space: BogSpace, model: LogRegModel },
    Ll { mtu: u32, model: NbModel },
    PanLr { space: PanSpace, model: LogRegModel },
    WangFll { model: KnnModel },
}

/// A trained attack with everything needed to score new samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub kind: AttackKind,
    pub labels: LabelRegistry,
    pub space_fingerprint: String,
    pub seed: u64,
    pub trainer: String,
    pub training_samples: usize,
    pub body: ModelBody,
}

fn labels_of(samples: &[&Sample]) -> Result<(LabelRegistry, Vec<usize>)> {
    let mut ls = Vec::with_capacity(samples.len());
    for s in samples {
        ls.push(
            s.label
                .clone()
                .ok_or_else(|| Error::InvalidInput(format!("training sample {} has no label", s.id())))?,
        );
    }
    let reg = LabelRegistry::new(ls.iter().cloned());
    let y = ls.iter().map(|l| reg.index_of(l).expect("registered")).collect();
    Ok((reg, y))
}

fn fit_bog(samples: &[&Sample], y: &[usize], classes: usize, bog: &BogConfig, lr: &LogRegConfig) -> Result<(BogSpace, LogRegModel)> {
    let space = BogSpace::fit(samples, bog)?;
    let x: Vec<SparseVec> = samples.iter().map(|s| space.features(s)).collect();
    let model = train_logreg(&x, y, classes, lr)?;
    Ok((space, model))
}

fn accuracy(space: &BogSpace, model: &LogRegModel, samples: &[&Sample], y: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for (s, &c) in samples.iter().zip(y) {
        if PredictionDist::new(model.predict(&space.features(s))?).argmax() == c {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len().max(1) as f64)
}

/// Chooses K per domain by held-out accuracy, one domain at a time.
pub fn select_k(samples: &[&Sample], y: &[usize], classes: usize, cfg: &AttackConfig, k_grid: &[usize], holdout: f64) -> Result<BTreeMap<String, usize>> {
    if !(0.0..1.0).contains(&holdout) || holdout == 0.0 {
        return Err(Error::Config(format!("holdout fraction must be in (0, 1), got {holdout}")));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, "k-selection split"));
    let n_val = ((samples.len() as f64) * holdout).round().max(1.0) as usize;
    let (val, tr) = order.split_at(n_val.min(samples.len() - 1));
    let mut tr: Vec<usize> = tr.to_vec();
    let mut val: Vec<usize> = val.to_vec();
    tr.sort_unstable();
    val.sort_unstable();
    let tr_s: Vec<&Sample> = tr.iter().map(|&i| samples[i]).collect();
    let tr_y: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
    let va_s: Vec<&Sample> = val.iter().map(|&i| samples[i]).collect();
    let va_y: Vec<usize> = val.iter().map(|&i| y[i]).collect();

    let pairs = pairs_by_domain(tr_s.iter().copied());
    let mut domains: Vec<(&String, usize)> = pairs.iter().map(|(d, p)| (d, p.len())).collect();
    domains.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut bog = cfg.bog_config();
    let mut best_acc = None;
    for (d, _) in domains {
        let distinct = distinct_points(&pairs[d]);
        let mut best_k = bog.k_per_domain.get(d).copied().unwrap_or(bog.k);
        let mut tried = Vec::new();
        for &k in k_grid {
            let k = k.min(distinct).max(1);
            if tried.contains(&k) {
                continue;
            }
            tried.push(k);
            let mut trial = bog.clone();
            trial.k_per_domain.insert(d.clone(), k);
            let (sp, m) = fit_bog(&tr_s, &tr_y, classes, &trial, &cfg.logreg)?;
            let acc = accuracy(&sp, &m, &va_s, &va_y)?;
            log::debug!("k-selection: {d} K={k} held-out accuracy {acc:.4}");
            if best_acc.is_none_or(|b| acc > b) {
                best_acc = Some(acc);
                best_k = k;
            }
        }
        bog.k_per_domain.insert(d.clone(), best_k);
    }
    Ok(bog.k_per_domain)
}

pub fn train_attack(kind: AttackKind, samples: &[&Sample], cfg: &AttackConfig) -> Result<TrainedModel> {
    let (labels, y) = labels_of(samples)?;
    if labels.len() < 2 {
        return Err(Error::InvalidInput("training data has a single class".into()));
    }
    let classes = labels.len();
    let (body, fingerprint, trainer) = match kind {
        AttackKind::Bog => {
            let mut bog = cfg.bog_config();
            if let KSelection::Validation { k_grid, holdout } = &cfg.k_selection {
                bog.k_per_domain = select_k(samples, &y, classes, cfg, k_grid, *holdout)?;
            }
            let (space, model) = fit_bog(samples, &y, classes, &bog, &cfg.logreg)?;
            let fp = space.fingerprint();
            let t = format!(
                "softmax logistic regression, L-BFGS, C={}, {} iterations, |g|={:.3e}",
                model.c, model.iterations, model.grad_norm
            );
            (ModelBody::Bog { space, model }, fp, t)
        }
        AttackKind::PanLr => {
            let space = PanSpace::fit(samples, &cfg.pan_config())?;
            let x: Vec<SparseVec> = samples.iter().map(|s| space.features(s)).collect();
            let model = train_logreg(&x, &y, classes, &cfg.logreg)?;
            let fp = sha256_hex(serde_json::to_string(&space).expect("space serializes").as_bytes());
            let t = format!(
                "Pan features with softmax logistic regression in place of an RBF SVM, C={}, {} iterations",
                model.c, model.iterations
            );
            (ModelBody::PanLr { space, model }, fp, t)
        }
        AttackKind::Ll => {
            let x: Vec<SparseVec> = samples.iter().map(|s| size_counts(s, cfg.mtu)).collect();
            let model = train_nb(&x, &y, classes, cfg.nb_alpha)?;
            let fp = sha256_hex(format!("size-counts/{}", cfg.mtu).as_bytes());
            let t = format!("multinomial naive Bayes over size counts, alpha={}", cfg.nb_alpha);
            (ModelBody::Ll { mtu: cfg.mtu, model }, fp, t)
        }
        AttackKind::WangFll => {
            let train = samples.iter().zip(&y).map(|(s, &c)| (SizeMultiset::from_sample(s), c)).collect();
            let model = train_knn(train, classes, cfg.knn_k)?;
            let fp = sha256_hex(b"signed-size-multiset");
            let t = format!("{}-nearest neighbor over multiset size distance (FLL stand-in)", cfg.knn_k);
            (ModelBody::WangFll { model }, fp, t)
        }
    };
    Ok(TrainedModel {
        version: MODEL_VERSION,
        kind,
        labels,
        space_fingerprint: fingerprint,
        seed: cfg.seed,
        trainer,
        training_samples: samples.len(),
        body,
    })
}

impl TrainedModel {
    pub fn predict(&self, sample: &Sample) -> Result<PredictionDist> {
        let probs = match &self.body {
            ModelBody::Bog { space, model } => model.predict(&space.features(sample))?,
            ModelBody::PanLr { space, model } => model.predict(&space.features(sample))?,
            ModelBody::Ll { mtu, model } => model.predict(&size_counts(sample, *mtu))?,
            ModelBody::WangFll { model } => model.predict(&SizeMultiset::from_sample(sample)),
        };
        Ok(PredictionDist::new(probs))
    }

    pub fn predict_label(&self, sample: &Sample) -> Result<Label> {
        Ok(self.labels.label(self.predict(sample)?.argmax()).clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        #[derive(Deserialize)]
        struct Head {
            version: serde_json::Value,
        }
        let head: Head = serde_json::from_str(text).map_err(|e| Error::format("model", 0, e))?;
        if head.version.as_u64() != Some(u64::from(MODEL_VERSION)) {
            return Err(Error::Version {
                what: "model",
                found: head.version.to_string(),
                expected: MODEL_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| Error::format("model", 0, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Sample> {
        let mut v = Vec::new();
        for (i, (name, req, resp)) in [("a", 300, 4000), ("b", 500, 9000), ("c", 700, 2000)].iter().enumerate() {
            for j in 0..4 {
                let sizes = vec![*req + j, -1500, -(*resp % 1500 + j)];
                v.push(Sample::from_signed_flows(Some(Label::new(*name)), format!("s{i}"), j as u32, [("site.com", sizes)]));
            }
        }
        v
    }

    #[test]
    fn every_attack_fits_its_training_data() {
        let c = corpus();
        let refs: Vec<&Sample> = c.iter().collect();
        for kind in AttackKind::ALL {
            let m = train_attack(kind, &refs, &AttackConfig::default()).unwrap();
            for s in &c {
                let p = m.predict(s).unwrap();
                assert!(p.is_normalized(1e-9));
                assert_eq!(&m.predict_label(s).unwrap(), s.label.as_ref().unwrap(), "{kind}");
            }
            let back = TrainedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn validation_selection_runs() {
        let c = corpus();
        let refs: Vec<&Sample> = c.iter().collect();
        let cfg = AttackConfig {
            k_selection: KSelection::Validation { k_grid: vec![1, 2], holdout: 0.25 },
            ..Default::default()
        };
        let m = train_attack(AttackKind::Bog, &refs, &cfg).unwrap();
        let ModelBody::Bog { space, .. } = &m.body else { panic!() };
        assert!(space.domains.iter().all(|d| d.k() <= 2));
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert!("svm".parse::<AttackKind>().is_err());
    }

    #[test]
    fn version_is_checked() {
        let c = corpus();
        let refs: Vec<&Sample> = c.iter().collect();
        let m = train_attack(AttackKind::Ll, &refs, &AttackConfig::default()).unwrap();
        let bad = m.to_json().replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(TrainedModel::from_json(&bad), Err(Error::Version { .. })));
    }
}
