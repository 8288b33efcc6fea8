use std::collections::BTreeMap;

use rand::Rng as _;

use super::config::ExperimentConfig;
use super::data::{check_disjoint, defend, load_dataset, sessions, subsample, Dataset};
use super::report::{deviations, Confusion, LabelAccuracy, MetricsReport, SweepPoint, SweepReport, REPORT_VERSION};
use crate::classifiers::{train_attack, AttackKind, PredictionDist, TrainedModel};
use crate::error::{Error, Result};
use crate::hmm::{build_hmm, decode_predictions, state_classes, SequenceModel};
use crate::label::Label;
use crate::trace::Sample;
use crate::util::{derive_seed, rng_for};

/// Per-sample outputs of a trained model on the evaluation split.
pub struct Scored {
    pub model: TrainedModel,
    pub truth: Vec<Option<Label>>,
    pub dists: Vec<PredictionDist>,
    pub predicted: Vec<Label>,
}

impl Scored {
    fn hit(&self, i: usize, l: &Label) -> bool {
        self.truth[i].as_ref() == Some(l)
    }
}

pub fn score(model: TrainedModel, eval: &[Sample]) -> Result<Scored> {
    let dists = eval.iter().map(|s| model.predict(s)).collect::<Result<Vec<_>>>()?;
    let predicted = dists.iter().map(|d| model.labels.label(d.argmax()).clone()).collect();
    Ok(Scored {
        model,
        truth: eval.iter().map(|s| s.label.clone()).collect(),
        dists,
        predicted,
    })
}

/// Trains `kind` on up to `k` samples per label of the (defended) dataset.
pub fn train_on(cfg: &ExperimentConfig, d: &Dataset, kind: AttackKind, k: usize) -> Result<TrainedModel> {
    if let Some(max) = d.planned_per_label {
        if k > max {
            return Err(Error::Config(format!(
                "{k} training samples per label requested, only {max} were collected"
            )));
        }
    }
    let keep = subsample(&d.train, k, cfg.seeds.subsample);
    let refs: Vec<&Sample> = keep.iter().map(|&i| &d.train[i]).collect();
    check_disjoint(&d.train, &d.eval)?;
    train_attack(kind, &refs, &cfg.attack_config())
}

/// Decodes windows of `len` consecutive samples of every session.
///
/// Each session is cut into consecutive windows starting at a seeded offset
/// in `[0, min(len, n - len + 1))`; the leading part before the offset is a
/// window of its own, so every sample is decoded exactly once.
pub fn decode_windows(
    hmm: &SequenceModel,
    classes: &[Option<usize>],
    scored: &Scored,
    sessions: &[Vec<usize>],
    len: usize,
    seed: u64,
) -> Result<Vec<Label>> {
    let mut out: Vec<Option<Label>> = vec![None; scored.dists.len()];
    let mut rng = rng_for(seed, &format!("windows {len}"));
    for s in sessions {
        let n = s.len();
        let span = len.min((n + 1).saturating_sub(len)).max(1);
        let offset = rng.random_range(0..span);
        let mut starts = vec![0];
        let mut at = if offset == 0 { len } else { offset };
        while at < n {
            starts.push(at);
            at += len;
        }
        starts.push(n);
        for w in starts.windows(2) {
            let idx = &s[w[0]..w[1]];
            let dists: Vec<PredictionDist> = idx.iter().map(|&i| scored.dists[i].clone()).collect();
            let path = decode_predictions(hmm, classes, &dists)?;
            for (&i, l) in idx.iter().zip(path.labels) {
                out[i] = Some(l);
            }
        }
    }
    Ok(out.into_iter().map(|l| l.expect("every sample decoded")).collect())
}

fn accuracy_of(scored: &Scored, labels: &[Label]) -> f64 {
    let hits = labels.iter().enumerate().filter(|(i, l)| scored.hit(*i, l)).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Accuracy at each window length `1..=max_len`.
pub fn session_length_curve(
    hmm: &SequenceModel,
    scored: &Scored,
    sessions: &[Vec<usize>],
    max_len: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let classes = state_classes(hmm, &scored.model);
    (1..=max_len)
        .map(|len| Ok(accuracy_of(scored, &decode_windows(hmm, &classes, scored, sessions, len, seed)?)))
        .collect()
}

/// Builds the report for one trained and scored attack.
pub fn report_for(cfg: &ExperimentConfig, d: &Dataset, scored: &Scored, k: usize) -> Result<MetricsReport> {
    let groups = sessions(&d.eval);
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    let max_len = cfg.max_session_length.unwrap_or(longest);
    let mut hmm_labels = None;
    let mut curve = Vec::new();
    if let Some(g) = &d.graph {
        let hmm = build_hmm(g)?;
        let classes = state_classes(&hmm, &scored.model);
        hmm_labels = Some(decode_windows(&hmm, &classes, scored, &groups, usize::MAX, 0)?);
        curve = session_length_curve(&hmm, scored, &groups, max_len, derive_seed(cfg.seeds.curve, "curve"))?;
    }
    let n = scored.truth.len();
    let unseen = scored
        .truth
        .iter()
        .filter(|t| t.as_ref().is_none_or(|l| scored.model.labels.index_of(l).is_none()))
        .count();
    let mut per: BTreeMap<String, LabelAccuracy> = BTreeMap::new();
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    for i in 0..n {
        let truth = scored.truth[i].as_ref().map_or("<none>".to_string(), |l| l.to_string());
        let e = per.entry(truth.clone()).or_insert_with(|| LabelAccuracy {
            label: truth.clone(),
            samples: 0,
            correct: 0,
            hmm_correct: 0,
            seen_in_training: scored.truth[i].as_ref().is_some_and(|l| scored.model.labels.index_of(l).is_some()),
        });
        e.samples += 1;
        let p = &scored.predicted[i];
        if scored.hit(i, p) {
            e.correct += 1;
        } else {
            *confusion.entry((truth, p.to_string())).or_default() += 1;
        }
        if hmm_labels.as_ref().is_some_and(|h| scored.hit(i, &h[i])) {
            e.hmm_correct += 1;
        }
    }
    let mut confusion: Vec<Confusion> = confusion
        .into_iter()
        .map(|((truth, predicted), count)| Confusion { truth, predicted, count })
        .collect();
    confusion.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.truth, &a.predicted).cmp(&(&b.truth, &b.predicted))));
    let misclassified = confusion.iter().map(|c| c.count).sum();
    confusion.truncate(20);
    Ok(MetricsReport {
        version: REPORT_VERSION,
        name: cfg.name.clone(),
        attack: scored.model.kind,
        defense: cfg.defense.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seeds: cfg.seeds.clone(),
        train_samples_per_label: k,
        training_samples: scored.model.training_samples,
        classes: scored.model.labels.len(),
        eval_samples: n,
        unseen_eval_samples: unseen,
        accuracy: accuracy_of(scored, &scored.predicted),
        hmm_accuracy: hmm_labels.as_ref().map(|h| accuracy_of(scored, h)),
        session_curve: curve,
        per_label: per.into_values().collect(),
        misclassified,
        confusion,
        overhead: d.overhead,
        sitegraph: d.stats.clone(),
        model_fingerprint: scored.model.space_fingerprint.clone(),
        deviations: deviations(cfg, scored.model.kind),
        config: serde_json::to_value(cfg).expect("config serializes"),
    })
}

/// The full pipeline for one configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let data = load_dataset(cfg)?;
    let defended = defend(&data, &cfg.defense, cfg.model.mtu, cfg.fragment_depth)?;
    let k = cfg.train_samples_per_label;
    let scored = score(train_on(cfg, &defended, cfg.attack, k)?, &defended.eval)?;
    report_for(cfg, &defended, &scored, k)
}

/// Accuracy of every attack as the per-label training size grows.
pub fn train_size_sweep(cfg: &ExperimentConfig, sizes: &[usize], attacks: &[AttackKind]) -> Result<SweepReport> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    if max > cfg.train_samples_per_label {
        return Err(Error::Config(format!(
            "sweep size {max} exceeds train_samples_per_label = {}",
            cfg.train_samples_per_label
        )));
    }
    let data = load_dataset(cfg)?;
    let defended = defend(&data, &cfg.defense, cfg.model.mtu, cfg.fragment_depth)?;
    let hmm = defended.graph.as_ref().map(build_hmm).transpose()?;
    let groups = sessions(&defended.eval);
    let mut points = Vec::new();
    for &kind in attacks {
        for &k in sizes {
            let scored = score(train_on(cfg, &defended, kind, k)?, &defended.eval)?;
            let hmm_accuracy = match &hmm {
                Some(h) => {
                    let classes = state_classes(h, &scored.model);
                    Some(accuracy_of(&scored, &decode_windows(h, &classes, &scored, &groups, usize::MAX, 0)?))
                }
                None => None,
            };
            points.push(SweepPoint {
                attack: kind,
                samples_per_label: k,
                accuracy: accuracy_of(&scored, &scored.predicted),
                hmm_accuracy,
            });
        }
    }
    Ok(SweepReport {
        version: REPORT_VERSION,
        name: cfg.name.clone(),
        defense: cfg.defense.to_string(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        points,
    })
}

/// Session-length curve for the configured attack, up to `max_len`.
pub fn session_length_sweep(cfg: &ExperimentConfig, max_len: usize) -> Result<Vec<f64>> {
    let data = load_dataset(cfg)?;
    let defended = defend(&data, &cfg.defense, cfg.model.mtu, cfg.fragment_depth)?;
    let g = defended
        .graph
        .as_ref()
        .ok_or_else(|| Error::Config("session-length sweep needs a site graph".into()))?;
    let groups = sessions(&defended.eval);
    let longest = groups.iter().map(Vec::len).max().unwrap_or(0);
    if max_len > longest {
        return Err(Error::Config(format!("session length {max_len} exceeds the longest session ({longest})")));
    }
    let scored = score(train_on(cfg, &defended, cfg.attack, cfg.train_samples_per_label)?, &defended.eval)?;
    session_length_curve(&build_hmm(g)?, &scored, &groups, max_len, derive_seed(cfg.seeds.curve, "curve"))
}
