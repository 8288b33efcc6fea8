use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Seeds};
use super::data::GraphStats;
use crate::classifiers::AttackKind;
use crate::defenses::OverheadReport;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub label: String,
    pub samples: usize,
    pub correct: usize,
    pub hmm_correct: usize,
    pub seen_in_training: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub truth: String,
    pub predicted: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub version: u32,
    pub name: String,
    pub attack: AttackKind,
    pub defense: String,
    pub code_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub train_samples_per_label: usize,
    pub training_samples: usize,
    pub classes: usize,
    pub eval_samples: usize,
    /// Evaluation samples whose label never occurs in training; all misses.
    pub unseen_eval_samples: usize,
    /// Per-sample classifier accuracy.
    pub accuracy: f64,
    /// Accuracy after decoding whole sessions over the site graph.
    pub hmm_accuracy: Option<f64>,
    /// Accuracy at window lengths `1..=len`.
    pub session_curve: Vec<f64>,
    pub per_label: Vec<LabelAccuracy>,
    pub misclassified: usize,
    /// Most frequent per-sample confusions.
    pub confusion: Vec<Confusion>,
    pub overhead: Option<OverheadReport>,
    pub sitegraph: Option<GraphStats>,
    pub model_fingerprint: String,
    pub deviations: Vec<String>,
    pub config: serde_json::Value,
}

/// Known departures from the original method, listed in every report.
pub fn deviations(cfg: &ExperimentConfig, kind: AttackKind) -> Vec<String> {
    let mut v = vec![
        "content fingerprints stand in for visual page comparison during canonicalization".to_string(),
        "logistic regression is a single multinomial model, not one-vs-rest".to_string(),
    ];
    match kind {
        AttackKind::PanLr => v.push("Pan-LR substitution: Pan feature set with L2 logistic regression instead of an RBF SVM".into()),
        AttackKind::WangFll => v.push("FLL stand-in: packet-size multiset distance with nearest-neighbor voting".into()),
        AttackKind::Bog => {
            if let Some(c) = cfg.model.bog.density_cutoff {
                v.push(format!("Gaussian densities beyond squared Mahalanobis distance {c} are zeroed"));
            }
            if matches!(cfg.model.k_selection, crate::classifiers::KSelection::Fixed) {
                v.push(format!("fixed K = {} per domain instead of held-out K selection", cfg.model.bog.k));
            }
        }
        AttackKind::Ll => {}
    }
    if cfg.synth.is_some() {
        v.push("synthetic traffic replaces recorded browsing sessions".into());
    }
    v
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} ({} v{})", self.name, self.attack, self.code_version);
        let _ = writeln!(s, "config sha256 {}", self.config_hash);
        let _ = writeln!(s, "defense {}", self.defense);
        let _ = writeln!(
            s,
            "training: {} samples, {} labels, up to {} per label",
            self.training_samples, self.classes, self.train_samples_per_label
        );
        let _ = writeln!(
            s,
            "evaluation: {} samples, {} with labels unseen in training",
            self.eval_samples, self.unseen_eval_samples
        );
        let _ = writeln!(s, "accuracy (per sample): {}", pct(self.accuracy));
        if let Some(h) = self.hmm_accuracy {
            let _ = writeln!(s, "accuracy (session HMM): {}", pct(h));
        }
        if let Some(o) = &self.overhead {
            let _ = writeln!(
                s,
                "overhead: bytes {:.4}, packets {:.4}, outgoing bytes {:.4}, incoming bytes {:.4}",
                o.byte_overhead, o.packet_overhead, o.outgoing_byte_overhead, o.incoming_byte_overhead
            );
        }
        if let Some(g) = &self.sitegraph {
            let _ = writeln!(
                s,
                "site graph: {} labels / {} edges preliminary, {} labels / {} edges final, {} redirected loads",
                g.preliminary_labels, g.preliminary_edges, g.final_labels, g.final_edges, g.redirected_loads
            );
        }
        if !self.session_curve.is_empty() {
            let _ = writeln!(s, "session length curve:");
            for (i, a) in self.session_curve.iter().enumerate() {
                let len = i + 1;
                if len <= 10 || len % 5 == 0 || len == self.session_curve.len() {
                    let _ = writeln!(s, "  {len:>4}  {}", pct(*a));
                }
            }
        }
        if !self.confusion.is_empty() {
            let _ = writeln!(s, "top confusions ({} misclassified in total):", self.misclassified);
            for c in self.confusion.iter().take(10) {
                let _ = writeln!(s, "  {:>4}  {} -> {}", c.count, c.truth, c.predicted);
            }
        }
        let _ = writeln!(s, "deviations:");
        for d in &self.deviations {
            let _ = writeln!(s, "  - {d}");
        }
        s
    }

    /// Line-delimited records: a summary, one per curve point, one per label.
    pub fn to_jsonl(&self) -> String {
        let mut summary = serde_json::to_value(self).expect("report serializes");
        let obj = summary.as_object_mut().expect("object");
        obj.remove("per_label");
        obj.remove("session_curve");
        obj.insert("record".into(), "summary".into());
        let mut out = serde_json::to_string(&summary).expect("json");
        out.push('\n');
        for (i, a) in self.session_curve.iter().enumerate() {
            let r = serde_json::json!({"record": "curve", "length": i + 1, "accuracy": a});
            out.push_str(&r.to_string());
            out.push('\n');
        }
        for l in &self.per_label {
            let mut r = serde_json::to_value(l).expect("json");
            r.as_object_mut().expect("object").insert("record".into(), "label".into());
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub attack: AttackKind,
    pub samples_per_label: usize,
    pub accuracy: f64,
    pub hmm_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: u32,
    pub name: String,
    pub defense: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Seeds,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn accuracy(&self, attack: AttackKind, k: usize) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.attack == attack && p.samples_per_label == k)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "training-size sweep {} (defense {}, config sha256 {})", self.name, self.defense, self.config_hash);
        let _ = writeln!(s, "  {:<10} {:>8} {:>10} {:>10}", "attack", "per-label", "sample", "hmm");
        for p in &self.points {
            let h = p.hmm_accuracy.map_or("-".to_string(), pct);
            let _ = writeln!(s, "  {:<10} {:>8} {:>10} {:>10}", p.attack.name(), p.samples_per_label, pct(p.accuracy), h);
        }
        s
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let mut r = serde_json::to_value(p).expect("json");
            let o = r.as_object_mut().expect("object");
            o.insert("record".into(), "sweep".into());
            o.insert("config_hash".into(), self.config_hash.clone().into());
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}
