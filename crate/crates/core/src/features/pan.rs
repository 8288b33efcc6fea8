use serde::{Deserialize, Serialize};

use super::burst::runs;
use super::normalize::Normalizer;
use super::sizes::size_counts;
use super::sparse::SparseVec;
use crate::error::{Error, Result};
use crate::trace::{Direction, Sample, DEFAULT_MTU};

/// Rounding and binning for the Pan feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanConfig {
    pub mtu: u32,
    pub byte_round: u64,
    pub volume_round: u64,
    /// Burst byte histogram bins per direction, in `byte_round` steps.
    pub byte_bins: usize,
    /// Burst packet-count histogram bins per direction.
    pub packet_bins: usize,
}

impl Default for PanConfig {
    fn default() -> Self {
        PanConfig {
            mtu: DEFAULT_MTU,
            byte_round: 600,
            volume_round: 10_000,
            byte_bins: 128,
            packet_bins: 64,
        }
    }
}

/// Rounds to the nearest multiple of `step`, halves rounding up.
pub fn round_to(x: u64, step: u64) -> u64 {
    (x + step / 2) / step * step
}

const SUMMARY: usize = 6;

impl PanConfig {
    pub fn dim(&self) -> usize {
        2 * self.mtu as usize + 2 * self.byte_bins + 2 * self.packet_bins + SUMMARY
    }
}

/// Packet size counts, then per-direction histograms of burst byte totals
/// (rounded) and burst packet counts (exact), then rounded total, outgoing
/// and incoming volume, packet counts per direction and the burst count.
/// Bursts are runs of same-direction packets within one connection.
pub fn pan_features(sample: &Sample, cfg: &PanConfig) -> SparseVec {
    let sizes = size_counts(sample, cfg.mtu);
    let base = 2 * cfg.mtu as usize;
    let bb = cfg.byte_bins.max(1);
    let pb = cfg.packet_bins.max(1);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    let mut bursts = 0usize;
    for f in &sample.flows {
        for r in runs(f.packets.iter().map(|p| (p.direction, p.payload_size))) {
            let dir = usize::from(r.direction == Direction::Incoming);
            let b = ((round_to(r.bytes, cfg.byte_round) / cfg.byte_round) as usize).min(bb - 1);
            entries.push(((base + dir * bb + b) as u32, 1.0));
            let c = r.packets.min(pb) - 1;
            entries.push(((base + 2 * bb + dir * pb + c) as u32, 1.0));
            bursts += 1;
        }
    }
    let s = base + 2 * bb + 2 * pb;
    let out_b = sample.bytes_in(Direction::Outgoing);
    let in_b = sample.bytes_in(Direction::Incoming);
    let count = |d: Direction| sample.flows.iter().flat_map(|f| &f.packets).filter(|p| p.direction == d).count();
    let summary = [
        round_to(out_b + in_b, cfg.volume_round) as f64,
        round_to(out_b, cfg.volume_round) as f64,
        round_to(in_b, cfg.volume_round) as f64,
        count(Direction::Outgoing) as f64,
        count(Direction::Incoming) as f64,
        bursts as f64,
    ];
    for (k, v) in summary.into_iter().enumerate() {
        entries.push(((s + k) as u32, v));
    }
    let tail = SparseVec::from_entries(cfg.dim() - base, entries.into_iter().map(|(i, v)| (i - base as u32, v)).collect());
    sizes.concat(&tail)
}

/// Pan features with min-max bounds fitted on training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanSpace {
    pub config: PanConfig,
    pub normalizer: Normalizer,
}

impl PanSpace {
    pub fn fit(samples: &[&Sample], cfg: &PanConfig) -> Result<PanSpace> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("no training samples for feature space".into()));
        }
        let raw: Vec<SparseVec> = samples.iter().map(|s| pan_features(s, cfg)).collect();
        Ok(PanSpace {
            config: cfg.clone(),
            normalizer: Normalizer::fit(&raw, cfg.dim()),
        })
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn features(&self, sample: &Sample) -> SparseVec {
        self.normalizer.apply(&pan_features(sample, &self.config))
    }
}
