use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::runs;
use crate::trace::{Direction, Sample};

/// Sorted padding targets per direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstThresholds {
    pub outgoing: Vec<u64>,
    pub incoming: Vec<u64>,
}

impl BurstThresholds {
    pub fn for_direction(&self, d: Direction) -> &[u64] {
        match d {
            Direction::Outgoing => &self.outgoing,
            Direction::Incoming => &self.incoming,
        }
    }
}

/// Greedy bucketing of sorted burst lengths. A bucket is closed, emitting
/// its maximum, as soon as adding the next burst would make
/// `len * max / sum` reach `cost_threshold`.
pub fn burst_thresholds(bursts: &[u64], cost_threshold: f64) -> Result<Vec<u64>> {
    if bursts.is_empty() {
        return Err(Error::InvalidInput("no bursts to derive thresholds from".into()));
    }
    if !(cost_threshold > 1.0) {
        return Err(Error::Config(format!("burst cost threshold must be > 1, got {cost_threshold}")));
    }
    let mut sorted = bursts.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let (mut len, mut sum, mut max) = (0u64, 0u128, 0u64);
    for b in sorted {
        let (l2, s2, m2) = (len + 1, sum + u128::from(b), max.max(b));
        let inflation = l2 as f64 * m2 as f64 / s2 as f64;
        if len > 0 && inflation >= cost_threshold {
            out.push(max);
            (len, sum, max) = (1, u128::from(b), b);
        } else {
            (len, sum, max) = (l2, s2, m2);
        }
    }
    out.push(max);
    out.dedup();
    Ok(out)
}

/// Smallest threshold at least `burst`, or `burst` when none is.
pub fn burst_pad(burst: u64, thresholds: &[u64]) -> u64 {
    let i = thresholds.partition_point(|&t| t < burst);
    thresholds.get(i).copied().unwrap_or(burst)
}

/// Byte totals of every same-direction run, per flow, for one direction.
pub fn direction_bursts<'a>(samples: impl IntoIterator<Item = &'a Sample>, d: Direction) -> Vec<u64> {
    samples
        .into_iter()
        .flat_map(|s| &s.flows)
        .flat_map(|f| runs(f.packets.iter().map(|p| (p.direction, p.payload_size))))
        .filter(|r| r.direction == d)
        .map(|r| r.bytes)
        .collect()
}

/// Thresholds for both directions, learned independently.
pub fn train_burst_thresholds(samples: &[&Sample], cost_threshold: f64) -> Result<BurstThresholds> {
    let t = |d| {
        let b = direction_bursts(samples.iter().copied(), d);
        if b.is_empty() {
            Ok(Vec::new())
        } else {
            burst_thresholds(&b, cost_threshold)
        }
    };
    let outgoing = t(Direction::Outgoing)?;
    let incoming = t(Direction::Incoming)?;
    if outgoing.is_empty() && incoming.is_empty() {
        return Err(Error::InvalidInput("no bursts to derive thresholds from".into()));
    }
    Ok(BurstThresholds { outgoing, incoming })
}

/// Pads every run to its target. The run's last packet grows toward the
/// MTU first; any remaining shortfall is appended as MTU-sized packets and
/// one final partial packet.
pub fn apply_burst_defense(s: &Sample, th: &BurstThresholds, mtu: u32) -> Sample {
    let mut replace: BTreeMap<(u32, usize), Vec<u32>> = BTreeMap::new();
    for f in &s.flows {
        let mut start = 0usize;
        for r in runs(f.packets.iter().map(|p| (p.direction, p.payload_size))) {
            let last = start + r.packets - 1;
            let target = burst_pad(r.bytes, th.for_direction(r.direction));
            if target > r.bytes {
                let p = u64::from(f.packets[last].payload_size);
                let mut extra = target - r.bytes;
                let grown = (p + extra).min(u64::from(mtu).max(p));
                extra -= grown - p;
                let mut sizes = vec![grown as u32];
                let full = u64::from(mtu);
                while extra >= full {
                    sizes.push(mtu);
                    extra -= full;
                }
                if extra > 0 {
                    sizes.push(extra as u32);
                }
                replace.insert((f.flow_id.0, last), sizes);
            }
            start += r.packets;
        }
    }
    s.map_packets(|p, i| replace.remove(&(p.flow_id.0, i)).unwrap_or_else(|| vec![p.payload_size]))
}
