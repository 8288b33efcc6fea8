use serde::{Deserialize, Serialize};

use crate::trace::{Direction, Flow, Sample};

/// Collective size of one outgoing run and the incoming run after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstPair {
    pub out_bytes: u64,
    pub in_bytes: u64,
    pub domain: String,
}

impl BurstPair {
    pub fn point(&self) -> [f64; 2] {
        [self.out_bytes as f64, self.in_bytes as f64]
    }
}

/// A maximal run of same-direction packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub direction: Direction,
    pub bytes: u64,
    pub packets: usize,
}

/// Collapses a packet sequence into maximal same-direction runs.
pub fn runs(packets: impl IntoIterator<Item = (Direction, u32)>) -> Vec<Run> {
    let mut out: Vec<Run> = Vec::new();
    for (d, s) in packets {
        match out.last_mut() {
            Some(r) if r.direction == d => {
                r.bytes += u64::from(s);
                r.packets += 1;
            }
            _ => out.push(Run {
                direction: d,
                bytes: u64::from(s),
                packets: 1,
            }),
        }
    }
    out
}

/// `(out, in)` byte pairs of a signed size sequence. A leading incoming run
/// is dropped and a trailing outgoing run pairs with 0.
pub fn pair_runs(runs: &[Run]) -> Vec<(u64, u64)> {
    let start = runs.iter().position(|r| r.direction == Direction::Outgoing).unwrap_or(runs.len());
    let mut pairs = Vec::new();
    let mut i = start;
    while i < runs.len() {
        let out = runs[i].bytes;
        let inc = runs.get(i + 1).map_or(0, |r| r.bytes);
        pairs.push((out, inc));
        i += 2;
    }
    pairs
}

pub fn burst_pairs_signed(sizes: &[i32]) -> Vec<(u64, u64)> {
    let rs = runs(sizes.iter().filter(|&&s| s != 0).map(|&s| {
        let d = if s > 0 { Direction::Outgoing } else { Direction::Incoming };
        (d, s.unsigned_abs())
    }));
    pair_runs(&rs)
}

/// Registrable part of a host name: its last two labels.
pub fn second_level_domain(host: &str) -> &str {
    let mut dots = host.rmatch_indices('.');
    match (dots.next(), dots.next()) {
        (Some(_), Some((i, _))) => &host[i + 1..],
        _ => host,
    }
}

pub fn extract_burst_pairs(flow: &Flow) -> Vec<BurstPair> {
    let rs = runs(flow.packets.iter().map(|p| (p.direction, p.payload_size)));
    let domain = second_level_domain(&flow.remote_domain).to_string();
    pair_runs(&rs)
        .into_iter()
        .map(|(o, i)| BurstPair {
            out_bytes: o,
            in_bytes: i,
            domain: domain.clone(),
        })
        .collect()
}

pub fn sample_burst_pairs(sample: &Sample) -> Vec<BurstPair> {
    sample.flows.iter().flat_map(extract_burst_pairs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        assert_eq!(
            burst_pairs_signed(&[1420, 310, -1420, -810, 530, -1080]),
            vec![(1730, 2230), (530, 1080)]
        );
    }

    #[test]
    fn edge_cases() {
        assert!(burst_pairs_signed(&[]).is_empty());
        assert_eq!(burst_pairs_signed(&[-500, 100]), vec![(100, 0)]);
        assert!(burst_pairs_signed(&[-500, -20]).is_empty());
    }

    #[test]
    fn domains_are_reduced() {
        assert_eq!(second_level_domain("a.b.cdn.net"), "cdn.net");
        assert_eq!(second_level_domain("site.com"), "site.com");
        assert_eq!(second_level_domain("unknown"), "unknown");
        let s = Sample::from_signed_flows(None, "s", 0, [("img.site.com", vec![10, -20])]);
        assert_eq!(sample_burst_pairs(&s)[0].domain, "site.com");
    }
}
