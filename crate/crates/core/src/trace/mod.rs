//! Traffic samples: directed TCP data packets grouped into flows.
//!
//! Only data-bearing segments are modeled. A [`Sample`] is one page load; its
//! packets carry a sample-wide `seq_index` that records capture order across
//! flows, so per-flow ordering and global interleaving both survive a
//! round-trip through the native trace format.

mod capture;
mod format;

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

pub use capture::{
    ingest_capture, ingest_capture_bytes, parse_index, IndexEntry, IngestReport, PcapWriter,
    TcpFrame,
};
pub use format::{read_traces, read_traces_from, write_traces, write_traces_to, TRACE_VERSION};

pub const DEFAULT_MTU: u32 = 1500;
pub const UNKNOWN_DOMAIN: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Outgoing,
    Incoming,
}

impl Direction {
    /// +1 for outgoing, -1 for incoming.
    pub fn sign(self) -> i32 {
        match self {
            Direction::Outgoing => 1,
            Direction::Incoming => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Direction::Outgoing),
            -1 => Some(Direction::Incoming),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub direction: Direction,
    pub payload_size: u32,
    pub flow_id: FlowId,
    pub seq_index: u32,
}

impl Packet {
    pub fn signed_size(&self) -> i32 {
        self.direction.sign() * self.payload_size as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub flow_id: FlowId,
    pub remote_domain: String,
    pub packets: Vec<Packet>,
}

impl Flow {
    pub fn total_bytes(&self) -> u64 {
        self.packets.iter().map(|p| u64::from(p.payload_size)).sum()
    }
}

/// Identifies a sample within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId {
    pub session_id: String,
    pub position: u32,
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.session_id, self.position)
    }
}

/// One page load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub label: Option<Label>,
    pub session_id: String,
    pub position: u32,
    pub flows: Vec<Flow>,
}

impl Sample {
    pub fn new(label: Option<Label>, session_id: impl Into<String>, position: u32) -> Self {
        Sample {
            label,
            session_id: session_id.into(),
            position,
            flows: Vec::new(),
        }
    }

    /// Builds a sample flow by flow from signed sizes (`+` outgoing, `-` incoming).
    ///
    /// Sequence indices are assigned in the order given.
    pub fn from_signed_flows<D: Into<String>>(
        label: Option<Label>,
        session_id: impl Into<String>,
        position: u32,
        flows: impl IntoIterator<Item = (D, Vec<i32>)>,
    ) -> Self {
        let mut b = SampleBuilder::new(label, session_id, position);
        for (domain, sizes) in flows {
            let f = b.open_flow(domain);
            for s in sizes {
                let dir = if s >= 0 {
                    Direction::Outgoing
                } else {
                    Direction::Incoming
                };
                b.push(f, dir, s.unsigned_abs());
            }
        }
        b.build()
    }

    pub fn id(&self) -> SampleId {
        SampleId {
            session_id: self.session_id.clone(),
            position: self.position,
        }
    }

    pub fn packet_count(&self) -> usize {
        self.flows.iter().map(|f| f.packets.len()).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.flows.iter().map(Flow::total_bytes).sum()
    }

    pub fn bytes_in(&self, dir: Direction) -> u64 {
        self.flows
            .iter()
            .flat_map(|f| &f.packets)
            .filter(|p| p.direction == dir)
            .map(|p| u64::from(p.payload_size))
            .sum()
    }

    /// All packets in capture order.
    pub fn packets_in_order(&self) -> Vec<&Packet> {
        let mut all: Vec<&Packet> = self.flows.iter().flat_map(|f| &f.packets).collect();
        all.sort_by_key(|p| p.seq_index);
        all
    }

    /// Signed packet sizes in capture order.
    pub fn signed_sizes(&self) -> Vec<i32> {
        self.packets_in_order()
            .into_iter()
            .map(Packet::signed_size)
            .collect()
    }

    /// Checks the model invariants: matching flow ids, sizes within the MTU,
    /// per-flow increasing and sample-wide unique `seq_index`, and lowercase
    /// nonempty domains.
    pub fn validate(&self, mtu: u32) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for flow in &self.flows {
            if flow.remote_domain.is_empty() || flow.remote_domain != flow.remote_domain.to_lowercase()
            {
                return Err(Error::InvalidInput(format!(
                    "sample {}: domain {:?} must be lowercase and nonempty",
                    self.id(),
                    flow.remote_domain
                )));
            }
            let mut last: Option<u32> = None;
            for p in &flow.packets {
                if p.flow_id != flow.flow_id {
                    return Err(Error::InvalidInput(format!(
                        "sample {}: packet flow id {:?} inside flow {:?}",
                        self.id(),
                        p.flow_id,
                        flow.flow_id
                    )));
                }
                if p.payload_size > mtu {
                    return Err(Error::InvalidInput(format!(
                        "sample {}: payload {} exceeds mtu {}",
                        self.id(),
                        p.payload_size,
                        mtu
                    )));
                }
                if last.is_some_and(|l| p.seq_index <= l) || !seen.insert(p.seq_index) {
                    return Err(Error::InvalidInput(format!(
                        "sample {}: non-monotone seq_index {}",
                        self.id(),
                        p.seq_index
                    )));
                }
                last = Some(p.seq_index);
            }
        }
        Ok(())
    }

    /// Rebuilds the sample by replacing every packet, in capture order, with
    /// zero or more packets of the same direction and flow.
    ///
    /// `f` receives the packet and its position within its flow. Sequence
    /// indices are reassigned densely from zero.
    pub fn map_packets<F>(&self, mut f: F) -> Sample
    where
        F: FnMut(&Packet, usize) -> Vec<u32>,
    {
        let mut order: Vec<(u32, usize, usize)> = Vec::with_capacity(self.packet_count());
        for (fi, flow) in self.flows.iter().enumerate() {
            for (pi, p) in flow.packets.iter().enumerate() {
                order.push((p.seq_index, fi, pi));
            }
        }
        order.sort_unstable();
        let mut flows: Vec<Flow> = self
            .flows
            .iter()
            .map(|fl| Flow {
                flow_id: fl.flow_id,
                remote_domain: fl.remote_domain.clone(),
                packets: Vec::with_capacity(fl.packets.len()),
            })
            .collect();
        let mut seq = 0u32;
        for (_, fi, pi) in order {
            let p = &self.flows[fi].packets[pi];
            for size in f(p, pi) {
                flows[fi].packets.push(Packet {
                    direction: p.direction,
                    payload_size: size,
                    flow_id: p.flow_id,
                    seq_index: seq,
                });
                seq += 1;
            }
        }
        Sample {
            label: self.label.clone(),
            session_id: self.session_id.clone(),
            position: self.position,
            flows,
        }
    }
}

/// Incremental construction of a [`Sample`] with dense sequence indices.
#[derive(Debug)]
pub struct SampleBuilder {
    sample: Sample,
    next_seq: u32,
}

impl SampleBuilder {
    pub fn new(label: Option<Label>, session_id: impl Into<String>, position: u32) -> Self {
        SampleBuilder {
            sample: Sample::new(label, session_id, position),
            next_seq: 0,
        }
    }

    pub fn open_flow(&mut self, domain: impl Into<String>) -> FlowId {
        let id = FlowId(self.sample.flows.len() as u32);
        self.sample.flows.push(Flow {
            flow_id: id,
            remote_domain: domain.into().to_lowercase(),
            packets: Vec::new(),
        });
        id
    }

    pub fn push(&mut self, flow: FlowId, direction: Direction, payload_size: u32) {
        let seq_index = self.next_seq;
        self.next_seq += 1;
        self.sample.flows[flow.0 as usize].packets.push(Packet {
            direction,
            payload_size,
            flow_id: flow,
            seq_index,
        });
    }

    /// Pushes `bytes` as a run of packets of at most `mtu` bytes each.
    pub fn push_segmented(&mut self, flow: FlowId, direction: Direction, bytes: u64, mtu: u32) {
        let mut left = bytes;
        while left > 0 {
            let chunk = left.min(u64::from(mtu));
            self.push(flow, direction, chunk as u32);
            left -= chunk;
        }
    }

    /// Finishes the sample, dropping flows that carried no data.
    pub fn build(mut self) -> Sample {
        self.sample.flows.retain(|f| !f.packets.is_empty());
        for (i, f) in self.sample.flows.iter_mut().enumerate() {
            f.flow_id = FlowId(i as u32);
            for p in &mut f.packets {
                p.flow_id = f.flow_id;
            }
        }
        self.sample
    }
}

/// Resolves remote addresses to second-level domains.
///
/// Total: any address without an entry resolves to [`UNKNOWN_DOMAIN`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainMap {
    entries: BTreeMap<Ipv4Addr, String>,
}

impl DomainMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, addr: Ipv4Addr, domain: impl Into<String>) {
        let d = domain.into().to_lowercase();
        let d = if d.is_empty() { UNKNOWN_DOMAIN.to_string() } else { d };
        self.entries.insert(addr, d);
    }

    pub fn resolve(&self, addr: Ipv4Addr) -> &str {
        self.entries
            .get(&addr)
            .map(String::as_str)
            .unwrap_or(UNKNOWN_DOMAIN)
    }

    /// Parses `address,domain` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = DomainMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (addr, domain) = line
                .split_once(',')
                .ok_or_else(|| Error::format("domain map", i + 1, "expected address,domain"))?;
            let addr: Ipv4Addr = addr
                .trim()
                .parse()
                .map_err(|e| Error::format("domain map", i + 1, e))?;
            map.insert(addr, domain.trim());
        }
        Ok(map)
    }
}

impl FromIterator<(Ipv4Addr, String)> for DomainMap {
    fn from_iter<I: IntoIterator<Item = (Ipv4Addr, String)>>(iter: I) -> Self {
        let mut m = DomainMap::new();
        for (a, d) in iter {
            m.insert(a, d);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_assigns_dense_sequence_and_drops_empty_flows() {
        let mut b = SampleBuilder::new(None, "s", 0);
        let a = b.open_flow("A.com");
        let _empty = b.open_flow("b.com");
        let c = b.open_flow("c.com");
        b.push(a, Direction::Outgoing, 10);
        b.push(c, Direction::Incoming, 20);
        b.push(a, Direction::Incoming, 30);
        let s = b.build();
        assert_eq!(s.flows.len(), 2);
        assert_eq!(s.flows[0].remote_domain, "a.com");
        assert_eq!(s.flows[1].flow_id, FlowId(1));
        assert_eq!(s.signed_sizes(), vec![10, -20, -30]);
        s.validate(DEFAULT_MTU).unwrap();
    }

    #[test]
    fn validate_rejects_oversized_and_disordered_packets() {
        let mut s = Sample::from_signed_flows(None, "s", 0, [("a.com", vec![100, -200])]);
        assert!(s.validate(150).is_err());
        s.flows[0].packets[1].seq_index = 0;
        assert!(s.validate(1500).is_err());
    }

    #[test]
    fn map_packets_preserves_interleaving() {
        let mut b = SampleBuilder::new(None, "s", 0);
        let a = b.open_flow("a.com");
        let c = b.open_flow("c.com");
        b.push(a, Direction::Outgoing, 10);
        b.push(c, Direction::Outgoing, 20);
        b.push(a, Direction::Incoming, 30);
        let s = b.build();
        let doubled = s.map_packets(|p, _| vec![p.payload_size, 1]);
        assert_eq!(doubled.signed_sizes(), vec![10, 1, 20, 1, -30, -1]);
        doubled.validate(DEFAULT_MTU).unwrap();
    }

    #[test]
    fn domain_map_is_total() {
        let m = DomainMap::parse("10.0.0.1, A.com\n# comment\n\n10.0.0.2,b.com").unwrap();
        assert_eq!(m.resolve("10.0.0.1".parse().unwrap()), "a.com");
        assert_eq!(m.resolve("10.9.9.9".parse().unwrap()), UNKNOWN_DOMAIN);
        assert!(DomainMap::parse("nonsense").is_err());
    }
}
