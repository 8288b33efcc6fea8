use super::sparse::SparseVec;
use crate::trace::{Direction, Sample};

/// Count of data packets per (direction, payload size): outgoing sizes
/// 1..=mtu first, then incoming. Oversized payloads fall in the mtu bin.
pub fn size_counts(sample: &Sample, mtu: u32) -> SparseVec {
    let mtu = mtu.max(1);
    let entries = sample
        .flows
        .iter()
        .flat_map(|f| &f.packets)
        .filter(|p| p.payload_size > 0)
        .map(|p| {
            let s = p.payload_size.min(mtu) - 1;
            let i = match p.direction {
                Direction::Outgoing => s,
                Direction::Incoming => mtu + s,
            };
            (i, 1.0)
        })
        .collect();
    SparseVec::from_entries(2 * mtu as usize, entries)
}
