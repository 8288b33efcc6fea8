use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Direction, Sample};

/// Defended-to-original ratios of total bytes and packets over a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub byte_overhead: f64,
    pub packet_overhead: f64,
    pub outgoing_byte_overhead: f64,
    pub incoming_byte_overhead: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn measure_overhead(original: &[Sample], defended: &[Sample]) -> Result<OverheadReport> {
    let mut a: Vec<_> = original.iter().map(Sample::id).collect();
    let mut b: Vec<_> = defended.iter().map(Sample::id).collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::InvalidInput("original and defended sets hold different sample ids".into()));
    }
    let tot = |set: &[Sample], f: &dyn Fn(&Sample) -> u64| set.iter().map(f).sum::<u64>();
    Ok(OverheadReport {
        byte_overhead: ratio(tot(defended, &|s| s.total_bytes()), tot(original, &|s| s.total_bytes())),
        packet_overhead: ratio(
            tot(defended, &|s| s.packet_count() as u64),
            tot(original, &|s| s.packet_count() as u64),
        ),
        outgoing_byte_overhead: ratio(
            tot(defended, &|s| s.bytes_in(Direction::Outgoing)),
            tot(original, &|s| s.bytes_in(Direction::Outgoing)),
        ),
        incoming_byte_overhead: ratio(
            tot(defended, &|s| s.bytes_in(Direction::Incoming)),
            tot(original, &|s| s.bytes_in(Direction::Incoming)),
        ),
    })
}
