use crate::trace::Sample;
use crate::util::{derive_seed, rng_for};
use rand::Rng as _;

/// Rounds each payload up to a multiple of 128, capped at the MTU.
pub fn pad_linear(s: &Sample, mtu: u32) -> Sample {
    s.map_packets(|p, _| vec![p.payload_size.div_ceil(128).saturating_mul(128).min(mtu).max(p.payload_size)])
}

/// Rounds each payload up to a power of two, capped at the MTU.
pub fn pad_exponential(s: &Sample, mtu: u32) -> Sample {
    s.map_packets(|p, _| vec![p.payload_size.max(1).next_power_of_two().min(mtu).max(p.payload_size)])
}

/// Splits every payload with `2 <= s < mtu` once at a uniform point.
pub fn fragment(s: &Sample, seed: u64, mtu: u32) -> Sample {
    fragment_with_depth(s, seed, mtu, 1)
}

/// Fragmentation repeated `depth` times over the resulting pieces. The
/// random stream depends on the seed and the sample's id only.
pub fn fragment_with_depth(s: &Sample, seed: u64, mtu: u32, depth: u32) -> Sample {
    let mut rng = rng_for(derive_seed(seed, &s.id().to_string()), "fragment");
    s.map_packets(|p, _| {
        let mut pieces = vec![p.payload_size];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(pieces.len() * 2);
            for x in pieces {
                if x >= 2 && x < mtu {
                    let c = rng.random_range(1..x);
                    next.push(c);
                    next.push(x - c);
                } else {
                    next.push(x);
                }
            }
            pieces = next;
        }
        pieces
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(size: i32, f: impl Fn(&Sample) -> Sample) -> Vec<i32> {
        f(&Sample::from_signed_flows(None, "s", 0, [("a", vec![size])])).signed_sizes()
    }

    #[test]
    fn linear_examples() {
        assert_eq!(one(128, |s| pad_linear(s, 1500)), vec![128]);
        assert_eq!(one(129, |s| pad_linear(s, 1500)), vec![256]);
        assert_eq!(one(1420, |s| pad_linear(s, 1500)), vec![1500]);
        assert_eq!(one(-1, |s| pad_linear(s, 1500)), vec![-128]);
    }

    #[test]
    fn exponential_examples() {
        assert_eq!(one(512, |s| pad_exponential(s, 1500)), vec![512]);
        assert_eq!(one(513, |s| pad_exponential(s, 1500)), vec![1024]);
        assert_eq!(one(1025, |s| pad_exponential(s, 1500)), vec![1500]);
    }

    #[test]
    fn fragmentation_rules() {
        let s = Sample::from_signed_flows(None, "s", 0, [("a", vec![1500, 1, 700, -1500, -2])]);
        let f = fragment(&s, 3, 1500);
        assert_eq!(f.total_bytes(), s.total_bytes());
        assert_eq!(f.packet_count(), 7);
        assert_eq!(f, fragment(&s, 3, 1500));
        let sizes = f.signed_sizes();
        assert_eq!(sizes[0], 1500);
        assert_eq!(sizes[1], 1);
        assert_eq!(sizes[2] + sizes[3], 700);
        assert_eq!(sizes[4], -1500);
        assert_eq!(sizes[5..], [-1, -1]);
        let deep = fragment_with_depth(&s, 3, 1500, 3);
        assert_eq!(deep.total_bytes(), s.total_bytes());
        assert!(deep.packet_count() >= f.packet_count());
    }
}
