//! Padding and fragmentation defenses, and their overhead.

mod burst;
mod overhead;
mod padding;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use burst::{apply_burst_defense, burst_pad, burst_thresholds, direction_bursts, train_burst_thresholds, BurstThresholds};
pub use overhead::{measure_overhead, OverheadReport};
pub use padding::{fragment, fragment_with_depth, pad_exponential, pad_linear};

use crate::error::{Error, Result};
use crate::trace::Sample;

/// Parsed defense selector: `none`, `linear`, `exp`, `frag:<seed>` or
/// `burst:<cost_threshold>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DefenseSpec {
    None,
    Linear,
    Exponential,
    Fragmentation { seed: u64 },
    Burst { cost_threshold: f64 },
}

impl FromStr for DefenseSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("bad defense {s:?} (expected none, linear, exp, frag:<seed> or burst:<cost>)"));
        match s.split_once(':') {
            None => match s {
                "none" => Ok(DefenseSpec::None),
                "linear" => Ok(DefenseSpec::Linear),
                "exp" => Ok(DefenseSpec::Exponential),
                _ => Err(bad()),
            },
            Some(("frag", seed)) => Ok(DefenseSpec::Fragmentation {
                seed: seed.parse().map_err(|_| bad())?,
            }),
            Some(("burst", c)) => {
                let cost_threshold: f64 = c.parse().map_err(|_| bad())?;
                if !(cost_threshold > 1.0) || !cost_threshold.is_finite() {
                    return Err(Error::Config(format!("burst cost threshold must be > 1, got {c}")));
                }
                Ok(DefenseSpec::Burst { cost_threshold })
            }
            Some(_) => Err(bad()),
        }
    }
}

impl fmt::Display for DefenseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefenseSpec::None => f.write_str("none"),
            DefenseSpec::Linear => f.write_str("linear"),
            DefenseSpec::Exponential => f.write_str("exp"),
            DefenseSpec::Fragmentation { seed } => write!(f, "frag:{seed}"),
            DefenseSpec::Burst { cost_threshold } => write!(f, "burst:{cost_threshold}"),
        }
    }
}

impl TryFrom<String> for DefenseSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DefenseSpec> for String {
    fn from(d: DefenseSpec) -> String {
        d.to_string()
    }
}

/// A defense ready to apply. Burst plans carry thresholds learned from
/// defense-training traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefensePlan {
    pub spec: DefenseSpec,
    pub mtu: u32,
    /// Splits per fragmentation pass; 1 splits each eligible packet once.
    pub fragment_depth: u32,
    pub burst_thresholds: Option<BurstThresholds>,
}

impl DefensePlan {
    pub fn new(spec: DefenseSpec, mtu: u32, training: &[&Sample]) -> Result<DefensePlan> {
        let burst_thresholds = match &spec {
            DefenseSpec::Burst { cost_threshold } => Some(train_burst_thresholds(training, *cost_threshold)?),
            _ => None,
        };
        Ok(DefensePlan {
            spec,
            mtu,
            fragment_depth: 1,
            burst_thresholds,
        })
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        match &self.spec {
            DefenseSpec::None => s.clone(),
            DefenseSpec::Linear => pad_linear(s, self.mtu),
            DefenseSpec::Exponential => pad_exponential(s, self.mtu),
            DefenseSpec::Fragmentation { seed } => fragment_with_depth(s, *seed, self.mtu, self.fragment_depth),
            DefenseSpec::Burst { .. } => {
                apply_burst_defense(s, self.burst_thresholds.as_ref().expect("burst plan is trained"), self.mtu)
            }
        }
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Vec<Sample> {
        samples.iter().map(|s| self.apply(s)).collect()
    }
}
