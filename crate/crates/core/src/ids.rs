use std::fmt;

use serde::{Deserialize, Serialize};

/// Simulation time and durations, in integer nanoseconds.
pub type Nanos = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OnuId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VponId(pub String);

impl VponId {
    pub fn new(id: impl Into<String>) -> Self {
        VponId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OnuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VponId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Serialization time of `bytes` at `line_rate_bps`, rounded up to the next nanosecond.
pub fn tx_time_ns(bytes: u64, line_rate_bps: u64) -> Nanos {
    let bits = u128::from(bytes) * 8 * 1_000_000_000;
    let rate = u128::from(line_rate_bps);
    bits.div_ceil(rate) as Nanos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gigabit_serialization() {
        assert_eq!(tx_time_ns(64, 1_000_000_000), 512);
        assert_eq!(tx_time_ns(1_000, 1_000_000_000), 8_000);
        assert_eq!(tx_time_ns(1_564, 1_000_000_000), 12_512);
        // 10 Gb/s rounds 51.2 ns up
        assert_eq!(tx_time_ns(64, 10_000_000_000), 52);
    }
}
