//! Deterministic discrete-event kernel, traffic sources and latency metrics.

mod engine;
mod event;
mod segment;
mod stats;
mod traffic;

use serde::{Deserialize, Serialize};

use crate::dba::DbaConfig;
use crate::ids::{Nanos, OnuId, VponId};
use crate::topology::Topology;

pub use engine::{run, FlowCounters, PacketRecord, RangingRecord, RunOptions, RunOutput};
pub use event::{EventQueue, Scheduled};
pub use segment::segmentation_policy;
pub use stats::{
    record_delivery, LatencyRecorder, LatencyStats, Resolution, StatsKey, StatsRow, Summary,
    EXACT_SAMPLE_LIMIT, HISTOGRAM_BIN_NS,
};
pub use traffic::{
    discovery_stream, rng_stream, ArrivalProcess, FlowDirection, FlowGenerator, FlowSpec, Packet,
    ServiceClass, SizeModel, MAX_FRAME_BYTES, MIN_FRAME_BYTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One physical GE-PON: every ONU and flow on a single channel.
    Baseline,
    /// Code-separated virtual PONs, each with its own DBA.
    Virtual,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Virtual => "virtual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VponClass {
    LowLatency,
    HighLatency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VponSpec {
    pub id: VponId,
    pub class: VponClass,
    pub members: Vec<OnuId>,
    pub dba: DbaConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// ONUs present at time 0 start ranged and registered.
    #[default]
    Preranged,
    /// Every ONU must register through discovery windows.
    Discover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryPlan {
    pub domain: VponId,
    /// Zero disables discovery.
    pub period_ns: Nanos,
    pub first_ns: Nanos,
    pub window_ns: Nanos,
    /// Upper end of the uniform random response delay.
    pub max_response_delay_ns: Nanos,
    pub bootstrap: Bootstrap,
}

impl DiscoveryPlan {
    pub fn enabled(&self) -> bool {
        self.period_ns > 0
    }
}

/// A flow bound to the VPON that carries it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFlow {
    pub spec: FlowSpec,
    pub vpon: VponId,
}

/// Fully resolved simulation input for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub duration_ns: Nanos,
    pub line_rate_bps: u64,
    pub topology: Topology,
    pub vpons: Vec<VponSpec>,
    pub discovery: DiscoveryPlan,
    pub flows: Vec<BoundFlow>,
}
