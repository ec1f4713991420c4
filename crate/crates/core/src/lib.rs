//! Discrete-event simulator for OCDMA-partitioned virtual GE-PONs.
//!
//! One physical tree carries several virtual PONs, each on its own optical
//! code with an independent MPCP/DBA instance. Discovery quiet windows are
//! confined to one high-latency VPON so the low-latency one never stalls.

pub mod codes;
pub mod dba;
pub mod error;
pub mod experiment;
pub mod ids;
pub mod mpcp;
pub mod output;
pub mod par;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use ids::{FlowId, Nanos, OnuId, VponId};
