//! Per-VPON dynamic bandwidth allocation.
//!
//! Each virtual PON owns one [`DbaInstance`]. Instances share nothing but the
//! read-only ranging results, so traffic on one VPON never moves the grant
//! schedule of another.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{tx_time_ns, Nanos, OnuId, VponId};
use crate::mpcp::{control_frame_ns, QuietWindow, CONTROL_FRAME_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DbaPolicy {
    /// Grant the reported backlog, capped at `w_max_bytes`.
    #[default]
    Limited,
    /// Grant the full reported backlog.
    Gated,
    /// Always grant `w_max_bytes`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbaConfig {
    pub policy: DbaPolicy,
    pub w_max_bytes: u64,
    pub guard_ns: Nanos,
}

impl Default for DbaConfig {
    fn default() -> Self {
        DbaConfig {
            policy: DbaPolicy::Limited,
            w_max_bytes: 15_000,
            guard_ns: 1_000,
        }
    }
}

/// An upstream transmission slot. `start_ns` is when the first bit reaches
/// the OLT; the ONU starts sending one upstream propagation delay earlier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grant {
    pub vpon_id: VponId,
    pub onu_id: OnuId,
    pub start_ns: Nanos,
    pub length_ns: Nanos,
    /// Payload budget including the trailing 64-byte REPORT.
    pub bytes: u64,
}

impl Grant {
    pub fn end_ns(&self) -> Nanos {
        self.start_ns + self.length_ns
    }
}

#[derive(Debug, Clone)]
pub struct DbaInstance {
    vpon_id: VponId,
    config: DbaConfig,
    line_rate_bps: u64,
    t_avail_ns: Nanos,
    last_reports: BTreeMap<OnuId, u64>,
    roster: BTreeMap<OnuId, Nanos>,
    members: BTreeSet<OnuId>,
    discovery_domain: bool,
}

impl DbaInstance {
    pub fn new(
        vpon_id: VponId,
        config: DbaConfig,
        line_rate_bps: u64,
        members: impl IntoIterator<Item = OnuId>,
    ) -> Self {
        DbaInstance {
            vpon_id,
            config,
            line_rate_bps,
            t_avail_ns: 0,
            last_reports: BTreeMap::new(),
            roster: BTreeMap::new(),
            members: members.into_iter().collect(),
            discovery_domain: false,
        }
    }

    pub fn with_discovery_domain(mut self, yes: bool) -> Self {
        self.discovery_domain = yes;
        self
    }

    pub fn vpon_id(&self) -> &VponId {
        &self.vpon_id
    }

    pub fn config(&self) -> &DbaConfig {
        &self.config
    }

    pub fn t_avail_ns(&self) -> Nanos {
        self.t_avail_ns
    }

    pub fn is_discovery_domain(&self) -> bool {
        self.discovery_domain
    }

    pub fn is_member(&self, onu_id: OnuId) -> bool {
        self.members.contains(&onu_id)
    }

    pub fn roster_len(&self) -> usize {
        self.roster.len()
    }

    pub fn roster_rtt(&self, onu_id: OnuId) -> Option<Nanos> {
        self.roster.get(&onu_id).copied()
    }

    pub fn last_report(&self, onu_id: OnuId) -> Option<u64> {
        self.last_reports.get(&onu_id).copied()
    }

    /// Adds (or re-ranges) a registered member.
    pub fn activate(&mut self, onu_id: OnuId, rtt_ns: Nanos) {
        self.roster.insert(onu_id, rtt_ns);
        self.last_reports.entry(onu_id).or_insert(0);
    }

    pub fn on_report(&mut self, onu_id: OnuId, queued_bytes: u64) -> Result<()> {
        if !self.roster.contains_key(&onu_id) {
            return Err(Error::NotFound(format!(
                "ONU {onu_id} is not active on {}",
                self.vpon_id
            )));
        }
        self.last_reports.insert(onu_id, queued_bytes);
        Ok(())
    }

    fn data_bytes(&self, reported: u64) -> u64 {
        match self.config.policy {
            DbaPolicy::Limited => reported.min(self.config.w_max_bytes),
            DbaPolicy::Gated => reported,
            DbaPolicy::Fixed => self.config.w_max_bytes,
        }
    }

    /// One round-robin polling cycle over the roster in ONU-id order.
    ///
    /// Every grant carries room for a piggybacked REPORT, so idle ONUs get a
    /// 64-byte polling grant. A grant cannot start before its GATE has been
    /// sent and propagated to the ONU and the burst has propagated back.
    pub fn schedule_cycle(&mut self, now_ns: Nanos) -> Vec<Grant> {
        let gate_ns = control_frame_ns(self.line_rate_bps);
        let mut grants = Vec::with_capacity(self.roster.len());
        for (&onu_id, &rtt) in &self.roster {
            let reported = self.last_reports.get(&onu_id).copied().unwrap_or(0);
            let data = self.data_bytes(reported);
            let bytes = data + CONTROL_FRAME_BYTES;
            let length_ns = tx_time_ns(bytes, self.line_rate_bps);
            let start_ns = self.t_avail_ns.max(now_ns + gate_ns + rtt);
            self.t_avail_ns = start_ns + length_ns + self.config.guard_ns;
            self.last_reports
                .insert(onu_id, reported.saturating_sub(data));
            grants.push(Grant {
                vpon_id: self.vpon_id.clone(),
                onu_id,
                start_ns,
                length_ns,
                bytes,
            });
        }
        grants
    }

    /// Blocks the upstream channel for a discovery window. Only legal on the
    /// discovery domain.
    pub fn reserve_quiet_window(&mut self, window: QuietWindow) -> Result<()> {
        if !self.discovery_domain {
            return Err(Error::ContractViolation(format!(
                "{} is not the discovery domain",
                self.vpon_id
            )));
        }
        self.t_avail_ns = self.t_avail_ns.max(window.end_ns());
        Ok(())
    }
}

/// Checks that grants on one channel, sorted by start, are separated by at least `guard_ns`.
pub fn check_non_overlap(grants: &[Grant], guard_ns: Nanos) -> Result<()> {
    let mut sorted: Vec<&Grant> = grants.iter().collect();
    sorted.sort_by_key(|g| g.start_ns);
    for pair in sorted.windows(2) {
        if pair[0].end_ns() + guard_ns > pair[1].start_ns {
            return Err(Error::Invariant(format!(
                "grants overlap on {}: ONU {} [{}, {}) and ONU {} at {}",
                pair[0].vpon_id,
                pair[0].onu_id,
                pair[0].start_ns,
                pair[0].end_ns(),
                pair[1].onu_id,
                pair[1].start_ns
            )));
        }
    }
    Ok(())
}
