//! Multi-point control plane: GATE/REPORT messages, ONU registration state,
//! discovery windows and the ranging registry shared by every virtual PON.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::dba::{DbaInstance, Grant};
use crate::error::{Error, Result};
use crate::ids::{tx_time_ns, Nanos, OnuId, VponId};
use crate::sim::Packet;

/// Every MPCP control frame occupies 64 bytes on the wire.
pub const CONTROL_FRAME_BYTES: u64 = 64;

/// Control-frame serialization time at `line_rate_bps`.
pub fn control_frame_ns(line_rate_bps: u64) -> Nanos {
    tx_time_ns(CONTROL_FRAME_BYTES, line_rate_bps)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum MpcpMessage {
    Gate {
        vpon_id: VponId,
        grants: Vec<Grant>,
    },
    Report {
        vpon_id: VponId,
        onu_id: OnuId,
        queued_bytes: u64,
    },
    DiscoveryGate {
        window_start_ns: Nanos,
        window_len_ns: Nanos,
    },
    RegisterReq {
        onu_id: OnuId,
        applied_delay_ns: Nanos,
    },
    Register {
        onu_id: OnuId,
        measured_rtt_ns: Nanos,
        llid: u16,
    },
    RegisterAck {
        onu_id: OnuId,
    },
}

impl MpcpMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            MpcpMessage::Gate { .. } => "GATE",
            MpcpMessage::Report { .. } => "REPORT",
            MpcpMessage::DiscoveryGate { .. } => "DISCOVERY_GATE",
            MpcpMessage::RegisterReq { .. } => "REGISTER_REQ",
            MpcpMessage::Register { .. } => "REGISTER",
            MpcpMessage::RegisterAck { .. } => "REGISTER_ACK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Registration {
    Unregistered,
    Registering { attempt: u32 },
    Registered { llid: u16, rtt_ns: Nanos },
}

/// Byte-counted FIFO of packets waiting for an upstream grant on one membership.
#[derive(Debug, Default, Clone)]
pub struct UpstreamQueue {
    packets: VecDeque<Packet>,
    bytes: u64,
}

impl UpstreamQueue {
    pub fn push(&mut self, packet: Packet) {
        self.bytes += u64::from(packet.size_bytes);
        self.packets.push_back(packet);
    }

    /// Removes head-of-line packets while they fit in `budget_bytes`. Packets are never fragmented.
    pub fn drain_fitting(&mut self, budget_bytes: u64) -> Vec<Packet> {
        let mut used = 0;
        let mut out = Vec::new();
        while let Some(head) = self.packets.front() {
            let size = u64::from(head.size_bytes);
            if used + size > budget_bytes {
                break;
            }
            used += size;
            self.bytes -= size;
            out.extend(self.packets.pop_front());
        }
        out
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter()
    }
}

#[derive(Debug, Clone)]
pub struct OnuState {
    pub onu_id: OnuId,
    pub registration: Registration,
    /// False until the ONU powers on.
    pub present: bool,
    queues: BTreeMap<VponId, UpstreamQueue>,
}

impl OnuState {
    pub fn new(onu_id: OnuId, memberships: impl IntoIterator<Item = VponId>) -> Self {
        OnuState {
            onu_id,
            registration: Registration::Unregistered,
            present: false,
            queues: memberships
                .into_iter()
                .map(|v| (v, UpstreamQueue::default()))
                .collect(),
        }
    }

    pub fn memberships(&self) -> impl Iterator<Item = &VponId> {
        self.queues.keys()
    }

    pub fn is_member(&self, vpon: &VponId) -> bool {
        self.queues.contains_key(vpon)
    }

    pub fn queue(&self, vpon: &VponId) -> Option<&UpstreamQueue> {
        self.queues.get(vpon)
    }

    pub fn queue_mut(&mut self, vpon: &VponId) -> Option<&mut UpstreamQueue> {
        self.queues.get_mut(vpon)
    }

    pub fn queues(&self) -> impl Iterator<Item = (&VponId, &UpstreamQueue)> {
        self.queues.iter()
    }

    pub fn is_registered(&self) -> bool {
        matches!(self.registration, Registration::Registered { .. })
    }
}

/// Round-trip times measured by the discovery domain, readable by every DBA.
#[derive(Debug, Default, Clone)]
pub struct RangingRegistry {
    rtts: BTreeMap<OnuId, Nanos>,
    llids: BTreeMap<OnuId, u16>,
    measurements: BTreeMap<OnuId, u32>,
    next_llid: u16,
}

impl RangingRegistry {
    /// Records a ranging measurement, overwriting any earlier value.
    pub fn record(&mut self, onu_id: OnuId, rtt_ns: Nanos) -> u16 {
        self.rtts.insert(onu_id, rtt_ns);
        *self.measurements.entry(onu_id).or_default() += 1;
        self.assign_llid(onu_id)
    }

    /// Seeds an entry without counting it as a discovery measurement.
    pub fn preload(&mut self, onu_id: OnuId, rtt_ns: Nanos) -> u16 {
        self.rtts.insert(onu_id, rtt_ns);
        self.assign_llid(onu_id)
    }

    fn assign_llid(&mut self, onu_id: OnuId) -> u16 {
        if let Some(&llid) = self.llids.get(&onu_id) {
            return llid;
        }
        let llid = self.next_llid;
        self.next_llid = self.next_llid.wrapping_add(1);
        self.llids.insert(onu_id, llid);
        llid
    }

    pub fn rtt(&self, onu_id: OnuId) -> Option<Nanos> {
        self.rtts.get(&onu_id).copied()
    }

    pub fn measurements(&self, onu_id: OnuId) -> u32 {
        self.measurements.get(&onu_id).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.rtts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rtts.is_empty()
    }
}

/// A quiet window on the discovery VPON's upstream channel, as seen at the OLT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct QuietWindow {
    pub start_ns: Nanos,
    pub len_ns: Nanos,
}

impl QuietWindow {
    pub fn end_ns(&self) -> Nanos {
        self.start_ns + self.len_ns
    }

    pub fn overlaps(&self, from: Nanos, to: Nanos) -> bool {
        self.start_ns < to && from < self.end_ns()
    }
}

/// Opens a discovery window no earlier than `now` and no earlier than the
/// channel cursor of the discovery VPON, so it never cuts into issued grants.
///
/// The returned `DiscoveryGate` is broadcast at the window start.
pub fn olt_start_discovery(
    now: Nanos,
    channel_available_ns: Nanos,
    window_len_ns: Nanos,
    active: Option<QuietWindow>,
) -> Result<(MpcpMessage, QuietWindow)> {
    let start_ns = now.max(channel_available_ns);
    if let Some(prev) = active {
        if prev.end_ns() > now {
            return Err(Error::ContractViolation(format!(
                "discovery window requested at {now} ns overlaps the window ending at {} ns",
                prev.end_ns()
            )));
        }
    }
    let window = QuietWindow {
        start_ns,
        len_ns: window_len_ns,
    };
    Ok((
        MpcpMessage::DiscoveryGate {
            window_start_ns: start_ns,
            window_len_ns,
        },
        window,
    ))
}

/// Unregistered ONUs answer a discovery gate after a uniform random delay in
/// `[0, max_delay_ns]`; registered ones stay silent.
pub fn onu_on_discovery_gate<R: Rng + ?Sized>(
    state: &mut OnuState,
    msg: &MpcpMessage,
    max_delay_ns: Nanos,
    rng: &mut R,
) -> Option<MpcpMessage> {
    let MpcpMessage::DiscoveryGate { .. } = msg else {
        return None;
    };
    let attempt = match state.registration {
        Registration::Unregistered => 1,
        Registration::Registering { attempt } => attempt + 1,
        Registration::Registered { .. } => return None,
    };
    if !state.present {
        return None;
    }
    state.registration = Registration::Registering { attempt };
    let applied_delay_ns = rng.random_range(0..=max_delay_ns);
    Some(MpcpMessage::RegisterReq {
        onu_id: state.onu_id,
        applied_delay_ns,
    })
}

/// Ranging at the OLT: the round trip is what remains of the response time
/// after the ONU's declared delay and the gate's own transmission time.
pub fn olt_on_register_req(
    gate_emission_ns: Nanos,
    arrival_ns: Nanos,
    msg: &MpcpMessage,
    control_frame_ns: Nanos,
    registry: &mut RangingRegistry,
) -> Result<MpcpMessage> {
    let MpcpMessage::RegisterReq {
        onu_id,
        applied_delay_ns,
    } = *msg
    else {
        return Err(Error::ContractViolation(format!(
            "expected REGISTER_REQ, got {}",
            msg.kind()
        )));
    };
    let measured = arrival_ns
        .checked_sub(gate_emission_ns + applied_delay_ns + control_frame_ns)
        .ok_or_else(|| {
            Error::ContractViolation(format!(
                "REGISTER_REQ from ONU {onu_id} arrived before it could be sent"
            ))
        })?;
    let llid = registry.record(onu_id, measured);
    Ok(MpcpMessage::Register {
        onu_id,
        measured_rtt_ns: measured,
        llid,
    })
}

/// Indices of register-request bursts that overlap another burst at the OLT.
pub fn detect_collisions(arrivals_ns: &[Nanos], burst_ns: Nanos) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..arrivals_ns.len()).collect();
    order.sort_by_key(|&i| (arrivals_ns[i], i));
    let mut collided = BTreeSet::new();
    for pair in order.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if arrivals_ns[b] < arrivals_ns[a] + burst_ns {
            collided.insert(a);
            collided.insert(b);
        }
    }
    collided
}

/// Makes a ranged ONU schedulable on every VPON it belongs to, using the
/// single registry RTT. Returns the VPONs whose roster changed.
pub fn share_ranging<'a>(
    registry: &RangingRegistry,
    onu_id: OnuId,
    dbas: impl IntoIterator<Item = &'a mut DbaInstance>,
) -> Result<Vec<VponId>> {
    let rtt = registry
        .rtt(onu_id)
        .ok_or_else(|| Error::NotFound(format!("no ranging entry for ONU {onu_id}")))?;
    let mut updated = Vec::new();
    for dba in dbas {
        if dba.is_member(onu_id) {
            dba.activate(onu_id, rtt);
            updated.push(dba.vpon_id().clone());
        }
    }
    Ok(updated)
}

/// One line of the optional MPCP trace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TraceRecord {
    pub time_ns: Nanos,
    pub vpon: String,
    pub direction: &'static str,
    pub message_kind: &'static str,
    pub onu_id: Option<OnuId>,
    pub detail: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let onu = self
            .onu_id
            .map(|o| o.to_string())
            .unwrap_or_else(|| "-".into());
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.time_ns, self.vpon, self.direction, self.message_kind, onu, self.detail
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dba::DbaConfig;
    use crate::sim::rng_stream;

    fn gate(start: Nanos, len: Nanos) -> MpcpMessage {
        MpcpMessage::DiscoveryGate {
            window_start_ns: start,
            window_len_ns: len,
        }
    }

    #[test]
    fn periodic_windows_respect_channel_cursor() {
        let (_, w) = olt_start_discovery(500_000_000, 0, 250_000, None).unwrap();
        assert_eq!(w.start_ns, 500_000_000);
        assert_eq!(w.end_ns(), 500_250_000);
        let (_, w2) = olt_start_discovery(1_000_000_000, 1_000_003_000, 250_000, Some(w)).unwrap();
        assert_eq!(w2.start_ns, 1_000_003_000);
        let overlapping = olt_start_discovery(500_100_000, 0, 250_000, Some(w));
        assert!(matches!(overlapping, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn unregistered_onu_answers_once() {
        let mut onu = OnuState::new(OnuId(1), [VponId::new("hlv")]);
        onu.present = true;
        let mut rng = rng_stream(1, 7);
        let req = onu_on_discovery_gate(&mut onu, &gate(0, 250_000), 48_976, &mut rng).unwrap();
        match req {
            MpcpMessage::RegisterReq {
                onu_id,
                applied_delay_ns,
            } => {
                assert_eq!(onu_id, OnuId(1));
                assert!(applied_delay_ns <= 48_976);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(onu.registration, Registration::Registering { attempt: 1 });
    }

    #[test]
    fn registered_onu_ignores_gate() {
        let mut onu = OnuState::new(OnuId(1), [VponId::new("hlv")]);
        onu.present = true;
        onu.registration = Registration::Registered {
            llid: 0,
            rtt_ns: 10,
        };
        let mut rng = rng_stream(1, 7);
        assert!(onu_on_discovery_gate(&mut onu, &gate(0, 250_000), 1000, &mut rng).is_none());
    }

    #[test]
    fn ranging_recovers_round_trip() {
        let mut reg = RangingRegistry::default();
        // gate at t=0, 512 ns gate transmission, 100 us down, 7 us delay, 100 us up
        let arrival = 512 + 100_000 + 7_000 + 100_000;
        let req = MpcpMessage::RegisterReq {
            onu_id: OnuId(3),
            applied_delay_ns: 7_000,
        };
        let reply = olt_on_register_req(0, arrival, &req, 512, &mut reg).unwrap();
        assert!(matches!(
            reply,
            MpcpMessage::Register {
                measured_rtt_ns: 200_000,
                ..
            }
        ));
        assert_eq!(reg.rtt(OnuId(3)), Some(200_000));

        let arrival = 1_000 + 512 + 62_500 + 62_500;
        let req = MpcpMessage::RegisterReq {
            onu_id: OnuId(4),
            applied_delay_ns: 0,
        };
        olt_on_register_req(1_000, arrival, &req, 512, &mut reg).unwrap();
        assert_eq!(reg.rtt(OnuId(4)), Some(125_000));
    }

    #[test]
    fn collisions_fail_both_bursts() {
        let collided = detect_collisions(&[1_000, 1_300, 5_000], 512);
        assert_eq!(collided, BTreeSet::from([0, 1]));
        assert!(detect_collisions(&[1_000, 1_512], 512).is_empty());
        let chain = detect_collisions(&[0, 400, 800, 5_000], 512);
        assert_eq!(chain, BTreeSet::from([0, 1, 2]));
    }

    fn dba(id: &str, members: &[u32]) -> DbaInstance {
        DbaInstance::new(
            VponId::new(id),
            DbaConfig::default(),
            1_000_000_000,
            members.iter().map(|&m| OnuId(m)),
        )
    }

    #[test]
    fn shared_ranging_reaches_every_membership() {
        let mut reg = RangingRegistry::default();
        reg.record(OnuId(1), 200_000);
        let mut llv = dba("llv", &[1, 2]);
        let mut hlv = dba("hlv", &[1, 2, 3]);
        let updated = share_ranging(&reg, OnuId(1), [&mut llv, &mut hlv]).unwrap();
        assert_eq!(updated, vec![VponId::new("llv"), VponId::new("hlv")]);
        assert_eq!(llv.roster_rtt(OnuId(1)), Some(200_000));
        assert_eq!(hlv.roster_rtt(OnuId(1)), Some(200_000));

        reg.record(OnuId(3), 150_000);
        let updated = share_ranging(&reg, OnuId(3), [&mut llv, &mut hlv]).unwrap();
        assert_eq!(updated, vec![VponId::new("hlv")]);
        assert_eq!(llv.roster_rtt(OnuId(3)), None);
    }

    #[test]
    fn re_registration_overwrites_consistently() {
        let mut reg = RangingRegistry::default();
        let first = reg.record(OnuId(1), 200_000);
        let mut llv = dba("llv", &[1]);
        let mut hlv = dba("hlv", &[1]);
        share_ranging(&reg, OnuId(1), [&mut llv, &mut hlv]).unwrap();
        let second = reg.record(OnuId(1), 180_000);
        assert_eq!(first, second);
        share_ranging(&reg, OnuId(1), [&mut llv, &mut hlv]).unwrap();
        assert_eq!(llv.roster_rtt(OnuId(1)), Some(180_000));
        assert_eq!(hlv.roster_rtt(OnuId(1)), Some(180_000));
        assert_eq!(reg.measurements(OnuId(1)), 2);
    }

    #[test]
    fn unknown_onu_cannot_be_shared() {
        let reg = RangingRegistry::default();
        let mut llv = dba("llv", &[1]);
        assert!(matches!(
            share_ranging(&reg, OnuId(1), [&mut llv]),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn trace_line_is_tab_separated() {
        let rec = TraceRecord {
            time_ns: 42,
            vpon: "hlv".into(),
            direction: "up",
            message_kind: "REPORT",
            onu_id: Some(OnuId(5)),
            detail: "queued=128".into(),
        };
        assert_eq!(rec.to_string(), "42\thlv\tup\tREPORT\t5\tqueued=128");
    }
}
