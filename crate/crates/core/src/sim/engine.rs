use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::event::EventQueue;
use super::stats::{
    record_delivery, LatencyStats, Resolution, StatsKey, StatsRow, EXACT_SAMPLE_LIMIT,
};
use super::traffic::{discovery_stream, rng_stream, FlowDirection, FlowGenerator, Packet};
use super::{Bootstrap, Mode, SimConfig};
use crate::dba::{check_non_overlap, DbaInstance, Grant};
use crate::error::{Error, Result};
use crate::ids::{tx_time_ns, FlowId, Nanos, OnuId, VponId};
use crate::mpcp::{
    control_frame_ns, detect_collisions, olt_on_register_req, olt_start_discovery,
    onu_on_discovery_gate, share_ranging, MpcpMessage, OnuState, QuietWindow, RangingRegistry,
    Registration, TraceRecord, CONTROL_FRAME_BYTES,
};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Collect MPCP trace records.
    pub trace: bool,
    /// Keep one [`PacketRecord`] per generated packet.
    pub record_packets: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RangingRecord {
    pub onu_id: OnuId,
    pub time_ns: Nanos,
    pub measured_rtt_ns: Nanos,
    pub true_rtt_ns: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub flow_id: FlowId,
    pub onu_id: OnuId,
    pub vpon: VponId,
    pub direction: FlowDirection,
    pub size_bytes: u32,
    pub created_ns: Nanos,
    pub delivered_ns: Option<Nanos>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowCounters {
    pub generated: u64,
    pub delivered: u64,
    pub residual: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub stats: LatencyStats,
    pub grants: BTreeMap<VponId, Vec<Grant>>,
    pub quiet_windows: BTreeMap<VponId, Vec<QuietWindow>>,
    pub rangings: Vec<RangingRecord>,
    pub register_collisions: u64,
    pub flows: BTreeMap<FlowId, FlowCounters>,
    pub trace: Vec<TraceRecord>,
    pub packets: Vec<PacketRecord>,
    pub events_processed: u64,
}

impl RunOutput {
    pub fn rows(&self) -> Vec<StatsRow> {
        self.stats.rows(&self.name, self.mode.as_str())
    }

    /// Results table, header included.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(StatsRow::CSV_HEADER);
        out.push('\n');
        for row in self.rows() {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug)]
enum Ev {
    SimEnd,
    FlowArrival(usize),
    OnuJoin(OnuId),
    DbaCycleTimer(usize),
    GateAtOnu(usize, Grant),
    BurstStartAtOnu(usize, Grant),
    BurstStartAtOlt(usize, Grant),
    BurstEndAtOlt(usize, Grant, Vec<(Packet, Nanos)>),
    ReportAtOlt(usize, OnuId, u64),
    DiscoveryWindowStart,
    DiscoveryGateAtOnu(OnuId, QuietWindow),
    RegisterReqAtOlt(MpcpMessage),
    DiscoveryWindowEnd,
    DownstreamDelivery(usize, Packet),
}

struct OnuRt {
    state: OnuState,
    rtt_ns: Nanos,
    down_ns: Nanos,
    up_ns: Nanos,
    rng: ChaCha8Rng,
}

struct VponRt {
    dba: DbaInstance,
    cycle_active: bool,
    outstanding_reports: usize,
    windows: Vec<QuietWindow>,
    grants: Vec<Grant>,
    last_burst_end_ns: Nanos,
    downstream_free_ns: Nanos,
}

struct FlowRt {
    gen: FlowGenerator,
    onu: OnuId,
    vpon: usize,
    key: StatsKey,
    generated: u64,
    delivered: u64,
    last_delivered_id: Option<u64>,
}

struct DiscoveryRt {
    vpon: usize,
    active: Option<QuietWindow>,
    gate_emission_ns: Nanos,
    pending: Vec<(Nanos, MpcpMessage)>,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    opts: RunOptions,
    now: Nanos,
    queue: EventQueue<Ev>,
    ctrl_ns: Nanos,
    onus: BTreeMap<OnuId, OnuRt>,
    vpons: Vec<VponRt>,
    vpon_index: BTreeMap<VponId, usize>,
    registry: RangingRegistry,
    discovery: Option<DiscoveryRt>,
    flows: Vec<FlowRt>,
    flow_index: BTreeMap<FlowId, usize>,
    stats: LatencyStats,
    next_packet_id: u64,
    packets: Vec<PacketRecord>,
    rangings: Vec<RangingRecord>,
    collisions: u64,
    trace: Vec<TraceRecord>,
    events: u64,
}

/// Runs one simulation to `SimEnd`.
///
/// The run is single-threaded and fully determined by `cfg` (including its
/// seed). Internal invariants (burst overlap at the OLT, causality, FIFO
/// order, conservation) are checked as the run proceeds and reported as
/// [`Error::Invariant`].
pub fn run(cfg: &SimConfig, opts: RunOptions) -> Result<RunOutput> {
    let mut engine = Engine::new(cfg, opts)?;
    engine.start();
    engine.event_loop()?;
    engine.finish()
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, opts: RunOptions) -> Result<Self> {
        let ctrl_ns = control_frame_ns(cfg.line_rate_bps);
        let vpon_index: BTreeMap<VponId, usize> = cfg
            .vpons
            .iter()
            .enumerate()
            .map(|(i, v)| (v.id.clone(), i))
            .collect();

        let mut onus = BTreeMap::new();
        for site in &cfg.topology.onus {
            let memberships = cfg
                .vpons
                .iter()
                .filter(|v| v.members.contains(&site.onu_id))
                .map(|v| v.id.clone());
            let rtt_ns = cfg.topology.rtt(site.onu_id)?;
            let (down_ns, up_ns) = Topology::one_way_split(rtt_ns);
            onus.insert(
                site.onu_id,
                OnuRt {
                    state: OnuState::new(site.onu_id, memberships),
                    rtt_ns,
                    down_ns,
                    up_ns,
                    rng: rng_stream(cfg.seed, discovery_stream(site.onu_id)),
                },
            );
        }

        let vpons = cfg
            .vpons
            .iter()
            .map(|v| VponRt {
                dba: DbaInstance::new(
                    v.id.clone(),
                    v.dba,
                    cfg.line_rate_bps,
                    v.members.iter().copied(),
                )
                .with_discovery_domain(v.id == cfg.discovery.domain),
                cycle_active: false,
                outstanding_reports: 0,
                windows: Vec::new(),
                grants: Vec::new(),
                last_burst_end_ns: 0,
                downstream_free_ns: 0,
            })
            .collect();

        let discovery = if cfg.discovery.enabled() {
            let vpon = *vpon_index.get(&cfg.discovery.domain).ok_or_else(|| {
                Error::config(
                    "/discovery/domain",
                    format!("unknown VPON {}", cfg.discovery.domain),
                )
            })?;
            Some(DiscoveryRt {
                vpon,
                active: None,
                gate_emission_ns: 0,
                pending: Vec::new(),
            })
        } else {
            None
        };

        let expected: f64 = cfg
            .flows
            .iter()
            .map(|f| {
                let span = cfg.duration_ns.saturating_sub(f.spec.start_ns) as f64 / 1e9;
                f.spec.arrival.mean_rate_pps() * span
            })
            .sum();
        let resolution = if expected > EXACT_SAMPLE_LIMIT as f64 {
            Resolution::Histogram100Ns
        } else {
            Resolution::Exact
        };
        let mut stats = LatencyStats::new(resolution);

        let mut flows = Vec::with_capacity(cfg.flows.len());
        let mut flow_index = BTreeMap::new();
        for (i, f) in cfg.flows.iter().enumerate() {
            let vpon = *vpon_index.get(&f.vpon).ok_or_else(|| {
                Error::config(format!("/flows/{i}"), format!("unknown VPON {}", f.vpon))
            })?;
            if !onus.contains_key(&f.spec.onu_id) {
                return Err(Error::config(
                    format!("/flows/{i}/onu_id"),
                    format!("unknown ONU {}", f.spec.onu_id),
                ));
            }
            if flow_index.insert(f.spec.flow_id, i).is_some() {
                return Err(Error::config(
                    format!("/flows/{i}/flow_id"),
                    format!("duplicate flow id {}", f.spec.flow_id),
                ));
            }
            let key = StatsKey {
                vpon: f.vpon.clone(),
                class: f.spec.class,
                direction: f.spec.direction,
                flow: f.spec.flow_id,
            };
            stats.register_flow(key.clone());
            flows.push(FlowRt {
                gen: FlowGenerator::new(&f.spec, cfg.seed),
                onu: f.spec.onu_id,
                vpon,
                key,
                generated: 0,
                delivered: 0,
                last_delivered_id: None,
            });
        }

        Ok(Engine {
            cfg,
            opts,
            now: 0,
            queue: EventQueue::default(),
            ctrl_ns,
            onus,
            vpons,
            vpon_index,
            registry: RangingRegistry::default(),
            discovery,
            flows,
            flow_index,
            stats,
            next_packet_id: 0,
            packets: Vec::new(),
            rangings: Vec::new(),
            collisions: 0,
            trace: Vec::new(),
            events: 0,
        })
    }

    fn schedule(&mut self, at: Nanos, ev: Ev) {
        self.queue.push(at, ev);
    }

    fn log(
        &mut self,
        time_ns: Nanos,
        vpon: &str,
        direction: &'static str,
        msg: &MpcpMessage,
        detail: String,
    ) {
        if !self.opts.trace {
            return;
        }
        let onu_id = match msg {
            MpcpMessage::Report { onu_id, .. }
            | MpcpMessage::RegisterReq { onu_id, .. }
            | MpcpMessage::Register { onu_id, .. }
            | MpcpMessage::RegisterAck { onu_id } => Some(*onu_id),
            MpcpMessage::Gate { grants, .. } if grants.len() == 1 => Some(grants[0].onu_id),
            _ => None,
        };
        self.trace.push(TraceRecord {
            time_ns,
            vpon: vpon.to_string(),
            direction,
            message_kind: msg.kind(),
            onu_id,
            detail,
        });
    }

    fn start(&mut self) {
        self.schedule(self.cfg.duration_ns, Ev::SimEnd);

        let preranged = self.cfg.discovery.bootstrap == Bootstrap::Preranged;
        let joins: Vec<(OnuId, Nanos)> = self
            .cfg
            .topology
            .onus
            .iter()
            .map(|s| (s.onu_id, s.join_ns.unwrap_or(0)))
            .collect();
        for (onu_id, join) in joins {
            if join > 0 {
                self.schedule(join, Ev::OnuJoin(onu_id));
                continue;
            }
            let onu = self.onus.get_mut(&onu_id).expect("ONU built from topology");
            onu.state.present = true;
            if preranged {
                let llid = self.registry.preload(onu_id, onu.rtt_ns);
                onu.state.registration = Registration::Registered {
                    llid,
                    rtt_ns: onu.rtt_ns,
                };
                let rtt = onu.rtt_ns;
                for v in &mut self.vpons {
                    if v.dba.is_member(onu_id) {
                        v.dba.activate(onu_id, rtt);
                    }
                }
            }
        }

        for i in 0..self.vpons.len() {
            if self.vpons[i].dba.roster_len() > 0 {
                self.vpons[i].cycle_active = true;
                self.schedule(0, Ev::DbaCycleTimer(i));
            }
        }

        if self.discovery.is_some() && self.cfg.discovery.first_ns < self.cfg.duration_ns {
            self.schedule(self.cfg.discovery.first_ns, Ev::DiscoveryWindowStart);
        }

        for i in 0..self.flows.len() {
            if let Some(t) = self.flows[i].gen.peek() {
                if t < self.cfg.duration_ns {
                    self.schedule(t, Ev::FlowArrival(i));
                }
            }
        }
    }

    fn event_loop(&mut self) -> Result<()> {
        while let Some(item) = self.queue.pop() {
            if item.time_ns < self.now {
                return Err(Error::Invariant(format!(
                    "event at {} ns processed after {} ns",
                    item.time_ns, self.now
                )));
            }
            self.now = item.time_ns;
            self.events += 1;
            match item.event {
                Ev::SimEnd => return Ok(()),
                Ev::FlowArrival(f) => self.on_flow_arrival(f)?,
                Ev::OnuJoin(onu) => self.on_join(onu),
                Ev::DbaCycleTimer(v) => self.on_cycle(v)?,
                Ev::GateAtOnu(v, g) => self.on_gate_at_onu(v, g)?,
                Ev::BurstStartAtOnu(v, g) => self.on_burst_start_at_onu(v, g)?,
                Ev::BurstStartAtOlt(v, g) => self.on_burst_start_at_olt(v, g)?,
                Ev::BurstEndAtOlt(v, g, packets) => self.on_burst_end_at_olt(v, g, packets)?,
                Ev::ReportAtOlt(v, onu, bytes) => self.on_report(v, onu, bytes)?,
                Ev::DiscoveryWindowStart => self.on_discovery_start()?,
                Ev::DiscoveryGateAtOnu(onu, w) => self.on_discovery_gate(onu, w),
                Ev::RegisterReqAtOlt(msg) => self.on_register_req(msg)?,
                Ev::DiscoveryWindowEnd => self.on_discovery_end()?,
                Ev::DownstreamDelivery(f, p) => self.deliver(f, p, self.now, None)?,
            }
        }
        Ok(())
    }

    fn on_flow_arrival(&mut self, f: usize) -> Result<()> {
        let (created, size) = self.flows[f]
            .gen
            .take()
            .expect("arrival scheduled from peek");
        let flow = &self.cfg.flows[f];
        let v = self.flows[f].vpon;
        let packet = Packet {
            packet_id: self.next_packet_id,
            flow_id: flow.spec.flow_id,
            size_bytes: size,
            service_class: flow.spec.class,
            created_ns: created,
            delivered_ns: None,
            vpon_id: flow.vpon.clone(),
        };
        self.next_packet_id += 1;
        self.flows[f].generated += 1;
        if self.opts.record_packets {
            self.packets.push(PacketRecord {
                packet_id: packet.packet_id,
                flow_id: packet.flow_id,
                onu_id: flow.spec.onu_id,
                vpon: flow.vpon.clone(),
                direction: flow.spec.direction,
                size_bytes: size,
                created_ns: created,
                delivered_ns: None,
            });
        }

        match flow.spec.direction {
            FlowDirection::Upstream => {
                let onu = self.onus.get_mut(&flow.spec.onu_id).expect("validated ONU");
                onu.state
                    .queue_mut(&flow.vpon)
                    .ok_or_else(|| {
                        Error::Invariant(format!(
                            "ONU {} has no queue on {}",
                            flow.spec.onu_id, flow.vpon
                        ))
                    })?
                    .push(packet);
            }
            FlowDirection::Downstream => {
                let down = self.onus[&flow.spec.onu_id].down_ns;
                let vp = &mut self.vpons[v];
                let done = vp.downstream_free_ns.max(self.now)
                    + tx_time_ns(u64::from(size), self.cfg.line_rate_bps);
                vp.downstream_free_ns = done;
                self.schedule(done + down, Ev::DownstreamDelivery(f, packet));
            }
        }

        if let Some(next) = self.flows[f].gen.peek() {
            if next < self.cfg.duration_ns {
                self.schedule(next, Ev::FlowArrival(f));
            }
        }
        Ok(())
    }

    fn on_join(&mut self, onu: OnuId) {
        if let Some(o) = self.onus.get_mut(&onu) {
            o.state.present = true;
        }
    }

    fn on_cycle(&mut self, v: usize) -> Result<()> {
        let now = self.now;
        let grants = self.vpons[v].dba.schedule_cycle(now);
        if grants.is_empty() {
            self.vpons[v].cycle_active = false;
            return Ok(());
        }
        self.vpons[v].outstanding_reports = grants.len();
        let gate_arrival = now + self.ctrl_ns;
        for g in &grants {
            let down = self.onus[&g.onu_id].down_ns;
            if self.opts.trace {
                let msg = MpcpMessage::Gate {
                    vpon_id: g.vpon_id.clone(),
                    grants: vec![g.clone()],
                };
                let detail = format!("start={} len={} bytes={}", g.start_ns, g.length_ns, g.bytes);
                self.log(now, g.vpon_id.as_str(), "down", &msg, detail);
            }
            self.schedule(gate_arrival + down, Ev::GateAtOnu(v, g.clone()));
        }
        self.vpons[v].grants.extend(grants);
        Ok(())
    }

    fn on_gate_at_onu(&mut self, v: usize, grant: Grant) -> Result<()> {
        let rtt = self.registry.rtt(grant.onu_id).ok_or_else(|| {
            Error::Invariant(format!(
                "GATE for unranged ONU {} on {}",
                grant.onu_id, grant.vpon_id
            ))
        })?;
        let (_, up) = Topology::one_way_split(rtt);
        let send_at = grant
            .start_ns
            .checked_sub(up)
            .filter(|&t| t >= self.now)
            .ok_or_else(|| {
                Error::Invariant(format!(
                    "GATE reached ONU {} at {} ns, after its transmit time for grant at {} ns",
                    grant.onu_id, self.now, grant.start_ns
                ))
            })?;
        self.schedule(send_at, Ev::BurstStartAtOnu(v, grant));
        Ok(())
    }

    fn on_burst_start_at_onu(&mut self, v: usize, grant: Grant) -> Result<()> {
        let rate = self.cfg.line_rate_bps;
        let onu = self
            .onus
            .get_mut(&grant.onu_id)
            .expect("granted ONU exists");
        if !onu.state.is_registered() {
            return Err(Error::Invariant(format!(
                "unregistered ONU {} transmitting",
                grant.onu_id
            )));
        }
        let arrival = self.now + onu.up_ns;
        if arrival != grant.start_ns {
            return Err(Error::Invariant(format!(
                "burst from ONU {} reaches OLT at {arrival} ns, grant starts at {} ns",
                grant.onu_id, grant.start_ns
            )));
        }
        let queue = onu.state.queue_mut(&grant.vpon_id).ok_or_else(|| {
            Error::Invariant(format!("ONU {} not on {}", grant.onu_id, grant.vpon_id))
        })?;
        let sent = queue.drain_fitting(grant.bytes - CONTROL_FRAME_BYTES);
        let report = queue.bytes();

        let mut offset = 0u64;
        let mut payload = Vec::with_capacity(sent.len());
        for p in sent {
            offset += u64::from(p.size_bytes);
            payload.push((p, arrival + tx_time_ns(offset, rate)));
        }
        if tx_time_ns(offset + CONTROL_FRAME_BYTES, rate) > grant.length_ns {
            return Err(Error::Invariant(format!(
                "ONU {} overran its grant",
                grant.onu_id
            )));
        }
        let end = grant.end_ns();
        let onu_id = grant.onu_id;
        self.schedule(arrival, Ev::BurstStartAtOlt(v, grant.clone()));
        self.schedule(end, Ev::BurstEndAtOlt(v, grant, payload));
        self.schedule(end, Ev::ReportAtOlt(v, onu_id, report));
        Ok(())
    }

    fn on_burst_start_at_olt(&mut self, v: usize, grant: Grant) -> Result<()> {
        let vp = &mut self.vpons[v];
        if self.now < vp.last_burst_end_ns {
            return Err(Error::Invariant(format!(
                "burst from ONU {} at {} ns overlaps previous burst ending {} ns on {}",
                grant.onu_id, self.now, vp.last_burst_end_ns, grant.vpon_id
            )));
        }
        if let Some(w) = vp
            .windows
            .iter()
            .find(|w| w.overlaps(grant.start_ns, grant.end_ns()))
        {
            return Err(Error::Invariant(format!(
                "data burst [{}, {}) intersects quiet window at {} ns on {}",
                grant.start_ns,
                grant.end_ns(),
                w.start_ns,
                grant.vpon_id
            )));
        }
        vp.last_burst_end_ns = grant.end_ns();
        Ok(())
    }

    fn on_burst_end_at_olt(
        &mut self,
        _v: usize,
        grant: Grant,
        payload: Vec<(Packet, Nanos)>,
    ) -> Result<()> {
        for (packet, at) in payload {
            let f = self.flow_index[&packet.flow_id];
            self.deliver(f, packet, at, Some(grant.start_ns))?;
        }
        Ok(())
    }

    fn deliver(
        &mut self,
        f: usize,
        mut packet: Packet,
        at: Nanos,
        grant_start: Option<Nanos>,
    ) -> Result<()> {
        let flow = &mut self.flows[f];
        if flow
            .last_delivered_id
            .is_some_and(|last| packet.packet_id <= last)
        {
            return Err(Error::Invariant(format!(
                "flow {} delivered packet {} out of order",
                packet.flow_id, packet.packet_id
            )));
        }
        let onu = &self.onus[&flow.onu];
        let prop = match flow.key.direction {
            FlowDirection::Upstream => onu.up_ns,
            FlowDirection::Downstream => onu.down_ns,
        };
        let floor = tx_time_ns(u64::from(packet.size_bytes), self.cfg.line_rate_bps) + prop;
        let windows = &self.vpons[flow.vpon].windows;
        let latency = record_delivery(
            &mut self.stats,
            &flow.key,
            &mut packet,
            at,
            grant_start,
            windows,
        )?;
        if latency < floor {
            return Err(Error::Invariant(format!(
                "packet {} latency {latency} ns below physical floor {floor} ns",
                packet.packet_id
            )));
        }
        flow.last_delivered_id = Some(packet.packet_id);
        flow.delivered += 1;
        if self.opts.record_packets {
            self.packets[packet.packet_id as usize].delivered_ns = Some(at);
        }
        Ok(())
    }

    fn on_report(&mut self, v: usize, onu: OnuId, queued_bytes: u64) -> Result<()> {
        let now = self.now;
        if self.opts.trace {
            let vpon_id = self.vpons[v].dba.vpon_id().clone();
            let msg = MpcpMessage::Report {
                vpon_id: vpon_id.clone(),
                onu_id: onu,
                queued_bytes,
            };
            self.log(
                now,
                vpon_id.as_str(),
                "up",
                &msg,
                format!("queued={queued_bytes}"),
            );
        }
        let vp = &mut self.vpons[v];
        vp.dba.on_report(onu, queued_bytes)?;
        vp.outstanding_reports = vp.outstanding_reports.saturating_sub(1);
        if vp.outstanding_reports == 0 {
            self.schedule(now, Ev::DbaCycleTimer(v));
        }
        Ok(())
    }

    fn on_discovery_start(&mut self) -> Result<()> {
        let now = self.now;
        let plan = &self.cfg.discovery;
        if now + plan.period_ns < self.cfg.duration_ns {
            self.schedule(now + plan.period_ns, Ev::DiscoveryWindowStart);
        }
        let d = self.discovery.as_mut().expect("discovery enabled");
        let v = d.vpon;
        let opened = olt_start_discovery(
            now,
            self.vpons[v].dba.t_avail_ns(),
            plan.window_ns,
            d.active,
        );
        let (msg, window) = match opened {
            Ok(x) => x,
            Err(Error::ContractViolation(reason)) => {
                let vpon = plan.domain.to_string();
                let msg = MpcpMessage::DiscoveryGate {
                    window_start_ns: now,
                    window_len_ns: plan.window_ns,
                };
                self.log(now, &vpon, "down", &msg, format!("rejected: {reason}"));
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        d.active = Some(window);
        d.gate_emission_ns = window.start_ns;
        d.pending.clear();
        self.vpons[v].dba.reserve_quiet_window(window)?;
        self.vpons[v].windows.push(window);
        let vpon = plan.domain.to_string();
        self.log(
            window.start_ns,
            &vpon,
            "down",
            &msg,
            format!("window=[{}, {})", window.start_ns, window.end_ns()),
        );

        let gate_done = window.start_ns + self.ctrl_ns;
        let listeners: Vec<(OnuId, Nanos)> = self
            .onus
            .iter()
            .filter(|(_, o)| !o.state.is_registered())
            .map(|(&id, o)| (id, o.down_ns))
            .collect();
        for (onu, down) in listeners {
            self.schedule(gate_done + down, Ev::DiscoveryGateAtOnu(onu, window));
        }
        self.schedule(window.end_ns(), Ev::DiscoveryWindowEnd);
        Ok(())
    }

    fn on_discovery_gate(&mut self, onu_id: OnuId, window: QuietWindow) {
        let max_delay = self.cfg.discovery.max_response_delay_ns;
        let onu = self.onus.get_mut(&onu_id).expect("listener exists");
        let gate = MpcpMessage::DiscoveryGate {
            window_start_ns: window.start_ns,
            window_len_ns: window.len_ns,
        };
        let Some(req) = onu_on_discovery_gate(&mut onu.state, &gate, max_delay, &mut onu.rng)
        else {
            return;
        };
        let MpcpMessage::RegisterReq {
            applied_delay_ns, ..
        } = req
        else {
            unreachable!("discovery gate answered with REGISTER_REQ");
        };
        let arrival = self.now + applied_delay_ns + onu.up_ns;
        let vpon = self.cfg.discovery.domain.to_string();
        let now = self.now;
        self.log(
            now + applied_delay_ns,
            &vpon,
            "up",
            &req,
            format!("delay={applied_delay_ns}"),
        );
        self.schedule(arrival, Ev::RegisterReqAtOlt(req));
    }

    fn on_register_req(&mut self, msg: MpcpMessage) -> Result<()> {
        let d = self.discovery.as_mut().expect("discovery enabled");
        let window = d.active.expect("request inside an open window");
        if self.now < window.start_ns || self.now + self.ctrl_ns > window.end_ns() {
            return Err(Error::Invariant(format!(
                "REGISTER_REQ burst at {} ns outside quiet window [{}, {})",
                self.now,
                window.start_ns,
                window.end_ns()
            )));
        }
        d.pending.push((self.now, msg));
        Ok(())
    }

    fn on_discovery_end(&mut self) -> Result<()> {
        let now = self.now;
        let d = self.discovery.as_mut().expect("discovery enabled");
        let pending = std::mem::take(&mut d.pending);
        let emission = d.gate_emission_ns;
        let arrivals: Vec<Nanos> = pending.iter().map(|(t, _)| *t).collect();
        let collided = detect_collisions(&arrivals, self.ctrl_ns);
        let vpon = self.cfg.discovery.domain.to_string();

        for (i, (arrival, req)) in pending.into_iter().enumerate() {
            let MpcpMessage::RegisterReq { onu_id, .. } = req else {
                unreachable!("only REGISTER_REQ is queued");
            };
            if collided.contains(&i) {
                self.collisions += 1;
                self.onus
                    .get_mut(&onu_id)
                    .expect("known ONU")
                    .state
                    .registration = Registration::Unregistered;
                if self.opts.trace {
                    self.trace.push(TraceRecord {
                        time_ns: arrival,
                        vpon: vpon.clone(),
                        direction: "up",
                        message_kind: "REGISTER_REQ",
                        onu_id: Some(onu_id),
                        detail: "collision".into(),
                    });
                }
                continue;
            }
            let reply =
                olt_on_register_req(emission, arrival, &req, self.ctrl_ns, &mut self.registry)?;
            let MpcpMessage::Register {
                measured_rtt_ns,
                llid,
                ..
            } = reply
            else {
                unreachable!("ranging answers with REGISTER");
            };
            let onu = self.onus.get_mut(&onu_id).expect("known ONU");
            onu.state.registration = Registration::Registered {
                llid,
                rtt_ns: measured_rtt_ns,
            };
            self.rangings.push(RangingRecord {
                onu_id,
                time_ns: now,
                measured_rtt_ns,
                true_rtt_ns: onu.rtt_ns,
            });
            self.log(
                now,
                &vpon,
                "down",
                &reply,
                format!("rtt={measured_rtt_ns} llid={llid}"),
            );
            self.log(
                now,
                &vpon,
                "up",
                &MpcpMessage::RegisterAck { onu_id },
                String::new(),
            );

            let updated = share_ranging(
                &self.registry,
                onu_id,
                self.vpons.iter_mut().map(|v| &mut v.dba),
            )?;
            for id in updated {
                let v = self.vpon_index[&id];
                if !self.vpons[v].cycle_active {
                    self.vpons[v].cycle_active = true;
                    self.schedule(now, Ev::DbaCycleTimer(v));
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunOutput> {
        // packets still queued at ONUs or in flight at SimEnd
        let mut residual: BTreeMap<FlowId, u64> = BTreeMap::new();
        for onu in self.onus.values() {
            for (_, q) in onu.state.queues() {
                for p in q.iter() {
                    *residual.entry(p.flow_id).or_default() += 1;
                }
            }
        }
        for item in self.queue.drain() {
            match item.event {
                Ev::BurstEndAtOlt(_, _, payload) => {
                    for (p, _) in payload {
                        *residual.entry(p.flow_id).or_default() += 1;
                    }
                }
                Ev::DownstreamDelivery(_, p) => *residual.entry(p.flow_id).or_default() += 1,
                _ => {}
            }
        }

        let mut counters = BTreeMap::new();
        for f in &self.flows {
            let id = f.key.flow;
            let left = residual.get(&id).copied().unwrap_or(0);
            if f.generated != f.delivered + left {
                return Err(Error::Invariant(format!(
                    "flow {id}: generated {} != delivered {} + residual {left}",
                    f.generated, f.delivered
                )));
            }
            self.stats.set_residual(id, left);
            counters.insert(
                id,
                FlowCounters {
                    generated: f.generated,
                    delivered: f.delivered,
                    residual: left,
                },
            );
        }

        let mut grants = BTreeMap::new();
        let mut quiet_windows = BTreeMap::new();
        for v in self.vpons {
            check_non_overlap(&v.grants, v.dba.config().guard_ns)?;
            let id = v.dba.vpon_id().clone();
            quiet_windows.insert(id.clone(), v.windows);
            grants.insert(id, v.grants);
        }

        self.trace.sort_by_key(|t| t.time_ns);

        Ok(RunOutput {
            name: self.cfg.name.clone(),
            mode: self.cfg.mode,
            seed: self.cfg.seed,
            stats: self.stats,
            grants,
            quiet_windows,
            rangings: self.rangings,
            register_collisions: self.collisions,
            flows: counters,
            trace: self.trace,
            packets: self.packets,
            events_processed: self.events,
        })
    }
}
