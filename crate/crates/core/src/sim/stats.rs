use std::collections::BTreeMap;

use serde::Serialize;

use super::traffic::{FlowDirection, Packet, ServiceClass};
use crate::error::{Error, Result};
use crate::ids::{FlowId, Nanos, VponId};
use crate::mpcp::QuietWindow;

/// Histogram bin width used once the expected sample count exceeds
/// [`EXACT_SAMPLE_LIMIT`].
pub const HISTOGRAM_BIN_NS: Nanos = 100;
pub const EXACT_SAMPLE_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Exact,
    Histogram100Ns,
}

#[derive(Debug, Clone)]
enum Samples {
    Exact(Vec<Nanos>),
    /// bin index -> count, bin `i` covers `[i*100, (i+1)*100)` ns
    Histogram(BTreeMap<Nanos, u64>),
}

#[derive(Debug, Clone)]
pub struct LatencyRecorder {
    samples: Samples,
    count: u64,
    sum: u128,
    max: Nanos,
    quiet_window_hits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub packets: u64,
    pub mean_ns: f64,
    pub p50_ns: Nanos,
    pub p99_ns: Nanos,
    pub p999_ns: Nanos,
    pub max_ns: Nanos,
    pub quiet_window_hits: u64,
}

impl LatencyRecorder {
    pub fn new(resolution: Resolution) -> Self {
        LatencyRecorder {
            samples: match resolution {
                Resolution::Exact => Samples::Exact(Vec::new()),
                Resolution::Histogram100Ns => Samples::Histogram(BTreeMap::new()),
            },
            count: 0,
            sum: 0,
            max: 0,
            quiet_window_hits: 0,
        }
    }

    pub fn add(&mut self, latency_ns: Nanos, quiet_window_hit: bool) {
        match &mut self.samples {
            Samples::Exact(v) => v.push(latency_ns),
            Samples::Histogram(h) => *h.entry(latency_ns / HISTOGRAM_BIN_NS).or_default() += 1,
        }
        self.count += 1;
        self.sum += u128::from(latency_ns);
        self.max = self.max.max(latency_ns);
        self.quiet_window_hits += u64::from(quiet_window_hit);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn merge(&mut self, other: &LatencyRecorder) {
        match (&mut self.samples, &other.samples) {
            (Samples::Exact(a), Samples::Exact(b)) => a.extend_from_slice(b),
            (Samples::Histogram(a), Samples::Histogram(b)) => {
                for (&bin, &c) in b {
                    *a.entry(bin).or_default() += c;
                }
            }
            _ => unreachable!("recorders of one run share a resolution"),
        }
        self.count += other.count;
        self.sum += other.sum;
        self.max = self.max.max(other.max);
        self.quiet_window_hits += other.quiet_window_hits;
    }

    /// Nearest-rank percentiles. Histogram percentiles report the upper bin
    /// edge, capped at the exact maximum.
    pub fn summary(&self) -> Summary {
        if self.count == 0 {
            return Summary {
                packets: 0,
                mean_ns: 0.0,
                p50_ns: 0,
                p99_ns: 0,
                p999_ns: 0,
                max_ns: 0,
                quiet_window_hits: self.quiet_window_hits,
            };
        }
        let rank = |p: f64| ((p * self.count as f64).ceil() as u64).clamp(1, self.count);
        let [p50, p99, p999] = match &self.samples {
            Samples::Exact(v) => {
                let mut sorted = v.clone();
                sorted.sort_unstable();
                [0.50, 0.99, 0.999].map(|p| sorted[(rank(p) - 1) as usize])
            }
            Samples::Histogram(h) => [0.50, 0.99, 0.999].map(|p| {
                let target = rank(p);
                let mut seen = 0;
                let mut edge = self.max;
                for (&bin, &c) in h {
                    seen += c;
                    if seen >= target {
                        edge = ((bin + 1) * HISTOGRAM_BIN_NS - 1).min(self.max);
                        break;
                    }
                }
                edge
            }),
        };
        Summary {
            packets: self.count,
            mean_ns: self.sum as f64 / self.count as f64,
            p50_ns: p50,
            p99_ns: p99,
            p999_ns: p999,
            max_ns: self.max,
            quiet_window_hits: self.quiet_window_hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatsKey {
    pub vpon: VponId,
    pub class: ServiceClass,
    pub direction: FlowDirection,
    pub flow: FlowId,
}

/// Per-(VPON, class, flow) latency accounting for one run.
#[derive(Debug, Clone)]
pub struct LatencyStats {
    resolution: Resolution,
    recorders: BTreeMap<StatsKey, LatencyRecorder>,
    residual: BTreeMap<FlowId, u64>,
}

impl LatencyStats {
    pub fn new(resolution: Resolution) -> Self {
        LatencyStats {
            resolution,
            recorders: BTreeMap::new(),
            residual: BTreeMap::new(),
        }
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Registers a flow so it is reported even when nothing is delivered.
    pub fn register_flow(&mut self, key: StatsKey) {
        self.residual.entry(key.flow).or_insert(0);
        self.recorders
            .entry(key)
            .or_insert_with(|| LatencyRecorder::new(self.resolution));
    }

    pub fn set_residual(&mut self, flow: FlowId, packets: u64) {
        self.residual.insert(flow, packets);
    }

    pub fn residual(&self, flow: FlowId) -> u64 {
        self.residual.get(&flow).copied().unwrap_or(0)
    }

    pub fn recorder(&self, key: &StatsKey) -> Option<&LatencyRecorder> {
        self.recorders.get(key)
    }

    pub fn recorders(&self) -> impl Iterator<Item = (&StatsKey, &LatencyRecorder)> {
        self.recorders.iter()
    }

    /// All flows of `class` on `vpon` in `direction` merged into one recorder.
    pub fn aggregate(
        &self,
        vpon: &VponId,
        class: ServiceClass,
        direction: FlowDirection,
    ) -> LatencyRecorder {
        let mut agg = LatencyRecorder::new(self.resolution);
        for (k, r) in &self.recorders {
            if &k.vpon == vpon && k.class == class && k.direction == direction {
                agg.merge(r);
            }
        }
        agg
    }

    /// All flows of `class` in `direction`, across VPONs.
    pub fn class_aggregate(
        &self,
        class: ServiceClass,
        direction: FlowDirection,
    ) -> LatencyRecorder {
        let mut agg = LatencyRecorder::new(self.resolution);
        for (k, r) in &self.recorders {
            if k.class == class && k.direction == direction {
                agg.merge(r);
            }
        }
        agg
    }

    fn groups(&self) -> Vec<(VponId, ServiceClass, FlowDirection)> {
        let groups: std::collections::BTreeSet<_> = self
            .recorders
            .keys()
            .map(|k| (k.vpon.clone(), k.class, k.direction))
            .collect();
        groups.into_iter().collect()
    }

    /// Result rows: one per flow, then one aggregate per (VPON, class, direction)
    /// labelled `all` (upstream) or `all_down` (downstream).
    pub fn rows(&self, scenario: &str, mode: &str) -> Vec<StatsRow> {
        let mut rows = Vec::new();
        for (k, r) in &self.recorders {
            rows.push(StatsRow::new(
                scenario,
                mode,
                &k.vpon,
                k.class,
                k.flow.to_string(),
                r.summary(),
                self.residual(k.flow),
            ));
        }
        for (vpon, class, direction) in self.groups() {
            let agg = self.aggregate(&vpon, class, direction);
            let residual = self
                .recorders
                .keys()
                .filter(|k| k.vpon == vpon && k.class == class && k.direction == direction)
                .map(|k| self.residual(k.flow))
                .sum();
            let label = match direction {
                FlowDirection::Upstream => "all",
                FlowDirection::Downstream => "all_down",
            };
            rows.push(StatsRow::new(
                scenario,
                mode,
                &vpon,
                class,
                label.to_string(),
                agg.summary(),
                residual,
            ));
        }
        rows
    }
}

/// Records a delivered packet. The quiet-window test covers the packet's
/// wait `[created, grant_start)` against windows reserved on its VPON.
pub fn record_delivery(
    stats: &mut LatencyStats,
    key: &StatsKey,
    packet: &mut Packet,
    now_ns: Nanos,
    grant_start_ns: Option<Nanos>,
    windows: &[QuietWindow],
) -> Result<Nanos> {
    if packet.delivered_ns.is_some() {
        return Err(Error::ContractViolation(format!(
            "packet {} of flow {} delivered twice",
            packet.packet_id, packet.flow_id
        )));
    }
    let latency = now_ns.checked_sub(packet.created_ns).ok_or_else(|| {
        Error::ContractViolation(format!(
            "packet {} delivered before creation",
            packet.packet_id
        ))
    })?;
    packet.delivered_ns = Some(now_ns);
    let hit =
        grant_start_ns.is_some_and(|gs| windows.iter().any(|w| w.overlaps(packet.created_ns, gs)));
    stats
        .recorders
        .entry(key.clone())
        .or_insert_with(|| LatencyRecorder::new(stats.resolution))
        .add(latency, hit);
    Ok(latency)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub scenario: String,
    pub mode: String,
    pub vpon: String,
    pub class: ServiceClass,
    pub flow_id: String,
    #[serde(flatten)]
    pub summary: Summary,
    pub residual_queued: u64,
}

impl StatsRow {
    fn new(
        scenario: &str,
        mode: &str,
        vpon: &VponId,
        class: ServiceClass,
        flow_id: String,
        summary: Summary,
        residual_queued: u64,
    ) -> Self {
        StatsRow {
            scenario: scenario.to_string(),
            mode: mode.to_string(),
            vpon: vpon.to_string(),
            class,
            flow_id,
            summary,
            residual_queued,
        }
    }

    pub const CSV_HEADER: &'static str = "scenario,mode,vpon,class,flow_id,packets,mean_ns,p50_ns,p99_ns,p999_ns,max_ns,quiet_window_hits,residual_queued";

    pub fn to_csv(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{},{},{},{},{:.3},{},{},{},{},{},{}",
            self.scenario,
            self.mode,
            self.vpon,
            self.class.as_str(),
            self.flow_id,
            s.packets,
            s.mean_ns,
            s.p50_ns,
            s.p99_ns,
            s.p999_ns,
            s.max_ns,
            s.quiet_window_hits,
            self.residual_queued
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(created: Nanos) -> Packet {
        Packet {
            packet_id: created,
            flow_id: FlowId(1),
            size_bytes: 64,
            service_class: ServiceClass::TimeCritical,
            created_ns: created,
            delivered_ns: None,
            vpon_id: VponId::new("pon"),
        }
    }

    fn key() -> StatsKey {
        StatsKey {
            vpon: VponId::new("pon"),
            class: ServiceClass::TimeCritical,
            direction: FlowDirection::Upstream,
            flow: FlowId(1),
        }
    }

    #[test]
    fn mean_and_max_of_three() {
        let mut stats = LatencyStats::new(Resolution::Exact);
        for (c, lat) in [(0, 1_000), (10, 2_000), (20, 9_000)] {
            let mut p = packet(c);
            record_delivery(&mut stats, &key(), &mut p, c + lat, None, &[]).unwrap();
        }
        let s = stats.recorder(&key()).unwrap().summary();
        assert_eq!(s.packets, 3);
        assert_eq!(s.mean_ns, 4_000.0);
        assert_eq!(s.max_ns, 9_000);
        assert_eq!(s.p50_ns, 2_000);
        assert!(s.p50_ns <= s.p99_ns && s.p99_ns <= s.p999_ns && s.p999_ns <= s.max_ns);
    }

    #[test]
    fn double_delivery_is_rejected() {
        let mut stats = LatencyStats::new(Resolution::Exact);
        let mut p = packet(0);
        record_delivery(&mut stats, &key(), &mut p, 10, None, &[]).unwrap();
        assert!(matches!(
            record_delivery(&mut stats, &key(), &mut p, 20, None, &[]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn quiet_window_hit_accounting() {
        let windows = [QuietWindow {
            start_ns: 1_000,
            len_ns: 500,
        }];
        let mut stats = LatencyStats::new(Resolution::Exact);
        // created mid-window
        let mut a = packet(1_200);
        record_delivery(&mut stats, &key(), &mut a, 3_000, Some(2_000), &windows).unwrap();
        // waited across the window
        let mut b = packet(500);
        record_delivery(&mut stats, &key(), &mut b, 3_000, Some(2_000), &windows).unwrap();
        // granted before the window opened
        let mut c = packet(100);
        record_delivery(&mut stats, &key(), &mut c, 900, Some(800), &windows).unwrap();
        // no windows at all
        let mut d = packet(1_200);
        record_delivery(&mut stats, &key(), &mut d, 3_000, Some(2_000), &[]).unwrap();
        assert_eq!(
            stats.recorder(&key()).unwrap().summary().quiet_window_hits,
            2
        );
    }

    #[test]
    fn histogram_percentiles_bound_exact_ones() {
        let mut exact = LatencyRecorder::new(Resolution::Exact);
        let mut hist = LatencyRecorder::new(Resolution::Histogram100Ns);
        for i in 0..10_000u64 {
            let v = (i * 7_919) % 123_457;
            exact.add(v, false);
            hist.add(v, false);
        }
        let (e, h) = (exact.summary(), hist.summary());
        assert_eq!(e.mean_ns, h.mean_ns);
        assert_eq!(e.max_ns, h.max_ns);
        for (x, y) in [
            (e.p50_ns, h.p50_ns),
            (e.p99_ns, h.p99_ns),
            (e.p999_ns, h.p999_ns),
        ] {
            assert!(y >= x && y - x < HISTOGRAM_BIN_NS, "{x} {y}");
        }
    }

    #[test]
    fn csv_row_format() {
        let mut stats = LatencyStats::new(Resolution::Exact);
        let mut p = packet(0);
        record_delivery(&mut stats, &key(), &mut p, 1_500, None, &[]).unwrap();
        stats.set_residual(FlowId(1), 2);
        let rows = stats.rows("ref", "baseline");
        assert_eq!(rows.len(), 2);
        assert_eq!(
            rows[0].to_csv(),
            "ref,baseline,pon,time_critical,1,1,1500.000,1500,1500,1500,1500,0,2"
        );
        assert_eq!(rows[1].flow_id, "all");
        assert_eq!(StatsRow::CSV_HEADER.split(',').count(), 13);
    }
}
