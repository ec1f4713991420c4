//! Physical tree: distances, splitter, wavelength plan and power budget.

use serde::{Deserialize, Serialize};

use crate::codes::{feasibility_check, FeasibilityVerdict, PenaltyTable};
use crate::error::{Error, Result};
use crate::ids::{Nanos, OnuId};

/// Longest supported OLT-to-ONU reach in meters.
pub const MAX_REACH_M: f64 = 40_000.0;
pub const DEFAULT_PROPAGATION_MPS: f64 = 2.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WavelengthPlan {
    pub upstream_nm: f64,
    pub downstream_nm: f64,
}

impl Default for WavelengthPlan {
    fn default() -> Self {
        WavelengthPlan {
            upstream_nm: 1260.0,
            downstream_nm: 1490.0,
        }
    }
}

impl WavelengthPlan {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.upstream_nm) {
            return Err(Error::config(
                "/wavelengths/upstream_nm",
                "must be positive",
            ));
        }
        if !positive(self.downstream_nm) {
            return Err(Error::config(
                "/wavelengths/downstream_nm",
                "must be positive",
            ));
        }
        if self.upstream_nm == self.downstream_nm {
            return Err(Error::config(
                "/wavelengths",
                "upstream and downstream wavelengths must differ",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnuSite {
    pub onu_id: OnuId,
    pub drop_m: f64,
    /// Power-on time. ONUs present at time 0 may be pre-ranged; later ones
    /// must go through discovery.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join_ns: Option<Nanos>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub feeder_m: f64,
    pub split_ratio: u32,
    pub onus: Vec<OnuSite>,
    #[serde(default = "default_propagation")]
    pub propagation_mps: f64,
}

fn default_propagation() -> f64 {
    DEFAULT_PROPAGATION_MPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if !(self.feeder_m.is_finite() && self.feeder_m >= 0.0) {
            return Err(Error::config(
                "/topology/feeder_m",
                "must be a finite length >= 0",
            ));
        }
        if self.split_ratio == 0 || !self.split_ratio.is_power_of_two() {
            return Err(Error::config(
                "/topology/split_ratio",
                "must be a power of two >= 1",
            ));
        }
        if !(self.propagation_mps.is_finite() && self.propagation_mps > 0.0) {
            return Err(Error::config(
                "/topology/propagation_mps",
                "must be positive",
            ));
        }
        if self.onus.is_empty() {
            return Err(Error::config(
                "/topology/onus",
                "at least one ONU is required",
            ));
        }
        if self.onus.len() > self.split_ratio as usize {
            return Err(Error::config(
                "/topology/onus",
                format!(
                    "{} ONUs exceed split ratio 1:{}",
                    self.onus.len(),
                    self.split_ratio
                ),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, onu) in self.onus.iter().enumerate() {
            if !(onu.drop_m.is_finite() && onu.drop_m >= 0.0) {
                return Err(Error::config(
                    format!("/topology/onus/{i}/drop_m"),
                    "must be a finite length >= 0",
                ));
            }
            if self.feeder_m + onu.drop_m > MAX_REACH_M {
                return Err(Error::config(
                    format!("/topology/onus/{i}/drop_m"),
                    format!(
                        "reach {} m exceeds {MAX_REACH_M} m",
                        self.feeder_m + onu.drop_m
                    ),
                ));
            }
            if !seen.insert(onu.onu_id) {
                return Err(Error::config(
                    format!("/topology/onus/{i}/onu_id"),
                    format!("duplicate ONU id {}", onu.onu_id),
                ));
            }
        }
        Ok(())
    }

    pub fn site(&self, onu_id: OnuId) -> Result<&OnuSite> {
        self.onus
            .iter()
            .find(|o| o.onu_id == onu_id)
            .ok_or_else(|| Error::NotFound(format!("ONU {onu_id}")))
    }

    /// Fiber distance OLT→ONU in meters.
    pub fn reach_m(&self, onu_id: OnuId) -> Result<f64> {
        Ok(self.feeder_m + self.site(onu_id)?.drop_m)
    }

    pub fn max_reach_m(&self) -> f64 {
        self.onus
            .iter()
            .map(|o| self.feeder_m + o.drop_m)
            .fold(0.0, f64::max)
    }

    /// Round-trip propagation time to `onu_id`, rounded to the nearest nanosecond.
    pub fn rtt(&self, onu_id: OnuId) -> Result<Nanos> {
        Ok(round_trip_ns(self.reach_m(onu_id)?, self.propagation_mps))
    }

    /// Splits a round trip into (downstream, upstream) one-way delays that sum to `rtt`.
    pub fn one_way_split(rtt: Nanos) -> (Nanos, Nanos) {
        let down = rtt / 2;
        (down, rtt - down)
    }

    pub fn path_loss_db(
        &self,
        budget: &PowerBudget,
        onu_id: OnuId,
        direction: Direction,
    ) -> Result<f64> {
        let km = self.reach_m(onu_id)? / 1000.0;
        let coeff = match direction {
            Direction::Up => budget.fiber_loss_db_per_km_up,
            Direction::Down => budget.fiber_loss_db_per_km_down,
        };
        let n = f64::from(self.split_ratio);
        Ok(coeff * km + 10.0 * n.log10() + budget.splitter_excess_db_per_stage * n.log2())
    }

    /// Worst upstream path loss over all ONUs.
    pub fn worst_upstream_loss_db(&self, budget: &PowerBudget) -> Result<f64> {
        self.onus
            .iter()
            .map(|o| self.path_loss_db(budget, o.onu_id, Direction::Up))
            .try_fold(f64::NEG_INFINITY, |acc, l| l.map(|l| acc.max(l)))
    }
}

pub fn round_trip_ns(reach_m: f64, propagation_mps: f64) -> Nanos {
    (2.0 * reach_m / propagation_mps * 1e9).round() as Nanos
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBudget {
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    #[serde(default = "default_up_coeff")]
    pub fiber_loss_db_per_km_up: f64,
    #[serde(default = "default_down_coeff")]
    pub fiber_loss_db_per_km_down: f64,
    #[serde(default = "default_excess")]
    pub splitter_excess_db_per_stage: f64,
}

fn default_up_coeff() -> f64 {
    0.35
}
fn default_down_coeff() -> f64 {
    0.25
}
fn default_excess() -> f64 {
    0.3
}

impl PowerBudget {
    pub fn new(tx_power_dbm: f64, rx_sensitivity_dbm: f64) -> Self {
        PowerBudget {
            tx_power_dbm,
            rx_sensitivity_dbm,
            fiber_loss_db_per_km_up: default_up_coeff(),
            fiber_loss_db_per_km_down: default_down_coeff(),
            splitter_excess_db_per_stage: default_excess(),
        }
    }

    pub fn budget_db(&self) -> f64 {
        self.tx_power_dbm - self.rx_sensitivity_dbm
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget_db().is_finite() && self.budget_db() > 0.0) {
            return Err(Error::config(
                "/budget",
                "tx_power_dbm - rx_sensitivity_dbm must be positive",
            ));
        }
        for (name, v) in [
            ("fiber_loss_db_per_km_up", self.fiber_loss_db_per_km_up),
            ("fiber_loss_db_per_km_down", self.fiber_loss_db_per_km_down),
            (
                "splitter_excess_db_per_stage",
                self.splitter_excess_db_per_stage,
            ),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("/budget/{name}"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuietWindowParams {
    pub max_reach_m: f64,
    pub t_proc_ns: Nanos,
}

impl QuietWindowParams {
    pub fn new(max_reach_m: f64, t_proc_ns: Nanos) -> Result<Self> {
        if !(max_reach_m.is_finite() && (0.0..=MAX_REACH_M).contains(&max_reach_m)) {
            return Err(Error::Validation(format!(
                "max reach {max_reach_m} m outside [0, {MAX_REACH_M}]"
            )));
        }
        Ok(QuietWindowParams {
            max_reach_m,
            t_proc_ns,
        })
    }
}

/// Discovery quiet-window length: worst-case round trip plus response overhead.
pub fn quiet_window(params: &QuietWindowParams, propagation_mps: f64) -> Nanos {
    round_trip_ns(params.max_reach_m, propagation_mps) + params.t_proc_ns
}

/// Feasibility of `pn_count` private networks at the worst-case ONU.
pub fn vpon_feasibility(
    topology: &Topology,
    budget: &PowerBudget,
    pn_count: u32,
    thresholder_enabled: bool,
    table: &PenaltyTable,
) -> Result<FeasibilityVerdict> {
    if topology.onus.is_empty() {
        return Err(Error::Validation("topology has no ONUs".into()));
    }
    let loss = topology.worst_upstream_loss_db(budget)?;
    Ok(feasibility_check(
        budget.budget_db(),
        loss,
        pn_count,
        thresholder_enabled,
        table,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(feeder_m: f64, split_ratio: u32, drops: &[f64]) -> Topology {
        Topology {
            feeder_m,
            split_ratio,
            onus: drops
                .iter()
                .enumerate()
                .map(|(i, &d)| OnuSite {
                    onu_id: OnuId(i as u32 + 1),
                    drop_m: d,
                    join_ns: None,
                })
                .collect(),
            propagation_mps: DEFAULT_PROPAGATION_MPS,
        }
    }

    #[test]
    fn rtt_examples() {
        let t = tree(15_000.0, 32, &[5_000.0, 0.0, 25_000.0]);
        assert_eq!(t.rtt(OnuId(1)).unwrap(), 200_000);
        assert_eq!(t.rtt(OnuId(3)).unwrap(), 400_000);
        let zero = tree(0.0, 1, &[0.0]);
        assert_eq!(zero.rtt(OnuId(1)).unwrap(), 0);
        assert!(matches!(t.rtt(OnuId(9)), Err(Error::NotFound(_))));
    }

    #[test]
    fn quiet_window_endpoints() {
        let v = DEFAULT_PROPAGATION_MPS;
        let q = |km: f64, t_proc: Nanos| {
            quiet_window(&QuietWindowParams::new(km * 1000.0, t_proc).unwrap(), v)
        };
        assert_eq!(q(20.0, 50_000), 250_000);
        assert_eq!(q(40.0, 50_000), 450_000);
        assert_eq!(q(20.0, 0), 200_000);
        assert!(QuietWindowParams::new(40_001.0, 0).is_err());
    }

    #[test]
    fn path_loss_examples() {
        let b = PowerBudget::new(4.0, -25.0);
        let t = tree(20_000.0, 32, &[0.0]);
        let up = t.path_loss_db(&b, OnuId(1), Direction::Up).unwrap();
        let down = t.path_loss_db(&b, OnuId(1), Direction::Down).unwrap();
        assert!((up - 23.551).abs() < 1e-3, "{up}");
        assert!((down - 21.551).abs() < 1e-3, "{down}");
        let p2p = tree(0.0, 1, &[0.0]);
        assert_eq!(p2p.path_loss_db(&b, OnuId(1), Direction::Up).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_at_worst_onu() {
        let b = PowerBudget::new(4.0, -25.0);
        let t = tree(15_000.0, 32, &[1_000.0, 5_000.0, 3_000.0]);
        let table = PenaltyTable::default();
        match vpon_feasibility(&t, &b, 2, false, &table).unwrap() {
            FeasibilityVerdict::Feasible { margin_db } => assert!((margin_db - 0.449).abs() < 1e-3),
            v => panic!("{v:?}"),
        }
        match vpon_feasibility(&t, &b, 3, false, &table).unwrap() {
            FeasibilityVerdict::Infeasible { deficit_db, .. } => {
                assert!((deficit_db - 4.551).abs() < 1e-3)
            }
            v => panic!("{v:?}"),
        }
        match vpon_feasibility(&t, &b, 4, false, &table).unwrap() {
            FeasibilityVerdict::Infeasible {
                thresholder_required,
                ..
            } => assert!(thresholder_required),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn validation_paths() {
        let mut t = tree(15_000.0, 32, &[5_000.0, 30_000.0]);
        match t.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/topology/onus/1/drop_m"),
            other => panic!("{other:?}"),
        }
        t.onus[1].drop_m = 1.0;
        t.onus[1].onu_id = OnuId(1);
        match t.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/topology/onus/1/onu_id"),
            other => panic!("{other:?}"),
        }
        t.onus[1].onu_id = OnuId(2);
        t.split_ratio = 24;
        assert!(t.validate().is_err());
        t.split_ratio = 32;
        t.validate().unwrap();
    }

    #[test]
    fn wavelength_defaults() {
        let w = WavelengthPlan::default();
        assert_eq!((w.upstream_nm, w.downstream_nm), (1260.0, 1490.0));
        w.validate().unwrap();
        let same = WavelengthPlan {
            upstream_nm: 1310.0,
            downstream_nm: 1310.0,
        };
        assert!(same.validate().is_err());
    }
}
