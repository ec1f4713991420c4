//! Scenario files: JSON schema, validation and per-mode resolution.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codes::{
    generate_ooc, validate_code_set, CodeSet, FeasibilityVerdict, Penalty, PenaltyTable,
};
use crate::dba::DbaConfig;
use crate::error::{Error, Result};
use crate::ids::{Nanos, OnuId, VponId};
use crate::mpcp::control_frame_ns;
use crate::sim::{
    segmentation_policy, Bootstrap, BoundFlow, DiscoveryPlan, FlowDirection, FlowSpec, Mode,
    ServiceClass, SimConfig, VponClass, VponSpec,
};
use crate::topology::{
    quiet_window, round_trip_ns, vpon_feasibility, PowerBudget, QuietWindowParams, Topology,
    WavelengthPlan,
};

/// Name of the single VPON that baseline mode collapses everything into.
pub const BASELINE_VPON: &str = "pon";

fn default_mode() -> Mode {
    Mode::Virtual
}

fn default_line_rate() -> u64 {
    1_000_000_000
}

fn default_post_thresholder() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub sim_duration_ns: Nanos,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_line_rate")]
    pub line_rate_bps: u64,
    pub topology: Topology,
    pub budget: BudgetSection,
    #[serde(default)]
    pub wavelengths: WavelengthPlan,
    pub codes: CodesSection,
    pub vpons: Vec<VponEntry>,
    #[serde(default)]
    pub dba: DbaConfig,
    /// Absent means no discovery windows at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discovery: Option<DiscoverySection>,
    /// Rescales upstream best-effort flows to this fraction of the line rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_effort_load: Option<f64>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub tx_power_dbm: f64,
    pub rx_sensitivity_dbm: f64,
    #[serde(default = "default_up_coeff")]
    pub fiber_loss_db_per_km_up: f64,
    #[serde(default = "default_down_coeff")]
    pub fiber_loss_db_per_km_down: f64,
    #[serde(default = "default_excess")]
    pub splitter_excess_db_per_stage: f64,
    #[serde(default)]
    pub thresholder_enabled: bool,
    #[serde(default = "default_post_thresholder")]
    pub post_thresholder_penalty_db: f64,
}

fn default_up_coeff() -> f64 {
    PowerBudget::new(0.0, 0.0).fiber_loss_db_per_km_up
}
fn default_down_coeff() -> f64 {
    PowerBudget::new(0.0, 0.0).fiber_loss_db_per_km_down
}
fn default_excess() -> f64 {
    PowerBudget::new(0.0, 0.0).splitter_excess_db_per_stage
}

impl BudgetSection {
    pub fn power_budget(&self) -> PowerBudget {
        PowerBudget {
            tx_power_dbm: self.tx_power_dbm,
            rx_sensitivity_dbm: self.rx_sensitivity_dbm,
            fiber_loss_db_per_km_up: self.fiber_loss_db_per_km_up,
            fiber_loss_db_per_km_down: self.fiber_loss_db_per_km_down,
            splitter_excess_db_per_stage: self.splitter_excess_db_per_stage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodesSection {
    pub length: u32,
    pub weight: u32,
    pub lambda: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Members {
    List(Vec<OnuId>),
    /// Only `"all"` is accepted.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VponEntry {
    pub vpon_id: VponId,
    pub class: VponClass,
    pub code_index: usize,
    pub members: Members,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dba: Option<DbaConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverySection {
    /// Zero disables discovery.
    pub period_ns: Nanos,
    /// First window; defaults to one period after start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_ns: Option<Nanos>,
    pub t_proc_ns: Nanos,
    pub domain: VponId,
    /// Reach the quiet window is sized for; defaults to the farthest ONU.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_reach_m: Option<f64>,
    #[serde(default)]
    pub bootstrap: Bootstrap,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub name: String,
    pub code_set: CodeSet,
    pub penalty_table: PenaltyTable,
    /// Resolved member lists, in file order.
    pub members: Vec<Vec<OnuId>>,
    /// Quiet-window length in ns, zero when discovery is disabled.
    pub quiet_window_ns: Nanos,
}

/// Feasibility of a mode's private-network count, echoed into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityInfo {
    pub pn_count: u32,
    pub penalty: Penalty,
    #[serde(flatten)]
    pub verdict: FeasibilityVerdict,
}

/// Reads, parses and validates a scenario, refusing infeasible VPON counts.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let scenario = load_scenario_unchecked(path)?;
    scenario.ensure_feasible(scenario.file.mode)?;
    Ok(scenario)
}

/// As [`load_scenario`] but leaves the feasibility gate to the caller.
pub fn load_scenario_unchecked(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let default_name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Scenario::from_json(&text, default_name.as_deref())
}

/// Turns a serde path into a JSON pointer.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1")))
            }
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

impl Scenario {
    pub fn from_json(text: &str, default_name: Option<&str>) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = json_pointer(e.path());
            Error::config(path, e.into_inner().to_string())
        })?;
        Scenario::new(file, default_name)
    }

    pub fn new(file: ScenarioFile, default_name: Option<&str>) -> Result<Scenario> {
        let name = file
            .name
            .clone()
            .or_else(|| default_name.map(str::to_string))
            .unwrap_or_else(|| "scenario".into());
        if name.is_empty() || name.contains([',', '\n', '"']) {
            return Err(Error::config(
                "/name",
                "must be non-empty without commas, quotes or newlines",
            ));
        }
        if file.sim_duration_ns == 0 {
            return Err(Error::config("/sim_duration_ns", "must be positive"));
        }
        if file.line_rate_bps == 0 {
            return Err(Error::config("/line_rate_bps", "must be positive"));
        }
        file.topology.validate()?;
        let budget = file.budget.power_budget();
        budget.validate()?;
        file.wavelengths.validate()?;
        let penalty_table = PenaltyTable::default()
            .with_post_thresholder_penalty(file.budget.post_thresholder_penalty_db)
            .map_err(|e| Error::config("/budget/post_thresholder_penalty_db", e.to_string()))?;

        let members = Self::check_vpons(&file)?;
        let code_set = Self::check_codes(&file)?;
        let quiet_window_ns = Self::check_discovery(&file)?;

        if let Some(load) = file.best_effort_load {
            if !(load.is_finite() && (0.0..=1.0).contains(&load)) {
                return Err(Error::config("/best_effort_load", "must lie in [0, 1]"));
            }
        }
        let mut flow_ids = BTreeSet::new();
        let onus: BTreeSet<OnuId> = file.topology.onus.iter().map(|o| o.onu_id).collect();
        for (i, f) in file.flows.iter().enumerate() {
            let path = format!("/flows/{i}");
            f.validate(&path)?;
            if !flow_ids.insert(f.flow_id) {
                return Err(Error::config(
                    format!("{path}/flow_id"),
                    format!("duplicate flow id {}", f.flow_id),
                ));
            }
            if !onus.contains(&f.onu_id) {
                return Err(Error::config(
                    format!("{path}/onu_id"),
                    format!("unknown ONU {}", f.onu_id),
                ));
            }
        }

        let scenario = Scenario {
            file,
            name,
            code_set,
            penalty_table,
            members,
            quiet_window_ns,
        };
        // every flow must map onto a VPON in the scenario's own mode
        scenario.resolve(scenario.file.mode)?;
        Ok(scenario)
    }

    fn check_vpons(file: &ScenarioFile) -> Result<Vec<Vec<OnuId>>> {
        if file.vpons.is_empty() {
            return Err(Error::config("/vpons", "at least one VPON is required"));
        }
        if file.mode == Mode::Virtual {
            let has = |c: VponClass| file.vpons.iter().any(|v| v.class == c);
            if file.vpons.len() < 2 || !has(VponClass::LowLatency) || !has(VponClass::HighLatency) {
                return Err(Error::config(
                    "/vpons",
                    "virtual mode needs at least two VPONs, one low_latency and one high_latency",
                ));
            }
        }
        let all: Vec<OnuId> = file.topology.onus.iter().map(|o| o.onu_id).collect();
        let known: BTreeSet<OnuId> = all.iter().copied().collect();
        let mut ids = BTreeSet::new();
        let mut codes = BTreeMap::new();
        let mut resolved = Vec::with_capacity(file.vpons.len());
        for (i, v) in file.vpons.iter().enumerate() {
            let path = format!("/vpons/{i}");
            if v.vpon_id.as_str().is_empty() || v.vpon_id.as_str().contains([',', '\n', '"']) {
                return Err(Error::config(format!("{path}/vpon_id"), "invalid VPON id"));
            }
            if !ids.insert(v.vpon_id.clone()) {
                return Err(Error::config(
                    format!("{path}/vpon_id"),
                    format!("duplicate VPON id {}", v.vpon_id),
                ));
            }
            if let Some(j) = codes.insert(v.code_index, i) {
                return Err(Error::config(
                    format!("{path}/code_index"),
                    format!("code index {} already used by /vpons/{j}", v.code_index),
                ));
            }
            let list = match &v.members {
                Members::Keyword(k) if k == "all" => all.clone(),
                Members::Keyword(k) => {
                    return Err(Error::config(
                        format!("{path}/members"),
                        format!("expected a list or \"all\", got {k:?}"),
                    ));
                }
                Members::List(list) => {
                    let mut seen = BTreeSet::new();
                    for (j, m) in list.iter().enumerate() {
                        if !known.contains(m) {
                            return Err(Error::config(
                                format!("{path}/members/{j}"),
                                format!("unknown ONU {m}"),
                            ));
                        }
                        if !seen.insert(*m) {
                            return Err(Error::config(
                                format!("{path}/members/{j}"),
                                format!("duplicate ONU {m}"),
                            ));
                        }
                    }
                    list.clone()
                }
            };
            if list.is_empty() {
                return Err(Error::config(
                    format!("{path}/members"),
                    "a VPON needs at least one member",
                ));
            }
            if let Some(dba) = &v.dba {
                check_dba(dba, &format!("{path}/dba"))?;
            }
            resolved.push(list);
        }
        check_dba(&file.dba, "/dba")?;
        Ok(resolved)
    }

    fn check_codes(file: &ScenarioFile) -> Result<CodeSet> {
        let c = file.codes;
        let needed = file
            .vpons
            .iter()
            .map(|v| v.code_index + 1)
            .max()
            .unwrap_or(1);
        let set =
            generate_ooc(c.length, c.weight, c.lambda, needed, c.seed).map_err(|e| match e {
                Error::CapacityExceeded { requested, found } => Error::config(
                    "/codes",
                    format!(
                        "code_index needs {requested} codewords but ({}, {}, {}) yields {found}",
                        c.length, c.weight, c.lambda
                    ),
                ),
                other => Error::config("/codes", other.to_string()),
            })?;
        let report = validate_code_set(&set).map_err(|e| Error::config("/codes", e.to_string()))?;
        if !report.ok {
            return Err(Error::config(
                "/codes",
                "generated code set failed correlation validation",
            ));
        }
        Ok(set)
    }

    fn check_discovery(file: &ScenarioFile) -> Result<Nanos> {
        let needs_discovery = file
            .topology
            .onus
            .iter()
            .any(|o| o.join_ns.is_some_and(|t| t > 0));
        let Some(d) = file.discovery.as_ref().filter(|d| d.period_ns > 0) else {
            let discover = file
                .discovery
                .as_ref()
                .is_some_and(|d| d.bootstrap == Bootstrap::Discover);
            if needs_discovery || discover {
                return Err(Error::config(
                    "/discovery/period_ns",
                    "ONUs must register through discovery but discovery is disabled",
                ));
            }
            return Ok(0);
        };
        if !file.vpons.iter().any(|v| v.vpon_id == d.domain) {
            return Err(Error::config(
                "/discovery/domain",
                format!("unknown VPON {}", d.domain),
            ));
        }
        if file.mode == Mode::Virtual {
            let domain = file
                .vpons
                .iter()
                .find(|v| v.vpon_id == d.domain)
                .expect("checked above");
            if domain.class != VponClass::HighLatency {
                return Err(Error::config(
                    "/discovery/domain",
                    "discovery must run on a high_latency VPON",
                ));
            }
        }
        let ctrl = control_frame_ns(file.line_rate_bps);
        if d.t_proc_ns < 2 * ctrl {
            return Err(Error::config(
                "/discovery/t_proc_ns",
                format!("must cover the gate and request frames ({} ns)", 2 * ctrl),
            ));
        }
        let farthest = file.topology.max_reach_m();
        let reach = d.max_reach_m.unwrap_or(farthest);
        let params = QuietWindowParams::new(reach, d.t_proc_ns)
            .map_err(|e| Error::config("/discovery/max_reach_m", e.to_string()))?;
        let prop = file.topology.propagation_mps;
        if round_trip_ns(reach, prop) < round_trip_ns(farthest, prop) {
            return Err(Error::config(
                "/discovery/max_reach_m",
                format!("quiet window sized for {reach} m is shorter than the RTT of an ONU at {farthest} m"),
            ));
        }
        let window = quiet_window(&params, prop);
        if d.period_ns <= window {
            return Err(Error::config(
                "/discovery/period_ns",
                format!("must exceed the {window} ns quiet window"),
            ));
        }
        Ok(window)
    }

    /// Number of private networks (codes) active on the tree in `mode`.
    pub fn pn_count(&self, mode: Mode) -> u32 {
        match mode {
            Mode::Baseline => 1,
            Mode::Virtual => self.file.vpons.len() as u32,
        }
    }

    pub fn feasibility(&self, mode: Mode) -> Result<FeasibilityInfo> {
        let pn_count = self.pn_count(mode);
        let verdict = vpon_feasibility(
            &self.file.topology,
            &self.file.budget.power_budget(),
            pn_count,
            self.file.budget.thresholder_enabled,
            &self.penalty_table,
        )?;
        Ok(FeasibilityInfo {
            pn_count,
            penalty: self.penalty_table.penalty_interval(pn_count),
            verdict,
        })
    }

    /// Fails with [`Error::Feasibility`] when `mode` cannot close the power budget.
    pub fn ensure_feasible(&self, mode: Mode) -> Result<FeasibilityInfo> {
        let info = self.feasibility(mode)?;
        match info.verdict {
            FeasibilityVerdict::Infeasible {
                deficit_db,
                thresholder_required,
            } => Err(Error::Feasibility {
                pn_count: info.pn_count as usize,
                deficit_db,
                thresholder_required,
            }),
            _ => Ok(info),
        }
    }

    /// Upstream best-effort flows rescaled to `load` of the line rate.
    /// Load zero removes them.
    pub fn with_best_effort_load(&self, load: f64) -> Result<Scenario> {
        if !(load.is_finite() && (0.0..=1.0).contains(&load)) {
            return Err(Error::config(
                "/best_effort_load",
                format!("load {load} outside [0, 1]"),
            ));
        }
        let is_be = |f: &FlowSpec| {
            f.class == ServiceClass::BestEffort && f.direction == FlowDirection::Upstream
        };
        let current: f64 = self
            .file
            .flows
            .iter()
            .filter(|f| is_be(f))
            .map(FlowSpec::mean_bit_rate_bps)
            .sum();
        let mut file = self.file.clone();
        file.best_effort_load = None;
        if load == 0.0 {
            file.flows.retain(|f| !is_be(f));
        } else {
            if current <= 0.0 {
                return Err(Error::config(
                    "/flows",
                    "no upstream best_effort flows to scale",
                ));
            }
            let factor = load * self.file.line_rate_bps as f64 / current;
            for f in file.flows.iter_mut().filter(|f| is_be(f)) {
                f.arrival = f.arrival.scaled(factor);
            }
        }
        let mut out = self.clone();
        out.file = file;
        Ok(out)
    }

    /// Simulation input for `mode`. Baseline collapses all VPONs into one
    /// channel named [`BASELINE_VPON`] that also hosts discovery.
    pub fn resolve(&self, mode: Mode) -> Result<SimConfig> {
        let scaled;
        let s = match self.file.best_effort_load {
            Some(load) => {
                scaled = self.with_best_effort_load(load)?;
                &scaled
            }
            None => self,
        };
        let file = &s.file;

        let vpons: Vec<VponSpec> = match mode {
            Mode::Virtual => file
                .vpons
                .iter()
                .zip(&s.members)
                .map(|(v, m)| VponSpec {
                    id: v.vpon_id.clone(),
                    class: v.class,
                    members: m.clone(),
                    dba: v.dba.unwrap_or(file.dba),
                })
                .collect(),
            Mode::Baseline => {
                let all: BTreeSet<OnuId> = s.members.iter().flatten().copied().collect();
                vec![VponSpec {
                    id: VponId::new(BASELINE_VPON),
                    class: VponClass::HighLatency,
                    members: all.into_iter().collect(),
                    dba: file.dba,
                }]
            }
        };

        let discovery = match &file.discovery {
            Some(d) if d.period_ns > 0 => {
                let ctrl = control_frame_ns(file.line_rate_bps);
                DiscoveryPlan {
                    domain: match mode {
                        Mode::Virtual => d.domain.clone(),
                        Mode::Baseline => VponId::new(BASELINE_VPON),
                    },
                    period_ns: d.period_ns,
                    first_ns: d.first_ns.unwrap_or(d.period_ns),
                    window_ns: s.quiet_window_ns,
                    max_response_delay_ns: d.t_proc_ns - 2 * ctrl,
                    bootstrap: d.bootstrap,
                }
            }
            other => DiscoveryPlan {
                domain: match mode {
                    Mode::Virtual => other
                        .as_ref()
                        .map(|d| d.domain.clone())
                        .unwrap_or_else(|| file.vpons[0].vpon_id.clone()),
                    Mode::Baseline => VponId::new(BASELINE_VPON),
                },
                period_ns: 0,
                first_ns: 0,
                window_ns: 0,
                max_response_delay_ns: 0,
                bootstrap: Bootstrap::Preranged,
            },
        };

        let mut flows = Vec::with_capacity(file.flows.len());
        for (i, f) in file.flows.iter().enumerate() {
            let mut spec = f.clone();
            if mode == Mode::Baseline {
                spec.vpon = None;
            }
            let vpon = segmentation_policy(&spec, &vpons, mode, &format!("/flows/{i}"))?;
            flows.push(BoundFlow { spec, vpon });
        }

        Ok(SimConfig {
            name: s.name.clone(),
            mode,
            seed: file.seed,
            duration_ns: file.sim_duration_ns,
            line_rate_bps: file.line_rate_bps,
            topology: file.topology.clone(),
            vpons,
            discovery,
            flows,
        })
    }
}

fn check_dba(dba: &DbaConfig, path: &str) -> Result<()> {
    if dba.w_max_bytes < 64 {
        return Err(Error::config(
            format!("{path}/w_max_bytes"),
            "must hold at least one 64-byte frame",
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "name": "t",
            "seed": 1,
            "sim_duration_ns": 10_000_000u64,
            "topology": {
                "feeder_m": 15000.0,
                "split_ratio": 32,
                "onus": [{"onu_id": 1, "drop_m": 5000.0}, {"onu_id": 2, "drop_m": 1000.0}]
            },
            "budget": {"tx_power_dbm": 4.0, "rx_sensitivity_dbm": -25.0},
            "codes": {"length": 13, "weight": 3, "lambda": 1},
            "vpons": [
                {"vpon_id": "llv", "class": "low_latency", "code_index": 0, "members": "all"},
                {"vpon_id": "hlv", "class": "high_latency", "code_index": 1, "members": [1, 2]}
            ],
            "discovery": {"period_ns": 5_000_000u64, "t_proc_ns": 50_000u64, "domain": "hlv"},
            "flows": [
                {"flow_id": 1, "onu_id": 1, "class": "time_critical",
                 "arrival": {"type": "cbr", "period_ns": 1_000_000u64}, "size": {"fixed": 1000}},
                {"flow_id": 2, "onu_id": 2, "class": "best_effort",
                 "arrival": {"type": "poisson", "rate_pps": 1000.0}, "size": {"fixed": 1500}}
            ]
        })
    }

    fn load(v: &serde_json::Value) -> Result<Scenario> {
        Scenario::from_json(&v.to_string(), None)
    }

    fn config_path(r: Result<Scenario>) -> String {
        match r {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn happy_path_and_quiet_window() {
        let s = load(&base()).unwrap();
        assert_eq!(s.quiet_window_ns, 250_000);
        assert_eq!(s.members[0], vec![OnuId(1), OnuId(2)]);
        let cfg = s.resolve(Mode::Virtual).unwrap();
        assert_eq!(cfg.flows[0].vpon, VponId::new("llv"));
        assert_eq!(cfg.flows[1].vpon, VponId::new("hlv"));
        assert_eq!(cfg.discovery.max_response_delay_ns, 50_000 - 1_024);
    }

    #[test]
    fn baseline_collapses() {
        let cfg = load(&base()).unwrap().resolve(Mode::Baseline).unwrap();
        assert_eq!(cfg.vpons.len(), 1);
        assert_eq!(cfg.vpons[0].id, VponId::new(BASELINE_VPON));
        assert!(cfg.flows.iter().all(|f| f.vpon.as_str() == BASELINE_VPON));
        assert_eq!(cfg.discovery.domain, VponId::new(BASELINE_VPON));
    }

    #[test]
    fn single_vpon_virtual_is_rejected_at_vpons() {
        let mut v = base();
        v["vpons"].as_array_mut().unwrap().pop();
        v["discovery"]["domain"] = "llv".into();
        assert_eq!(config_path(load(&v)), "/vpons");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let mut v = base();
        v["topology"]["onus"][1]["drop_m"] = "far".into();
        assert_eq!(config_path(load(&v)), "/topology/onus/1/drop_m");

        let mut v = base();
        v["flows"][0]["size"] = serde_json::json!({"fixed": 20});
        assert_eq!(config_path(load(&v)), "/flows/0/size");

        let mut v = base();
        v["vpons"][1]["members"] = serde_json::json!([1, 7]);
        assert_eq!(config_path(load(&v)), "/vpons/1/members/1");

        let mut v = base();
        v["vpons"][1]["code_index"] = 0.into();
        assert_eq!(config_path(load(&v)), "/vpons/1/code_index");

        let mut v = base();
        v["vpons"][1]["code_index"] = 2.into();
        assert_eq!(config_path(load(&v)), "/codes");
    }

    #[test]
    fn non_member_flow_is_a_load_error() {
        let mut v = base();
        v["vpons"][0]["members"] = serde_json::json!([2]);
        assert_eq!(config_path(load(&v)), "/flows/0");
    }

    #[test]
    fn three_pns_at_29_db_are_infeasible() {
        let mut v = base();
        v["topology"]["onus"][0]["drop_m"] = 5000.0.into();
        v["vpons"].as_array_mut().unwrap().push(serde_json::json!(
            {"vpon_id": "x", "class": "high_latency", "code_index": 2, "members": [1]}
        ));
        v["codes"] = serde_json::json!({"length": 25, "weight": 3, "lambda": 1});
        let s = load(&v).unwrap();
        match s.ensure_feasible(Mode::Virtual) {
            Err(Error::Feasibility {
                pn_count,
                deficit_db,
                ..
            }) => {
                assert_eq!(pn_count, 3);
                assert!((deficit_db - 4.551).abs() < 1e-3, "{deficit_db}");
            }
            other => panic!("{other:?}"),
        }
        assert!(s.ensure_feasible(Mode::Baseline).is_ok());
    }

    #[test]
    fn best_effort_scaling_hits_target_load() {
        let s = load(&base()).unwrap();
        let scaled = s.with_best_effort_load(0.3).unwrap();
        let be: f64 = scaled
            .file
            .flows
            .iter()
            .filter(|f| f.class == ServiceClass::BestEffort)
            .map(FlowSpec::mean_bit_rate_bps)
            .sum();
        assert!((be - 0.3e9).abs() < 1e-3);
        let none = s.with_best_effort_load(0.0).unwrap();
        assert_eq!(none.file.flows.len(), 1);
    }

    #[test]
    fn late_joiner_without_discovery_is_rejected() {
        let mut v = base();
        v.as_object_mut().unwrap().remove("discovery");
        v["topology"]["onus"][1]["join_ns"] = 1000.into();
        assert_eq!(config_path(load(&v)), "/discovery/period_ns");
    }
}
