#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vponsim::scenario::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

/// Minimal two-VPON scenario: ONU `i` sits at `feeder + drops[i]` meters.
pub fn two_vpon(feeder_m: f64, drops: &[f64]) -> Value {
    let onus: Vec<Value> = drops
        .iter()
        .enumerate()
        .map(|(i, d)| json!({"onu_id": i + 1, "drop_m": d}))
        .collect();
    json!({
        "name": "t",
        "seed": 1,
        "sim_duration_ns": 20_000_000u64,
        "mode": "virtual",
        "topology": {"feeder_m": feeder_m, "split_ratio": 32, "onus": onus},
        "budget": {"tx_power_dbm": 10.0, "rx_sensitivity_dbm": -35.0},
        "codes": {"length": 13, "weight": 3, "lambda": 1},
        "vpons": [
            {"vpon_id": "llv", "class": "low_latency", "code_index": 0, "members": "all"},
            {"vpon_id": "hlv", "class": "high_latency", "code_index": 1, "members": "all"}
        ],
        "flows": []
    })
}

pub fn cbr_flow(flow_id: u32, onu: u32, period_ns: u64, bytes: u32) -> Value {
    json!({"flow_id": flow_id, "onu_id": onu, "class": "time_critical",
           "arrival": {"type": "cbr", "period_ns": period_ns}, "size": {"fixed": bytes}})
}

pub fn build(v: &Value) -> Scenario {
    Scenario::from_json(&v.to_string(), None).expect("test scenario is valid")
}
