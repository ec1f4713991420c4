//! Result files. Every write goes to a temporary file in the target
//! directory and is renamed into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::ComparisonReport;
use crate::ids::{FlowId, Nanos};
use crate::mpcp::TraceRecord;
use crate::scenario::{FeasibilityInfo, Scenario, ScenarioFile};
use crate::sim::{FlowCounters, Mode, RangingRecord, Resolution, RunOutput, StatsRow};

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Same path with the extension replaced by `json`.
pub fn json_sibling(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

pub fn trace_tsv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("time_ns\tvpon\tdirection\tmessage\tonu_id\tdetail\n");
    for t in trace {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// JSON mirror of a run's results with metadata and a parameter echo.
#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub scenario: &'a str,
    pub mode: Mode,
    pub seed: u64,
    pub version: &'static str,
    pub resolution: Resolution,
    pub quiet_window_ns: Nanos,
    pub feasibility: FeasibilityInfo,
    pub events_processed: u64,
    pub register_collisions: u64,
    pub rangings: &'a [RangingRecord],
    pub flows: &'a std::collections::BTreeMap<FlowId, FlowCounters>,
    pub rows: Vec<StatsRow>,
    pub parameters: &'a ScenarioFile,
}

impl<'a> RunReport<'a> {
    pub fn new(scenario: &'a Scenario, output: &'a RunOutput) -> Result<Self> {
        Ok(RunReport {
            scenario: &output.name,
            mode: output.mode,
            seed: output.seed,
            version: env!("CARGO_PKG_VERSION"),
            resolution: output.stats.resolution(),
            quiet_window_ns: scenario.quiet_window_ns,
            feasibility: scenario.feasibility(output.mode)?,
            events_processed: output.events_processed,
            register_collisions: output.register_collisions,
            rangings: &output.rangings,
            flows: &output.flows,
            rows: output.rows(),
            parameters: &scenario.file,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct CompareJson<'a> {
    pub version: &'static str,
    pub report: &'a ComparisonReport,
    pub parameters: &'a ScenarioFile,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Validation(format!("serializing results: {e}")))
}
