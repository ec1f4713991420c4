//! Run orchestration: single runs, baseline-versus-virtual comparison and
//! best-effort load sweeps.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::Nanos;
use crate::par::{join, par_map, ExecMode};
use crate::scenario::{FeasibilityInfo, Scenario};
use crate::sim::{
    run, FlowDirection, Mode, RunOptions, RunOutput, ServiceClass, StatsRow, Summary,
};

/// Resolves `scenario` for `mode` and runs it.
pub fn run_mode(scenario: &Scenario, mode: Mode, opts: RunOptions) -> Result<RunOutput> {
    run(&scenario.resolve(mode)?, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricDelta {
    pub baseline: f64,
    #[serde(rename = "virtual")]
    pub virtual_: f64,
    /// Baseline minus virtual; positive means the virtual mode is faster.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassComparison {
    pub class: ServiceClass,
    pub packets: MetricDelta,
    pub mean_ns: MetricDelta,
    pub p50_ns: MetricDelta,
    pub p99_ns: MetricDelta,
    pub p999_ns: MetricDelta,
    pub max_ns: MetricDelta,
    pub quiet_window_hits: MetricDelta,
}

impl ClassComparison {
    fn new(class: ServiceClass, b: &Summary, v: &Summary) -> Self {
        let m = |b: f64, v: f64| MetricDelta {
            baseline: b,
            virtual_: v,
            delta: b - v,
        };
        ClassComparison {
            class,
            packets: m(b.packets as f64, v.packets as f64),
            mean_ns: m(b.mean_ns, v.mean_ns),
            p50_ns: m(b.p50_ns as f64, v.p50_ns as f64),
            p99_ns: m(b.p99_ns as f64, v.p99_ns as f64),
            p999_ns: m(b.p999_ns as f64, v.p999_ns as f64),
            max_ns: m(b.max_ns as f64, v.max_ns as f64),
            quiet_window_hits: m(b.quiet_window_hits as f64, v.quiet_window_hits as f64),
        }
    }

    fn metrics(&self) -> [(&'static str, &MetricDelta); 7] {
        [
            ("packets", &self.packets),
            ("mean_ns", &self.mean_ns),
            ("p50_ns", &self.p50_ns),
            ("p99_ns", &self.p99_ns),
            ("p999_ns", &self.p999_ns),
            ("max_ns", &self.max_ns),
            ("quiet_window_hits", &self.quiet_window_hits),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeFeasibility {
    pub baseline: FeasibilityInfo,
    #[serde(rename = "virtual")]
    pub virtual_: FeasibilityInfo,
}

/// Upstream latency per service class, baseline against virtual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub seed: u64,
    pub quiet_window_ns: Nanos,
    pub classes: Vec<ClassComparison>,
    pub feasibility: ModeFeasibility,
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "scenario,class,metric,baseline,virtual,delta";

    pub fn class(&self, class: ServiceClass) -> Option<&ClassComparison> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for c in &self.classes {
            for (name, d) in c.metrics() {
                out.push_str(&format!(
                    "{},{},{},{:.3},{:.3},{:.3}\n",
                    self.scenario,
                    c.class.as_str(),
                    name,
                    d.baseline,
                    d.virtual_,
                    d.delta
                ));
            }
        }
        out
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} (seed {}, quiet window {} ns)",
            self.scenario, self.seed, self.quiet_window_ns
        )?;
        writeln!(
            f,
            "{:<14} {:<18} {:>14} {:>14} {:>14}",
            "class", "metric", "baseline", "virtual", "delta"
        )?;
        for c in &self.classes {
            for (name, d) in c.metrics() {
                writeln!(
                    f,
                    "{:<14} {:<18} {:>14.1} {:>14.1} {:>14.1}",
                    c.class.as_str(),
                    name,
                    d.baseline,
                    d.virtual_,
                    d.delta
                )?;
            }
        }
        let v = &self.feasibility.virtual_;
        write!(
            f,
            "virtual mode: {} private networks, margin {:.3} dB",
            v.pn_count,
            v.verdict.margin_db()
        )
    }
}

pub struct Comparison {
    pub report: ComparisonReport,
    pub baseline: RunOutput,
    pub virtual_: RunOutput,
}

/// Runs both modes from one scenario with the same seed and flows.
///
/// The virtual leg must be feasible unless `force` is set.
pub fn compare(
    scenario: &Scenario,
    exec: ExecMode,
    opts: RunOptions,
    force: bool,
) -> Result<Comparison> {
    let feasibility = ModeFeasibility {
        baseline: scenario.feasibility(Mode::Baseline)?,
        virtual_: if force {
            scenario.feasibility(Mode::Virtual)?
        } else {
            scenario.ensure_feasible(Mode::Virtual)?
        },
    };
    let (b, v) = join(
        exec,
        || run_mode(scenario, Mode::Baseline, opts),
        || run_mode(scenario, Mode::Virtual, opts),
    );
    let (baseline, virtual_) = (b?, v?);

    let mut classes = Vec::new();
    for class in [ServiceClass::TimeCritical, ServiceClass::BestEffort] {
        let bs = baseline
            .stats
            .class_aggregate(class, FlowDirection::Upstream)
            .summary();
        let vs = virtual_
            .stats
            .class_aggregate(class, FlowDirection::Upstream)
            .summary();
        if bs.packets == 0 && vs.packets == 0 {
            continue;
        }
        classes.push(ClassComparison::new(class, &bs, &vs));
    }
    let report = ComparisonReport {
        scenario: scenario.name.clone(),
        seed: scenario.file.seed,
        quiet_window_ns: scenario.quiet_window_ns,
        classes,
        feasibility,
    };
    Ok(Comparison {
        report,
        baseline,
        virtual_,
    })
}

/// Parses `A:B:STEP` into an inclusive grid within `[0, 1]`.
pub fn parse_load_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::config("--load", msg);
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(bad(format!("expected A:B:STEP, got {spec:?}")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("{s:?} is not a number")))
    };
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
        return Err(bad(format!("range {a}:{b} must satisfy 0 <= A <= B <= 1")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(bad("STEP must be positive".into()));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 10_000 {
        return Err(bad(format!("grid of {} points is too large", n + 1)));
    }
    // round to kill float drift so 0.1 + 2*0.1 prints as 0.3
    Ok((0..=n)
        .map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

pub struct SweepPoint {
    pub load: f64,
    pub output: RunOutput,
}

/// One run per best-effort load point, in the scenario's own mode.
pub fn sweep(
    scenario: &Scenario,
    loads: &[f64],
    exec: ExecMode,
    opts: RunOptions,
) -> Result<Vec<SweepPoint>> {
    let mode = scenario.file.mode;
    let scaled = loads
        .iter()
        .map(|&l| scenario.with_best_effort_load(l))
        .collect::<Result<Vec<_>>>()?;
    let results = par_map(&scaled, exec, |s| run_mode(s, mode, opts));
    loads
        .iter()
        .zip(results)
        .map(|(&load, r)| r.map(|output| SweepPoint { load, output }))
        .collect()
}

pub const SWEEP_CSV_HEADER_PREFIX: &str = "load,";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER_PREFIX}{}\n", StatsRow::CSV_HEADER);
    for p in points {
        for row in p.output.rows() {
            out.push_str(&format!("{},{}\n", p.load, row.to_csv()));
        }
    }
    out
}
