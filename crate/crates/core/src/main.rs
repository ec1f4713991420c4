use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vponsim::codes::{generate_ooc, validate_code_set, CodeSet, CodeSetJson};
use vponsim::experiment::{compare, parse_load_grid, run_mode, sweep, sweep_csv};
use vponsim::output::{json_sibling, to_json, trace_tsv, write_atomic, CompareJson, RunReport};
use vponsim::par::{threads_from_env, with_thread_cap, ExecMode};
use vponsim::scenario::{load_scenario_unchecked, Scenario};
use vponsim::sim::RunOptions;
use vponsim::{Error, Result};

#[derive(Parser)]
#[command(name = "vponsim", version, about = "Virtual GE-PON latency simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario in its configured mode.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV.
        #[arg(long)]
        out: PathBuf,
        /// Also write a JSON mirror next to the CSV.
        #[arg(long)]
        json: bool,
        /// Write the MPCP message trace (TSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run even if the VPON count fails the power budget.
        #[arg(long)]
        force: bool,
    },
    /// Run baseline and virtual modes and report per-class latency deltas.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comparison CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        force: bool,
    },
    /// Rescale best-effort load over a grid and run each point.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid as A:B:STEP, inclusive, within [0, 1].
        #[arg(long)]
        load: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Run points one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Generate or validate an optical orthogonal code set.
    Codes {
        #[arg(long)]
        length: Option<u32>,
        #[arg(long)]
        weight: Option<u32>,
        #[arg(long, default_value_t = 1)]
        lambda: u32,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validate a code-set JSON file instead of generating one.
        #[arg(long)]
        validate: Option<PathBuf>,
        /// Write the set here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vponsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(config: &Path, force: bool) -> Result<Scenario> {
    let scenario = load_scenario_unchecked(config)?;
    if !force {
        scenario.ensure_feasible(scenario.file.mode)?;
    }
    Ok(scenario)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            out,
            json,
            trace,
            force,
        } => {
            let scenario = load(&config, force)?;
            let opts = RunOptions {
                trace: trace.is_some(),
                record_packets: false,
            };
            let output = run_mode(&scenario, scenario.file.mode, opts)?;
            write_atomic(&out, output.to_csv().as_bytes())?;
            if json {
                let report = RunReport::new(&scenario, &output)?;
                write_atomic(&json_sibling(&out), to_json(&report)?.as_bytes())?;
            }
            if let Some(path) = trace {
                write_atomic(&path, trace_tsv(&output.trace).as_bytes())?;
            }
            Ok(())
        }
        Command::Compare {
            config,
            out,
            json,
            force,
        } => {
            let scenario = load_scenario_unchecked(&config)?;
            let cmp = compare(&scenario, ExecMode::Parallel, RunOptions::default(), force)?;
            write_atomic(&out, cmp.report.to_csv().as_bytes())?;
            if json {
                let doc = CompareJson {
                    version: env!("CARGO_PKG_VERSION"),
                    report: &cmp.report,
                    parameters: &scenario.file,
                };
                write_atomic(&json_sibling(&out), to_json(&doc)?.as_bytes())?;
            }
            println!("{}", cmp.report);
            Ok(())
        }
        Command::Sweep {
            config,
            load: grid,
            out,
            force,
            sequential,
        } => {
            let scenario = load(&config, force)?;
            let loads = parse_load_grid(&grid)?;
            let exec = if sequential {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            };
            let threads = threads_from_env()?;
            let points = with_thread_cap(threads, || {
                sweep(&scenario, &loads, exec, RunOptions::default())
            })??;
            write_atomic(&out, sweep_csv(&points).as_bytes())
        }
        Command::Codes {
            length,
            weight,
            lambda,
            count,
            seed,
            validate,
            out,
        } => {
            let set = match validate {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    let raw: CodeSetJson = serde_json::from_str(&text)
                        .map_err(|e| Error::config("/", e.to_string()))?;
                    CodeSet::try_from(raw)?
                }
                None => {
                    let (Some(n), Some(w)) = (length, weight) else {
                        return Err(Error::config(
                            "--length",
                            "--length and --weight are required to generate",
                        ));
                    };
                    generate_ooc(n, w, lambda, count, seed)?
                }
            };
            let report = validate_code_set(&set)?;
            let doc = serde_json::json!({ "code_set": set.to_json(), "validation": report });
            let text = to_json(&doc)?;
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
            if report.ok {
                Ok(())
            } else {
                Err(Error::Validation(format!(
                    "correlation bound {} exceeded (auto sidelobe {}, cross {})",
                    set.lambda_max(),
                    report.max_auto_sidelobe,
                    report.max_cross
                )))
            }
        }
    }
}
