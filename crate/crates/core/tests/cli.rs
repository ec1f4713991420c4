mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn vponsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vponsim"))
        .args(args)
        .env_remove("VPONSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Reference scenario cut to 100 ms so CLI tests stay quick.
fn short_scenario(
    dir: &Path,
    name: &str,
    edit: impl FnOnce(&mut serde_json::Value),
) -> std::path::PathBuf {
    let text = std::fs::read_to_string(common::scenario_path("reference.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["sim_duration_ns"] = json!(100_000_000u64);
    v["discovery"]["period_ns"] = json!(30_000_000u64);
    edit(&mut v);
    let p = dir.join(format!("{name}.json"));
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn run_is_deterministic_and_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_scenario(dir.path(), "ref", |_| {});
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let trace = dir.path().join("t.tsv");
    let out = vponsim(&[
        "run",
        "--config",
        arg(&cfg),
        "--out",
        arg(&a),
        "--json",
        "--trace",
        arg(&trace),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(vponsim(&["run", "--config", arg(&cfg), "--out", arg(&b)])
        .status
        .success());

    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    assert_eq!(
        csv.lines().next().unwrap(),
        "scenario,mode,vpon,class,flow_id,packets,mean_ns,p50_ns,p99_ns,p999_ns,max_ns,quiet_window_hits,residual_queued"
    );
    let vpons: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(vpons.into_iter().collect::<Vec<_>>(), ["hlv", "llv"]);

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["resolution"], "exact");
    assert_eq!(meta["parameters"]["codes"]["length"], 13);

    let tsv = std::fs::read_to_string(&trace).unwrap();
    assert!(tsv.lines().any(|l| l.contains("DISCOVERY_GATE")));
    assert!(tsv.lines().any(|l| l.contains("\tGATE\t")));
}

#[test]
fn baseline_run_has_one_vpon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_scenario(dir.path(), "base", |v| v["mode"] = json!("baseline"));
    let out = dir.path().join("r.csv");
    assert!(vponsim(&["run", "--config", arg(&cfg), "--out", arg(&out)])
        .status
        .success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("pon")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");

    let missing = vponsim(&["run", "--config", "/no/such/file.json", "--out", arg(&out)]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = short_scenario(dir.path(), "ok", |_| {});
    let unwritable = vponsim(&["run", "--config", arg(&cfg), "--out", "/no/such/dir/r.csv"]);
    assert_eq!(unwritable.status.code(), Some(2));

    let bad = short_scenario(dir.path(), "bad", |v| {
        v["vpons"].as_array_mut().unwrap().truncate(1);
        v.as_object_mut().unwrap().remove("discovery");
    });
    let config = vponsim(&["run", "--config", arg(&bad), "--out", arg(&out)]);
    assert_eq!(config.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&config.stderr).contains("/vpons"));

    // 40 km reach does not close a 29 dB budget with two codes
    let far = short_scenario(dir.path(), "far", |v| {
        v["topology"]["feeder_m"] = json!(35_000.0);
        v["discovery"]["max_reach_m"] = json!(40_000.0);
    });
    let infeasible = vponsim(&["run", "--config", arg(&far), "--out", arg(&out)]);
    assert_eq!(infeasible.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&infeasible.stderr).contains("dB"));
    let forced = vponsim(&["run", "--config", arg(&far), "--out", arg(&out), "--force"]);
    assert_eq!(forced.status.code(), Some(0));
    assert_eq!(
        vponsim(&["compare", "--config", arg(&far), "--out", arg(&out)])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn compare_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_scenario(dir.path(), "cmp", |_| {});
    let out = dir.path().join("cmp.csv");
    let res = vponsim(&[
        "compare",
        "--config",
        arg(&cfg),
        "--out",
        arg(&out),
        "--json",
    ]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("scenario,class,metric,baseline,virtual,delta\n"));
    assert!(csv.contains(",time_critical,max_ns,"));
    assert!(String::from_utf8_lossy(&res.stdout).contains("quiet_window_hits"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(json["report"]["feasibility"]["virtual"]["pn_count"], 2);
}

#[test]
fn sweep_emits_one_block_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_scenario(dir.path(), "sw", |_| {});
    let out = dir.path().join("sw.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_vponsim"))
        .args([
            "sweep",
            "--config",
            arg(&cfg),
            "--load",
            "0.1:0.9:0.4",
            "--out",
            arg(&out),
        ])
        .env("VPONSIM_THREADS", "2")
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let loads: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(loads.into_iter().collect::<Vec<_>>(), ["0.1", "0.5", "0.9"]);

    let seq = dir.path().join("seq.csv");
    assert!(vponsim(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--load",
        "0.1:0.9:0.4",
        "--out",
        arg(&seq),
        "--sequential"
    ])
    .status
    .success());
    assert_eq!(csv, std::fs::read_to_string(&seq).unwrap());

    let bad_env = Command::new(env!("CARGO_BIN_EXE_vponsim"))
        .args([
            "sweep",
            "--config",
            arg(&cfg),
            "--load",
            "0.1:0.9:0.4",
            "--out",
            arg(&out),
        ])
        .env("VPONSIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(4));
    assert_eq!(
        vponsim(&[
            "sweep",
            "--config",
            arg(&cfg),
            "--load",
            "0.5:1.5:0.5",
            "--out",
            arg(&out)
        ])
        .status
        .code(),
        Some(4)
    );
}

#[test]
fn codes_generate_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set.json");
    let ok = vponsim(&[
        "codes",
        "--length",
        "13",
        "--weight",
        "3",
        "--count",
        "2",
        "--out",
        arg(&set),
    ]);
    assert!(ok.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&set).unwrap()).unwrap();
    assert_eq!(doc["code_set"]["codewords"].as_array().unwrap().len(), 2);
    assert_eq!(doc["validation"]["ok"], true);

    let too_many = vponsim(&["codes", "--length", "13", "--weight", "3", "--count", "3"]);
    assert_eq!(too_many.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&too_many.stderr).contains("found 2"));

    // {0,1,3} and {0,1,4} share the difference 1
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"n":13,"w":3,"lambda":1,"codewords":[[0,1,3],[0,1,4]]}"#,
    )
    .unwrap();
    let res = vponsim(&["codes", "--validate", arg(&bad)]);
    assert_eq!(res.status.code(), Some(1));
    let doc: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(doc["validation"]["ok"], false);
    assert_eq!(doc["validation"]["max_cross"], 2);
}
