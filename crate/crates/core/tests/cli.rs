use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use delayed_swap::bisa::BisaSetting;
use delayed_swap::cli::{encode_log, read_log, LOG_FILE, MANIFEST_FILE, SUMMARY_FILE};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delayed-swap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin(&args)
}

#[test]
fn simulate_writes_log_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), &["--mode", "ideal", "--trials", "10000", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, records) = read_log(&dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(records.len(), 10_000);
    assert_eq!(header.config.master_seed, 3);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["timeline"]["report"]["satisfied"], true);
    assert_eq!(summary["run_id"], serde_json::json!(header.run_id));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["run_id"], serde_json::json!(header.run_id));
    assert_eq!(manifest["master_seed"], 3);
}

#[test]
fn same_seed_gives_byte_identical_logs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(simulate(d.path(), &["--mode", "fock", "--trials", "3000", "--seed", "11"]).status.success());
    }
    let la = fs::read(a.path().join(LOG_FILE)).unwrap();
    let lb = fs::read(b.path().join(LOG_FILE)).unwrap();
    assert_eq!(la, lb);
    let c = tempfile::tempdir().unwrap();
    assert!(simulate(c.path(), &["--mode", "fock", "--trials", "3000", "--seed", "12"]).status.success());
    assert_ne!(la, fs::read(c.path().join(LOG_FILE)).unwrap());
}

#[test]
fn zero_trials_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulate(dir.path(), &["--trials", "0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "trials = 100\n[noise]\nmzi_visibilty = 0.9\n").unwrap();
    let o = simulate(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mzi_visibilty"));

    fs::write(&cfg, "trials = 100\nmode = \"ideal\"\n[noise]\nduty_cycle = 1.0\n").unwrap();
    let o = simulate(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let (header, records) = read_log(&dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(header.config.noise.duty_cycle, 1.0);
    assert_eq!(records.len(), 100);
}

#[test]
fn analyze_reports_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--mode", "ideal", "--trials", "20000"]).status.success());
    let log = dir.path().join(LOG_FILE);
    let log = log.to_str().unwrap();

    let fig3 = bin(&["analyze", log, "--report", "fig3"]);
    assert!(fig3.status.success());
    let text = stdout(&fig3);
    assert_eq!(text.lines().next(), Some("label,value,sigma,n"));
    for basis in ["H/V", "+/-", "R/L"] {
        assert!(text.contains(&format!("BSM/Phi- {basis},")), "{text}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("fig3.csv")).unwrap(), text);
    let again = bin(&["analyze", log, "--report", "fig3"]);
    assert_eq!(stdout(&again), text);

    let table1 = bin(&["analyze", log, "--report", "table1"]);
    assert!(table1.status.success());
    let t = stdout(&table1);
    for pair in ["2&3", "1&4", "1&2", "3&4"] {
        assert!(t.lines().any(|l| l.starts_with(pair)), "{t}");
    }
    assert!(t.contains("[state-derived]"));
    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("table1.json")).unwrap()).unwrap();
    assert_eq!(doc["timeline"]["measurement_margin"], 485.0);
    assert_eq!(doc["report"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn pooled_on_ssm_only_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate(dir.path(), &["--mode", "ideal", "--trials", "2000"]).status.success());
    let (header, records) = read_log(&dir.path().join(LOG_FILE)).unwrap();
    let ssm: Vec<_> = records.into_iter().filter(|r| r.victor_choice == BisaSetting::Ssm).collect();
    let path = dir.path().join("ssm.jsonl");
    fs::write(&path, encode_log(&header, &ssm).unwrap()).unwrap();
    let o = bin(&["analyze", path.to_str().unwrap(), "--report", "pooled"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty subensemble"));
}

#[test]
fn verify_targets() {
    let timing = bin(&["verify", "timing"]);
    assert!(timing.status.success());
    let t = stdout(&timing);
    for v in ["computed 14", "computed 313", "computed 485"] {
        assert!(t.contains(v), "{t}");
    }
    let eq2 = stdout(&bin(&["verify", "eq2"]));
    assert_eq!(eq2.matches("PASS").count(), 9);
    let budget = stdout(&bin(&["verify", "budget"]));
    assert!(budget.contains("expected 0.0033") && budget.contains("expected 0.016"));
    assert!(bin(&["verify", "bisa"]).status.success());
    assert!(!bin(&["verify", "nonsense"]).status.success());
}

#[test]
fn reproduce_runs_everything() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["reproduce", "--trials", "20000", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [LOG_FILE, SUMMARY_FILE, MANIFEST_FILE, "fig3.csv", "table1.csv", "pooled.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let s = stdout(&o);
    assert!(!s.contains("FAIL"));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary["fock"]["tau"], 0.361);
}
