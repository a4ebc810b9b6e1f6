// Licensed under the Apache License, Version 2.0
// http://www.apache.org/licenses/LICENSE-2.0

use std::process::{Command, Output};

fn amq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amq"))
        .args(args)
        .env_remove("AMQ_OUT_DIR")
        .output()
        .expect("spawn amq")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn assert_no_panic(o: &Output) {
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(!err.contains("panicked"), "{err}");
}

#[test]
fn fp_bound_bloom() {
    let o = amq(&["fp-bound", "--family", "bloom", "--m", "1024", "--k", "7", "--n", "100"]);
    assert_eq!(o.status.code(), Some(0));
    let bound = value(&stdout(&o), "bound");
    assert!((bound - 7.5e-3).abs() < 1e-4, "{bound}");
    assert!(value(&stdout(&o), "estimate") <= bound);
}

#[test]
fn plan_cuckoo_curve_is_sorted_and_dominates_honest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let o = amq(&[
        "plan",
        "--family",
        "cuckoo",
        "--log-n",
        "7",
        "--log-q",
        "30",
        "--eps-prf-log2",
        "-256",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# seed:")));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (sb, adv, hon) = (col("storage_bits"), col("log2_eps_prime"), col("log2_honest_fp"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    let mut prev = 0u64;
    for r in &rows {
        let s: u64 = r[sb].parse().unwrap();
        assert!(s >= prev);
        prev = s;
        let a: f64 = r[adv].parse().unwrap();
        let h: f64 = r[hon].parse().unwrap();
        assert!(a >= h, "{a} < {h}");
    }
}

#[test]
fn plan_writes_svg_under_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_amq"))
        .args(["plan", "--log-n", "10", "--log-q", "20", "--out", "c.svg"])
        .env("AMQ_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("c.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("stroke-dasharray"));
}

#[test]
fn load_factor_defaults_reach_target() {
    let o = amq(&["experiment", "load-factor", "--trials", "4", "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(value(&stdout(&o), "mean") >= 0.95);
    assert!(stdout(&o).contains("seed = 11"));
}

#[test]
fn fp_experiment_respects_bound() {
    let o = amq(&[
        "experiment", "fp", "--family", "bloom", "--m", "4096", "--k", "4", "--n", "500", "--probes", "20000",
        "--seed", "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn nai_check_small_bloom() {
    let o = amq(&[
        "experiment", "nai-check", "--family", "bloom", "--m", "4", "--k", "1", "--n", "2", "--trials", "20000",
        "--max-sd", "0.05", "--seed", "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn cuckoo_pi_attack_separates_original_only() {
    let o = amq(&["attack", "cuckoo-pi", "--trials", "200", "--seed", "6", "--min-advantage", "0.8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = amq(&[
        "attack", "cuckoo-pi", "--family", "prf-wrapped-cuckoo", "--trials", "200", "--seed", "6",
        "--min-advantage", "0.8",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn roi_transcript_is_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let o = amq(&[
        "game", "roi", "--family", "bloom", "--m", "256", "--k", "3", "--trials", "200", "--seed", "1",
        "--transcript", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(path).unwrap();
    let mut worlds = std::collections::HashSet::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["trial", "world", "op", "input-hash", "answer", "state-digest"] {
            assert!(v.get(key).is_some(), "{line}");
        }
        worlds.insert(v["world"].as_str().unwrap().to_string());
    }
    assert_eq!(worlds.len(), 2);
}

#[test]
fn original_cuckoo_has_no_ideal_world() {
    let o = amq(&["game", "roi", "--family", "cuckoo", "--s", "2", "--lambda-i", "4", "--lambda-t", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert_no_panic(&o);
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = amq(&["fp-bound", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_no_panic(&o);
}

#[test]
fn bad_values_are_usage_errors() {
    for args in [
        &["fp-bound", "--family", "bloom", "--m", "abc", "--k", "2", "--n", "1"][..],
        &["fp-bound", "--family", "bloom", "--m", "0", "--k", "2", "--n", "1"],
        &["fp-bound", "--family", "bloom", "--k", "2", "--n", "1"],
        &["adv-bound", "--family", "bloom", "--m", "64", "--k", "2", "--n", "1", "--eps-prf-log2", "3"],
        &["experiment", "load-factor", "--lambda-i", "40"],
        &["plan", "--log-n", "70"],
        &["attack", "cuckoo-pi", "--trials", "5"],
    ] {
        let o = amq(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert_no_panic(&o);
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(amq(&["--help"]).status.code(), Some(0));
}
