use std::process::{Command, Output};

use serde_json::Value;

fn ringagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringagg")).args(args).env_remove("RINGAGG_BUDGET").output().unwrap()
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn run_recovers_every_sum() {
    let out = ringagg(&["run", "--k", "5", "--q", "2", "--l", "8", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = records(&out);
    assert_eq!(recs[0]["record"], "header");
    assert_eq!(recs[0]["schema_version"], 1);
    let users: Vec<_> = recs.iter().filter(|r| r["record"] == "user").collect();
    assert_eq!(users.len(), 5);
    assert!(users.iter().all(|u| u["match"] == true && u["recovered"] == u["expected"]));
}

#[test]
fn run_with_explicit_zero_inputs() {
    let out = ringagg(&["run", "--k", "6", "--q", "3", "--l", "2", "--seed", "1", "--inputs", "0,0;0,0;0,0;0,0;0,0;0,0"]);
    assert_eq!(out.status.code(), Some(0));
    for u in records(&out).iter().filter(|r| r["record"] == "user") {
        assert_eq!(u["recovered"], serde_json::json!([0, 0]));
    }
    let bad = ringagg(&["run", "--k", "6", "--q", "3", "--l", "2", "--inputs", "0,0;0,3;0,0;0,0;0,0;0,0"]);
    assert_eq!(bad.status.code(), Some(2));
    let short = ringagg(&["run", "--k", "6", "--q", "3", "--l", "2", "--inputs", "0,0;0,0"]);
    assert_eq!(short.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_2() {
    assert_eq!(ringagg(&["run", "--k", "2"]).status.code(), Some(2));
    assert_eq!(ringagg(&["run", "--k", "5", "--q", "4"]).status.code(), Some(2));
    assert_eq!(ringagg(&["verify", "--k", "5", "--l", "0"]).status.code(), Some(2));
    assert_eq!(ringagg(&["search", "--k", "5", "--symbols", "0"]).status.code(), Some(2));
    assert_eq!(ringagg(&["search", "--k", "5", "--strategy", "magic"]).status.code(), Some(2));
    assert_eq!(ringagg(&["bogus"]).status.code(), Some(2));
}

#[test]
fn verify_passes_with_optimal_rate() {
    for (k, rate) in [("5", "2"), ("4", "1")] {
        let out = ringagg(&["verify", "--k", k, "--q", "2", "--l", "1", "--oracle", "both"]);
        assert_eq!(out.status.code(), Some(0));
        let recs = records(&out);
        let rates: Vec<_> = recs.iter().filter(|r| r["constraint"] == "rate").collect();
        assert!(rates.iter().all(|r| r["exact"]["num"] == rate && r["exact"]["den"] == "1"));
        assert_eq!(recs.last().unwrap()["verdict"], "pass");
    }
}

#[test]
fn budget_errors_exit_3() {
    let out = ringagg(&["verify", "--k", "8", "--q", "3", "--l", "2", "--oracle", "enum"]);
    assert_eq!(out.status.code(), Some(3));
    let env = Command::new(env!("CARGO_BIN_EXE_ringagg"))
        .args(["verify", "--k", "5", "--oracle", "enum"])
        .env("RINGAGG_BUDGET", "10")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(3));
    let search = ringagg(&["search", "--k", "5", "--symbols", "1", "--strategy", "exhaustive", "--budget", "1000"]);
    assert_eq!(search.status.code(), Some(3));
}

#[test]
fn search_reports() {
    let k5 = ringagg(&["search", "--k", "5", "--symbols", "1", "--q", "2"]);
    assert_eq!(k5.status.code(), Some(0));
    let rec = &records(&k5)[1];
    assert_eq!(rec["feasible_count"], "0");
    assert_eq!(rec["scheme_class"], "linear");
    for k in ["3", "4"] {
        let out = ringagg(&["search", "--k", k, "--symbols", "1", "--q", "2"]);
        let rec = &records(&out)[1];
        assert!(rec["feasible_count"].as_str().unwrap().parse::<u64>().unwrap() >= 1);
        assert!(!rec["witnesses"].as_array().unwrap().is_empty());
    }
}

#[test]
fn outputs_go_to_files_and_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ndjson");
    let t = dir.path().join("t.ndjson");
    let out = ringagg(&[
        "run", "--k", "7", "--q", "5", "--l", "3", "--seed", "3",
        "--out", a.to_str().unwrap(), "--transcript", t.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 7 + 1);
    let transcript = std::fs::read_to_string(&t).unwrap();
    assert!(transcript.starts_with("{\"record\":\"header\""));

    let again = ringagg(&["run", "--k", "7", "--q", "5", "--l", "3", "--seed", "3"]);
    let strip = |s: &str| s.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&text), strip(&String::from_utf8(again.stdout).unwrap()));
}

#[test]
fn report_table() {
    let out = ringagg(&["report", "--k-max", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let rates: Vec<_> = records(&out).into_iter().filter(|r| r["record"] == "rate").collect();
    assert_eq!(rates.len(), 4);
    let nums: Vec<_> = rates.iter().map(|r| r["measured"]["num"].as_str().unwrap().to_owned()).collect();
    assert_eq!(nums, ["1", "1", "2", "2"]);
}
