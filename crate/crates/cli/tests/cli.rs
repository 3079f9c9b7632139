use std::path::PathBuf;
use std::process::Command;

use cco_cli::fixtures;
use cco_cli::problem::{load_problem, ProblemFile};
use cco_core::uncertainkit::RandomModel;

fn cco(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_cco")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn records(stdout: &str) -> Vec<serde_json::Value> {
    stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("cco-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn every_fixture_parses_and_builds() {
    for id in fixtures::IDS {
        let inst = fixtures::load(id).unwrap_or_else(|e| panic!("{id}: {e:#}"));
        assert_eq!(inst.pc.n(), inst.problem.n(), "{id}");
    }
    let p = fixtures::problem("ex6.3").unwrap();
    assert_eq!((p.n(), p.r(), p.d()), (3, 3, 4));
}

#[test]
fn fixtures_round_trip() {
    for id in fixtures::IDS {
        let p = fixtures::problem(id).unwrap();
        let back = ProblemFile::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(back, p, "{id}");
    }
}

#[test]
fn empty_chance_section_is_rejected() {
    let mut p = fixtures::problem("ex6.3").unwrap();
    p.chance.clear();
    let err = ProblemFile::from_json_str(&p.to_json_string()).unwrap_err();
    assert!(err.mentions("chance constraint required"), "{err}");
}

#[test]
fn duplicate_exponent_is_named() {
    let mut p = fixtures::problem("ex6.3").unwrap();
    let dup = p.chance.iter().find(|t| t.alpha == [2, 1, 0]).unwrap().clone();
    p.chance.push(dup);
    let err = ProblemFile::from_json_str(&p.to_json_string()).unwrap_err();
    assert!(err.mentions("duplicate exponent (2,1,0)"), "{err}");
}

#[test]
fn inconsistent_dimensions_point_at_the_field() {
    let mut p = fixtures::problem("ex6.3").unwrap();
    p.decision_set.linear[1].a.push(0.0);
    let err = ProblemFile::from_json_str(&p.to_json_string()).unwrap_err();
    assert!(err.diagnostics.iter().any(|d| d.field == "decision_set.linear[1].a"), "{err}");
}

#[test]
fn problem_files_load_their_sample_csv() {
    let dir = scratch("csv");
    let p = fixtures::problem("ex6.6").unwrap();
    std::fs::write(dir.join("ex6.6.json"), p.to_json_string()).unwrap();
    std::fs::copy(
        concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/ex6.6_samples.csv"),
        dir.join("ex6.6_samples.csv"),
    )
    .unwrap();
    let inst = load_problem(&dir.join("ex6.6.json")).unwrap();
    match &inst.model {
        RandomModel::Empirical { rows } => assert_eq!(rows.len(), 1000),
        other => panic!("expected empirical samples, got {other:?}"),
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn toy_solves_to_one() {
    let (code, out) = cco(&["solve-at-gamma", "toy", "--gamma", "1", "--mc", "10000", "--ndjson"]);
    assert_eq!(code, 0);
    let r = &records(&out)[0];
    assert!((r["fstar"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(r["status"], "certified");
}

#[test]
fn published_rows_reproduce() {
    let (code, out) = cco(&["reproduce", "ex6.3", "--gamma", "1.5387", "--mc", "10000", "--ndjson"]);
    assert_eq!(code, 0);
    let f = records(&out)[0]["fstar"].as_f64().unwrap();
    assert!((f + 1.6382).abs() <= 5e-3, "{f}");

    let (code, out) = cco(&["reproduce", "portfolio", "--eps", "0.35", "--gamma", "0.1191", "--mc", "10000", "--ndjson"]);
    assert_eq!(code, 0);
    let f = records(&out)[0]["fstar"].as_f64().unwrap();
    assert!((f + 0.8127).abs() <= 1e-3, "{f}");
}

#[test]
fn records_are_byte_identical_for_a_fixed_seed() {
    let args = ["size", "ex6.3", "--seed", "5", "--mc", "50000", "--ndjson"];
    let (c1, a) = cco(&args);
    let (c2, b) = cco(&args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(a, b);
    assert_eq!(records(&a).last().unwrap()["record"], "sizing");
}

#[test]
fn out_dir_gets_table_and_records() {
    let dir = scratch("out");
    let (code, _) = cco(&["solve-at-gamma", "toy", "--gamma", "2", "--mc", "1000", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let table = std::fs::read_to_string(dir.join("toy.txt")).unwrap();
    assert!(table.contains("1.4142"), "{table}");
    let nd = std::fs::read_to_string(dir.join("toy.ndjson")).unwrap();
    assert_eq!(nd.lines().count(), 1);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn uncertified_solves_exit_nonzero() {
    // h does not depend on ξ, so no relaxation order is flat
    let mut p = fixtures::problem("toy").unwrap();
    p.chance.retain(|t| t.alpha == [0]);
    p.chance[0].b = -1.0;
    let dir = scratch("flat");
    let path = dir.join("constant.json");
    std::fs::write(&path, p.to_json_string()).unwrap();
    let (code, out) = cco(&["solve-at-gamma", path.to_str().unwrap(), "--gamma", "1", "--kmax", "2", "--mc", "1000", "--ndjson"]);
    assert_eq!(code, 2);
    assert_eq!(records(&out)[0]["status"], "max-order-reached");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sample_writes_csv() {
    let (code, out) = cco(&["sample", "ex6.8", "--samples", "5", "--seed", "1"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "xi1,xi2,xi3,xi4");
    assert_eq!(lines.len(), 6);
}

#[test]
fn missing_gamma_is_an_error() {
    let (code, _) = cco(&["solve-at-gamma", "toy"]);
    assert_eq!(code, 1);
}
