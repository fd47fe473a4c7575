use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bintrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bintrace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("fig0.trc");
    let o = bintrace(&["gen", "--preset", "fig0", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_fixture_matches_the_preset() {
    let dir = TempDir::new().unwrap();
    let generated = fs::read_to_string(fixture(&dir)).unwrap();
    let shipped = fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../fixtures/fig0.trc"
    ))
    .unwrap();
    assert_eq!(generated, shipped);
}

#[test]
fn simplify_reports_and_writes_a_checkable_document() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let out = dir.path().join("out.trc");
    let o = bintrace(&["simplify", s(&input), "--oracle", "--out", s(&out)]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(&cols[..5], ["fig0", "fixture", "2", "3", "2"]);
    assert!(text.contains("optimum=1 gap=1"));
    assert!(text.contains("count check: PASS"));
    assert!(text.contains("equivalence check: PASS"));

    let o = bintrace(&["check", s(&out)]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("certificate: PASS"));
}

#[test]
fn simplify_defaults_to_a_sibling_output_file() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    assert!(bintrace(&["simplify", s(&input)]).status.success());
    assert!(dir.path().join("fig0.reduced.trc").exists());
}

#[test]
fn simplify_json_mirrors_report_fields() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let out = dir.path().join("o.trc");
    let o = bintrace(&[
        "simplify",
        s(&input),
        "--format",
        "json",
        "--fixpoint",
        "10",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in [
        "name",
        "thread_count",
        "cs_before",
        "cs_after",
        "reduction_percent",
        "analysis_time_ms",
        "transform_time_ms",
        "semantics_before_ms",
        "semantics_after_ms",
        "oracle_min_cs",
        "swaps_rejected_by_guard",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["cs_after"], 2);
    assert_eq!(v["equivalence_check"], true);
}

#[test]
fn oracle_refuses_long_traces() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let o = bintrace(&["simplify", s(&input), "--oracle", "--oracle-limit", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle refused"));
}

#[test]
fn run_dump_prints_one_line_per_statement() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let o = bintrace(&["run", s(&input), "--dump"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let steps: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(steps.len(), 9);
    assert!(steps[0].starts_with("#1 "));
    assert!(text.lines().last().unwrap().contains("tc=9"));
}

#[test]
fn check_rejects_a_tampered_derivation() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let out = dir.path().join("out.trc");
    assert!(bintrace(&["simplify", s(&input), "--out", s(&out)])
        .status
        .success());
    let text = fs::read_to_string(&out).unwrap();
    let bad = text.replace("S-swap 6..9 witness=2,2", "S-noswap 6..9 witness=2,2");
    assert_ne!(bad, text);
    fs::write(&out, bad).unwrap();
    let o = bintrace(&["check", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn check_needs_a_derivation() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    assert_eq!(bintrace(&["check", s(&input)]).status.code(), Some(2));
}

#[test]
fn parse_errors_carry_positions() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let text = fs::read_to_string(&input)
        .unwrap()
        .replace("  require", "  acquire");
    fs::write(&input, text).unwrap();
    let o = bintrace(&["run", s(&input)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 7, column 3"));
}

#[test]
fn gen_is_reproducible() {
    let a = bintrace(&["gen", "--threads", "3", "--seed", "42", "--bias", "0.7"]);
    let b = bintrace(&["gen", "--threads", "3", "--seed", "42", "--bias", "0.7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = bintrace(&["gen", "--threads", "3", "--seed", "43", "--bias", "0.7"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn analyze_writes_annotations() {
    let dir = TempDir::new().unwrap();
    let input = fixture(&dir);
    let out = dir.path().join("a.trc");
    let o = bintrace(&["analyze", s(&input), "--out", s(&out)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("segments: 4"));
    let written = fs::read_to_string(&out).unwrap();
    assert!(written.contains("[annotations]\n0 0 0 0\n1 1 1 1\n"));
}

#[test]
fn report_covers_the_suite() {
    let o = bintrace(&["report", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["fig0", "philo", "merge", "tsp", "webdow"]);
    assert_eq!(rows[0]["oracle_min_cs"], 1);
    assert_eq!(v["all_passed"], true);
}

#[test]
fn dynamic_mode_runs_forks() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("d.trc");
    let o = bintrace(&[
        "gen",
        "--dynamic",
        "--threads",
        "3",
        "--seed",
        "5",
        "--out",
        s(&path),
    ]);
    assert!(o.status.success());
    let o = bintrace(&["run", s(&path), "--mode", "dynamic", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["threads"].as_u64().unwrap() >= 3);
}
