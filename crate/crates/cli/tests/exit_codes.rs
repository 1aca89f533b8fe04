//! Exit-code contract: 0 success, 1 usage error, 2 runtime error.

use std::process::Command;

fn run(args: &[&str]) -> (Option<i32>, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_endorhythm"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code(), String::from_utf8_lossy(&out.stderr).to_string())
}

#[test]
fn help_is_success() {
    let (code, _) = run(&["--help"]);
    assert_eq!(code, Some(0));
    let (code, _) = run(&["bench", "--help"]);
    assert_eq!(code, Some(0));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let (code, _) = run(&["frobnicate"]);
    assert_eq!(code, Some(1));
}

#[test]
fn unknown_flag_is_usage_error() {
    let (code, _) = run(&["gen-hormones", "--cycle", "menstrual", "--resolution", "5", "--no-such-flag"]);
    assert_eq!(code, Some(1));
}

#[test]
fn bench_without_out_is_usage_error() {
    let (code, err) = run(&["bench", "--dataset", "arc=/dev/null", "--model", "m"]);
    assert_eq!(code, Some(1), "stderr: {err}");
    assert!(err.contains("--out") || err.contains("usage"));
}

#[test]
fn bad_cycle_kind_is_usage_error() {
    let (code, _) = run(&["gen-hormones", "--cycle", "lunar", "--resolution", "5"]);
    assert_eq!(code, Some(1));
}

#[test]
fn missing_input_file_is_runtime_error() {
    let (code, _) = run(&["gen-prompts", "--hormones", "/no/such/file.csv", "--out", "/tmp/x.jsonl"]);
    assert_eq!(code, Some(2));
    let (code, _) = run(&["analyze", "--corpus", "/no/such/corpus.jsonl", "--out-dir", "/tmp/xd"]);
    assert_eq!(code, Some(2));
}

#[test]
fn gen_hormones_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let (code, err) = run(&[
        "gen-hormones", "--cycle", "menstrual", "--resolution", "28",
        "--seed", "42", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, Some(0), "stderr: {err}");
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 29); // header + 28 rows
    assert!(text.lines().nth(1).unwrap().ends_with(",42"), "seed column embedded");
}
