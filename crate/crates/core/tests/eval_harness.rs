use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use scmbench::dataset::{self, GenerateOptions};
use scmbench::eval::{
    aggregate, parse_records_csv, run_evaluation, write_results, EstimatorCommand,
};
use scmbench::soi::{parse_soi, SpaceOfInterest};

fn linear() -> Vec<(String, SpaceOfInterest)> {
    let soi = parse_soi(
        "num_nodes = [3, 5]\nexpected_edges = \"N\"\nmechanism_family = \"linear\"\nnum_samples = 100\nqueries_per_scm = 4\nestimation_samples = 2000\nprobe_samples = 1000\nsupport_samples = 1000",
    )
    .unwrap();
    vec![("linear".into(), soi)]
}

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
    fs::set_permissions(&p, fs::Permissions::from_mode(0o755)).unwrap();
    p
}

fn command(p: &Path) -> EstimatorCommand {
    EstimatorCommand::new(p.to_string_lossy(), vec![])
}

#[test]
fn sidecar_oracle_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let est = script(
        tmp.path(),
        "oracle.sh",
        r#"sed -E 's/^\{"id":"([^"]+)".*"ground_truth":([^,}]+).*/{"id":"\1","estimate":\2}/' "$1/truth.jsonl" > "$1/estimates.jsonl""#,
    );
    let mut cmd = command(&est);
    cmd.truth_sidecar = true;
    let (run, records) =
        run_evaluation(&linear(), &[1, 2], 3, &cmd, &tmp.path().join("work"), 2).unwrap();
    assert_eq!(run.overall.queries, 2 * 3 * 4);
    assert_eq!(run.overall.failure_rate, 0.0);
    assert_eq!(run.overall.mean_error, 0.0);
    assert_eq!(run.overall.max_error, 0.0);
    assert!(records.iter().all(|r| !r.failed));
}

#[test]
fn zero_estimator_error_is_mean_squared_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let est = script(
        tmp.path(),
        "zero.sh",
        r#"sed -E 's/^\{"id":"([^"]+)".*/{"id":"\1","estimate":0}/' "$1/queries.jsonl" > "$1/estimates.jsonl""#,
    );
    let sois = linear();
    let (run, records) =
        run_evaluation(&sois, &[5], 4, &command(&est), &tmp.path().join("work"), 1).unwrap();
    // truths recomputed independently of the harness
    let mut squares = Vec::new();
    for k in 0..4 {
        let ds =
            dataset::generate_one(&sois[0].1, 5, k, GenerateOptions { metrics: false }).unwrap();
        squares.extend(
            ds.queries
                .iter()
                .map(|(_, t)| t.value)
                .filter(|t| !t.is_nan())
                .map(|t| t * t),
        );
    }
    let expected = squares.iter().sum::<f64>() / squares.len() as f64;
    assert!((run.overall.mean_error - expected).abs() <= 1e-12 * expected.max(1.0));
    assert_eq!(records.len(), squares.len());

    // aggregates survive the record file
    let out = tmp.path().join("results");
    write_results(&out, &run, &records).unwrap();
    let back = parse_records_csv(&fs::read_to_string(out.join("records.csv")).unwrap()).unwrap();
    assert_eq!(aggregate(&back), run.overall);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["method"], "zero.sh");
}

#[test]
fn crashing_estimator_fails_every_query() {
    let tmp = tempfile::tempdir().unwrap();
    let est = script(tmp.path(), "crash.sh", "echo boom >&2\nexit 1");
    let (run, records) = run_evaluation(
        &linear(),
        &[1],
        2,
        &command(&est),
        &tmp.path().join("work"),
        1,
    )
    .unwrap();
    assert_eq!(run.overall.failure_rate, 1.0);
    assert!(run.overall.mean_error.is_nan() && run.overall.std_error.is_nan());
    assert!(records
        .iter()
        .all(|r| r.failed && r.reason.contains("boom")));
}

#[test]
fn slow_estimator_times_out() {
    let tmp = tempfile::tempdir().unwrap();
    let est = script(tmp.path(), "slow.sh", "sleep 5");
    let mut cmd = command(&est);
    cmd.timeout = Duration::from_millis(300);
    let (run, records) =
        run_evaluation(&linear(), &[1], 1, &cmd, &tmp.path().join("work"), 1).unwrap();
    assert_eq!(run.overall.failure_rate, 1.0);
    assert!(records.iter().all(|r| r.runtime < 4.0));
}

#[test]
fn malformed_and_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let garbage = script(
        tmp.path(),
        "garbage.sh",
        r#"echo 'not json' > "$1/estimates.jsonl""#,
    );
    let (run, _) = run_evaluation(
        &linear(),
        &[1],
        1,
        &command(&garbage),
        &tmp.path().join("w1"),
        1,
    )
    .unwrap();
    assert_eq!(run.overall.failure_rate, 1.0);
    // answers only the first query; the rest count as failed
    let partial = script(
        tmp.path(),
        "partial.sh",
        r#"head -n 1 "$1/queries.jsonl" | sed -E 's/^\{"id":"([^"]+)".*/{"id":"\1","estimate":0}/' > "$1/estimates.jsonl""#,
    );
    let (run, records) = run_evaluation(
        &linear(),
        &[1],
        1,
        &command(&partial),
        &tmp.path().join("w2"),
        1,
    )
    .unwrap();
    assert_eq!(run.overall.failed, records.len() - 1);
}

#[test]
fn estimator_inputs_withhold_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let est = script(
        tmp.path(),
        "noop.sh",
        r#"cp /dev/null "$1/estimates.jsonl""#,
    );
    let work = tmp.path().join("work");
    run_evaluation(&linear(), &[1], 1, &command(&est), &work, 1).unwrap();
    let dir = work.join("linear").join("seed_1").join("scm_0");
    let queries = fs::read_to_string(dir.join("queries.jsonl")).unwrap();
    assert!(!queries.contains("ground_truth"));
    assert!(dir.join("data.csv").is_file() && dir.join("graph.json").is_file());
    assert!(!dir.join("truth.jsonl").exists() && !dir.join("scm.json").exists());
}
