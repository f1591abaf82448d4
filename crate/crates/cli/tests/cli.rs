use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SOI: &str = "num_nodes = [3, 5]
expected_edges = \"N\"
mechanism_family = \"tabular\"
cardinality = [2, 3]
num_samples = 300
queries_per_scm = 3
estimation_samples = 2000
probe_samples = 5000
support_samples = 2000
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scmbench"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("s.toml"), SOI).unwrap();
    tmp
}

/// Relative path to file contents for every file below `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn generate_is_byte_identical_across_runs_and_workers() {
    let tmp = setup();
    for (out, jobs) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let o = run(
            &[
                "generate", "--soi", "s.toml", "--seed", "9", "--scms", "4", "--jobs", jobs,
                "--out", out,
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&tmp.path().join("a"));
    assert!(a.len() > 4 * 6);
    assert_eq!(a, tree(&tmp.path().join("b")));
    assert_eq!(a, tree(&tmp.path().join("c")));
    let o = run(
        &[
            "generate", "--soi", "s.toml", "--seed", "10", "--scms", "4", "--out", "d",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    assert_ne!(a, tree(&tmp.path().join("d")));
}

#[test]
fn generate_layout() {
    let tmp = setup();
    let o = run(
        &["generate", "--soi", "s.toml", "--scms", "2", "--out", "g"],
        tmp.path(),
    );
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let g = tmp.path().join("g");
    for f in ["manifest.json", "soi.toml"] {
        assert!(g.join(f).is_file());
    }
    for f in [
        "data.csv",
        "graph.json",
        "queries.jsonl",
        "scm.json",
        "metrics.json",
        "manifest.json",
    ] {
        assert!(g.join("scm_1").join(f).is_file(), "{f}");
    }
    let q = fs::read_to_string(g.join("scm_0/queries.jsonl")).unwrap();
    assert_eq!(q.lines().count(), 3);
    assert!(q.lines().all(|l| l.contains("\"ground_truth\"")));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(g.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["num_scms"], 2);
    assert!(m.get("started_at").is_none());
}

#[test]
fn zero_models_write_only_the_manifest() {
    let tmp = setup();
    let o = run(
        &["generate", "--soi", "s.toml", "--scms", "0", "--out", "z"],
        tmp.path(),
    );
    assert!(o.status.success());
    let names: Vec<_> = tree(&tmp.path().join("z")).into_keys().collect();
    assert_eq!(
        names,
        vec![PathBuf::from("manifest.json"), PathBuf::from("soi.toml")]
    );
}

#[test]
fn disabled_queries_and_timestamps() {
    let tmp = setup();
    let o = run(
        &[
            "generate",
            "--soi",
            "s.toml",
            "--set",
            "disable_queries=true",
            "--timestamps",
            "--out",
            "g",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!tmp.path().join("g/scm_0/queries.jsonl").exists());
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("g/manifest.json")).unwrap()).unwrap();
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
}

#[test]
fn analyze_reproduces_stored_metrics() {
    let tmp = setup();
    assert!(run(
        &["generate", "--soi", "s.toml", "--seed", "3", "--scms", "2", "--out", "g"],
        tmp.path()
    )
    .status
    .success());
    let o = run(&["analyze", "g"], tmp.path());
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "scm_index");
    for (k, line) in lines.enumerate() {
        let stored: BTreeMap<String, Option<f64>> = serde_json::from_slice(
            &fs::read(tmp.path().join(format!("g/scm_{k}/metrics.json"))).unwrap(),
        )
        .unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], k.to_string());
        for (name, cell) in header.iter().zip(&cells).skip(1) {
            let v: f64 = cell.parse().unwrap();
            match stored[*name] {
                Some(s) => assert_eq!(v, s, "{name}"),
                None => assert!(v.is_nan(), "{name}"),
            }
        }
    }
}

#[test]
fn analyze_empty_directory_prints_header() {
    let tmp = setup();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = run(&["analyze", "empty"], tmp.path());
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "scm_index\n");
}

#[test]
fn verify_l3_finds_no_failures() {
    let tmp = setup();
    let o = run(
        &[
            "verify",
            "--level",
            "l3",
            "--soi",
            "s.toml",
            "--scms",
            "3",
            "--noise-draws",
            "2000",
            "--out",
            "v",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["composite_total"]["fail"], 0);
    assert!(s["composite_total"]["pass"].as_u64().unwrap() > 0);
    assert_eq!(
        s,
        serde_json::from_slice::<serde_json::Value>(
            &fs::read(tmp.path().join("v/verify.json")).unwrap()
        )
        .unwrap()
    );
    assert!(fs::read_to_string(tmp.path().join("v/records.csv"))
        .unwrap()
        .starts_with("scm_index,"));
}

#[test]
fn verify_reads_generated_models() {
    let tmp = setup();
    assert!(run(
        &[
            "generate",
            "--soi",
            "s.toml",
            "--scms",
            "2",
            "--no-metrics",
            "--out",
            "g"
        ],
        tmp.path()
    )
    .status
    .success());
    let o = run(
        &[
            "verify",
            "--level",
            "l1",
            "--input",
            "g",
            "--samples",
            "5000",
            "--max-cond",
            "1",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["level"], "l1");
    assert!(s["composite"].get("cond_size_2").is_none());
}

#[test]
fn evaluate_with_builtin_oracle_scores_zero() {
    let tmp = setup();
    let o = run(
        &[
            "evaluate", "--method", "oracle", "--soi", "s.toml", "--seeds", "1,2", "--scms", "2",
            "--out", "e",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("e/results.json")).unwrap()).unwrap();
    assert_eq!(r["overall"]["mean_error"], 0.0);
    assert_eq!(r["overall"]["failure_rate"], 0.0);
    assert_eq!(r["overall"]["queries"], 2 * 2 * 3);
    assert_eq!(r["method"], "oracle");
    let records = fs::read_to_string(tmp.path().join("e/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 12);
}

#[test]
fn evaluate_external_failing_estimator() {
    let tmp = setup();
    let o = run(
        &[
            "evaluate",
            "--estimator",
            "false",
            "--soi",
            "s.toml",
            "--out",
            "e",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("e/results.json")).unwrap()).unwrap();
    assert_eq!(r["overall"]["failure_rate"], 1.0);
    assert!(r["overall"]["mean_error"].is_null());
}

#[test]
fn exit_codes() {
    let tmp = setup();
    let code = |args: &[&str]| run(args, tmp.path()).status.code();
    assert_eq!(
        code(&["generate", "--soi", "s.toml", "--set", "bogus=1", "--out", "x"]),
        Some(2)
    );
    assert_eq!(
        code(&["generate", "--soi", "missing.toml", "--out", "x"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "generate",
            "--soi",
            "s.toml",
            "--set",
            "num_nodes=[5,3]",
            "--out",
            "x"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&["verify", "--level", "l9", "--soi", "s.toml"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "verify",
            "--level",
            "l1",
            "--soi",
            "s.toml",
            "--set",
            "mechanism_family=\"linear\""
        ]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "evaluate",
            "--estimator",
            "no-such-estimator-xyz",
            "--soi",
            "s.toml",
            "--out",
            "e"
        ]),
        Some(3)
    );
    assert_eq!(code(&["analyze", "not-a-dir"]), Some(2));
    fs::write(tmp.path().join("s.toml"), "num_nodes = [3").unwrap();
    assert_eq!(
        code(&["generate", "--soi", "s.toml", "--out", "x"]),
        Some(2)
    );
}

#[test]
fn builtin_estimators_follow_the_protocol() {
    let tmp = setup();
    assert!(
        run(&["generate", "--soi", "s.toml", "--out", "g"], tmp.path())
            .status
            .success()
    );
    let dir = tmp.path().join("g/scm_0");
    assert!(run(
        &["estimate", "--method", "zero", dir.to_str().unwrap()],
        tmp.path()
    )
    .status
    .success());
    let est = fs::read_to_string(dir.join("estimates.jsonl")).unwrap();
    assert_eq!(est.lines().count(), 3);
    for line in est.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["estimate"], 0.0);
    }
}
