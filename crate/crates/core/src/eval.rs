//! Runs an external estimator over generated benchmarks and scores it.
//!
//! The estimator is any program. For each model it is started as
//! `program [args...] <workdir>`, where `workdir` holds `data.csv`,
//! `graph.json` and `queries.jsonl` (no ground truths). It must write
//! `estimates.jsonl`, one `{"id": ..., "estimate": ...}` per line, and exit 0.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, GenerateOptions, QueryRecord};
use crate::error::{Error, Result};
use crate::soi::SpaceOfInterest;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorCommand {
    pub name: String,
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
    /// Leave `truth.jsonl` next to the inputs (for debugging estimators).
    pub truth_sidecar: bool,
}

impl EstimatorCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        let program = program.into();
        let name = Path::new(&program)
            .file_name()
            .map_or(program.clone(), |n| n.to_string_lossy().into_owned());
        Self {
            name,
            program,
            args,
            timeout: DEFAULT_TIMEOUT,
            truth_sidecar: false,
        }
    }

    /// Resolves the program against `PATH` when it has no path separator.
    pub fn resolve(&self) -> Result<PathBuf> {
        let p = Path::new(&self.program);
        if p.components().count() > 1 {
            return if p.is_file() {
                Ok(p.to_path_buf())
            } else {
                Err(Error::EstimatorNotFound(self.program.clone()))
            };
        }
        let path = std::env::var_os("PATH").unwrap_or_default();
        std::env::split_paths(&path)
            .map(|d| d.join(&self.program))
            .find(|c| c.is_file())
            .ok_or_else(|| Error::EstimatorNotFound(self.program.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub id: String,
    pub estimate: Option<f64>,
}

/// Parses `estimates.jsonl`; a `null` estimate stands for NaN.
pub fn parse_estimates(text: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: Estimate = serde_json::from_str(line)
            .map_err(|err| Error::Protocol(format!("estimates.jsonl line {}: {err}", i + 1)))?;
        if out
            .insert(e.id.clone(), e.estimate.unwrap_or(f64::NAN))
            .is_some()
        {
            return Err(Error::Protocol(format!(
                "estimates.jsonl line {}: duplicate id {}",
                i + 1,
                e.id
            )));
        }
    }
    Ok(out)
}

/// One scored query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub soi: String,
    pub seed: u64,
    pub scm_index: u64,
    pub query_id: String,
    pub kind: String,
    pub truth: f64,
    pub estimate: f64,
    pub error: f64,
    pub abs_error: f64,
    pub squared_error: f64,
    pub failed: bool,
    pub reason: String,
    /// Wall-clock seconds of the estimator run for this model.
    pub runtime: f64,
}

/// Error statistics over squared errors of non-failed queries, plus
/// runtime statistics over models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub queries: usize,
    pub failed: usize,
    pub failure_rate: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub max_error: f64,
    pub min_error: f64,
    pub mean_abs_error: f64,
    pub mean_raw_error: f64,
    pub scms: usize,
    pub runtime_mean: f64,
    pub runtime_std: f64,
    pub runtime_total: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (
        m,
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

pub fn aggregate(records: &[QueryResult]) -> Aggregate {
    let ok: Vec<&QueryResult> = records.iter().filter(|r| !r.failed).collect();
    let sq: Vec<f64> = ok.iter().map(|r| r.squared_error).collect();
    let (mean_error, std_error) = mean_std(&sq);
    let (mean_abs_error, _) = mean_std(&ok.iter().map(|r| r.abs_error).collect::<Vec<_>>());
    let (mean_raw_error, _) = mean_std(&ok.iter().map(|r| r.error).collect::<Vec<_>>());
    let mut runtimes: BTreeMap<(String, u64, u64), f64> = BTreeMap::new();
    for r in records {
        runtimes.insert((r.soi.clone(), r.seed, r.scm_index), r.runtime);
    }
    let rt: Vec<f64> = runtimes.values().copied().collect();
    let (runtime_mean, runtime_std) = mean_std(&rt);
    let failed = records.len() - ok.len();
    Aggregate {
        queries: records.len(),
        failed,
        failure_rate: if records.is_empty() {
            f64::NAN
        } else {
            failed as f64 / records.len() as f64
        },
        mean_error,
        std_error,
        max_error: if sq.is_empty() {
            f64::NAN
        } else {
            sq.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        },
        min_error: if sq.is_empty() {
            f64::NAN
        } else {
            sq.iter().copied().fold(f64::INFINITY, f64::min)
        },
        mean_abs_error,
        mean_raw_error,
        scms: rt.len(),
        runtime_mean,
        runtime_std,
        runtime_total: rt.iter().sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub method: String,
    pub sois: Vec<String>,
    pub seeds: Vec<u64>,
    pub num_scms: u64,
    pub overall: Aggregate,
    pub per_soi: BTreeMap<String, Aggregate>,
    /// Keyed `soi/seed`.
    pub per_seed: BTreeMap<String, Aggregate>,
}

impl EvaluationRun {
    pub fn from_records(
        method: &str,
        sois: Vec<String>,
        seeds: Vec<u64>,
        num_scms: u64,
        records: &[QueryResult],
    ) -> Self {
        let mut per_soi: BTreeMap<String, Vec<QueryResult>> = BTreeMap::new();
        let mut per_seed: BTreeMap<String, Vec<QueryResult>> = BTreeMap::new();
        for r in records {
            per_soi.entry(r.soi.clone()).or_default().push(r.clone());
            per_seed
                .entry(format!("{}/{}", r.soi, r.seed))
                .or_default()
                .push(r.clone());
        }
        Self {
            method: method.into(),
            sois,
            seeds,
            num_scms,
            overall: aggregate(records),
            per_soi: per_soi
                .iter()
                .map(|(k, v)| (k.clone(), aggregate(v)))
                .collect(),
            per_seed: per_seed
                .iter()
                .map(|(k, v)| (k.clone(), aggregate(v)))
                .collect(),
        }
    }
}

const CSV_HEADER: &str = "soi,seed,scm_index,query_id,kind,truth,estimate,error,abs_error,squared_error,failed,reason,runtime";

pub fn records_csv(records: &[QueryResult]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.soi,
            r.seed,
            r.scm_index,
            r.query_id,
            r.kind,
            r.truth,
            r.estimate,
            r.error,
            r.abs_error,
            r.squared_error,
            r.failed,
            r.reason.replace([',', '\n'], " "),
            r.runtime
        ));
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<QueryResult>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Protocol(
            "records.csv has an unexpected header".into(),
        ));
    }
    let bad = |l: &str| Error::Protocol(format!("bad records.csv line: {l}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 13 {
                return Err(bad(l));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(l));
            Ok(QueryResult {
                soi: f[0].into(),
                seed: f[1].parse().map_err(|_| bad(l))?,
                scm_index: f[2].parse().map_err(|_| bad(l))?,
                query_id: f[3].into(),
                kind: f[4].into(),
                truth: num(f[5])?,
                estimate: num(f[6])?,
                error: num(f[7])?,
                abs_error: num(f[8])?,
                squared_error: num(f[9])?,
                failed: f[10].parse().map_err(|_| bad(l))?,
                reason: f[11].into(),
                runtime: num(f[12])?,
            })
        })
        .collect()
}

/// Runs the estimator in `dir` and waits up to the timeout.
fn run_estimator(
    cmd: &EstimatorCommand,
    program: &Path,
    dir: &Path,
) -> std::result::Result<(), String> {
    let mut child = Command::new(program)
        .args(&cmd.args)
        .arg(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("spawn failed: {e}"))?;
    let start = Instant::now();
    loop {
        match child.try_wait() {
            Ok(Some(status)) if status.success() => return Ok(()),
            Ok(Some(status)) => {
                let mut err = String::new();
                if let Some(mut s) = child.stderr.take() {
                    use std::io::Read;
                    let _ = s.read_to_string(&mut err);
                }
                let tail: String = err.lines().last().unwrap_or("").chars().take(200).collect();
                return Err(format!(
                    "exit status {}{}",
                    status.code().map_or("signal".into(), |c| c.to_string()),
                    if tail.is_empty() {
                        String::new()
                    } else {
                        format!(": {tail}")
                    }
                ));
            }
            Ok(None) if start.elapsed() >= cmd.timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(Error::Timeout(cmd.timeout.as_secs()).to_string());
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(format!("wait failed: {e}")),
        }
    }
}

fn kind_name(q: &QueryRecord) -> String {
    serde_json::to_value(q.query.kind)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

/// Scores one model's estimates. Queries with an undefined truth are left out.
fn score(
    soi: &str,
    seed: u64,
    scm_index: u64,
    truths: &[QueryRecord],
    outcome: std::result::Result<HashMap<String, f64>, String>,
    runtime: f64,
) -> Vec<QueryResult> {
    truths
        .iter()
        .filter_map(|q| {
            let truth = q.truth()?;
            if truth.is_nan() {
                return None;
            }
            let (estimate, reason) = match &outcome {
                Err(e) => (f64::NAN, e.clone()),
                Ok(map) => match map.get(&q.id) {
                    None => (f64::NAN, "missing estimate".to_string()),
                    Some(v) if !v.is_finite() => (f64::NAN, "non-finite estimate".to_string()),
                    Some(&v) => (v, String::new()),
                },
            };
            let failed = !reason.is_empty();
            let error = if failed { f64::NAN } else { estimate - truth };
            Some(QueryResult {
                soi: soi.into(),
                seed,
                scm_index,
                query_id: q.id.clone(),
                kind: kind_name(q),
                truth,
                estimate,
                error,
                abs_error: error.abs(),
                squared_error: error * error,
                failed,
                reason,
                runtime,
            })
        })
        .collect()
}

/// Generates each `(soi, seed, k)` benchmark under `work_root`, runs the
/// estimator on it and scores the estimates. Estimator failures (nonzero
/// exit, timeout, malformed output, NaN) count against the failure rate;
/// generation errors abort the run.
pub fn run_evaluation(
    sois: &[(String, SpaceOfInterest)],
    seeds: &[u64],
    num_scms: u64,
    estimator: &EstimatorCommand,
    work_root: &Path,
    jobs: usize,
) -> Result<(EvaluationRun, Vec<QueryResult>)> {
    let program = estimator.resolve()?;
    let mut records = Vec::new();
    for (name, soi) in sois {
        for &seed in seeds {
            let per_scm = dataset::parallel_map(num_scms, jobs, |k| -> Result<Vec<QueryResult>> {
                let dir = work_root
                    .join(name)
                    .join(format!("seed_{seed}"))
                    .join(dataset::scm_dir_name(k));
                let ds = dataset::generate_one(soi, seed, k, GenerateOptions { metrics: false })?;
                let truths = dataset::write_estimator_inputs(&dir, &ds, estimator.truth_sidecar)?;
                let out_file = dir.join("estimates.jsonl");
                let _ = fs::remove_file(&out_file);
                let start = Instant::now();
                let outcome = run_estimator(estimator, &program, &dir).and_then(|()| {
                    let text = fs::read_to_string(&out_file)
                        .map_err(|e| format!("no estimates.jsonl: {e}"))?;
                    parse_estimates(&text).map_err(|e| e.to_string())
                });
                let runtime = start.elapsed().as_secs_f64();
                if let Err(e) = &outcome {
                    log::warn!("{name} seed {seed} scm {k}: {e}");
                }
                Ok(score(name, seed, k, &truths, outcome, runtime))
            })?;
            for r in per_scm {
                records.extend(r?);
            }
        }
    }
    let run = EvaluationRun::from_records(
        &estimator.name,
        sois.iter().map(|(n, _)| n.clone()).collect(),
        seeds.to_vec(),
        num_scms,
        &records,
    );
    Ok((run, records))
}

/// Writes `results.json` and `records.csv` into `out`.
pub fn write_results(out: &Path, run: &EvaluationRun, records: &[QueryResult]) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut json = serde_json::to_vec_pretty(run)?;
    json.push(b'\n');
    dataset::write_atomic(&out.join("results.json"), &json)?;
    dataset::write_atomic(&out.join("records.csv"), records_csv(records).as_bytes())
}

/// Built-in reference estimators, used to test the harness end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinEstimator {
    /// Copies the ground truth from `truth.jsonl`.
    Oracle,
    /// Answers 0 everywhere.
    Zero,
}

/// Writes `estimates.jsonl` in `dir` for a built-in estimator.
pub fn run_builtin(kind: BuiltinEstimator, dir: &Path) -> Result<()> {
    let source = match kind {
        BuiltinEstimator::Oracle => dir.join("truth.jsonl"),
        BuiltinEstimator::Zero => dir.join("queries.jsonl"),
    };
    let queries = dataset::read_queries(&source)?;
    let mut out = String::new();
    for q in &queries {
        let estimate = match kind {
            BuiltinEstimator::Oracle => q.truth().filter(|v| v.is_finite()),
            BuiltinEstimator::Zero => Some(0.0),
        };
        out.push_str(&serde_json::to_string(&Estimate {
            id: q.id.clone(),
            estimate,
        })?);
        out.push('\n');
    }
    dataset::write_atomic(&dir.join("estimates.jsonl"), out.as_bytes())
}
