//! Benchmark generation: one directory per sampled model with its data,
//! projected graph, queries and metrics.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{self, MetricsReport};
use crate::error::{Error, Result};
use crate::graph::GraphJson;
use crate::queries::{self, GroundTruth, Query};
use crate::scm::{self, DataMatrix, Provenance, Scm};
use crate::seed::SeedNode;
use crate::soi::{SpaceOfInterest, SCHEMA_VERSION};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One line of `queries.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    #[serde(flatten)]
    pub query: Query,
    /// Withheld in estimator inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_estimation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nan: Option<bool>,
}

impl QueryRecord {
    pub fn new(index: usize, query: Query, truth: Option<&GroundTruth>) -> Self {
        Self {
            id: format!("q{index}"),
            query,
            ground_truth: truth.map(|g| g.value),
            n_estimation: truth.map(|g| g.n_estimation),
            effective_rows: truth.and_then(|g| g.effective_rows),
            nan: truth.map(|g| g.value.is_nan()),
        }
    }

    pub fn without_truth(&self) -> Self {
        Self {
            ground_truth: None,
            n_estimation: None,
            effective_rows: None,
            nan: None,
            ..self.clone()
        }
    }

    /// The stored truth, with a `nan` flag turning a null back into NaN.
    pub fn truth(&self) -> Option<f64> {
        match (self.ground_truth, self.nan) {
            (Some(v), _) => Some(v),
            (None, Some(true)) => Some(f64::NAN),
            _ => None,
        }
    }
}

/// Everything generated for one model.
#[derive(Debug, Clone)]
pub struct CausalDataset {
    pub scm: Scm,
    pub data: DataMatrix,
    pub graph: GraphJson,
    pub queries: Vec<(Query, GroundTruth)>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub metrics: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { metrics: true }
    }
}

/// Seed of model `index` under `master_seed`.
pub fn scm_seed(master_seed: u64, index: u64) -> SeedNode {
    SeedNode::root(master_seed).child("scm", index)
}

/// Samples model `index` and everything derived from it.
pub fn generate_one(
    soi: &SpaceOfInterest,
    master_seed: u64,
    index: u64,
    opts: GenerateOptions,
) -> Result<CausalDataset> {
    let seed = scm_seed(master_seed, index);
    let mut scm = scm::sample_scm(soi, &mut seed.stream("structure", 0))?;
    scm.provenance = Provenance {
        soi_hash: soi.hash(),
        master_seed,
        scm_index: index,
    };
    let data = scm.sample_observed(soi.num_samples, &seed.child("data", 0))?;
    let graph = scm.graph.latent_project()?.to_json();
    let queries = if soi.disable_queries {
        Vec::new()
    } else {
        queries::generate_queries(&scm, soi, &seed.child("queries", 0), index)?
    };
    let metrics = if opts.metrics {
        Some(analysis::analyze(
            &scm,
            soi.probe_samples,
            &seed.child("analysis", 0),
        )?)
    } else {
        None
    };
    Ok(CausalDataset {
        scm,
        data,
        graph,
        queries,
        metrics,
    })
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

pub fn queries_jsonl(records: &[QueryRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Per-model manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub soi_hash: String,
    pub master_seed: u64,
    pub scm_index: u64,
    pub num_nodes: usize,
    pub num_observed: usize,
    pub num_samples: usize,
    pub num_queries: usize,
}

/// Layout of one model directory:
/// `data.csv`, `graph.json`, `queries.jsonl` (unless queries are disabled),
/// `scm.json`, `metrics.json` (when computed) and `manifest.json`.
pub fn write_dataset(dir: &Path, ds: &CausalDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("data.csv"), ds.data.to_csv().as_bytes())?;
    write_atomic(&dir.join("graph.json"), &to_json_pretty(&ds.graph)?)?;
    if !ds.queries.is_empty() {
        let records: Vec<QueryRecord> = ds
            .queries
            .iter()
            .enumerate()
            .map(|(i, (q, g))| QueryRecord::new(i, q.clone(), Some(g)))
            .collect();
        write_atomic(
            &dir.join("queries.jsonl"),
            queries_jsonl(&records)?.as_bytes(),
        )?;
    }
    write_atomic(&dir.join("scm.json"), &to_json_pretty(&ds.scm)?)?;
    if let Some(m) = &ds.metrics {
        write_atomic(
            &dir.join("metrics.json"),
            &to_json_pretty(&analysis::flatten(m))?,
        )?;
    }
    let p = &ds.scm.provenance;
    let manifest = ScmManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        soi_hash: p.soi_hash.clone(),
        master_seed: p.master_seed,
        scm_index: p.scm_index,
        num_nodes: ds.scm.num_nodes(),
        num_observed: ds.data.nodes.len(),
        num_samples: ds.data.rows(),
        num_queries: ds.queries.len(),
    };
    write_atomic(&dir.join("manifest.json"), &to_json_pretty(&manifest)?)
}

/// Estimator inputs: data and projected graph, queries without their
/// truths, and the truths in a separate `truth.jsonl` that a harness may
/// keep or delete.
pub fn write_estimator_inputs(
    dir: &Path,
    ds: &CausalDataset,
    truth_sidecar: bool,
) -> Result<Vec<QueryRecord>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("data.csv"), ds.data.to_csv().as_bytes())?;
    write_atomic(&dir.join("graph.json"), &to_json_pretty(&ds.graph)?)?;
    let records: Vec<QueryRecord> = ds
        .queries
        .iter()
        .enumerate()
        .map(|(i, (q, g))| QueryRecord::new(i, q.clone(), Some(g)))
        .collect();
    let public: Vec<QueryRecord> = records.iter().map(QueryRecord::without_truth).collect();
    write_atomic(
        &dir.join("queries.jsonl"),
        queries_jsonl(&public)?.as_bytes(),
    )?;
    if truth_sidecar {
        write_atomic(
            &dir.join("truth.jsonl"),
            queries_jsonl(&records)?.as_bytes(),
        )?;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmEntry {
    pub index: u64,
    pub dir: String,
}

/// Manifest of a whole generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub soi_hash: String,
    pub master_seed: u64,
    pub num_scms: u64,
    /// Arguments that affect the output (paths and worker counts excluded).
    pub command_line: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub scms: Vec<ScmEntry>,
}

pub fn scm_dir_name(index: u64) -> String {
    format!("scm_{index}")
}

/// Runs `f` over `0..count` on `jobs` workers, returning results in index order.
pub fn parallel_map<T: Send>(
    count: u64,
    jobs: usize,
    f: impl Fn(u64) -> T + Sync + Send,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Param(format!("cannot start {jobs} workers: {e}")))?;
            return Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()));
        }
    }
    let _ = jobs;
    Ok((0..count).map(f).collect())
}

/// Generates `num_scms` models into `out/scm_k/` plus `out/soi.toml` and
/// `out/manifest.json`. The tree depends only on the space of interest,
/// the seed and the tool version.
pub fn generate(
    soi: &SpaceOfInterest,
    master_seed: u64,
    num_scms: u64,
    out: &Path,
    jobs: usize,
    opts: GenerateOptions,
    command_line: Vec<String>,
) -> Result<RunManifest> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join("soi.toml"), soi.to_toml().as_bytes())?;
    let results = parallel_map(num_scms, jobs, |k| -> Result<()> {
        let ds = generate_one(soi, master_seed, k, opts)?;
        write_dataset(&out.join(scm_dir_name(k)), &ds)?;
        log::info!("generated {}", scm_dir_name(k));
        Ok(())
    })?;
    results.into_iter().collect::<Result<Vec<()>>>()?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.into(),
        soi_hash: soi.hash(),
        master_seed,
        num_scms,
        command_line,
        started_at: None,
        finished_at: None,
        scms: (0..num_scms)
            .map(|k| ScmEntry {
                index: k,
                dir: scm_dir_name(k),
            })
            .collect(),
    };
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    write_atomic(&out.join("manifest.json"), &to_json_pretty(manifest)?)
}

/// Model directories under `root`, ordered by index.
pub fn list_scm_dirs(root: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) = name
            .strip_prefix("scm_")
            .and_then(|s| s.parse::<u64>().ok())
        {
            if entry.path().is_dir() {
                out.push((k, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_scm(dir: &Path) -> Result<Scm> {
    let path = dir.join("scm.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Metrics CSV: one row per model, one column per metric, columns sorted.
pub fn metrics_csv(rows: &[(u64, std::collections::BTreeMap<String, f64>)]) -> String {
    let mut names: Vec<&String> = rows.iter().flat_map(|(_, m)| m.keys()).collect();
    names.sort();
    names.dedup();
    let mut out = String::from("scm_index");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (k, m) in rows {
        out.push_str(&k.to_string());
        for n in &names {
            out.push(',');
            if let Some(v) = m.get(*n) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soi::parse_soi;

    fn small() -> SpaceOfInterest {
        parse_soi("num_nodes = [3, 5]\nexpected_edges = \"N\"\nnum_samples = 50\nqueries_per_scm = 2\nestimation_samples = 500\nprobe_samples = 2000\nsupport_samples = 1000").unwrap()
    }

    #[test]
    fn query_records_round_trip() {
        let ds = generate_one(&small(), 3, 0, GenerateOptions { metrics: false }).unwrap();
        let (q, g) = &ds.queries[0];
        let r = QueryRecord::new(0, q.clone(), Some(g));
        let back: QueryRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let public = serde_json::to_string(&r.without_truth()).unwrap();
        assert!(!public.contains("ground_truth") && public.contains("\"id\":\"q0\""));
    }

    #[test]
    fn nan_truth_survives_json() {
        let q = Query {
            kind: crate::soi::QueryKind::Ate,
            treatment: 0,
            outcome: 1,
            t: 1.0,
            c: 0.0,
            covariates: vec![],
            covariate_values: vec![],
            factuals: vec![],
            factual_values: vec![],
            y: None,
        };
        let g = GroundTruth {
            value: f64::NAN,
            n_estimation: 10,
            effective_rows: Some(0),
        };
        let r = QueryRecord::new(1, q, Some(&g));
        let back: QueryRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert!(back.truth().unwrap().is_nan());
    }

    #[test]
    fn generation_is_deterministic_across_workers() {
        let soi = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(&soi, 11, 3, a.path(), 1, GenerateOptions::default(), vec![]).unwrap();
        generate(&soi, 11, 3, b.path(), 3, GenerateOptions::default(), vec![]).unwrap();
        for (k, dir) in list_scm_dirs(a.path()).unwrap() {
            for f in [
                "data.csv",
                "graph.json",
                "queries.jsonl",
                "scm.json",
                "metrics.json",
                "manifest.json",
            ] {
                let x = fs::read_to_string(dir.join(f)).unwrap();
                let y = fs::read_to_string(b.path().join(scm_dir_name(k)).join(f)).unwrap();
                assert!(x == y, "{f} of scm {k} differs");
            }
        }
        assert_eq!(
            fs::read(a.path().join("manifest.json")).unwrap(),
            fs::read(b.path().join("manifest.json")).unwrap()
        );
    }

    #[test]
    fn stored_scm_reproduces_the_data() {
        let soi = small();
        let dir = tempfile::tempdir().unwrap();
        generate(
            &soi,
            5,
            1,
            dir.path(),
            1,
            GenerateOptions { metrics: false },
            vec![],
        )
        .unwrap();
        let scm = read_scm(&dir.path().join("scm_0")).unwrap();
        let (data, _) = scm
            .forward_sample(soi.num_samples, &scm_seed(5, 0).child("data", 0))
            .unwrap();
        assert_eq!(
            data.to_csv(),
            fs::read_to_string(dir.path().join("scm_0/data.csv")).unwrap()
        );
    }

    #[test]
    fn disabled_queries_write_no_file() {
        let soi = parse_soi("num_nodes = 3\nexpected_edges = 2\nnum_samples = 10\ndisable_queries = true\nprobe_samples = 100").unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate(
            &soi,
            1,
            1,
            dir.path(),
            1,
            GenerateOptions::default(),
            vec![],
        )
        .unwrap();
        assert!(!dir.path().join("scm_0/queries.jsonl").exists());
        assert!(dir.path().join("scm_0/metrics.json").exists());
    }

    #[test]
    fn metrics_csv_layout() {
        let rows = vec![
            (0, [("b".to_string(), 1.0), ("a".to_string(), 0.5)].into()),
            (1, [("a".to_string(), 2.0)].into()),
        ];
        assert_eq!(metrics_csv(&rows), "scm_index,a,b\n0,0.5,1\n1,2,\n");
        assert_eq!(metrics_csv(&[]), "scm_index\n");
    }
}
