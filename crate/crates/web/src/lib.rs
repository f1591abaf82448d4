//! Browser bindings. Every export takes a space-of-interest document (TOML)
//! plus a seed and returns JSON text, so the page needs no glue types.

use scmbench::analysis;
use scmbench::dataset::{self, GenerateOptions};
use scmbench::soi::{parse_soi, SpaceOfInterest};
use scmbench::verify::{verify_scm, Level, VerifyConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Caps that keep a single call responsive in a browser tab.
const MAX_NODES: usize = 12;
const MAX_ROWS: usize = 20_000;

fn load(soi: &str) -> Result<SpaceOfInterest, String> {
    let soi = parse_soi(soi).map_err(|e| e.to_string())?;
    if soi.num_nodes.1 > MAX_NODES {
        return Err(format!("the demo is limited to {MAX_NODES} nodes"));
    }
    if soi.num_samples > MAX_ROWS || soi.estimation_samples > 10 * MAX_ROWS {
        return Err(format!(
            "the demo is limited to {MAX_ROWS} data rows and {} estimation rows",
            10 * MAX_ROWS
        ));
    }
    Ok(soi)
}

fn text(v: serde_json::Value) -> String {
    serde_json::to_string(&v).expect("json values serialize")
}

/// Samples one model: projected graph, hidden nodes, cardinalities, the first
/// rows of data and the queries with their ground truths.
pub fn sample_benchmark_json(soi: &str, seed: u64, preview_rows: usize) -> Result<String, String> {
    let soi = load(soi)?;
    let ds = dataset::generate_one(&soi, seed, 0, GenerateOptions { metrics: false })
        .map_err(|e| e.to_string())?;
    let header = ds.data.header();
    let csv = ds.data.to_csv();
    let preview: Vec<&str> = csv.lines().skip(1).take(preview_rows).collect();
    let queries: Vec<_> = ds
        .queries
        .iter()
        .enumerate()
        .map(|(i, (q, t))| json!({ "id": format!("q{i}"), "query": q, "ground_truth": t.value }))
        .collect();
    Ok(text(json!({
        "graph": ds.graph,
        "edges": ds.scm.graph.edges(),
        "hidden": ds.scm.graph.hidden(),
        "cardinalities": ds.scm.cards,
        "columns": header,
        "rows": preview,
        "queries": queries,
    })))
}

/// Analysis metrics of the sampled model as a flat name to value map.
pub fn model_metrics_json(soi: &str, seed: u64) -> Result<String, String> {
    let soi = load(soi)?;
    let ds = dataset::generate_one(&soi, seed, 0, GenerateOptions { metrics: false })
        .map_err(|e| e.to_string())?;
    let probe = soi.probe_samples.min(MAX_ROWS * 5);
    let report = analysis::analyze(
        &ds.scm,
        probe,
        &dataset::scm_seed(seed, 0).child("analysis", 0),
    )
    .map_err(|e| e.to_string())?;
    let flat: serde_json::Map<String, serde_json::Value> = analysis::flatten(&report)
        .into_iter()
        .map(|(k, v)| {
            (
                k,
                if v.is_finite() {
                    json!(v)
                } else {
                    serde_json::Value::Null
                },
            )
        })
        .collect();
    Ok(text(serde_json::Value::Object(flat)))
}

/// Runs one verification level (`l1`, `l2` or `l3`) on the sampled model.
pub fn verify_json(soi: &str, seed: u64, level: &str, samples: usize) -> Result<String, String> {
    let soi = load(soi)?;
    let level: Level = level.parse().map_err(|e: scmbench::Error| e.to_string())?;
    let ds = dataset::generate_one(&soi, seed, 0, GenerateOptions { metrics: false })
        .map_err(|e| e.to_string())?;
    let samples = samples.clamp(100, 5 * MAX_ROWS);
    let cfg = VerifyConfig {
        samples,
        noise_draws: samples,
        max_cond: 2,
        ..VerifyConfig::default()
    };
    let r = verify_scm(
        level,
        &ds.scm,
        &cfg,
        &dataset::scm_seed(seed, 0).child("verify", 0),
        0,
    )
    .map_err(|e| e.to_string())?;
    Ok(text(r.summary_json()))
}

#[wasm_bindgen(js_name = sampleBenchmark)]
pub fn sample_benchmark(soi: &str, seed: u64, preview_rows: usize) -> Result<String, JsValue> {
    sample_benchmark_json(soi, seed, preview_rows).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = modelMetrics)]
pub fn model_metrics(soi: &str, seed: u64) -> Result<String, JsValue> {
    model_metrics_json(soi, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = verifyModel)]
pub fn verify_model(soi: &str, seed: u64, level: &str, samples: usize) -> Result<String, JsValue> {
    verify_json(soi, seed, level, samples).map_err(|e| JsValue::from_str(&e))
}
