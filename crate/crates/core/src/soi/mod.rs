//! Space-of-interest configuration: the declarative domain from which SCMs,
//! datasets and queries are sampled.
//!
//! The on-disk format is a flat TOML document. Every key is optional except
//! `expected_edges`; unknown keys are rejected. See `SoiDocument` for the
//! schema and `SpaceOfInterest::to_toml` for the canonical form.

mod expr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use expr::{BinaryOp, Function, SymbolicExpr};

use crate::error::{Error, Result};
use crate::queries::Query;

/// Version of the on-disk layout and config schema embedded in every output.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismFamily {
    Linear,
    #[serde(alias = "nn")]
    NeuralNet,
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableType {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteSampling {
    SampleRejection,
    Exhaustive,
    UnbiasedRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => Err(
                Error::Param(format!("uniform noise needs lo < hi, got [{lo}, {hi}]")),
            ),
            NoiseSpec::Normal { mean, std }
                if !(mean.is_finite() && std.is_finite() && std > 0.0) =>
            {
                Err(Error::Param(format!(
                    "normal noise needs std > 0, got {std}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// The support interval, if bounded.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            NoiseSpec::Uniform { lo, hi } => Some((lo, hi)),
            NoiseSpec::Normal { .. } => None,
        }
    }

    fn distribution_name(&self) -> &'static str {
        match self {
            NoiseSpec::Uniform { .. } => "uniform",
            NoiseSpec::Normal { .. } => "normal",
        }
    }

    fn args(&self) -> Vec<f64> {
        match *self {
            NoiseSpec::Uniform { lo, hi } => vec![lo, hi],
            NoiseSpec::Normal { mean, std } => vec![mean, std],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "ate", alias = "ATE")]
    Ate,
    #[serde(rename = "cate", alias = "CATE")]
    Cate,
    #[serde(rename = "ctf_te", alias = "CtfTE", alias = "ctfte")]
    CtfTe,
}

/// How counterfactual total effects aggregate the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtfForm {
    /// Difference of posterior means of Y.
    Mean,
    /// Difference of posterior probabilities P(Y = y); discrete outcomes only.
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredefinedGraph {
    pub num_nodes: usize,
    /// Directed edges `[parent, child]`; parents must precede children.
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    /// Fixed hidden set. When absent, hidden nodes are drawn from `hidden_proportion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismArgs {
    /// Hidden layer widths of neural mechanisms. Default `[8, 8]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_sizes: Option<Vec<usize>>,
    /// Maximum mapping-table entries stored per tabular mechanism. Default 10^6.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_budget: Option<u64>,
}

pub const DEFAULT_HIDDEN_SIZES: [usize; 2] = [8, 8];
pub const DEFAULT_TABLE_BUDGET: u64 = 1_000_000;

impl MechanismArgs {
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden_sizes
            .clone()
            .unwrap_or_else(|| DEFAULT_HIDDEN_SIZES.to_vec())
    }

    pub fn table_budget(&self) -> u64 {
        self.table_budget.unwrap_or(DEFAULT_TABLE_BUDGET)
    }
}

/// A validated space of interest with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceOfInterest {
    pub num_nodes: (usize, usize),
    pub expected_edges: SymbolicExpr,
    pub hidden_proportion: f64,
    pub markovian: bool,
    pub semi_markovian: bool,
    pub predefined_graph: Option<PredefinedGraph>,
    pub mechanism_family: MechanismFamily,
    pub mechanism_args: MechanismArgs,
    pub variable_type: VariableType,
    pub cardinality: (usize, usize),
    pub discrete_sampling: DiscreteSampling,
    pub noise_mode: NoiseMode,
    pub noise: NoiseSpec,
    pub noise_regions: SymbolicExpr,
    pub query_type: QueryKind,
    pub queries_per_scm: usize,
    pub specific_queries: Option<Vec<Query>>,
    pub allow_nan_queries: bool,
    pub disable_queries: bool,
    pub ctf_te_form: CtfForm,
    pub kernel: KernelSpec,
    pub num_samples: usize,
    /// Monte-Carlo sample count per ground-truth estimate.
    pub estimation_samples: usize,
    /// Size of the observational pool query values are drawn from.
    /// `None` means max(100000, 100 * num_samples).
    pub support_samples: Option<usize>,
    /// Sample count for distribution metrics.
    pub probe_samples: usize,
}

/// Integer given either as a single value or as an inclusive `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntRange {
    One(i64),
    Range([i64; 2]),
}

impl IntRange {
    fn bounds(self) -> (i64, i64) {
        match self {
            IntRange::One(v) => (v, v),
            IntRange::Range([a, b]) => (a, b),
        }
    }
}

/// Raw on-disk schema. Field names are the TOML keys.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoiDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<IntRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variable_dimensionality: Option<IntRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_edges: Option<SymbolicExpr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_proportion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markovian: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub semi_markovian: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism_family: Option<MechanismFamily>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variable_type: Option<VariableType>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<IntRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrete_sampling: Option<DiscreteSampling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_mode: Option<NoiseMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_distribution: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_args: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_regions: Option<SymbolicExpr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_type: Option<QueryKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries_per_scm: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allow_nan_queries: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disable_queries: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ctf_te_form: Option<CtfForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation_samples: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_samples: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_samples: Option<i64>,
    // Tables last so the serialized document stays valid TOML.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanism_args: Option<MechanismArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predefined_graph: Option<PredefinedGraph>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specific_queries: Option<Vec<Query>>,
}

const KNOWN_KEYS: &[&str] = &[
    "num_nodes",
    "variable_dimensionality",
    "expected_edges",
    "hidden_proportion",
    "markovian",
    "semi_markovian",
    "predefined_graph",
    "mechanism_family",
    "mechanism_args",
    "variable_type",
    "cardinality",
    "discrete_sampling",
    "noise_mode",
    "noise_distribution",
    "noise_args",
    "noise_regions",
    "query_type",
    "queries_per_scm",
    "specific_queries",
    "allow_nan_queries",
    "disable_queries",
    "ctf_te_form",
    "kernel",
    "kernel_bandwidth",
    "num_samples",
    "estimation_samples",
    "support_samples",
    "probe_samples",
];

/// Keys that only matter for discrete SCMs.
const DISCRETE_ONLY_KEYS: &[&str] = &["cardinality", "noise_regions", "discrete_sampling"];

/// Parses and validates a SoI document.
pub fn parse_soi(text: &str) -> Result<SpaceOfInterest> {
    parse_soi_with_warnings(text).map(|(soi, _)| soi)
}

/// Like [`parse_soi`], also returning the warnings raised during validation.
pub fn parse_soi_with_warnings(text: &str) -> Result<(SpaceOfInterest, Vec<String>)> {
    parse_soi_with_overrides(text, &[])
}

/// Parses a SoI document, applying `key=value` overrides before validation.
///
/// Values are read as TOML literals when possible and as bare strings
/// otherwise, so `--set expected_edges=2*N` and `--set num_nodes=[3,4]` both
/// work. Dotted keys address nested tables.
pub fn parse_soi_with_overrides(
    text: &str,
    overrides: &[(String, String)],
) -> Result<(SpaceOfInterest, Vec<String>)> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Syntax(e.to_string()))?;
    for (key, value) in overrides {
        apply_override(&mut table, key, value)?;
    }
    for key in table.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::validation(key.clone(), "unknown key"));
        }
    }
    let present: Vec<String> = table.keys().cloned().collect();
    let doc: SoiDocument = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| {
            Error::validation(first_key_in(&e.to_string()), e.to_string())
        })?;
    let soi = SpaceOfInterest::from_document(doc)?;
    let mut warnings = Vec::new();
    if soi.variable_type == VariableType::Continuous {
        let ignored: Vec<&str> = DISCRETE_ONLY_KEYS
            .iter()
            .copied()
            .filter(|k| present.iter().any(|p| p == k))
            .collect();
        if !ignored.is_empty() {
            warnings.push(format!(
                "continuous variables ignore these fields: {}",
                ignored.join(", ")
            ));
        }
    }
    if soi.mechanism_family == MechanismFamily::Tabular && present.iter().any(|p| p == "noise_mode")
    {
        warnings.push("tabular mechanisms ignore noise_mode".into());
    }
    Ok((soi, warnings))
}

fn first_key_in(message: &str) -> String {
    // toml errors quote the offending key with backticks
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".into())
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just written"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Syntax(format!("empty override key in `{key}={raw}`")))?;
    let mut cursor = table;
    for part in parts {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::validation(key, format!("`{part}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn positive(field: &str, value: Option<i64>, default: usize) -> Result<usize> {
    match value {
        None => Ok(default),
        Some(v) if v >= 1 => Ok(v as usize),
        Some(v) => Err(Error::validation(
            field,
            format!("must be a positive integer, got {v}"),
        )),
    }
}

impl SpaceOfInterest {
    pub fn from_document(doc: SoiDocument) -> Result<Self> {
        if let Some(dim) = doc.variable_dimensionality {
            if dim.bounds() != (1, 1) {
                return Err(Error::validation(
                    "variable_dimensionality",
                    "only one-dimensional variables are supported; use [1, 1]",
                ));
            }
        }

        let (n_lo, n_hi) = doc.num_nodes.map(IntRange::bounds).unwrap_or((5, 15));
        if n_lo < 1 || n_lo > n_hi {
            return Err(Error::validation(
                "num_nodes",
                format!("need 1 <= min <= max, got [{n_lo}, {n_hi}]"),
            ));
        }

        let expected_edges = doc
            .expected_edges
            .ok_or_else(|| Error::validation("expected_edges", "required field is missing"))?;

        let hidden_proportion = doc.hidden_proportion.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&hidden_proportion) {
            return Err(Error::validation(
                "hidden_proportion",
                format!("must lie in [0, 1], got {hidden_proportion}"),
            ));
        }

        let semi_markovian = doc.semi_markovian.unwrap_or(false);
        let markovian = doc.markovian.unwrap_or(!semi_markovian);
        if markovian && semi_markovian {
            return Err(Error::Conflict(
                "markovian and semi_markovian are mutually exclusive".into(),
            ));
        }
        if !markovian && !semi_markovian {
            return Err(Error::validation(
                "markovian",
                "exactly one of markovian and semi_markovian must be true",
            ));
        }

        // Family and variable type imply each other when only one is given.
        let (mechanism_family, variable_type) = match (doc.mechanism_family, doc.variable_type) {
            (None, None) => (MechanismFamily::Linear, VariableType::Continuous),
            (Some(MechanismFamily::Tabular), None) => {
                (MechanismFamily::Tabular, VariableType::Discrete)
            }
            (Some(f), None) => (f, VariableType::Continuous),
            (None, Some(VariableType::Discrete)) => {
                (MechanismFamily::Tabular, VariableType::Discrete)
            }
            (None, Some(t)) => (MechanismFamily::Linear, t),
            (Some(f), Some(t)) => (f, t),
        };
        match (mechanism_family, variable_type) {
            (MechanismFamily::Tabular, VariableType::Continuous) => {
                return Err(Error::validation(
                    "variable_type",
                    "tabular mechanisms produce discrete variables",
                ))
            }
            (MechanismFamily::Linear | MechanismFamily::NeuralNet, VariableType::Discrete) => {
                return Err(Error::validation(
                    "mechanism_family",
                    "discrete variables require the tabular family",
                ))
            }
            _ => {}
        }

        let mechanism_args = doc.mechanism_args.unwrap_or_default();
        if let Some(sizes) = &mechanism_args.hidden_sizes {
            if sizes.contains(&0) {
                return Err(Error::validation(
                    "mechanism_args.hidden_sizes",
                    "layer widths must be positive",
                ));
            }
        }
        if mechanism_args.table_budget == Some(0) {
            return Err(Error::validation(
                "mechanism_args.table_budget",
                "must be positive",
            ));
        }

        let (c_lo, c_hi) = doc.cardinality.map(IntRange::bounds).unwrap_or((2, 2));
        if c_lo < 2 || c_lo > c_hi {
            return Err(Error::validation(
                "cardinality",
                format!("need 2 <= min <= max, got [{c_lo}, {c_hi}]"),
            ));
        }
        if c_hi > 255 {
            return Err(Error::validation(
                "cardinality",
                "at most 255 categories are supported",
            ));
        }

        let distribution = doc.noise_distribution.as_deref().unwrap_or("uniform");
        let args = doc.noise_args.clone();
        let noise = match distribution {
            "uniform" => {
                let a = args.unwrap_or_else(|| vec![-1.0, 1.0]);
                if a.len() != 2 {
                    return Err(Error::validation(
                        "noise_args",
                        "uniform noise takes [lo, hi]",
                    ));
                }
                NoiseSpec::Uniform { lo: a[0], hi: a[1] }
            }
            "normal" => {
                let a = args.unwrap_or_else(|| vec![0.0, 1.0]);
                if a.len() != 2 {
                    return Err(Error::validation(
                        "noise_args",
                        "normal noise takes [mean, std]",
                    ));
                }
                NoiseSpec::Normal {
                    mean: a[0],
                    std: a[1],
                }
            }
            other => {
                return Err(Error::validation(
                    "noise_distribution",
                    format!("unknown distribution `{other}`; expected uniform or normal"),
                ))
            }
        };
        noise
            .validate()
            .map_err(|e| Error::validation("noise_args", e.to_string()))?;
        if mechanism_family == MechanismFamily::Tabular && noise.bounds().is_none() {
            return Err(Error::validation(
                "noise_distribution",
                "tabular mechanisms need bounded (uniform) noise",
            ));
        }

        let noise_regions = doc.noise_regions.unwrap_or(SymbolicExpr::NodeCount);
        let ctf_te_form = doc.ctf_te_form.unwrap_or(CtfForm::Mean);
        if ctf_te_form == CtfForm::Probability && variable_type != VariableType::Discrete {
            return Err(Error::validation(
                "ctf_te_form",
                "the probability form needs discrete outcomes",
            ));
        }

        let queries_per_scm = positive("queries_per_scm", doc.queries_per_scm, 1)?;
        let num_samples = positive("num_samples", doc.num_samples, 1000)?;
        let estimation_samples = positive("estimation_samples", doc.estimation_samples, 10_000)?;
        let probe_samples = positive("probe_samples", doc.probe_samples, 1_000_000)?;
        let support_samples = match doc.support_samples {
            None => None,
            Some(v) => Some(positive("support_samples", Some(v), 0)?),
        };

        let bandwidth = doc.kernel_bandwidth.unwrap_or(0.1);
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::validation(
                "kernel_bandwidth",
                format!("must be positive, got {bandwidth}"),
            ));
        }

        if let Some(g) = &doc.predefined_graph {
            validate_predefined(g)?;
        }
        if let Some(queries) = &doc.specific_queries {
            for (i, q) in queries.iter().enumerate() {
                q.validate_shape().map_err(|e| {
                    Error::validation(format!("specific_queries[{i}]"), e.to_string())
                })?;
            }
        }

        Ok(SpaceOfInterest {
            num_nodes: (n_lo as usize, n_hi as usize),
            expected_edges,
            hidden_proportion,
            markovian,
            semi_markovian,
            predefined_graph: doc.predefined_graph,
            mechanism_family,
            mechanism_args,
            variable_type,
            cardinality: (c_lo as usize, c_hi as usize),
            discrete_sampling: doc
                .discrete_sampling
                .unwrap_or(DiscreteSampling::SampleRejection),
            noise_mode: doc.noise_mode.unwrap_or(NoiseMode::Additive),
            noise,
            noise_regions,
            query_type: doc.query_type.unwrap_or(QueryKind::Ate),
            queries_per_scm,
            specific_queries: doc.specific_queries,
            allow_nan_queries: doc.allow_nan_queries.unwrap_or(false),
            disable_queries: doc.disable_queries.unwrap_or(false),
            ctf_te_form,
            kernel: KernelSpec {
                kind: doc.kernel.unwrap_or(KernelKind::Gaussian),
                bandwidth,
            },
            num_samples,
            estimation_samples,
            support_samples,
            probe_samples,
        })
    }

    /// The fully explicit document for this SoI.
    pub fn to_document(&self) -> SoiDocument {
        SoiDocument {
            num_nodes: Some(IntRange::Range([
                self.num_nodes.0 as i64,
                self.num_nodes.1 as i64,
            ])),
            variable_dimensionality: Some(IntRange::Range([1, 1])),
            expected_edges: Some(self.expected_edges.clone()),
            hidden_proportion: Some(self.hidden_proportion),
            markovian: Some(self.markovian),
            semi_markovian: Some(self.semi_markovian),
            predefined_graph: self.predefined_graph.clone(),
            mechanism_family: Some(self.mechanism_family),
            mechanism_args: Some(self.mechanism_args.clone()),
            variable_type: Some(self.variable_type),
            cardinality: Some(IntRange::Range([
                self.cardinality.0 as i64,
                self.cardinality.1 as i64,
            ])),
            discrete_sampling: Some(self.discrete_sampling),
            noise_mode: Some(self.noise_mode),
            noise_distribution: Some(self.noise.distribution_name().into()),
            noise_args: Some(self.noise.args()),
            noise_regions: Some(self.noise_regions.clone()),
            query_type: Some(self.query_type),
            queries_per_scm: Some(self.queries_per_scm as i64),
            specific_queries: self.specific_queries.clone(),
            allow_nan_queries: Some(self.allow_nan_queries),
            disable_queries: Some(self.disable_queries),
            ctf_te_form: Some(self.ctf_te_form),
            kernel: Some(self.kernel.kind),
            kernel_bandwidth: Some(self.kernel.bandwidth),
            num_samples: Some(self.num_samples as i64),
            estimation_samples: Some(self.estimation_samples as i64),
            support_samples: self.support_samples.map(|v| v as i64),
            probe_samples: Some(self.probe_samples as i64),
        }
    }

    /// Canonical TOML serialization; parsing it yields an equal SoI.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_document()).expect("SoI documents always serialize")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_discrete(&self) -> bool {
        self.variable_type == VariableType::Discrete
    }

    pub fn support_samples(&self) -> usize {
        self.support_samples
            .unwrap_or_else(|| (100 * self.num_samples).max(100_000))
    }

    /// Expected total edge count at node count `n`. An expectation, so it
    /// stays real-valued: flooring would empty sparse small graphs.
    pub fn resolve_expected_edges(&self, n: usize) -> Result<f64> {
        let e = self
            .expected_edges
            .resolve(n as u64, self.cardinality.0 as u64)?;
        if e < 0.0 {
            return Err(Error::Domain(format!(
                "expected_edges `{}` is negative at N={n}",
                self.expected_edges
            )));
        }
        Ok(e)
    }

    /// Expected in-degree `d = expected_edges / N` passed to DAG sampling.
    pub fn expected_degree(&self, n: usize) -> Result<f64> {
        Ok(self.resolve_expected_edges(n)? / n as f64)
    }

    /// Requested noise regions for a node of cardinality `v` in a graph of `n` nodes.
    pub fn resolve_noise_regions(&self, n: usize, v: usize) -> Result<u64> {
        let r = self.noise_regions.resolve_count(n as u64, v as u64)?;
        if r < 1 {
            return Err(Error::Domain(format!(
                "noise_regions `{}` evaluates below 1 at N={n}, V={v}",
                self.noise_regions
            )));
        }
        Ok(r)
    }
}

fn validate_predefined(g: &PredefinedGraph) -> Result<()> {
    let field = "predefined_graph";
    if g.num_nodes < 1 {
        return Err(Error::validation(field, "needs at least one node"));
    }
    for &[a, b] in &g.edges {
        if a >= g.num_nodes || b >= g.num_nodes {
            return Err(Error::validation(
                field,
                format!("edge [{a}, {b}] names a missing node"),
            ));
        }
        if a >= b {
            return Err(Error::validation(
                field,
                format!("edge [{a}, {b}] must point from a lower to a higher index"),
            ));
        }
    }
    let mut sorted = g.edges.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::validation(field, "duplicate edge"));
    }
    if let Some(hidden) = &g.hidden {
        if hidden.iter().any(|&h| h >= g.num_nodes) {
            return Err(Error::validation(field, "hidden set names a missing node"));
        }
    }
    Ok(())
}
