//! Statistical and exact checks that sampled models behave as causal models
//! should: the Markov property, the do-calculus rules and the axioms of
//! structural counterfactuals.

mod axioms;
mod do_calculus;
mod markov;
pub mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use axioms::verify_ctf_axioms;
pub use do_calculus::verify_do_calculus;
pub use markov::verify_markov;
pub use stats::{bh_correct, chi2_gof, chi2_independence, koehler_ok, ChiSquare, KoehlerRule};

use crate::error::{Error, Result};
use crate::scm::{NoiseMatrix, Scm};
use crate::seed::SeedNode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    L1,
    L2,
    L3,
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "markov" => Ok(Level::L1),
            "l2" | "do" => Ok(Level::L2),
            "l3" | "ctf" => Ok(Level::L3),
            _ => Err(Error::validation(
                "level",
                format!("unknown level {s:?} (expected l1, l2 or l3)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub pass: u64,
    pub fail: u64,
    pub skip: u64,
}

impl Tally {
    pub fn add(&mut self, o: Outcome) {
        self.total += 1;
        match o {
            Outcome::Pass => self.pass += 1,
            Outcome::Fail => self.fail += 1,
            Outcome::Skip => self.skip += 1,
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        self.total += other.total;
        self.pass += other.pass;
        self.fail += other.fail;
        self.skip += other.skip;
    }

    /// Passes over all tests, skips included in the denominator.
    pub fn pass_rate(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.pass as f64 / self.total as f64
        }
    }
}

/// One stratum of a composite test (or one noise draw for the axioms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRecord {
    /// Values of the conditioning variables.
    pub values: Vec<u32>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<ChiSquare>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skip_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub scm_index: usize,
    /// Tally group, e.g. `cond_size_2` or `rule_3`.
    pub group: String,
    pub variables: BTreeMap<String, Vec<usize>>,
    pub outcome: Outcome,
    pub strata: Vec<StratumRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub level: Level,
    pub alpha: f64,
    pub samples: usize,
    /// Composite tests per group.
    pub composite: BTreeMap<String, Tally>,
    /// Individual χ² tests (or equality checks) per group.
    pub individual: BTreeMap<String, Tally>,
    pub records: Vec<CompositeRecord>,
}

impl VerificationResult {
    pub fn new(level: Level, alpha: f64, samples: usize) -> Self {
        Self {
            level,
            alpha,
            samples,
            composite: BTreeMap::new(),
            individual: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: CompositeRecord) {
        self.composite
            .entry(record.group.clone())
            .or_default()
            .add(record.outcome);
        let ind = self.individual.entry(record.group.clone()).or_default();
        for s in &record.strata {
            ind.add(s.outcome);
        }
        self.records.push(record);
    }

    pub fn merge(&mut self, other: VerificationResult) {
        for (k, t) in &other.composite {
            self.composite.entry(k.clone()).or_default().merge(t);
        }
        for (k, t) in &other.individual {
            self.individual.entry(k.clone()).or_default().merge(t);
        }
        self.records.extend(other.records);
    }

    pub fn composite_total(&self) -> Tally {
        let mut t = Tally::default();
        self.composite.values().for_each(|x| t.merge(x));
        t
    }

    pub fn individual_total(&self) -> Tally {
        let mut t = Tally::default();
        self.individual.values().for_each(|x| t.merge(x));
        t
    }

    /// Summary without the per-test records.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "level": self.level,
            "alpha": self.alpha,
            "samples": self.samples,
            "composite": self.composite,
            "individual": self.individual,
            "composite_total": self.composite_total(),
            "individual_total": self.individual_total(),
        })
    }

    /// One CSV line per individual test.
    pub fn records_csv(&self) -> String {
        let mut out = String::from("scm_index,group,variables,composite_outcome,values,outcome,statistic,df,p_value,skip_reason\n");
        for r in &self.records {
            let vars = r
                .variables
                .iter()
                .map(|(k, v)| {
                    format!(
                        "{k}={}",
                        v.iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join("|")
                    )
                })
                .collect::<Vec<_>>()
                .join(";");
            for s in &r.strata {
                let values = s
                    .values
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join("|");
                let (stat, df, p) = match &s.test {
                    Some(t) => (
                        t.statistic.to_string(),
                        t.df.to_string(),
                        t.p_value.to_string(),
                    ),
                    None => Default::default(),
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.scm_index,
                    r.group,
                    vars,
                    outcome_str(r.outcome),
                    values,
                    outcome_str(s.outcome),
                    stat,
                    df,
                    p,
                    s.skip_reason.as_deref().unwrap_or("")
                ));
            }
        }
        out
    }
}

fn outcome_str(o: Outcome) -> &'static str {
    match o {
        Outcome::Pass => "pass",
        Outcome::Fail => "fail",
        Outcome::Skip => "skip",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Samples per dataset (L1, L2).
    pub samples: usize,
    pub alpha: f64,
    /// Largest conditioning set for the Markov check.
    pub max_cond: usize,
    pub koehler: KoehlerRule,
    /// Noise draws per sampled variable partition (L3).
    pub noise_draws: usize,
    /// Variable partitions drawn per model (L3).
    pub partitions: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 50_000,
            alpha: 0.05,
            max_cond: 3,
            koehler: KoehlerRule::default(),
            noise_draws: 50_000,
            partitions: 1,
        }
    }
}

fn require_discrete_markovian(scm: &Scm) -> Result<()> {
    if !scm.is_discrete() {
        return Err(Error::NotDiscrete);
    }
    if !scm.graph.hidden().is_empty() {
        return Err(Error::NotMarkovian);
    }
    Ok(())
}

/// Samples as bytes, `cols[node][row]`.
struct ByteData {
    rows: usize,
    cols: Vec<Vec<u8>>,
}

fn byte_data(
    scm: &Scm,
    n: usize,
    interventions: &[(usize, f64)],
    seed: &SeedNode,
) -> Result<ByteData> {
    let noise = NoiseMatrix::sample(scm, n, seed)?;
    let values = scm.evaluate(&noise, interventions, None)?;
    Ok(ByteData {
        rows: n,
        cols: values
            .cols
            .iter()
            .map(|c| c.iter().map(|&x| x as u8).collect())
            .collect(),
    })
}

/// Counts of `target` per stratum of `cond`, keyed by the stratum values.
fn stratified_counts(
    data: &ByteData,
    target: usize,
    card: usize,
    cond: &[usize],
) -> HashMap<Vec<u32>, Vec<u64>> {
    let mut out: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
    let mut key = vec![0u32; cond.len()];
    for r in 0..data.rows {
        for (k, &c) in cond.iter().enumerate() {
            key[k] = u32::from(data.cols[c][r]);
        }
        let e = out.entry(key.clone()).or_insert_with(|| vec![0; card]);
        e[usize::from(data.cols[target][r])] += 1;
    }
    out
}

/// Runs the χ² tests of one composite test. `tables` pairs each stratum
/// with its contingency table; BH runs over the strata that were tested.
fn composite_from_tables(
    tables: Vec<(Vec<u32>, Vec<Vec<u64>>)>,
    alpha: f64,
    rule: &KoehlerRule,
) -> (Outcome, Vec<StratumRecord>) {
    let mut strata = Vec::with_capacity(tables.len());
    let mut tested = Vec::new();
    for (values, table) in tables {
        let rec = match chi2_independence(&table) {
            Err(_) => StratumRecord {
                values,
                outcome: Outcome::Skip,
                test: None,
                skip_reason: Some("degenerate".into()),
            },
            Ok(_) if !rule.ok(&table) => StratumRecord {
                values,
                outcome: Outcome::Skip,
                test: None,
                skip_reason: Some("sample size".into()),
            },
            Ok(t) => {
                tested.push(strata.len());
                StratumRecord {
                    values,
                    outcome: Outcome::Pass,
                    test: Some(t),
                    skip_reason: None,
                }
            }
        };
        strata.push(rec);
    }
    let ps: Vec<f64> = tested
        .iter()
        .map(|&i| strata[i].test.as_ref().map_or(1.0, |t| t.p_value))
        .collect();
    let reject = bh_correct(&ps, alpha);
    for (&i, &r) in tested.iter().zip(&reject) {
        if r {
            strata[i].outcome = Outcome::Fail;
        }
    }
    let outcome = if tested.is_empty() {
        Outcome::Skip
    } else if reject.iter().any(|&r| r) {
        Outcome::Fail
    } else {
        Outcome::Pass
    };
    (outcome, strata)
}

/// Runs a level over one model.
pub fn verify_scm(
    level: Level,
    scm: &Scm,
    cfg: &VerifyConfig,
    seed: &SeedNode,
    scm_index: usize,
) -> Result<VerificationResult> {
    let mut r = match level {
        Level::L1 => verify_markov(scm, cfg, seed)?,
        Level::L2 => verify_do_calculus(scm, cfg, seed)?,
        Level::L3 => verify_ctf_axioms(scm, cfg, seed)?,
    };
    for rec in &mut r.records {
        rec.scm_index = scm_index;
    }
    Ok(r)
}
