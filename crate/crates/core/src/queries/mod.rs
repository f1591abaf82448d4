//! Causal queries (ATE, CATE, counterfactual total effect) sampled from an
//! SCM's realizable support, with Monte-Carlo ground truths computed on the
//! true model.
//!
//! Every estimator draws one noise matrix and evaluates both treatment arms
//! on it, so swapping `t` and `c` negates the result exactly.

pub mod kernel;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{abduct, NoiseMatrix, Scm, Values};
use crate::seed::{Rng, SeedNode};
use crate::soi::{CtfForm, KernelSpec, SpaceOfInterest};

pub use crate::soi::QueryKind;
use kernel::kernel_weight;

/// Resampling attempts per query slot before giving up.
pub const RETRY_CAP: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub kind: QueryKind,
    #[serde(rename = "T")]
    pub treatment: usize,
    #[serde(rename = "Y")]
    pub outcome: usize,
    pub t: f64,
    pub c: f64,
    /// Conditioning covariates (CATE).
    #[serde(rename = "X", default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<usize>,
    #[serde(rename = "x", default, skip_serializing_if = "Vec::is_empty")]
    pub covariate_values: Vec<f64>,
    /// Factual evidence (counterfactual effects).
    #[serde(rename = "V_F", default, skip_serializing_if = "Vec::is_empty")]
    pub factuals: Vec<usize>,
    #[serde(rename = "v_F", default, skip_serializing_if = "Vec::is_empty")]
    pub factual_values: Vec<f64>,
    /// Outcome value for probability-form counterfactual effects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// NaN when the conditioning event has no mass.
    pub value: f64,
    pub n_estimation: usize,
    /// Rows carrying weight after conditioning (smaller arm for CATE,
    /// posterior rows for counterfactuals); `None` for ATE.
    pub effective_rows: Option<usize>,
}

impl GroundTruth {
    fn undefined(n: usize) -> Self {
        Self {
            value: f64::NAN,
            n_estimation: n,
            effective_rows: Some(0),
        }
    }
}

fn has_duplicates(v: &[usize]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).any(|w| w[0] == w[1])
}

impl Query {
    /// Checks the fields that do not depend on a particular SCM.
    pub fn validate_shape(&self) -> Result<()> {
        if self.covariates.len() != self.covariate_values.len() {
            return Err(Error::Param("X and x differ in length".into()));
        }
        if self.factuals.len() != self.factual_values.len() {
            return Err(Error::Param("V_F and v_F differ in length".into()));
        }
        if has_duplicates(&self.covariates) || has_duplicates(&self.factuals) {
            return Err(Error::Param("repeated variable in X or V_F".into()));
        }
        match self.kind {
            QueryKind::Ate => {
                if !self.covariates.is_empty() || !self.factuals.is_empty() {
                    return Err(Error::Param("ATE queries take no X or V_F".into()));
                }
            }
            QueryKind::Cate => {
                if self.covariates.is_empty() || !self.factuals.is_empty() {
                    return Err(Error::Param("CATE queries need X and no V_F".into()));
                }
                if self.covariates.contains(&self.treatment)
                    || self.covariates.contains(&self.outcome)
                {
                    return Err(Error::Param("X may not contain T or Y".into()));
                }
            }
            QueryKind::CtfTe => {
                if !self.covariates.is_empty() {
                    return Err(Error::Param("counterfactual queries take no X".into()));
                }
            }
        }
        if self.y.is_some() && self.kind != QueryKind::CtfTe {
            return Err(Error::Param(
                "y is only used by counterfactual queries".into(),
            ));
        }
        let finite = [self.t, self.c]
            .iter()
            .chain(&self.covariate_values)
            .chain(&self.factual_values)
            .chain(self.y.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Param("query values must be finite".into()));
        }
        Ok(())
    }

    /// Checks that every variable is observed and every value is in its domain.
    pub fn validate_for(&self, scm: &Scm) -> Result<()> {
        self.validate_shape()?;
        let observed = scm.observed();
        let nodes = [self.treatment, self.outcome]
            .into_iter()
            .chain(self.covariates.iter().copied())
            .chain(self.factuals.iter().copied());
        for v in nodes {
            if v >= scm.num_nodes() {
                return Err(Error::NodeNotFound(v));
            }
            if !observed.contains(&v) {
                return Err(Error::Param(format!("query variable {v} is hidden")));
            }
        }
        if scm.is_discrete() {
            let in_domain =
                |v: usize, x: f64| x >= 0.0 && x.fract() == 0.0 && (x as usize) < scm.cards[v];
            let pairs = [(self.treatment, self.t), (self.treatment, self.c)]
                .into_iter()
                .chain(
                    self.covariates
                        .iter()
                        .copied()
                        .zip(self.covariate_values.iter().copied()),
                )
                .chain(
                    self.factuals
                        .iter()
                        .copied()
                        .zip(self.factual_values.iter().copied()),
                )
                .chain(self.y.map(|y| (self.outcome, y)));
            for (v, x) in pairs {
                if !in_domain(v, x) {
                    return Err(Error::Param(format!(
                        "value {x} outside the domain of node {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same query with treatment and control swapped.
    pub fn swapped(&self) -> Self {
        let mut q = self.clone();
        std::mem::swap(&mut q.t, &mut q.c);
        q
    }
}

/// Observational pool for drawing query values, regenerated row by row.
#[derive(Debug, Clone, Copy)]
pub struct SupportPool<'a> {
    pub scm: &'a Scm,
    pub seed: SeedNode,
    pub size: u64,
}

impl SupportPool<'_> {
    fn random_row(&self, rng: &mut Rng) -> Result<Vec<f64>> {
        let j = rng.random_range(0..self.size);
        self.scm.support_row(&self.seed, j)
    }
}

fn random_subset(pool: &[usize], size: usize, rng: &mut Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), size)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Samples a query of `kind`. T and Y are drawn independently and uniformly
/// from the observed variables (they may coincide); values come from rows
/// of the support pool.
pub fn sample_query(
    kind: QueryKind,
    form: CtfForm,
    support: &SupportPool<'_>,
    rng: &mut Rng,
) -> Result<Query> {
    let scm = support.scm;
    let observed = scm.observed();
    let needed = if kind == QueryKind::Cate { 3 } else { 2 };
    if observed.len() < needed {
        return Err(Error::TooFewObserved {
            needed,
            found: observed.len(),
        });
    }
    let treatment = crate::graph::choose(&observed, rng);
    let outcome = crate::graph::choose(&observed, rng);
    let t = support.random_row(rng)?[treatment];
    let c = support.random_row(rng)?[treatment];
    let mut q = Query {
        kind,
        treatment,
        outcome,
        t,
        c,
        covariates: Vec::new(),
        covariate_values: Vec::new(),
        factuals: Vec::new(),
        factual_values: Vec::new(),
        y: None,
    };
    match kind {
        QueryKind::Ate => {}
        QueryKind::Cate => {
            let pool: Vec<usize> = observed
                .iter()
                .copied()
                .filter(|&v| v != treatment && v != outcome)
                .collect();
            let d = rng.random_range(1..=pool.len());
            q.covariates = random_subset(&pool, d, rng);
            let row = support.random_row(rng)?;
            q.covariate_values = q.covariates.iter().map(|&v| row[v]).collect();
        }
        QueryKind::CtfTe => {
            let d = rng.random_range(1..=observed.len());
            q.factuals = random_subset(&observed, d, rng);
            let row = support.random_row(rng)?;
            q.factual_values = q.factuals.iter().map(|&v| row[v]).collect();
            if form == CtfForm::Probability && scm.is_discrete() {
                q.y = Some(support.random_row(rng)?[outcome]);
            }
        }
    }
    Ok(q)
}

fn union(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| *x || *y).collect()
}

/// Both treatment arms on shared noise, computing only what `targets` need.
fn arms(scm: &Scm, q: &Query, noise: &NoiseMatrix, mask: &[bool]) -> Result<(Values, Values)> {
    let treated = scm.evaluate(noise, &[(q.treatment, q.t)], Some(mask))?;
    let control = scm.evaluate(noise, &[(q.treatment, q.c)], Some(mask))?;
    Ok((treated, control))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Average treatment effect E[Y | do(T=t)] - E[Y | do(T=c)].
pub fn estimate_ate(scm: &Scm, q: &Query, n: usize, seed: &SeedNode) -> Result<GroundTruth> {
    if n == 0 {
        return Err(Error::Param("estimation needs at least one sample".into()));
    }
    let cut = [(q.treatment, 0.0)];
    let mask = scm.relevant_nodes(&[q.outcome], &cut);
    let noise = NoiseMatrix::sample_masked(scm, n, seed, &mask)?;
    let (a, b) = arms(scm, q, &noise, &mask)?;
    Ok(GroundTruth {
        value: mean(&a.cols[q.outcome]) - mean(&b.cols[q.outcome]),
        n_estimation: n,
        effective_rows: None,
    })
}

/// Weighted mean of `ys` under the stratum weights of one arm, with the
/// weights normalized within the arm. Returns `(mean, rows with weight)`.
fn stratum_mean(
    arm: &Values,
    q: &Query,
    ys: &[f64],
    kernel: Option<&KernelSpec>,
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut acc = 0.0;
    let mut count = 0;
    let mut diff = vec![0.0; q.covariates.len()];
    for r in 0..arm.rows {
        let w = match kernel {
            Some(k) => {
                for ((d, &v), &x) in diff.iter_mut().zip(&q.covariates).zip(&q.covariate_values) {
                    *d = arm.cols[v][r] - x;
                }
                kernel_weight(k.kind, &diff, k.bandwidth)?
            }
            None => {
                let hit = q
                    .covariates
                    .iter()
                    .zip(&q.covariate_values)
                    .all(|(&v, &x)| arm.cols[v][r] == x);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if w > 0.0 {
            total += w;
            acc += w * ys[r];
            count += 1;
        }
    }
    Ok(if total > 0.0 {
        (acc / total, count)
    } else {
        (f64::NAN, 0)
    })
}

/// Conditional average treatment effect given X = x. Each arm is restricted
/// (discrete) or kernel-weighted (continuous) by its own X values.
pub fn estimate_cate(
    scm: &Scm,
    q: &Query,
    n: usize,
    kernel: &KernelSpec,
    seed: &SeedNode,
) -> Result<GroundTruth> {
    if n == 0 {
        return Err(Error::Param("estimation needs at least one sample".into()));
    }
    let cut = [(q.treatment, 0.0)];
    let mut targets = q.covariates.clone();
    targets.push(q.outcome);
    let mask = scm.relevant_nodes(&targets, &cut);
    let noise = NoiseMatrix::sample_masked(scm, n, seed, &mask)?;
    let (a, b) = arms(scm, q, &noise, &mask)?;
    let k = if scm.is_discrete() {
        None
    } else {
        Some(kernel)
    };
    let (ma, na) = stratum_mean(&a, q, &a.cols[q.outcome], k)?;
    let (mb, nb) = stratum_mean(&b, q, &b.cols[q.outcome], k)?;
    if na == 0 || nb == 0 {
        return Ok(GroundTruth::undefined(n));
    }
    Ok(GroundTruth {
        value: ma - mb,
        n_estimation: n,
        effective_rows: Some(na.min(nb)),
    })
}

/// Counterfactual total effect given factual evidence V_F = v_F: abduct
/// the noise posterior, then compare both arms on the posterior rows.
///
/// With `q.y` set, the effect is P(Y_t = y | v_F) - P(Y_c = y | v_F);
/// otherwise it is the difference of posterior means.
pub fn estimate_ctf_te(
    scm: &Scm,
    q: &Query,
    n: usize,
    kernel: &KernelSpec,
    seed: &SeedNode,
) -> Result<GroundTruth> {
    if n == 0 {
        return Err(Error::Param("estimation needs at least one sample".into()));
    }
    let cut = [(q.treatment, 0.0)];
    let arm_mask = scm.relevant_nodes(&[q.outcome], &cut);
    let fact_mask = scm.relevant_nodes(&q.factuals, &[]);
    let noise = NoiseMatrix::sample_masked(scm, n, seed, &union(&arm_mask, &fact_mask))?;
    let factual_world = scm.evaluate(&noise, &[], Some(&fact_mask))?;
    let evidence: Vec<(usize, f64)> = q
        .factuals
        .iter()
        .copied()
        .zip(q.factual_values.iter().copied())
        .collect();
    let posterior = match abduct(scm, &factual_world, &evidence, Some(kernel)) {
        Ok(p) => p,
        Err(Error::EmptyPosterior) => return Ok(GroundTruth::undefined(n)),
        Err(e) => return Err(e),
    };
    let kept = noise.select_rows(&posterior.rows);
    let (a, b) = arms(scm, q, &kept, &arm_mask)?;
    let total: f64 = posterior.weights.iter().sum();
    let score = |ys: &[f64]| -> f64 {
        let acc: f64 = ys
            .iter()
            .zip(&posterior.weights)
            .map(|(&y, &w)| match q.y {
                Some(target) => w * f64::from(u8::from(y == target)),
                None => w * y,
            })
            .sum();
        acc / total
    };
    Ok(GroundTruth {
        value: score(&a.cols[q.outcome]) - score(&b.cols[q.outcome]),
        n_estimation: n,
        effective_rows: Some(posterior.rows.len()),
    })
}

/// Dispatches on the query kind.
pub fn estimate(
    scm: &Scm,
    q: &Query,
    n: usize,
    kernel: &KernelSpec,
    seed: &SeedNode,
) -> Result<GroundTruth> {
    match q.kind {
        QueryKind::Ate => estimate_ate(scm, q, n, seed),
        QueryKind::Cate => estimate_cate(scm, q, n, kernel, seed),
        QueryKind::CtfTe => estimate_ctf_te(scm, q, n, kernel, seed),
    }
}

/// Queries of one SCM with their ground truths.
///
/// Random slots are resampled while the ground truth is NaN, unless NaNs are
/// allowed, up to [`RETRY_CAP`] attempts per slot. Every slot and attempt
/// has its own stream under `seed`, and ground truths use noise independent
/// of the released dataset.
pub fn generate_queries(
    scm: &Scm,
    soi: &SpaceOfInterest,
    seed: &SeedNode,
    scm_index: u64,
) -> Result<Vec<(Query, GroundTruth)>> {
    let n = soi.estimation_samples;
    let truth_seed = seed.child("truth", 0);
    if let Some(fixed) = &soi.specific_queries {
        let mut out = Vec::with_capacity(fixed.len());
        for (i, q) in fixed.iter().enumerate() {
            q.validate_for(scm)
                .map_err(|e| Error::validation(format!("specific_queries[{i}]"), e.to_string()))?;
            let gt = estimate(scm, q, n, &soi.kernel, &truth_seed.child("slot", i as u64))?;
            if gt.value.is_nan() && !soi.allow_nan_queries {
                return Err(Error::Infeasible(format!(
                    "specific query {i} is undefined on SCM {scm_index} and allow_nan_queries is false"
                )));
            }
            out.push((q.clone(), gt));
        }
        return Ok(out);
    }
    let support = SupportPool {
        scm,
        seed: seed.child("support", 0),
        size: soi.support_samples() as u64,
    };
    let mut out = Vec::with_capacity(soi.queries_per_scm);
    for slot in 0..soi.queries_per_scm {
        let slot_seed = seed.child("query", slot as u64);
        let mut found = None;
        for attempt in 0..RETRY_CAP {
            let mut rng = slot_seed.stream("attempt", attempt as u64);
            let q = sample_query(soi.query_type, soi.ctf_te_form, &support, &mut rng)?;
            let gt = estimate(
                scm,
                &q,
                n,
                &soi.kernel,
                &truth_seed
                    .child("slot", slot as u64)
                    .child("attempt", attempt as u64),
            )?;
            if !gt.value.is_nan() || soi.allow_nan_queries {
                found = Some((q, gt));
                break;
            }
        }
        match found {
            Some(pair) => out.push(pair),
            None => {
                return Err(Error::RetryCapExceeded {
                    scm_index,
                    slot,
                    attempts: RETRY_CAP,
                })
            }
        }
    }
    Ok(out)
}
