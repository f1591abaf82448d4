//! Characterization metrics of sampled SCMs and the assumption report.
//!
//! Graph metrics are exact. Distribution metrics come from forward samples.
//! Mechanism metrics describe each mechanism's image of its input space
//! (the cartesian product of parent and noise domains), independent of the
//! distribution the model entails.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Admg, CausalGraph};
use crate::mechanisms::Mechanism;
use crate::scm::Scm;
use crate::seed::SeedNode;
use crate::soi::NoiseSpec;

/// Population mean and variance; `(0, 0)` for an empty input.
fn moments(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub mean_in_degree: f64,
    pub var_in_degree: f64,
    pub mean_ancestors: f64,
    pub var_ancestors: f64,
    pub mean_descendants: f64,
    pub var_descendants: f64,
    pub num_paths: f64,
    pub mean_path_length: f64,
    pub var_path_length: f64,
    pub max_path_length: f64,
    /// False when path counts exceeded 128-bit integers and were summed in floating point.
    pub paths_exact: bool,
}

pub fn graph_metrics(g: &CausalGraph) -> GraphMetrics {
    let n = g.num_nodes();
    let degrees: Vec<f64> = (0..n).map(|v| g.parents(v).len() as f64).collect();
    let ancestors: Vec<f64> = (0..n)
        .map(|v| (g.ancestors_of(&[v]).iter().filter(|&&b| b).count() - 1) as f64)
        .collect();
    let descendants: Vec<f64> = (0..n)
        .map(|v| (g.descendants_of(&[v]).iter().filter(|&&b| b).count() - 1) as f64)
        .collect();

    // count[v][l]: directed paths with l edges ending at v
    let mut exact: Vec<Vec<Option<u128>>> = vec![Vec::new(); n];
    let mut approx: Vec<Vec<f64>> = vec![Vec::new(); n];
    for v in 0..n {
        let mut ce: Vec<Option<u128>> = vec![Some(0), Some(g.parents(v).len() as u128)];
        let mut ca = vec![0.0, g.parents(v).len() as f64];
        for &p in g.parents(v) {
            for l in 1..approx[p].len() {
                if ca.len() <= l + 1 {
                    ca.resize(l + 2, 0.0);
                    ce.resize(l + 2, Some(0));
                }
                ca[l + 1] += approx[p][l];
                ce[l + 1] = match (ce[l + 1], exact[p][l]) {
                    (Some(a), Some(b)) => a.checked_add(b),
                    _ => None,
                };
            }
        }
        exact[v] = ce;
        approx[v] = ca;
    }
    let max_len = approx.iter().map(Vec::len).max().unwrap_or(0);
    let mut by_len = vec![0.0; max_len];
    let mut paths_exact = true;
    let mut by_len_exact = vec![Some(0u128); max_len];
    for v in 0..n {
        for (l, &c) in approx[v].iter().enumerate() {
            by_len[l] += c;
            by_len_exact[l] = match (by_len_exact[l], exact[v][l]) {
                (Some(a), Some(b)) => a.checked_add(b),
                _ => None,
            };
        }
    }
    let by_len: Vec<f64> = by_len_exact
        .iter()
        .zip(&by_len)
        .map(|(e, &a)| match e {
            Some(x) => *x as f64,
            None => {
                paths_exact = false;
                a
            }
        })
        .collect();
    let total: f64 = by_len.iter().sum();
    let (mean_len, var_len) = if total > 0.0 {
        let m = by_len
            .iter()
            .enumerate()
            .map(|(l, c)| l as f64 * c)
            .sum::<f64>()
            / total;
        let v = by_len
            .iter()
            .enumerate()
            .map(|(l, c)| c * (l as f64 - m).powi(2))
            .sum::<f64>()
            / total;
        (m, v)
    } else {
        (0.0, 0.0)
    };
    let max_path = by_len.iter().rposition(|&c| c > 0.0).unwrap_or(0) as f64;

    let (mean_in_degree, var_in_degree) = moments(&degrees);
    let (mean_ancestors, var_ancestors) = moments(&ancestors);
    let (mean_descendants, var_descendants) = moments(&descendants);
    GraphMetrics {
        mean_in_degree,
        var_in_degree,
        mean_ancestors,
        var_ancestors,
        mean_descendants,
        var_descendants,
        num_paths: total,
        mean_path_length: mean_len,
        var_path_length: var_len,
        max_path_length: max_path,
        paths_exact,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedMetrics {
    pub mean_siblings: f64,
    pub var_siblings: f64,
    pub num_c_components: f64,
    pub mean_c_component_size: f64,
    pub var_c_component_size: f64,
    /// Components with more than one node.
    pub num_nontrivial_c_components: f64,
}

pub fn projected_metrics(a: &Admg) -> ProjectedMetrics {
    let siblings: Vec<f64> = a.sibling_counts().into_iter().map(|c| c as f64).collect();
    let comps = a.c_components();
    let sizes: Vec<f64> = comps.iter().map(|c| c.len() as f64).collect();
    let (mean_siblings, var_siblings) = moments(&siblings);
    let (mean_size, var_size) = moments(&sizes);
    ProjectedMetrics {
        mean_siblings,
        var_siblings,
        num_c_components: comps.len() as f64,
        mean_c_component_size: mean_size,
        var_c_component_size: var_size,
        num_nontrivial_c_components: sizes.iter().filter(|&&s| s > 1.0).count() as f64,
    }
}

/// Metrics of the observational distribution over the observed variables.
///
/// Minimum-probability metrics range over the values each variable actually
/// takes (`*_declared` variants range over the full declared domains).
/// Zero-probability proportion and L1 distances use the declared domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMetrics {
    pub probe_samples: usize,
    /// False for continuous models, where only a binned entropy is reported.
    pub exact_domains: bool,
    pub min_joint_prob: f64,
    pub min_joint_prob_declared: f64,
    pub zero_prob_proportion: f64,
    pub min_marginal_prob: f64,
    pub mean_min_marginal_prob: f64,
    pub var_min_marginal_prob: f64,
    pub min_marginal_prob_declared: f64,
    pub joint_l1_to_uniform: f64,
    pub mean_marginal_l1_to_uniform: f64,
    pub var_marginal_l1_to_uniform: f64,
    /// Natural-log entropy of the joint (binned for continuous models).
    pub joint_entropy: f64,
}

impl DistributionMetrics {
    fn continuous(n: usize, entropy: f64) -> Self {
        Self {
            probe_samples: n,
            exact_domains: false,
            min_joint_prob: f64::NAN,
            min_joint_prob_declared: f64::NAN,
            zero_prob_proportion: f64::NAN,
            min_marginal_prob: f64::NAN,
            mean_min_marginal_prob: f64::NAN,
            var_min_marginal_prob: f64::NAN,
            min_marginal_prob_declared: f64::NAN,
            joint_l1_to_uniform: f64::NAN,
            mean_marginal_l1_to_uniform: f64::NAN,
            var_marginal_l1_to_uniform: f64::NAN,
            joint_entropy: entropy,
        }
    }
}

/// Bins per axis for the continuous entropy estimate.
const ENTROPY_BINS: usize = 10;

/// Counts of distinct rows, sorted so that sums over them do not depend
/// on hash order.
fn row_counts(columns: &[Vec<f64>]) -> Vec<u64> {
    let rows = columns.first().map_or(0, Vec::len);
    let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut key = vec![0u32; columns.len()];
    for r in 0..rows {
        for (k, col) in columns.iter().enumerate() {
            key[k] = col[r] as u32;
        }
        *counts.entry(key.clone()).or_insert(0) += 1;
    }
    let mut sorted: Vec<u64> = counts.into_values().collect();
    sorted.sort_unstable();
    sorted
}

fn entropy_of(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    let h: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

pub fn distribution_metrics(scm: &Scm, n: usize, seed: &SeedNode) -> Result<DistributionMetrics> {
    if n == 0 {
        return Err(Error::Param("probe sample count must be positive".into()));
    }
    let data = scm.sample_observed(n, seed)?;
    let nf = n as f64;
    if !scm.is_discrete() {
        let binned: Vec<Vec<f64>> = data
            .columns
            .iter()
            .map(|col| {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / ENTROPY_BINS as f64;
                col.iter()
                    .map(|&x| {
                        if width > 0.0 {
                            (((x - lo) / width) as usize).min(ENTROPY_BINS - 1) as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let counts = row_counts(&binned);
        return Ok(DistributionMetrics::continuous(
            n,
            entropy_of(counts.iter().copied(), nf),
        ));
    }

    let cards: Vec<usize> = data.nodes.iter().map(|&v| scm.cards[v]).collect();
    let counts = row_counts(&data.columns);
    let joint_size: f64 = cards.iter().map(|&c| c as f64).product();

    let marginals: Vec<Vec<u64>> = data
        .columns
        .iter()
        .zip(&cards)
        .map(|(col, &c)| {
            let mut m = vec![0u64; c];
            for &x in col {
                m[x as usize] += 1;
            }
            m
        })
        .collect();
    let support_sizes: Vec<f64> = marginals
        .iter()
        .map(|m| m.iter().filter(|&&c| c > 0).count() as f64)
        .collect();
    let empirical_size: f64 = support_sizes.iter().product();

    let min_seen = counts.first().copied().unwrap_or(0) as f64 / nf;
    let distinct = counts.len() as f64;
    let min_joint_prob = if distinct < empirical_size {
        0.0
    } else {
        min_seen
    };
    let min_joint_prob_declared = if distinct < joint_size { 0.0 } else { min_seen };
    let zero_prob_proportion = 1.0 - distinct / joint_size;

    let u = 1.0 / joint_size;
    let joint_l1 = counts
        .iter()
        .map(|&c| (c as f64 / nf - u).abs())
        .sum::<f64>()
        + (joint_size - distinct) * u;

    let min_marg: Vec<f64> = marginals
        .iter()
        .map(|m| m.iter().copied().filter(|&c| c > 0).min().unwrap_or(0) as f64 / nf)
        .collect();
    let min_marg_declared = marginals
        .iter()
        .map(|m| *m.iter().min().unwrap_or(&0) as f64 / nf)
        .fold(f64::INFINITY, f64::min);
    let marg_l1: Vec<f64> = marginals
        .iter()
        .map(|m| {
            let u = 1.0 / m.len() as f64;
            m.iter().map(|&c| (c as f64 / nf - u).abs()).sum()
        })
        .collect();
    let (mean_min, var_min) = moments(&min_marg);
    let (mean_l1, var_l1) = moments(&marg_l1);

    Ok(DistributionMetrics {
        probe_samples: n,
        exact_domains: true,
        min_joint_prob,
        min_joint_prob_declared,
        zero_prob_proportion,
        min_marginal_prob: min_marg.iter().copied().fold(f64::INFINITY, f64::min),
        mean_min_marginal_prob: mean_min,
        var_min_marginal_prob: var_min,
        min_marginal_prob_declared: min_marg_declared,
        joint_l1_to_uniform: joint_l1,
        mean_marginal_l1_to_uniform: mean_l1,
        var_marginal_l1_to_uniform: var_l1,
        joint_entropy: entropy_of(counts.iter().copied(), nf),
    })
}

/// Points per continuous input axis before budget reduction.
pub const GRID_POINTS: usize = 16;
pub const DEFAULT_GRID_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismMetrics {
    pub mean_pearson: f64,
    pub var_pearson: f64,
    pub mean_spearman: f64,
    pub var_spearman: f64,
    /// Over discrete nodes only; NaN for continuous models.
    pub mean_conditional_entropy: f64,
    pub var_conditional_entropy: f64,
    /// Nodes whose input grid exceeded the budget and were left out.
    pub nodes_skipped: usize,
}

/// One input axis of a mechanism grid: values and their weights.
#[derive(Debug, Clone)]
struct Axis {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Axis {
    fn uniform(values: Vec<f64>) -> Self {
        let weights = vec![1.0; values.len()];
        Self { values, weights }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 || hi <= lo {
        return vec![(lo + hi) / 2.0];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

fn noise_range(spec: &NoiseSpec) -> (f64, f64) {
    match *spec {
        NoiseSpec::Uniform { lo, hi } => (lo, hi),
        NoiseSpec::Normal { mean, std } => (mean - 3.0 * std, mean + 3.0 * std),
    }
}

/// Weighted Pearson correlation; `None` when either side is constant.
fn weighted_pearson(x: &[f64], y: &[f64], w: &[f64]) -> Option<f64> {
    let tw: f64 = w.iter().sum();
    if tw <= 0.0 {
        return None;
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / tw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / tw;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += w[i] * dx * dy;
        sxx += w[i] * dx * dx;
        syy += w[i] * dy * dy;
    }
    let scale = (sxx * syy).sqrt();
    let tol = 1e-12 * tw * (mx.abs().max(my.abs()).max(1.0)).powi(2);
    if sxx <= tol || syy <= tol || !(scale > 0.0) {
        return None;
    }
    Some((sxy / scale).clamp(-1.0, 1.0))
}

/// Weighted mid-ranks: each value's rank is the mass below it plus half its own tie mass.
fn weighted_ranks(x: &[f64], w: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut below = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut mass = 0.0;
        while j < order.len() && x[order[j]] == x[order[i]] {
            mass += w[order[j]];
            j += 1;
        }
        for &k in &order[i..j] {
            ranks[k] = below + mass / 2.0;
        }
        below += mass;
        i = j;
    }
    ranks
}

fn weighted_spearman(x: &[f64], y: &[f64], w: &[f64]) -> Option<f64> {
    weighted_pearson(&weighted_ranks(x, w), &weighted_ranks(y, w), w)
}

/// Per-input correlations of one node, averaged over slices where every
/// other input is held fixed. Returns `(pearson, spearman)` per input,
/// `None` where no slice had variation on both sides.
fn slice_correlations(
    axes: &[Axis],
    eval: &dyn Fn(&[f64]) -> f64,
) -> Vec<(Option<f64>, Option<f64>)> {
    let sizes: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let total: usize = sizes.iter().product();
    // evaluate the full grid once, row-major with the last axis fastest
    let mut outputs = Vec::with_capacity(total);
    let mut idx = vec![0usize; axes.len()];
    let mut point = vec![0.0; axes.len()];
    for _ in 0..total {
        for (k, a) in axes.iter().enumerate() {
            point[k] = a.values[idx[k]];
        }
        outputs.push(eval(&point));
        for k in (0..axes.len()).rev() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    let strides: Vec<usize> = (0..axes.len())
        .map(|k| sizes[k + 1..].iter().product())
        .collect();

    (0..axes.len())
        .map(|j| {
            let others: Vec<usize> = (0..axes.len()).filter(|&k| k != j).collect();
            let slices: usize = others.iter().map(|&k| sizes[k]).product();
            let (mut sp, mut wp, mut ss, mut ws) = (0.0, 0.0, 0.0, 0.0);
            let mut oidx = vec![0usize; others.len()];
            for _ in 0..slices {
                let base: usize = others
                    .iter()
                    .zip(&oidx)
                    .map(|(&k, &i)| i * strides[k])
                    .sum();
                let slice_w: f64 = others
                    .iter()
                    .zip(&oidx)
                    .map(|(&k, &i)| axes[k].weights[i])
                    .product();
                let ys: Vec<f64> = (0..sizes[j])
                    .map(|i| outputs[base + i * strides[j]])
                    .collect();
                let xs = &axes[j].values;
                let ws_axis = &axes[j].weights;
                if let Some(r) = weighted_pearson(xs, &ys, ws_axis) {
                    sp += slice_w * r;
                    wp += slice_w;
                }
                if let Some(r) = weighted_spearman(xs, &ys, ws_axis) {
                    ss += slice_w * r;
                    ws += slice_w;
                }
                for k in (0..others.len()).rev() {
                    oidx[k] += 1;
                    if oidx[k] < sizes[others[k]] {
                        break;
                    }
                    oidx[k] = 0;
                }
            }
            ((wp > 0.0).then(|| sp / wp), (ws > 0.0).then(|| ss / ws))
        })
        .collect()
}

/// Input axes of node `v`: parents first, noise last.
fn node_axes(scm: &Scm, v: usize, ranges: &[(f64, f64)], budget: u64) -> Result<Vec<Axis>> {
    let parents = scm.graph.parents(v);
    match &scm.mechanisms[v] {
        Mechanism::Regional(m) => {
            let mut axes: Vec<Axis> = parents
                .iter()
                .map(|&p| Axis::uniform((0..scm.cards[p]).map(|x| x as f64).collect()))
                .collect();
            // one point per region at its midpoint, weighted by region length
            let mids = m
                .boundaries
                .windows(2)
                .map(|w| (w[0] + w[1]) / 2.0)
                .collect();
            axes.push(Axis {
                values: mids,
                weights: m.region_lengths(),
            });
            let size = axes
                .iter()
                .try_fold(1u64, |acc, a| acc.checked_mul(a.values.len() as u64))
                .unwrap_or(u64::MAX);
            if size > budget {
                return Err(Error::GridBudgetExceeded {
                    required: size,
                    budget,
                });
            }
            Ok(axes)
        }
        _ => {
            let dims = parents.len() + 1;
            let mut k = GRID_POINTS;
            while k > 2 && (k as f64).powi(dims as i32) > budget as f64 {
                k -= 1;
            }
            let required = (k as f64).powi(dims as i32);
            if required > budget as f64 {
                return Err(Error::GridBudgetExceeded {
                    required: required.min(u64::MAX as f64) as u64,
                    budget,
                });
            }
            let mut axes: Vec<Axis> = parents
                .iter()
                .map(|&p| Axis::uniform(linspace(ranges[p].0, ranges[p].1, k)))
                .collect();
            let (lo, hi) = noise_range(&scm.noise[v]);
            axes.push(Axis::uniform(linspace(lo, hi, k)));
            Ok(axes)
        }
    }
}

/// Exact H(V | PA) of a regional mechanism with parent configurations
/// weighted uniformly.
fn conditional_entropy(m: &crate::mechanisms::RegionalMechanism) -> f64 {
    let configs = m.num_configs();
    let total: f64 = (0..configs)
        .map(|c| {
            m.conditional(c)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum::<f64>()
        })
        .sum();
    (total / configs as f64).max(0.0)
}

/// Mechanism metrics. `ranges` gives the value range of every node (used
/// to grid continuous parents); `budget` caps grid points per node.
pub fn mechanism_metrics(scm: &Scm, ranges: &[(f64, f64)], budget: u64) -> MechanismMetrics {
    let mut node_pearson = Vec::new();
    let mut node_spearman = Vec::new();
    let mut all_pearson: Vec<(f64, f64)> = Vec::new();
    let mut all_spearman: Vec<(f64, f64)> = Vec::new();
    let mut entropies = Vec::new();
    let mut skipped = 0;
    for v in 0..scm.num_nodes() {
        let mech = &scm.mechanisms[v];
        if let Mechanism::Regional(m) = mech {
            entropies.push(conditional_entropy(m));
        }
        let axes = match node_axes(scm, v, ranges, budget) {
            Ok(a) => a,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let arity = axes.len() - 1;
        let eval = |point: &[f64]| mech.eval(&point[..arity], point[arity]).unwrap_or(f64::NAN);
        let corr = slice_correlations(&axes, &eval);
        let pear: Vec<f64> = corr.iter().filter_map(|c| c.0).collect();
        let spear: Vec<f64> = corr.iter().filter_map(|c| c.1).collect();
        if !pear.is_empty() {
            let w = 1.0 / pear.len() as f64;
            node_pearson.push(pear.iter().sum::<f64>() * w);
            all_pearson.extend(pear.iter().map(|&r| (r, w)));
        }
        if !spear.is_empty() {
            let w = 1.0 / spear.len() as f64;
            node_spearman.push(spear.iter().sum::<f64>() * w);
            all_spearman.extend(spear.iter().map(|&r| (r, w)));
        }
    }
    // mean over nodes of the per-node mean; variance over nodes of the
    // per-node mean squared deviation from the overall mean
    let summarize = |node_means: &[f64], pairs: &[(f64, f64)]| -> (f64, f64) {
        if node_means.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let m = node_means.iter().sum::<f64>() / node_means.len() as f64;
        let v =
            pairs.iter().map(|&(r, w)| w * (r - m).powi(2)).sum::<f64>() / node_means.len() as f64;
        (m, v)
    };
    let (mean_pearson, var_pearson) = summarize(&node_pearson, &all_pearson);
    let (mean_spearman, var_spearman) = summarize(&node_spearman, &all_spearman);
    let (mean_h, var_h) = if entropies.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        moments(&entropies)
    };
    MechanismMetrics {
        mean_pearson,
        var_pearson,
        mean_spearman,
        var_spearman,
        mean_conditional_entropy: mean_h,
        var_conditional_entropy: var_h,
        nodes_skipped: skipped,
    }
}

/// Per-node correlations, exposed for inspection and tests.
pub fn node_correlations(
    scm: &Scm,
    v: usize,
    ranges: &[(f64, f64)],
    budget: u64,
) -> Result<Vec<(Option<f64>, Option<f64>)>> {
    let axes = node_axes(scm, v, ranges, budget)?;
    let mech = &scm.mechanisms[v];
    let arity = axes.len() - 1;
    let eval = |point: &[f64]| mech.eval(&point[..arity], point[arity]).unwrap_or(f64::NAN);
    Ok(slice_correlations(&axes, &eval))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// No bidirected edges after projecting out hidden variables.
    pub markovian: bool,
    pub causal_sufficiency: bool,
    /// Every combination of observed values is realized (continuous: `None`).
    pub strong_positivity: Option<bool>,
    /// Every observed value of every variable has positive probability.
    pub weak_positivity: Option<bool>,
    /// As above but over the full declared domains.
    pub strong_positivity_declared: Option<bool>,
    pub weak_positivity_declared: Option<bool>,
    pub cardinalities: Vec<usize>,
    pub variable_type: String,
    /// Positivity is judged from this many samples, so it is a lower bound.
    pub probe_samples: usize,
}

pub fn assumption_report(scm: &Scm, admg: &Admg, dist: &DistributionMetrics) -> AssumptionReport {
    let discrete = dist.exact_domains;
    let flag = |x: f64| discrete.then_some(x > 0.0);
    AssumptionReport {
        markovian: admg.bidirected().is_empty(),
        causal_sufficiency: scm.graph.hidden().is_empty(),
        strong_positivity: flag(dist.min_joint_prob),
        weak_positivity: flag(dist.min_marginal_prob),
        strong_positivity_declared: flag(dist.min_joint_prob_declared),
        weak_positivity_declared: flag(dist.min_marginal_prob_declared),
        cardinalities: admg.nodes().iter().map(|&v| scm.cards[v]).collect(),
        variable_type: if scm.is_discrete() {
            "discrete"
        } else {
            "continuous"
        }
        .into(),
        probe_samples: dist.probe_samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub graph: GraphMetrics,
    pub projected: ProjectedMetrics,
    pub distribution: DistributionMetrics,
    pub mechanisms: MechanismMetrics,
    pub assumptions: AssumptionReport,
}

/// All metrics of one SCM.
pub fn analyze(scm: &Scm, probe_samples: usize, seed: &SeedNode) -> Result<MetricsReport> {
    let admg = scm.graph.latent_project()?;
    let distribution = distribution_metrics(scm, probe_samples, &seed.child("probe", 0))?;
    let ranges = value_ranges(scm, seed)?;
    let mechanisms = mechanism_metrics(scm, &ranges, DEFAULT_GRID_BUDGET);
    let assumptions = assumption_report(scm, &admg, &distribution);
    Ok(MetricsReport {
        graph: graph_metrics(&scm.graph),
        projected: projected_metrics(&admg),
        distribution,
        mechanisms,
        assumptions,
    })
}

/// Value range of every node (hidden ones included) from a small sample.
fn value_ranges(scm: &Scm, seed: &SeedNode) -> Result<Vec<(f64, f64)>> {
    if scm.is_discrete() {
        return Ok(scm
            .cards
            .iter()
            .map(|&c| (0.0, c.saturating_sub(1) as f64))
            .collect());
    }
    let (_, full) = scm.forward_sample(2000, &seed.child("ranges", 0))?;
    Ok(full
        .cols
        .iter()
        .map(|col| {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
        .collect())
}

/// Flat `name -> value` view; booleans become 0/1 and missing values NaN.
pub fn flatten(report: &MetricsReport) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (prefix, value) in [
        ("graph", serde_json::to_value(&report.graph)),
        ("projected", serde_json::to_value(&report.projected)),
        ("distribution", serde_json::to_value(&report.distribution)),
        ("mechanism", serde_json::to_value(&report.mechanisms)),
        ("assumption", serde_json::to_value(&report.assumptions)),
    ] {
        let Ok(serde_json::Value::Object(map)) = value else {
            continue;
        };
        for (k, v) in map {
            let x = match v {
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                serde_json::Value::Bool(b) => f64::from(u8::from(b)),
                serde_json::Value::Null => f64::NAN,
                _ => continue,
            };
            out.insert(format!("{prefix}.{k}"), x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{LinearMechanism, RegionalMechanism};
    use crate::scm::Provenance;
    use crate::soi::NoiseMode;

    const UNIT: NoiseSpec = NoiseSpec::Uniform { lo: 0.0, hi: 1.0 };

    fn coin(boundaries: Vec<f64>, mappings: Vec<Vec<u8>>) -> Mechanism {
        Mechanism::Regional(RegionalMechanism {
            parent_cards: vec![],
            card: 2,
            boundaries,
            mappings,
        })
    }

    fn discrete(mechs: Vec<Mechanism>, edges: &[(usize, usize)]) -> Scm {
        let n = mechs.len();
        Scm {
            graph: CausalGraph::from_edges(n, edges).unwrap(),
            mechanisms: mechs,
            noise: vec![UNIT; n],
            cards: vec![2; n],
            markovian: true,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn graph_metric_examples() {
        let empty = graph_metrics(&CausalGraph::empty(4));
        assert_eq!(
            (
                empty.mean_in_degree,
                empty.mean_ancestors,
                empty.max_path_length
            ),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(empty.num_paths, 0.0);
        let chain = graph_metrics(&CausalGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        assert!((chain.mean_in_degree - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(chain.num_paths, 3.0);
        assert!((chain.mean_path_length - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(chain.max_path_length, 2.0);
        assert_eq!(chain.mean_ancestors, 1.0);
        let edges: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..i).map(move |j| (j, i))).collect();
        let complete = graph_metrics(&CausalGraph::from_edges(4, &edges).unwrap());
        assert_eq!(complete.mean_in_degree, 1.5);
        assert!(complete.paths_exact);
    }

    #[test]
    fn path_counts_match_enumeration() {
        // complete DAG on n nodes: paths with l edges = C(n, l + 1)
        let n = 7;
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..i).map(move |j| (j, i))).collect();
        let m = graph_metrics(&CausalGraph::from_edges(n, &edges).unwrap());
        let binom = |n: u64, k: u64| (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1));
        let total: u64 = (1..n as u64).map(|l| binom(n as u64, l + 1)).sum();
        assert_eq!(m.num_paths, total as f64);
        let mean = (1..n as u64)
            .map(|l| l * binom(n as u64, l + 1))
            .sum::<u64>() as f64
            / total as f64;
        assert!((m.mean_path_length - mean).abs() < 1e-12);
        assert_eq!(m.max_path_length, (n - 1) as f64);
    }

    #[test]
    fn projected_metric_examples() {
        let none = Admg::new(4, vec![0, 1, 2, 3], vec![(0, 1)], vec![]).unwrap();
        let p = projected_metrics(&none);
        assert_eq!(
            (p.mean_siblings, p.num_c_components, p.mean_c_component_size),
            (0.0, 4.0, 1.0)
        );
        let one = Admg::new(4, vec![0, 1, 2, 3], vec![], vec![(0, 1)]).unwrap();
        assert_eq!(projected_metrics(&one).mean_siblings, 2.0 / 4.0);
        assert_eq!(projected_metrics(&one).num_nontrivial_c_components, 1.0);
    }

    #[test]
    fn fair_independent_coins() {
        let scm = discrete(
            (0..3)
                .map(|_| coin(vec![0.0, 0.5, 1.0], vec![vec![0], vec![1]]))
                .collect(),
            &[],
        );
        let d = distribution_metrics(&scm, 1_000_000, &SeedNode::root(1)).unwrap();
        assert!(
            (d.joint_entropy - 8f64.ln()).abs() < 0.02,
            "{}",
            d.joint_entropy
        );
        assert!(d.joint_l1_to_uniform < 0.01 && d.mean_marginal_l1_to_uniform < 0.01);
        assert!(d.min_joint_prob > 0.0);
        assert_eq!(d.zero_prob_proportion, 0.0);
    }

    #[test]
    fn point_mass() {
        let scm = discrete(
            (0..2)
                .map(|_| coin(vec![0.0, 1.0], vec![vec![1]]))
                .collect(),
            &[],
        );
        let d = distribution_metrics(&scm, 1000, &SeedNode::root(2)).unwrap();
        assert_eq!(d.min_joint_prob, 1.0);
        assert_eq!(d.min_joint_prob_declared, 0.0);
        assert_eq!(d.zero_prob_proportion, 3.0 / 4.0);
        assert_eq!(d.joint_entropy, 0.0);
        let a = assumption_report(&scm, &scm.graph.latent_project().unwrap(), &d);
        assert_eq!(a.strong_positivity_declared, Some(false));
        assert_eq!(a.weak_positivity_declared, Some(false));
        assert_eq!(a.weak_positivity, Some(true));
        assert!(a.causal_sufficiency && a.markovian);
    }

    #[test]
    fn linear_mechanisms_have_unit_correlation() {
        let graph = CausalGraph::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        let lin = |w: Vec<f64>| {
            Mechanism::Linear(LinearMechanism {
                weights: w,
                mode: NoiseMode::Additive,
            })
        };
        let scm = Scm {
            graph,
            mechanisms: vec![lin(vec![]), lin(vec![]), lin(vec![2.0, -0.5])],
            noise: vec![UNIT; 3],
            cards: vec![0; 3],
            markovian: true,
            provenance: Provenance::default(),
        };
        let ranges = vec![(0.0, 1.0), (0.0, 1.0), (-1.0, 3.0)];
        let c = node_correlations(&scm, 2, &ranges, DEFAULT_GRID_BUDGET).unwrap();
        for (k, expected) in [(0, 1.0), (1, -1.0), (2, 1.0)] {
            assert!((c[k].0.unwrap() - expected).abs() < 1e-12, "{k} {c:?}");
            assert!((c[k].1.unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_table_has_zero_entropy() {
        let scm = discrete(vec![coin(vec![0.0, 1.0], vec![vec![0]])], &[]);
        let m = mechanism_metrics(&scm, &[(0.0, 1.0)], DEFAULT_GRID_BUDGET);
        assert_eq!(m.mean_conditional_entropy, 0.0);
        let fair = discrete(vec![coin(vec![0.0, 0.5, 1.0], vec![vec![0], vec![1]])], &[]);
        let m = mechanism_metrics(&fair, &[(0.0, 1.0)], DEFAULT_GRID_BUDGET);
        assert!((m.mean_conditional_entropy - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn weighted_rank_ties() {
        let r = weighted_ranks(&[3.0, 1.0, 3.0, 2.0], &[1.0; 4]);
        assert_eq!(r, vec![3.0, 0.5, 3.0, 1.5]);
        assert_eq!(
            weighted_pearson(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]),
            None
        );
    }

    #[test]
    fn report_invariants_on_random_models() {
        use crate::soi::parse_soi;
        let soi = parse_soi(
            "num_nodes = [3, 6]\nexpected_edges = \"N\"\nhidden_proportion = 0.2\nmechanism_family = \"tabular\"\n\
             cardinality = [2, 3]\nnoise_args = [0, 1]\nnoise_regions = 5",
        )
        .unwrap();
        for s in 0..15 {
            let scm = crate::scm::sample_scm(&soi, &mut SeedNode::root(s).rng()).unwrap();
            let Ok(r) = analyze(&scm, 20_000, &SeedNode::root(100 + s)) else {
                continue;
            };
            let a = &r.assumptions;
            if a.strong_positivity == Some(true) {
                assert_eq!(a.weak_positivity, Some(true));
            }
            if a.strong_positivity_declared == Some(true) {
                assert_eq!(a.weak_positivity_declared, Some(true));
            }
            let d = &r.distribution;
            for p in [
                d.min_joint_prob,
                d.zero_prob_proportion,
                d.min_marginal_prob,
                d.mean_min_marginal_prob,
            ] {
                assert!((0.0..=1.0).contains(&p));
            }
            assert!(d.joint_entropy >= 0.0 && d.var_min_marginal_prob >= 0.0);
            let m = &r.mechanisms;
            for x in [m.mean_pearson, m.mean_spearman] {
                assert!(x.is_nan() || (-1.0..=1.0).contains(&x));
            }
            assert!(m.var_pearson.is_nan() || m.var_pearson >= 0.0);
            assert!(r.graph.var_in_degree >= 0.0 && r.projected.var_siblings >= 0.0);
            assert!(flatten(&r).contains_key("graph.mean_in_degree"));
        }
    }
}
