//! Exact answers for small discrete models by enumerating every
//! combination of noise regions. Shares no evaluation code with the crate:
//! tables are read straight from the stored boundaries and mappings.

use scmbench::mechanisms::Mechanism;
use scmbench::queries::{self, Query, QueryKind, SupportPool};
use scmbench::scm::Scm;
use scmbench::seed::SeedNode;
use scmbench::soi::{parse_soi, CtfForm, KernelKind, KernelSpec};

/// One joint noise outcome: its probability and the region of every node.
pub struct World {
    pub prob: f64,
    pub regions: Vec<usize>,
}

pub fn worlds(scm: &Scm) -> Vec<World> {
    let mut out = vec![World {
        prob: 1.0,
        regions: Vec::new(),
    }];
    for m in &scm.mechanisms {
        let Mechanism::Regional(r) = m else {
            panic!("oracle needs tabular mechanisms")
        };
        let width = r.boundaries[r.boundaries.len() - 1] - r.boundaries[0];
        let mut next = Vec::new();
        for w in &out {
            for k in 0..r.mappings.len() {
                let len = (r.boundaries[k + 1] - r.boundaries[k]) / width;
                let mut regions = w.regions.clone();
                regions.push(k);
                next.push(World {
                    prob: w.prob * len,
                    regions,
                });
            }
        }
        out = next;
    }
    out
}

/// All node values in world `w` with `held` nodes fixed.
pub fn solve(scm: &Scm, w: &World, held: &[(usize, f64)]) -> Vec<f64> {
    let n = scm.num_nodes();
    let mut v = vec![0.0; n];
    for i in 0..n {
        if let Some(&(_, x)) = held.iter().find(|(h, _)| *h == i) {
            v[i] = x;
            continue;
        }
        let Mechanism::Regional(r) = &scm.mechanisms[i] else {
            unreachable!()
        };
        let mut index = 0usize;
        for (&p, &card) in scm.graph.parents(i).iter().zip(&r.parent_cards) {
            index = index * card + v[p] as usize;
        }
        v[i] = f64::from(r.mappings[w.regions[i]][index]);
    }
    v
}

/// Exact value of `q` and the per-sample standard deviation of its
/// Monte-Carlo estimator's influence function (NaN value when undefined).
pub fn exact(scm: &Scm, q: &Query, form: CtfForm) -> (f64, f64) {
    let ws = worlds(scm);
    let t_arm = [(q.treatment, q.t)];
    let c_arm = [(q.treatment, q.c)];
    let outcome = |vals: &[f64]| match (q.kind, form, q.y) {
        (QueryKind::CtfTe, CtfForm::Probability, Some(y)) => {
            f64::from(u8::from(vals[q.outcome] == y))
        }
        _ => vals[q.outcome],
    };
    let matches = |vals: &[f64], nodes: &[usize], values: &[f64]| {
        nodes.iter().zip(values).all(|(&i, &x)| vals[i] == x)
    };
    // per world: (y_t, y_c, indicator under t, indicator under c)
    let rows: Vec<(f64, f64, f64, f64, f64)> = ws
        .iter()
        .map(|w| {
            let vt = solve(scm, w, &t_arm);
            let vc = solve(scm, w, &c_arm);
            let (it, ic) = match q.kind {
                QueryKind::Ate => (1.0, 1.0),
                QueryKind::Cate => (
                    f64::from(u8::from(matches(&vt, &q.covariates, &q.covariate_values))),
                    f64::from(u8::from(matches(&vc, &q.covariates, &q.covariate_values))),
                ),
                QueryKind::CtfTe => {
                    let f = f64::from(u8::from(matches(
                        &solve(scm, w, &[]),
                        &q.factuals,
                        &q.factual_values,
                    )));
                    (f, f)
                }
            };
            (w.prob, outcome(&vt), outcome(&vc), it, ic)
        })
        .collect();
    let pt: f64 = rows.iter().map(|r| r.0 * r.3).sum();
    let pc: f64 = rows.iter().map(|r| r.0 * r.4).sum();
    if pt <= 0.0 || pc <= 0.0 {
        return (f64::NAN, 0.0);
    }
    let mt = rows.iter().map(|r| r.0 * r.3 * r.1).sum::<f64>() / pt;
    let mc = rows.iter().map(|r| r.0 * r.4 * r.2).sum::<f64>() / pc;
    // linearized ratio-of-means estimator on shared noise
    let var: f64 = rows
        .iter()
        .map(|&(p, yt, yc, it, ic)| {
            let psi = it * (yt - mt) / pt - ic * (yc - mc) / pc;
            p * psi * psi
        })
        .sum();
    (mt - mc, var.sqrt())
}

pub struct OracleReport {
    pub total: usize,
    pub within: usize,
    pub outside: usize,
    pub shrunk: usize,
    pub by_kind: [usize; 3],
    /// Queries whose estimator has nonzero variance.
    pub random: usize,
}

/// Compares Monte-Carlo ground truths on `scms` random binary models
/// (2 to 4 nodes) with the exact values. Queries outside 3 standard errors
/// at `n` are re-estimated at `n_large` with fresh noise.
pub fn oracle_check(scms: u64, n: usize, n_large: usize) -> OracleReport {
    let kernel = KernelSpec {
        kind: KernelKind::Gaussian,
        bandwidth: 0.1,
    };
    let mut report = OracleReport {
        total: 0,
        within: 0,
        outside: 0,
        shrunk: 0,
        by_kind: [0; 3],
        random: 0,
    };
    for s in 0..scms {
        let regions = 3 + s % 6;
        let text = format!(
            "num_nodes = [2, 4]\nexpected_edges = \"N*(N-1)/2\"\nmechanism_family = \"tabular\"\ncardinality = 2\nnoise_regions = {regions}\nnoise_args = [0, 1]"
        );
        let soi = parse_soi(&text).unwrap();
        let root = SeedNode::root(7000 + s);
        let scm = scmbench::scm::sample_scm(&soi, &mut root.stream("structure", 0)).unwrap();
        let support = SupportPool {
            scm: &scm,
            seed: root.child("support", 0),
            size: 100_000,
        };
        let kinds: Vec<(QueryKind, CtfForm)> = vec![
            (QueryKind::Ate, CtfForm::Mean),
            (QueryKind::Cate, CtfForm::Mean),
            (QueryKind::CtfTe, CtfForm::Mean),
            (QueryKind::CtfTe, CtfForm::Probability),
        ];
        for (k, (kind, form)) in kinds.into_iter().enumerate() {
            if kind == QueryKind::Cate && scm.observed().len() < 3 {
                continue;
            }
            let sampled =
                queries::sample_query(kind, form, &support, &mut root.stream("query", k as u64))
                    .unwrap();
            let observed = scm.observed();
            // same conditioning, but first observed node on last with distinct arms
            let mut built = sampled.clone();
            built.treatment = observed[0];
            built.outcome = observed[observed.len() - 1];
            built.t = 1.0;
            built.c = 0.0;
            if kind == QueryKind::Cate {
                built.covariates = vec![observed[1]];
                built.covariate_values = vec![1.0];
            }
            for (j, q) in [sampled, built].into_iter().enumerate() {
                let k = 2 * k + j;
                let (truth, sd) = exact(&scm, &q, form);
                let est = queries::estimate(&scm, &q, n, &kernel, &root.child("truth", k as u64))
                    .unwrap()
                    .value;
                report.total += 1;
                report.by_kind[(k / 2).min(2)] += 1;
                if sd > 0.0 {
                    report.random += 1;
                }
                let tol = |n: usize| (3.0 * sd / (n as f64).sqrt()).max(1e-12);
                let ok = if truth.is_nan() {
                    est.is_nan()
                } else {
                    (est - truth).abs() <= tol(n)
                };
                if ok {
                    report.within += 1;
                    continue;
                }
                report.outside += 1;
                let big = queries::estimate(
                    &scm,
                    &q,
                    n_large,
                    &kernel,
                    &root.child("truth_large", k as u64),
                )
                .unwrap()
                .value;
                if (big - truth).abs() < (est - truth).abs() {
                    report.shrunk += 1;
                }
            }
        }
    }
    report
}
