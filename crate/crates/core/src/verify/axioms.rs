use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{CompositeRecord, Level, Outcome, StratumRecord, VerificationResult, VerifyConfig};
use crate::error::{Error, Result};
use crate::scm::{NoiseMatrix, Scm};
use crate::seed::SeedNode;

/// Disjoint non-empty `(X, Y, W)` from a random subset of size in `[3, n]`.
pub(crate) fn sample_partition(
    n: usize,
    rng: &mut crate::seed::Rng,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let size = rng.random_range(3..=n);
    let subset = &nodes[..size];
    let cut1 = rng.random_range(1..size - 1);
    let cut2 = rng.random_range(cut1 + 1..size);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    (
        sorted(&subset[..cut1]),
        sorted(&subset[cut1..cut2]),
        sorted(&subset[cut2..]),
    )
}

/// Checks composition, effectiveness and reversibility as exact equalities
/// on `noise_draws` noise vectors per sampled partition. Intervention values
/// for row `i` are the factual values of row `i + 1`, so they always lie in
/// the variables' ranges.
pub fn verify_ctf_axioms(
    scm: &Scm,
    cfg: &VerifyConfig,
    seed: &SeedNode,
) -> Result<VerificationResult> {
    let n = scm.num_nodes();
    if n < 3 {
        return Err(Error::TooFewNodes(n));
    }
    let rows = cfg.noise_draws;
    let mut result = VerificationResult::new(Level::L3, 0.0, rows);
    for t in 0..cfg.partitions {
        let node = seed.child("axioms", t as u64);
        let (xs, ys, ws) = sample_partition(n, &mut node.stream("partition", 0));
        let noise = NoiseMatrix::sample(scm, rows, &node.child("noise", 0))?;
        let factual = scm.evaluate(&noise, &[], None)?;
        let shifted =
            |v: usize| -> Vec<f64> { (0..rows).map(|i| factual.cols[v][(i + 1) % rows]).collect() };
        let x_vals: Vec<Vec<f64>> = xs.iter().map(|&v| shifted(v)).collect();
        let w_vals: Vec<Vec<f64>> = ws.iter().map(|&v| shifted(v)).collect();
        let do_x: Vec<(usize, &[f64])> = xs
            .iter()
            .zip(&x_vals)
            .map(|(&v, c)| (v, c.as_slice()))
            .collect();
        let variables = BTreeMap::from([
            ("W".to_string(), ws.clone()),
            ("X".to_string(), xs.clone()),
            ("Y".to_string(), ys.clone()),
        ]);

        let under_x = scm.evaluate_per_row(&noise, &do_x)?;

        // effectiveness: X under do(X = x, W = w) equals x
        let mut iv = do_x.clone();
        iv.extend(ws.iter().zip(&w_vals).map(|(&v, c)| (v, c.as_slice())));
        let under_xw = scm.evaluate_per_row(&noise, &iv)?;
        let effective = (0..rows).map(|i| {
            xs.iter()
                .zip(&x_vals)
                .all(|(&v, c)| under_xw.cols[v][i].to_bits() == c[i].to_bits())
        });
        push(
            &mut result,
            "effectiveness",
            &variables,
            effective.map(Some).collect(),
        );

        // composition: with w = W under do(X = x), adding do(W = w) leaves Y unchanged
        let mut iv = do_x.clone();
        iv.extend(ws.iter().map(|&v| (v, under_x.cols[v].as_slice())));
        let composed = scm.evaluate_per_row(&noise, &iv)?;
        let compose = (0..rows).map(|i| {
            ys.iter()
                .all(|&v| composed.cols[v][i].to_bits() == under_x.cols[v][i].to_bits())
        });
        push(
            &mut result,
            "composition",
            &variables,
            compose.map(Some).collect(),
        );

        // reversibility on one element each of Y and W
        let (y0, w0) = (ys[0], ws[0]);
        let mut iv = do_x.clone();
        iv.push((w0, w_vals[0].as_slice()));
        let y_given_w = scm.evaluate_per_row(&noise, &iv)?.cols[y0].clone();
        let mut iv = do_x.clone();
        iv.push((y0, y_given_w.as_slice()));
        let w_given_y = scm.evaluate_per_row(&noise, &iv)?.cols[w0].clone();
        let reversible = (0..rows)
            .map(|i| {
                (w_given_y[i].to_bits() == w_vals[0][i].to_bits())
                    .then(|| under_x.cols[y0][i].to_bits() == y_given_w[i].to_bits())
            })
            .collect();
        let mut rv = variables.clone();
        rv.insert("Y".into(), vec![y0]);
        rv.insert("W".into(), vec![w0]);
        push(&mut result, "reversibility", &rv, reversible);
    }
    Ok(result)
}

/// One composite per axiom and partition; `None` marks a draw where the
/// axiom's premise did not hold.
fn push(
    result: &mut VerificationResult,
    group: &str,
    variables: &BTreeMap<String, Vec<usize>>,
    checks: Vec<Option<bool>>,
) {
    let strata: Vec<StratumRecord> = checks
        .into_iter()
        .enumerate()
        .map(|(i, c)| StratumRecord {
            values: vec![i as u32],
            outcome: match c {
                Some(true) => Outcome::Pass,
                Some(false) => Outcome::Fail,
                None => Outcome::Skip,
            },
            test: None,
            skip_reason: c.is_none().then(|| "premise false".to_string()),
        })
        .collect();
    let outcome = if strata.iter().any(|s| s.outcome == Outcome::Fail) {
        Outcome::Fail
    } else if strata.iter().all(|s| s.outcome == Outcome::Skip) {
        Outcome::Skip
    } else {
        Outcome::Pass
    };
    // per-draw records would dwarf everything else; keep only failures
    let kept = strata
        .iter()
        .filter(|s| s.outcome == Outcome::Fail)
        .cloned()
        .collect::<Vec<_>>();
    let tally = result.individual.entry(group.to_string()).or_default();
    for s in &strata {
        tally.add(s.outcome);
    }
    result
        .composite
        .entry(group.to_string())
        .or_default()
        .add(outcome);
    result.records.push(CompositeRecord {
        scm_index: 0,
        group: group.to_string(),
        variables: variables.clone(),
        outcome,
        strata: kept,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soi::parse_soi;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_nonempty(n in 3usize..12, s in 0u64..1000) {
            let (x, y, w) = sample_partition(n, &mut SeedNode::root(s).rng());
            prop_assert!(!x.is_empty() && !y.is_empty() && !w.is_empty());
            let mut all: Vec<usize> = x.iter().chain(&y).chain(&w).copied().collect();
            let len = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), len);
            prop_assert!(len <= n && all.iter().all(|&v| v < n));
        }
    }

    #[test]
    fn axioms_hold_on_discrete_and_continuous_models() {
        for text in [
            "num_nodes = 5\nexpected_edges = \"N\"\nmechanism_family = \"tabular\"\ncardinality = 3\nnoise_args = [0, 1]\nnoise_regions = 4",
            "num_nodes = 5\nexpected_edges = \"N\"\nmechanism_family = \"nn\"\nnoise_args = [-1, 1]",
        ] {
            let soi = parse_soi(text).unwrap();
            for s in 0..4 {
                let scm = crate::scm::sample_scm(&soi, &mut SeedNode::root(s).rng()).unwrap();
                let cfg = VerifyConfig { noise_draws: 2000, partitions: 3, ..Default::default() };
                let r = verify_ctf_axioms(&scm, &cfg, &SeedNode::root(50 + s)).unwrap();
                let t = r.individual_total();
                assert_eq!(t.fail, 0);
                assert_eq!(r.individual["effectiveness"].pass, 6000);
            }
        }
    }

    #[test]
    fn too_few_nodes() {
        let soi = parse_soi(
            "num_nodes = 2\nexpected_edges = 1\nmechanism_family = \"linear\"\nnoise_args = [0, 1]",
        )
        .unwrap();
        let scm = crate::scm::sample_scm(&soi, &mut SeedNode::root(0).rng()).unwrap();
        assert!(matches!(
            verify_ctf_axioms(&scm, &VerifyConfig::default(), &SeedNode::root(0)),
            Err(Error::TooFewNodes(2))
        ));
    }
}
