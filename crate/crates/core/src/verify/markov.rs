use std::collections::{BTreeMap, HashMap};

use super::{
    byte_data, composite_from_tables, require_discrete_markovian, CompositeRecord, Level,
    VerificationResult, VerifyConfig,
};
use crate::error::Result;
use crate::scm::Scm;
use crate::seed::SeedNode;

/// All subsets of `pool` with at most `k` elements, smallest first.
pub(crate) fn subsets_up_to(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![(Vec::new(), 0usize)];
    for _ in 0..k {
        let mut next = Vec::new();
        for (set, start) in frontier {
            for i in start..pool.len() {
                let mut s: Vec<usize> = set.clone();
                s.push(pool[i]);
                out.push(s.clone());
                next.push((s, i + 1));
            }
        }
        frontier = next;
    }
    out
}

/// Tests every d-separation `A ⊥ B | C` with singleton `A`, `B` and
/// `|C| <= max_cond` by per-stratum χ² independence tests on one
/// observational sample.
pub fn verify_markov(scm: &Scm, cfg: &VerifyConfig, seed: &SeedNode) -> Result<VerificationResult> {
    require_discrete_markovian(scm)?;
    let n = scm.num_nodes();
    let data = byte_data(scm, cfg.samples, &[], &seed.child("markov", 0))?;
    let mut result = VerificationResult::new(Level::L1, cfg.alpha, cfg.samples);
    for a in 0..n {
        for b in a + 1..n {
            let pool: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
            for c in subsets_up_to(&pool, cfg.max_cond) {
                if !scm.graph.d_separated(&[a], &[b], &c)? {
                    continue;
                }
                let (ca, cb) = (scm.cards[a], scm.cards[b]);
                let mut strata: HashMap<Vec<u32>, Vec<u64>> = HashMap::new();
                let mut key = vec![0u32; c.len()];
                for r in 0..data.rows {
                    for (k, &v) in c.iter().enumerate() {
                        key[k] = u32::from(data.cols[v][r]);
                    }
                    let cell = usize::from(data.cols[a][r]) * cb + usize::from(data.cols[b][r]);
                    strata
                        .entry(key.clone())
                        .or_insert_with(|| vec![0; ca * cb])[cell] += 1;
                }
                let mut tables: Vec<(Vec<u32>, Vec<Vec<u64>>)> = strata
                    .into_iter()
                    .map(|(k, flat)| (k, flat.chunks(cb).map(<[u64]>::to_vec).collect()))
                    .collect();
                tables.sort_by(|x, y| x.0.cmp(&y.0));
                let (outcome, strata) = composite_from_tables(tables, cfg.alpha, &cfg.koehler);
                let variables = BTreeMap::from([
                    ("A".to_string(), vec![a]),
                    ("B".to_string(), vec![b]),
                    ("C".to_string(), c.clone()),
                ]);
                result.push(CompositeRecord {
                    scm_index: 0,
                    group: format!("cond_size_{}", c.len()),
                    variables,
                    outcome,
                    strata,
                });
            }
        }
    }
    Ok(result)
}
