use std::collections::{BTreeMap, HashMap};

use super::{
    byte_data, composite_from_tables, require_discrete_markovian, stratified_counts, ByteData,
    CompositeRecord, Level, VerificationResult, VerifyConfig,
};
use crate::error::Result;
use crate::graph::CausalGraph;
use crate::scm::Scm;
use crate::seed::SeedNode;

/// Interventional datasets, generated on first use. Each key (intervention
/// set and replica) has its own seed, so two different keys never share noise.
struct DataCache<'a> {
    scm: &'a Scm,
    n: usize,
    seed: SeedNode,
    sets: HashMap<(Vec<(usize, u8)>, u8), ByteData>,
}

impl<'a> DataCache<'a> {
    fn get(&mut self, mut interventions: Vec<(usize, u8)>, replica: u8) -> Result<&ByteData> {
        interventions.sort_unstable();
        let key = (interventions, replica);
        if !self.sets.contains_key(&key) {
            let tag = key
                .0
                .iter()
                .map(|(v, x)| format!("{v}={x}"))
                .collect::<Vec<_>>()
                .join(",");
            let seed = self.seed.child(&format!("do[{tag}]"), u64::from(replica));
            let iv: Vec<(usize, f64)> = key.0.iter().map(|&(v, x)| (v, f64::from(x))).collect();
            let data = byte_data(self.scm, self.n, &iv, &seed)?;
            self.sets.insert(key.clone(), data);
        }
        Ok(&self.sets[&key])
    }
}

/// Graphical precondition of rule `rule` for singletons `(x, y, z, w)`.
pub(crate) fn precondition(
    g: &CausalGraph,
    rule: u8,
    x: usize,
    y: usize,
    z: usize,
    w: usize,
) -> Result<bool> {
    let gx = g.surgery(&[x], &[])?;
    let surgered = match rule {
        1 => gx,
        2 => g.surgery(&[x], &[z])?,
        _ => {
            // Z(W): Z unless it is an ancestor of W once X's inputs are cut
            if gx.ancestors_of(&[w])[z] {
                gx
            } else {
                g.surgery(&[x, z], &[])?
            }
        }
    };
    surgered.d_separated(&[y], &[z], &[x, w])
}

/// Checks the three do-calculus rules on every ordered tuple of distinct
/// single variables `(X, Y, Z, W)` meeting the rule's graphical
/// precondition. For each value of `X` (and `Z` where it is intervened
/// on) the two sides are estimated from independent interventional
/// samples and compared stratum by stratum with a χ² homogeneity test.
pub fn verify_do_calculus(
    scm: &Scm,
    cfg: &VerifyConfig,
    seed: &SeedNode,
) -> Result<VerificationResult> {
    require_discrete_markovian(scm)?;
    let n = scm.num_nodes();
    let mut cache = DataCache {
        scm,
        n: cfg.samples,
        seed: seed.child("do_calculus", 0),
        sets: HashMap::new(),
    };
    let mut result = VerificationResult::new(Level::L2, cfg.alpha, cfg.samples);
    for rule in 1..=3u8 {
        for x in 0..n {
            for y in (0..n).filter(|&v| v != x) {
                for z in (0..n).filter(|&v| v != x && v != y) {
                    for w in (0..n).filter(|&v| v != x && v != y && v != z) {
                        if !precondition(&scm.graph, rule, x, y, z, w)? {
                            continue;
                        }
                        let tables = rule_tables(&mut cache, rule, x, y, z, w)?;
                        let (outcome, strata) =
                            composite_from_tables(tables, cfg.alpha, &cfg.koehler);
                        let variables = BTreeMap::from([
                            ("W".to_string(), vec![w]),
                            ("X".to_string(), vec![x]),
                            ("Y".to_string(), vec![y]),
                            ("Z".to_string(), vec![z]),
                        ]);
                        result.push(CompositeRecord {
                            scm_index: 0,
                            group: format!("rule_{rule}"),
                            variables,
                            outcome,
                            strata,
                        });
                    }
                }
            }
        }
    }
    Ok(result)
}

/// Per-stratum 2×|Y| tables (left side, right side) keyed by `(x, z, w)`.
fn rule_tables(
    cache: &mut DataCache,
    rule: u8,
    x: usize,
    y: usize,
    z: usize,
    w: usize,
) -> Result<Vec<(Vec<u32>, Vec<Vec<u64>>)>> {
    let cards = &cache.scm.cards;
    let (cy, cz) = (cards[y], cards[z]);
    let mut tables = Vec::new();
    for xv in 0..cards[x] as u8 {
        match rule {
            1 => {
                // P(Y | do x, w, z) against P(Y | do x, w), two replicas of do(x)
                let lhs = stratified_counts(cache.get(vec![(x, xv)], 0)?, y, cy, &[z, w]);
                let rhs = stratified_counts(cache.get(vec![(x, xv)], 1)?, y, cy, &[w]);
                let mut keys: Vec<&Vec<u32>> = lhs.keys().collect();
                keys.sort();
                for k in keys {
                    let right = rhs.get(&vec![k[1]]).cloned().unwrap_or_else(|| vec![0; cy]);
                    tables.push((vec![u32::from(xv), k[0], k[1]], vec![lhs[k].clone(), right]));
                }
            }
            _ => {
                let rhs = if rule == 2 {
                    stratified_counts(cache.get(vec![(x, xv)], 0)?, y, cy, &[z, w])
                } else {
                    stratified_counts(cache.get(vec![(x, xv)], 0)?, y, cy, &[w])
                };
                for zv in 0..cz as u8 {
                    let lhs = stratified_counts(cache.get(vec![(x, xv), (z, zv)], 0)?, y, cy, &[w]);
                    let mut keys: Vec<&Vec<u32>> = lhs.keys().collect();
                    keys.sort();
                    for k in keys {
                        let rkey = if rule == 2 {
                            vec![u32::from(zv), k[0]]
                        } else {
                            k.clone()
                        };
                        let right = rhs.get(&rkey).cloned().unwrap_or_else(|| vec![0; cy]);
                        tables.push((
                            vec![u32::from(xv), u32::from(zv), k[0]],
                            vec![lhs[k].clone(), right],
                        ));
                    }
                }
            }
        }
    }
    Ok(tables)
}
