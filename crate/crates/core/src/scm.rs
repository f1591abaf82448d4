//! Structural causal models: assembly from a space of interest, forward
//! sampling, do-interventions on shared noise, and abduction.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, CausalGraph};
use crate::mechanisms::{self, Mechanism};
use crate::queries::kernel::kernel_weight;
use crate::seed::{Rng, SeedNode};
use crate::soi::{KernelSpec, MechanismFamily, NoiseSpec, SpaceOfInterest};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub soi_hash: String,
    pub master_seed: u64,
    pub scm_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scm {
    pub graph: CausalGraph,
    pub mechanisms: Vec<Mechanism>,
    pub noise: Vec<NoiseSpec>,
    /// Cardinality per node; 0 for continuous nodes.
    pub cards: Vec<usize>,
    pub markovian: bool,
    pub provenance: Provenance,
}

/// Samples one SCM: node count, graph, hidden set, cardinalities and one
/// mechanism per node.
pub fn sample_scm(soi: &SpaceOfInterest, rng: &mut Rng) -> Result<Scm> {
    if !soi.markovian {
        return Err(Error::Infeasible(
            "semi-Markovian models arise from hidden variables; set markovian = true and hidden_proportion > 0".into(),
        ));
    }
    let graph = match &soi.predefined_graph {
        Some(pre) => {
            let edges: Vec<(usize, usize)> = pre.edges.iter().map(|e| (e[0], e[1])).collect();
            let g = CausalGraph::from_edges(pre.num_nodes, &edges)?;
            match &pre.hidden {
                Some(h) => g.with_hidden(h)?,
                None => graph::assign_hidden(g, soi.hidden_proportion, rng)?,
            }
        }
        None => {
            let n = rng.random_range(soi.num_nodes.0..=soi.num_nodes.1);
            let d = soi.expected_degree(n)?;
            let g = graph::sample_dag(n, d, rng)?;
            graph::assign_hidden(g, soi.hidden_proportion, rng)?
        }
    };
    let n = graph.num_nodes();
    let discrete = soi.is_discrete();
    let cards: Vec<usize> = (0..n)
        .map(|_| {
            if discrete {
                rng.random_range(soi.cardinality.0..=soi.cardinality.1)
            } else {
                0
            }
        })
        .collect();

    let mut mechanisms = Vec::with_capacity(n);
    for v in 0..n {
        let parents = graph.parents(v);
        let m = match soi.mechanism_family {
            MechanismFamily::Tabular => {
                let parent_cards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
                let regions = soi.resolve_noise_regions(n, cards[v])?;
                let omega = soi.noise.bounds().ok_or_else(|| {
                    Error::Infeasible("tabular mechanisms need bounded noise".into())
                })?;
                Mechanism::Regional(mechanisms::sample_regional(
                    soi.discrete_sampling,
                    &parent_cards,
                    cards[v],
                    regions,
                    omega,
                    soi.mechanism_args.table_budget(),
                    rng,
                )?)
            }
            family => mechanisms::sample_continuous_mechanism(
                family,
                parents.len(),
                &soi.mechanism_args.hidden_sizes(),
                soi.noise_mode,
                rng,
            )?,
        };
        mechanisms.push(m);
    }
    Ok(Scm {
        graph,
        mechanisms,
        noise: vec![soi.noise; n],
        cards,
        markovian: true,
        provenance: Provenance::default(),
    })
}

enum Held<'a> {
    Const(f64),
    Column(&'a [f64]),
}

/// Noise realizations stored column-wise: `cols[node][row]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    pub rows: usize,
    pub cols: Vec<Vec<f64>>,
}

impl NoiseMatrix {
    /// Draws every column from its own stream `seed / ("u", node)` so that
    /// evaluating a subset of nodes never shifts the others.
    pub fn sample(scm: &Scm, rows: usize, seed: &SeedNode) -> Result<Self> {
        let all = vec![true; scm.num_nodes()];
        Self::sample_masked(scm, rows, seed, &all)
    }

    /// Like [`sample`](Self::sample) but leaves columns outside `mask` empty.
    pub fn sample_masked(scm: &Scm, rows: usize, seed: &SeedNode, mask: &[bool]) -> Result<Self> {
        let cols = (0..scm.num_nodes())
            .map(|v| {
                if mask[v] {
                    let mut rng = seed.stream("u", v as u64);
                    mechanisms::sample_noise(&scm.noise[v], rows, &mut rng)
                } else {
                    Ok(Vec::new())
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows, cols })
    }

    /// Draws from a caller-provided stream, node by node.
    pub fn sample_from(scm: &Scm, rows: usize, rng: &mut Rng) -> Result<Self> {
        let cols = scm
            .noise
            .iter()
            .map(|spec| mechanisms::sample_noise(spec, rows, rng))
            .collect::<Result<_>>()?;
        Ok(Self { rows, cols })
    }

    /// Keeps only the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            rows: rows.len(),
            cols: self
                .cols
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Vec::new()
                    } else {
                        rows.iter().map(|&r| c[r]).collect()
                    }
                })
                .collect(),
        }
    }
}

/// Full value matrix `cols[node][row]`; columns of skipped nodes are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    pub rows: usize,
    pub cols: Vec<Vec<f64>>,
}

/// Observed data: `columns[k][row]` holds node `nodes[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub nodes: Vec<usize>,
    pub columns: Vec<Vec<f64>>,
}

impl DataMatrix {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn header(&self) -> Vec<String> {
        self.nodes.iter().map(|v| node_name(*v)).collect()
    }

    /// CSV with a header row; floats use the shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in 0..self.rows() {
            for (k, col) in self.columns.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&col[r].to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn node_name(v: usize) -> String {
    format!("V{v}")
}

impl Scm {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn is_discrete(&self) -> bool {
        self.mechanisms.iter().all(Mechanism::is_discrete)
    }

    pub fn observed(&self) -> Vec<usize> {
        self.graph.observed()
    }

    fn check_nodes(&self, nodes: impl IntoIterator<Item = usize>) -> Result<()> {
        for v in nodes {
            if v >= self.num_nodes() {
                return Err(Error::NodeNotFound(v));
            }
        }
        Ok(())
    }

    /// Nodes needed to compute `targets`: their ancestors, cut at intervened nodes.
    pub fn relevant_nodes(&self, targets: &[usize], interventions: &[(usize, f64)]) -> Vec<bool> {
        let mut mask = vec![false; self.num_nodes()];
        let mut stack = targets.to_vec();
        while let Some(v) = stack.pop() {
            if mask[v] {
                continue;
            }
            mask[v] = true;
            if !interventions.iter().any(|&(t, _)| t == v) {
                stack.extend_from_slice(self.graph.parents(v));
            }
        }
        mask
    }

    /// Evaluates the model on fixed noise with the given nodes held constant.
    ///
    /// Nodes are computed in index order. When `mask` is given, only nodes in
    /// it are computed; the mask must be closed under taking parents of
    /// non-intervened nodes (see [`relevant_nodes`](Self::relevant_nodes)).
    pub fn evaluate(
        &self,
        noise: &NoiseMatrix,
        interventions: &[(usize, f64)],
        mask: Option<&[bool]>,
    ) -> Result<Values> {
        let fixed: Vec<(usize, Held)> = interventions
            .iter()
            .map(|&(v, x)| (v, Held::Const(x)))
            .collect();
        self.evaluate_held(noise, &fixed, mask)
    }

    /// Like [`evaluate`](Self::evaluate) but each intervened node takes its
    /// own value per row.
    pub fn evaluate_per_row(
        &self,
        noise: &NoiseMatrix,
        interventions: &[(usize, &[f64])],
    ) -> Result<Values> {
        let fixed: Vec<(usize, Held)> = interventions
            .iter()
            .map(|&(v, x)| (v, Held::Column(x)))
            .collect();
        self.evaluate_held(noise, &fixed, None)
    }

    fn evaluate_held(
        &self,
        noise: &NoiseMatrix,
        fixed: &[(usize, Held)],
        mask: Option<&[bool]>,
    ) -> Result<Values> {
        self.check_nodes(fixed.iter().map(|&(v, _)| v))?;
        let n = noise.rows;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); self.num_nodes()];
        for v in 0..self.num_nodes() {
            if let Some(m) = mask {
                if !m[v] {
                    continue;
                }
            }
            if let Some((_, held)) = fixed.iter().find(|(t, _)| *t == v) {
                cols[v] = match held {
                    Held::Const(x) => vec![*x; n],
                    Held::Column(c) if c.len() == n => c.to_vec(),
                    Held::Column(c) => {
                        return Err(Error::Param(format!(
                            "intervention on node {v} has {} rows, expected {n}",
                            c.len()
                        )))
                    }
                };
                continue;
            }
            let parents: Vec<&[f64]> = self
                .graph
                .parents(v)
                .iter()
                .map(|&p| cols[p].as_slice())
                .collect();
            if parents.iter().any(|p| p.len() != n) {
                return Err(Error::Param(format!(
                    "parents of node {v} were not evaluated"
                )));
            }
            let u = &noise.cols[v];
            if u.len() != n {
                return Err(Error::Param(format!(
                    "noise column {v} has {} rows, expected {n}",
                    u.len()
                )));
            }
            let mut out = vec![0.0; n];
            self.mechanisms[v].eval_column(&parents, u, &mut out)?;
            cols[v] = out;
        }
        Ok(Values { rows: n, cols })
    }

    /// Draws `n` observational samples. Returns the observed matrix and the
    /// full matrix including hidden nodes.
    pub fn forward_sample(&self, n: usize, seed: &SeedNode) -> Result<(DataMatrix, Values)> {
        let noise = NoiseMatrix::sample(self, n, seed)?;
        let full = self.evaluate(&noise, &[], None)?;
        let nodes = self.observed();
        let columns = nodes.iter().map(|&v| full.cols[v].clone()).collect();
        Ok((DataMatrix { nodes, columns }, full))
    }

    /// Draws `n` observational samples of the observed nodes only.
    pub fn sample_observed(&self, n: usize, seed: &SeedNode) -> Result<DataMatrix> {
        let noise = NoiseMatrix::sample(self, n, seed)?;
        let mut full = self.evaluate(&noise, &[], None)?;
        let nodes = self.observed();
        let columns = nodes
            .iter()
            .map(|&v| std::mem::take(&mut full.cols[v]))
            .collect();
        Ok(DataMatrix { nodes, columns })
    }

    /// Same as [`evaluate`](Self::evaluate) with no mask: all nodes computed.
    pub fn forward_sample_with_do(
        &self,
        interventions: &[(usize, f64)],
        noise: &NoiseMatrix,
    ) -> Result<Values> {
        self.evaluate(noise, interventions, None)
    }

    /// One row of the observational pool used to draw query values. Row `j`
    /// is regenerated from its own stream, so the pool never has to be stored.
    pub fn support_row(&self, seed: &SeedNode, j: u64) -> Result<Vec<f64>> {
        let mut rng = seed.stream("row", j);
        let noise = NoiseMatrix::sample_from(self, 1, &mut rng)?;
        let full = self.evaluate(&noise, &[], None)?;
        Ok(full.cols.iter().map(|c| c[0]).collect())
    }
}

/// Posterior over noise rows after conditioning on factual evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// Selected row indices into the noise matrix.
    pub rows: Vec<usize>,
    /// Normalized weights, one per selected row.
    pub weights: Vec<f64>,
}

/// Conditions noise rows on `factual`.
///
/// Discrete models keep rows that reproduce the factual values exactly, with
/// equal weights. Continuous models weight every row by the kernel of its
/// distance to the factual values; zero-weight rows are dropped.
pub fn abduct(
    scm: &Scm,
    values: &Values,
    factual: &[(usize, f64)],
    kernel: Option<&KernelSpec>,
) -> Result<Posterior> {
    let observed = scm.observed();
    for &(v, _) in factual {
        if v >= scm.num_nodes() {
            return Err(Error::NodeNotFound(v));
        }
        if !observed.contains(&v) {
            return Err(Error::Param(format!("factual node {v} is hidden")));
        }
        if values.cols[v].len() != values.rows {
            return Err(Error::Param(format!("factual node {v} was not evaluated")));
        }
    }
    let mut rows = Vec::new();
    let mut weights = Vec::new();
    let mut diff = vec![0.0; factual.len()];
    let discrete = scm.is_discrete();
    for r in 0..values.rows {
        let w = match (discrete, kernel) {
            (false, Some(k)) => {
                for (d, &(v, x)) in diff.iter_mut().zip(factual) {
                    *d = values.cols[v][r] - x;
                }
                kernel_weight(k.kind, &diff, k.bandwidth)?
            }
            _ => {
                if factual.iter().all(|&(v, x)| values.cols[v][r] == x) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        if w > 0.0 {
            rows.push(r);
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    if rows.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyPosterior);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Posterior { rows, weights })
}
