//! Causal graphs: random DAG sampling, hidden-variable assignment, latent
//! projection to ADMGs, d-separation and c-components.
//!
//! Node `i` is always the `i`-th variable and index order is a topological
//! order, so every edge `j -> i` has `j < i`.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalGraph {
    n: usize,
    /// Sorted parent list per node.
    parents: Vec<Vec<usize>>,
    /// Sorted hidden node indices.
    hidden: Vec<usize>,
}

impl CausalGraph {
    /// Builds a graph from per-node parent lists, checking index order.
    pub fn from_parents(parents: Vec<Vec<usize>>) -> Result<Self> {
        let n = parents.len();
        let mut parents = parents;
        for (i, pa) in parents.iter_mut().enumerate() {
            pa.sort_unstable();
            pa.dedup();
            if let Some(&j) = pa.iter().find(|&&j| j >= i) {
                return Err(Error::Param(format!(
                    "edge {j} -> {i} violates index order"
                )));
            }
        }
        Ok(Self {
            n,
            parents,
            hidden: Vec::new(),
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut parents = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n {
                return Err(Error::NodeNotFound(a));
            }
            if b >= n {
                return Err(Error::NodeNotFound(b));
            }
            parents[b].push(a);
        }
        Self::from_parents(parents)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            parents: vec![Vec::new(); n],
            hidden: Vec::new(),
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Result<Self> {
        let mut h = hidden.to_vec();
        h.sort_unstable();
        h.dedup();
        if let Some(&bad) = h.iter().find(|&&v| v >= self.n) {
            return Err(Error::NodeNotFound(bad));
        }
        self.hidden = h;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn parent_lists(&self) -> &[Vec<usize>] {
        &self.parents
    }

    pub fn children_lists(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n];
        for (i, pa) in self.parents.iter().enumerate() {
            for &j in pa {
                ch[j].push(i);
            }
        }
        ch
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(i, pa)| pa.iter().map(move |&j| (j, i)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn num_edges(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn hidden_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &h in &self.hidden {
            mask[h] = true;
        }
        mask
    }

    pub fn observed(&self) -> Vec<usize> {
        let mask = self.hidden_mask();
        (0..self.n).filter(|&v| !mask[v]).collect()
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<()> {
        match nodes.iter().find(|&&v| v >= self.n) {
            Some(&v) => Err(Error::NodeNotFound(v)),
            None => Ok(()),
        }
    }

    /// Membership mask of `set` and all its ancestors.
    pub fn ancestors_of(&self, set: &[usize]) -> Vec<bool> {
        ancestors_in(&self.parents, set)
    }

    /// Membership mask of `set` and all its descendants.
    pub fn descendants_of(&self, set: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &v in set {
            mask[v] = true;
        }
        // index order is topological, one forward sweep suffices
        for i in 0..self.n {
            if !mask[i] && self.parents[i].iter().any(|&j| mask[j]) {
                mask[i] = true;
            }
        }
        mask
    }

    /// Copy with incoming edges of `remove_incoming` and outgoing edges of
    /// `remove_outgoing` deleted.
    pub fn surgery(&self, remove_incoming: &[usize], remove_outgoing: &[usize]) -> Result<Self> {
        self.check_nodes(remove_incoming)?;
        self.check_nodes(remove_outgoing)?;
        let mut g = self.clone();
        for &v in remove_incoming {
            g.parents[v].clear();
        }
        for pa in &mut g.parents {
            pa.retain(|j| !remove_outgoing.contains(j));
        }
        Ok(g)
    }

    pub fn d_separated(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<bool> {
        self.check_nodes(a)?;
        self.check_nodes(b)?;
        self.check_nodes(c)?;
        check_disjoint(a, b, c)?;
        Ok(d_separated_dag(&self.parents, a, b, c))
    }

    /// Projects out the hidden nodes.
    ///
    /// `A -> B` is kept when a directed path from A to B has only hidden
    /// intermediates; `A <-> B` is added when some hidden node reaches both
    /// A and B along directed paths with only hidden intermediates.
    pub fn latent_project(&self) -> Result<Admg> {
        let observed = self.observed();
        if observed.is_empty() {
            return Err(Error::EmptyObserved);
        }
        let hidden = self.hidden_mask();
        let children = self.children_lists();

        // Observed nodes reachable from `start` through hidden-only intermediates.
        let reach = |start: usize| -> Vec<usize> {
            let mut seen = vec![false; self.n];
            let mut stack = children[start].clone();
            let mut out = Vec::new();
            while let Some(v) = stack.pop() {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                if hidden[v] {
                    stack.extend_from_slice(&children[v]);
                } else {
                    out.push(v);
                }
            }
            out.sort_unstable();
            out
        };

        let mut directed = Vec::new();
        for &a in &observed {
            for b in reach(a) {
                directed.push((a, b));
            }
        }
        let mut bidirected = Vec::new();
        for &h in &self.hidden {
            let r = reach(h);
            for (i, &x) in r.iter().enumerate() {
                for &y in &r[i + 1..] {
                    bidirected.push((x, y));
                }
            }
        }
        directed.sort_unstable();
        directed.dedup();
        bidirected.sort_unstable();
        bidirected.dedup();
        Ok(Admg {
            n_total: self.n,
            nodes: observed,
            directed,
            bidirected,
            hidden: self.hidden.clone(),
        })
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: (0..self.n).collect(),
            directed_edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            bidirected_edges: Vec::new(),
            hidden: self.hidden.clone(),
        }
    }
}

/// Samples a DAG whose nodes have `d` expected parents on average.
///
/// Each ordered pair `j < i` is an edge with probability
/// `p = 2d / (n - 1)` clamped to `[0, 1]`: node `i` draws its parent count
/// from Binomial(i, p) and its parents uniformly without replacement.
pub fn sample_dag(n: usize, d: f64, rng: &mut Rng) -> Result<CausalGraph> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Param(format!(
            "expected degree must be >= 0, got {d}"
        )));
    }
    let p = if n <= 1 {
        0.0
    } else {
        (2.0 * d / (n as f64 - 1.0)).clamp(0.0, 1.0)
    };
    let mut parents = Vec::with_capacity(n);
    for i in 0..n {
        let k = if i == 0 {
            0
        } else {
            Binomial::new(i as u64, p)
                .map_err(|e| Error::Param(e.to_string()))?
                .sample(rng) as usize
        };
        let mut pa = index::sample(rng, i, k).into_vec();
        pa.sort_unstable();
        parents.push(pa);
    }
    Ok(CausalGraph {
        n,
        parents,
        hidden: Vec::new(),
    })
}

/// Marks Binomial(n, p_h) nodes, drawn without replacement, as hidden.
pub fn assign_hidden(g: CausalGraph, p_h: f64, rng: &mut Rng) -> Result<CausalGraph> {
    if !(0.0..=1.0).contains(&p_h) {
        return Err(Error::Param(format!(
            "hidden proportion must lie in [0, 1], got {p_h}"
        )));
    }
    let count = Binomial::new(g.n as u64, p_h)
        .map_err(|e| Error::Param(e.to_string()))?
        .sample(rng) as usize;
    let hidden = index::sample(rng, g.n, count).into_vec();
    g.with_hidden(&hidden)
}

/// Uniform random element of a non-empty slice.
pub(crate) fn choose<T: Copy>(items: &[T], rng: &mut Rng) -> T {
    items[rng.random_range(0..items.len())]
}

/// Acyclic directed mixed graph over the observed nodes of a [`CausalGraph`].
///
/// Nodes keep their original indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admg {
    n_total: usize,
    nodes: Vec<usize>,
    directed: Vec<(usize, usize)>,
    /// Unordered pairs stored as `(a, b)` with `a < b`.
    bidirected: Vec<(usize, usize)>,
    hidden: Vec<usize>,
}

impl Admg {
    pub fn new(
        n_total: usize,
        nodes: Vec<usize>,
        directed: Vec<(usize, usize)>,
        bidirected: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mut present = vec![false; n_total];
        for &v in &nodes {
            if v >= n_total {
                return Err(Error::NodeNotFound(v));
            }
            present[v] = true;
        }
        let mut directed = directed;
        let mut bi: Vec<(usize, usize)> = Vec::new();
        for &(a, b) in directed.iter().chain(bidirected.iter()) {
            for v in [a, b] {
                if v >= n_total || !present[v] {
                    return Err(Error::NodeNotFound(v));
                }
            }
        }
        if let Some(&(a, b)) = directed.iter().find(|(a, b)| a >= b) {
            return Err(Error::Param(format!(
                "edge {a} -> {b} violates index order"
            )));
        }
        for (a, b) in bidirected {
            if a == b {
                return Err(Error::Param(format!("bidirected self-loop on {a}")));
            }
            bi.push((a.min(b), a.max(b)));
        }
        directed.sort_unstable();
        directed.dedup();
        bi.sort_unstable();
        bi.dedup();
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        let hidden = (0..n_total).filter(|v| !present[*v]).collect();
        Ok(Self {
            n_total,
            nodes,
            directed,
            bidirected: bi,
            hidden,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn directed(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn bidirected(&self) -> &[(usize, usize)] {
        &self.bidirected
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    fn check_nodes(&self, nodes: &[usize]) -> Result<()> {
        match nodes.iter().find(|v| self.nodes.binary_search(v).is_err()) {
            Some(&v) => Err(Error::NodeNotFound(v)),
            None => Ok(()),
        }
    }

    /// DAG with one synthetic parent per bidirected edge.
    fn dag_view(&self) -> Vec<Vec<usize>> {
        let mut parents = vec![Vec::new(); self.n_total + self.bidirected.len()];
        for &(a, b) in &self.directed {
            parents[b].push(a);
        }
        for (k, &(a, b)) in self.bidirected.iter().enumerate() {
            let h = self.n_total + k;
            parents[a].push(h);
            parents[b].push(h);
        }
        parents
    }

    pub fn d_separated(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<bool> {
        self.check_nodes(a)?;
        self.check_nodes(b)?;
        self.check_nodes(c)?;
        check_disjoint(a, b, c)?;
        Ok(d_separated_dag(&self.dag_view(), a, b, c))
    }

    /// Connected components of the bidirected part, singletons included.
    pub fn c_components(&self) -> Vec<Vec<usize>> {
        let pos = |v: usize| {
            self.nodes
                .binary_search(&v)
                .expect("edge endpoints are nodes")
        };
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.bidirected {
            let (ra, rb) = (find(&mut parent, pos(a)), find(&mut parent, pos(b)));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..self.nodes.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(self.nodes[i]);
        }
        groups.into_values().collect()
    }

    /// Number of bidirected neighbours of each node, in node order.
    pub fn sibling_counts(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .map(|&v| {
                self.bidirected
                    .iter()
                    .filter(|&&(a, b)| a == v || b == v)
                    .count()
            })
            .collect()
    }

    /// Removes directed edges into `remove_incoming` (and bidirected edges
    /// touching them) and directed edges out of `remove_outgoing`.
    pub fn surgery(&self, remove_incoming: &[usize], remove_outgoing: &[usize]) -> Result<Self> {
        self.check_nodes(remove_incoming)?;
        self.check_nodes(remove_outgoing)?;
        let mut g = self.clone();
        g.directed
            .retain(|(a, b)| !remove_incoming.contains(b) && !remove_outgoing.contains(a));
        g.bidirected
            .retain(|(a, b)| !remove_incoming.contains(a) && !remove_incoming.contains(b));
        Ok(g)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self.nodes.clone(),
            directed_edges: self.directed.iter().map(|&(a, b)| [a, b]).collect(),
            bidirected_edges: self.bidirected.iter().map(|&(a, b)| [a, b]).collect(),
            hidden: self.hidden.clone(),
        }
    }
}

/// On-disk graph layout shared by DAGs and ADMGs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<usize>,
    pub directed_edges: Vec<[usize; 2]>,
    pub bidirected_edges: Vec<[usize; 2]>,
    pub hidden: Vec<usize>,
}

impl GraphJson {
    pub fn to_admg(&self) -> Result<Admg> {
        let n_total = self
            .nodes
            .iter()
            .chain(self.hidden.iter())
            .map(|v| v + 1)
            .max()
            .unwrap_or(0);
        Admg::new(
            n_total,
            self.nodes.clone(),
            self.directed_edges.iter().map(|e| (e[0], e[1])).collect(),
            self.bidirected_edges.iter().map(|e| (e[0], e[1])).collect(),
        )
    }
}

fn check_disjoint(a: &[usize], b: &[usize], c: &[usize]) -> Result<()> {
    let overlap = a
        .iter()
        .find(|v| b.contains(v) || c.contains(v))
        .or_else(|| b.iter().find(|v| c.contains(v)));
    match overlap {
        Some(v) => Err(Error::Param(format!(
            "node {v} appears in more than one set"
        ))),
        None => Ok(()),
    }
}

pub(crate) fn ancestors_in(parents: &[Vec<usize>], set: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; parents.len()];
    let mut stack: Vec<usize> = set.to_vec();
    while let Some(v) = stack.pop() {
        if mask[v] {
            continue;
        }
        mask[v] = true;
        stack.extend_from_slice(&parents[v]);
    }
    mask
}

/// Reachability ("Bayes ball") d-separation test on a DAG given by parent lists.
pub(crate) fn d_separated_dag(
    parents: &[Vec<usize>],
    a: &[usize],
    b: &[usize],
    c: &[usize],
) -> bool {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (i, pa) in parents.iter().enumerate() {
        for &j in pa {
            children[j].push(i);
        }
    }
    let mut in_c = vec![false; n];
    for &v in c {
        in_c[v] = true;
    }
    let anc_c = ancestors_in(parents, c);
    let mut in_b = vec![false; n];
    for &v in b {
        in_b[v] = true;
    }

    // visited[v][0]: reached from a child (moving up), [1]: from a parent (moving down)
    let mut visited = vec![[false; 2]; n];
    let mut stack: Vec<(usize, usize)> = a.iter().map(|&v| (v, 0)).collect();
    while let Some((v, dir)) = stack.pop() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if !in_c[v] && in_b[v] {
            return false;
        }
        if dir == 0 {
            if !in_c[v] {
                stack.extend(parents[v].iter().map(|&p| (p, 0)));
                stack.extend(children[v].iter().map(|&ch| (ch, 1)));
            }
        } else {
            if !in_c[v] {
                stack.extend(children[v].iter().map(|&ch| (ch, 1)));
            }
            if anc_c[v] {
                stack.extend(parents[v].iter().map(|&p| (p, 0)));
            }
        }
    }
    true
}
