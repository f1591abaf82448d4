//! Structural mechanisms and exogenous noise.
//!
//! Discrete variables use regional mechanisms: the noise interval is cut
//! into consecutive regions and each region carries a lookup table from
//! parent configurations to a child value. Continuous variables use linear
//! or small ReLU-network mechanisms combined with the noise additively or
//! multiplicatively.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;
use crate::soi::{NoiseMode, NoiseSpec};

/// Draws `n` i.i.d. noise values. Uniform draws lie in `[lo, hi)`.
pub fn sample_noise(spec: &NoiseSpec, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    fill_noise(spec, &mut out, rng)?;
    Ok(out)
}

pub fn fill_noise(spec: &NoiseSpec, out: &mut [f64], rng: &mut Rng) -> Result<()> {
    spec.validate()?;
    match *spec {
        NoiseSpec::Uniform { lo, hi } => {
            let dist = Uniform::new(lo, hi).map_err(|e| Error::Param(e.to_string()))?;
            for x in out.iter_mut() {
                *x = dist.sample(rng);
            }
        }
        NoiseSpec::Normal { mean, std } => {
            let dist = Normal::new(mean, std).map_err(|e| Error::Param(e.to_string()))?;
            for x in out.iter_mut() {
                *x = dist.sample(rng);
            }
        }
    }
    Ok(())
}

/// Serializes `f64` slices as 16-digit hex bit patterns so reloads are bit-exact.
mod hex_floats {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(values.iter().map(|x| format!("{:016x}", x.to_bits())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| {
                u64::from_str_radix(s, 16)
                    .map(f64::from_bits)
                    .map_err(|e| D::Error::custom(format!("bad float bits `{s}`: {e}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Mechanism {
    Regional(RegionalMechanism),
    Linear(LinearMechanism),
    Neural(NeuralMechanism),
}

impl Mechanism {
    pub fn arity(&self) -> usize {
        match self {
            Mechanism::Regional(m) => m.parent_cards.len(),
            Mechanism::Linear(m) => m.weights.len(),
            Mechanism::Neural(m) => m.input_size(),
        }
    }

    pub fn eval(&self, pa: &[f64], u: f64) -> Result<f64> {
        if pa.len() != self.arity() {
            return Err(Error::Domain(format!(
                "mechanism takes {} parents, got {}",
                self.arity(),
                pa.len()
            )));
        }
        match self {
            Mechanism::Regional(m) => m.eval(pa, u),
            Mechanism::Linear(m) => Ok(m.eval(pa, u)),
            Mechanism::Neural(m) => Ok(m.eval(pa, u)),
        }
    }

    /// Evaluates a whole column. `parents[k][row]` is the `k`-th parent value.
    ///
    /// Rows are independent, so `out[row]` depends only on row `row` of the inputs.
    pub fn eval_column(&self, parents: &[&[f64]], u: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(parents.len(), self.arity());
        match self {
            Mechanism::Linear(m) => {
                m.eval_column(parents, u, out);
                Ok(())
            }
            Mechanism::Regional(m) => {
                for row in 0..out.len() {
                    let mut idx = 0usize;
                    for (k, col) in parents.iter().enumerate() {
                        idx = idx * m.parent_cards[k] + col[row] as usize;
                    }
                    out[row] = m.table_value(m.region_of(u[row])?, idx) as f64;
                }
                Ok(())
            }
            Mechanism::Neural(m) => {
                let mut input = vec![0.0; parents.len()];
                let mut scratch = NeuralScratch::default();
                for row in 0..out.len() {
                    for (k, col) in parents.iter().enumerate() {
                        input[k] = col[row];
                    }
                    out[row] = m.combine(m.forward(&input, &mut scratch), u[row]);
                }
                Ok(())
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Mechanism::Regional(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalMechanism {
    /// Cardinality of each parent, in parent order.
    pub parent_cards: Vec<usize>,
    /// Child cardinality C.
    pub card: usize,
    /// R + 1 strictly increasing boundaries, from inf to sup of the noise support.
    #[serde(with = "hex_floats")]
    pub boundaries: Vec<f64>,
    /// One table per region, indexed by the mixed-radix parent configuration
    /// with the first parent most significant.
    pub mappings: Vec<Vec<u8>>,
}

/// Tabular sampling strategy, see [`sample_regional`].
pub use crate::soi::DiscreteSampling;

fn config_count(parent_cards: &[usize]) -> Option<u64> {
    parent_cards
        .iter()
        .try_fold(1u64, |acc, &c| acc.checked_mul(c as u64))
}

/// C^m, or `None` when it does not fit in a u64.
fn table_count(card: usize, configs: u64) -> Option<u64> {
    let exp = u32::try_from(configs).ok()?;
    (card as u64).checked_pow(exp)
}

fn check_budget(entries: Option<u64>, budget: u64, what: impl FnOnce() -> String) -> Result<u64> {
    match entries {
        Some(e) if e <= budget => Ok(e),
        _ => Err(Error::Overflow {
            required: what(),
            budget,
        }),
    }
}

/// Samples a regional mechanism.
///
/// - `SampleRejection`: R' = min(R, C^m) regions with pairwise distinct tables,
///   each drawn uniformly and redrawn while it repeats an earlier one.
/// - `Exhaustive`: one region per possible table, tables shuffled across regions.
/// - `UnbiasedRandom`: R regions with independent uniform tables.
///
/// `m` is the number of parent configurations. `budget` caps the number of
/// table entries stored.
pub fn sample_regional(
    strategy: DiscreteSampling,
    parent_cards: &[usize],
    card: usize,
    regions: u64,
    omega_u: (f64, f64),
    budget: u64,
    rng: &mut Rng,
) -> Result<RegionalMechanism> {
    if !(2..=256).contains(&card) {
        return Err(Error::Param(format!(
            "cardinality must lie in [2, 256], got {card}"
        )));
    }
    if regions < 1 {
        return Err(Error::Param("at least one noise region is required".into()));
    }
    let (lo, hi) = omega_u;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Param(format!(
            "noise support [{lo}, {hi}] is not a bounded interval"
        )));
    }
    let configs = config_count(parent_cards);
    let tables = configs.and_then(|m| table_count(card, m));
    let describe_tables = || match configs {
        Some(m) => format!("{card}^{m} tables"),
        None => format!(
            "{card}^({})",
            parent_cards
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("*")
        ),
    };

    let mappings = match strategy {
        DiscreteSampling::Exhaustive => {
            let m = configs.ok_or_else(|| Error::Overflow {
                required: describe_tables(),
                budget,
            })?;
            let t = tables.ok_or_else(|| Error::Overflow {
                required: describe_tables(),
                budget,
            })?;
            check_budget(t.checked_mul(m), budget, || {
                format!("{} x {m} entries", describe_tables())
            })?;
            let mut all = enumerate_tables(card, m as usize);
            all.shuffle(rng);
            all
        }
        DiscreteSampling::SampleRejection | DiscreteSampling::UnbiasedRandom => {
            let effective = match (strategy, tables) {
                (DiscreteSampling::SampleRejection, Some(t)) => regions.min(t),
                _ => regions,
            };
            let m = configs.ok_or_else(|| Error::Overflow {
                required: describe_tables(),
                budget,
            })?;
            check_budget(effective.checked_mul(m), budget, || {
                format!("{effective} x {m} entries")
            })?;
            let m = m as usize;
            let draw = |rng: &mut Rng| -> Vec<u8> {
                (0..m).map(|_| rng.random_range(0..card) as u8).collect()
            };
            if strategy == DiscreteSampling::SampleRejection {
                let mut seen = HashSet::with_capacity(effective as usize);
                let mut out = Vec::with_capacity(effective as usize);
                while (out.len() as u64) < effective {
                    let t = draw(rng);
                    if seen.insert(t.clone()) {
                        out.push(t);
                    }
                }
                out
            } else {
                (0..effective).map(|_| draw(rng)).collect()
            }
        }
    };

    let boundaries = sample_boundaries(mappings.len(), lo, hi, rng);
    Ok(RegionalMechanism {
        parent_cards: parent_cards.to_vec(),
        card,
        boundaries,
        mappings,
    })
}

/// All C^m tables in lexicographic order.
pub fn enumerate_tables(card: usize, m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur = vec![0u8; m];
    loop {
        out.push(cur.clone());
        let mut k = m;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if (cur[k] as usize) + 1 < card {
                cur[k] += 1;
                break;
            }
            cur[k] = 0;
        }
    }
}

/// `r - 1` sorted uniform cut points plus both endpoints, redrawn until all
/// regions have positive length.
fn sample_boundaries(r: usize, lo: f64, hi: f64, rng: &mut Rng) -> Vec<f64> {
    let dist = Uniform::new(lo, hi).expect("bounds validated");
    loop {
        let mut cuts: Vec<f64> = (0..r - 1).map(|_| dist.sample(rng)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut b = Vec::with_capacity(r + 1);
        b.push(lo);
        b.extend(cuts);
        b.push(hi);
        if b.windows(2).all(|w| w[0] < w[1]) {
            return b;
        }
    }
}

impl RegionalMechanism {
    pub fn num_regions(&self) -> usize {
        self.mappings.len()
    }

    pub fn num_configs(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn omega_u(&self) -> (f64, f64) {
        (
            self.boundaries[0],
            *self.boundaries.last().expect("at least two boundaries"),
        )
    }

    /// Region containing `u`; the last region is closed at the upper end.
    pub fn region_of(&self, u: f64) -> Result<usize> {
        let (lo, hi) = self.omega_u();
        if !(lo..=hi).contains(&u) {
            return Err(Error::Domain(format!(
                "noise value {u} outside [{lo}, {hi}]"
            )));
        }
        let interior = &self.boundaries[1..self.boundaries.len() - 1];
        Ok(interior.partition_point(|&b| b <= u))
    }

    pub fn config_index(&self, pa: &[f64]) -> Result<usize> {
        let mut idx = 0usize;
        for (k, (&v, &c)) in pa.iter().zip(&self.parent_cards).enumerate() {
            if !(v >= 0.0 && v < c as f64 && v.fract() == 0.0) {
                return Err(Error::Domain(format!(
                    "parent {k} value {v} outside domain 0..{c}"
                )));
            }
            idx = idx * c + v as usize;
        }
        Ok(idx)
    }

    pub fn table_value(&self, region: usize, config: usize) -> u8 {
        self.mappings[region][config]
    }

    pub fn eval(&self, pa: &[f64], u: f64) -> Result<f64> {
        let idx = self.config_index(pa)?;
        Ok(self.table_value(self.region_of(u)?, idx) as f64)
    }

    pub fn region_lengths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// P(V = v | pa) for every v, from region lengths under uniform noise.
    pub fn conditional(&self, config: usize) -> Vec<f64> {
        let (lo, hi) = self.omega_u();
        let mut p = vec![0.0; self.card];
        for (len, table) in self.region_lengths().iter().zip(&self.mappings) {
            p[table[config] as usize] += len / (hi - lo);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMechanism {
    #[serde(with = "hex_floats")]
    pub weights: Vec<f64>,
    pub mode: NoiseMode,
}

impl LinearMechanism {
    /// Additive: `w·pa + u`. Multiplicative: `(w·pa) * u`, or `u` for root nodes.
    pub fn eval(&self, pa: &[f64], u: f64) -> f64 {
        let s: f64 = self.weights.iter().zip(pa).map(|(w, x)| w * x).sum();
        match self.mode {
            NoiseMode::Additive => s + u,
            NoiseMode::Multiplicative if self.weights.is_empty() => u,
            NoiseMode::Multiplicative => s * u,
        }
    }

    fn eval_column(&self, parents: &[&[f64]], u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (w, col) in self.weights.iter().zip(parents) {
            for (o, x) in out.iter_mut().zip(col.iter()) {
                *o += w * x;
            }
        }
        match self.mode {
            NoiseMode::Additive => out.iter_mut().zip(u).for_each(|(o, u)| *o += u),
            NoiseMode::Multiplicative if self.weights.is_empty() => out.copy_from_slice(u),
            NoiseMode::Multiplicative => out.iter_mut().zip(u).for_each(|(o, u)| *o *= u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    #[serde(with = "hex_floats")]
    pub weights: Vec<f64>,
    #[serde(with = "hex_floats")]
    pub bias: Vec<f64>,
}

/// Feed-forward ReLU network with a scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralMechanism {
    pub layers: Vec<DenseLayer>,
    pub mode: NoiseMode,
}

#[derive(Default)]
struct NeuralScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl NeuralMechanism {
    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn forward(&self, input: &[f64], s: &mut NeuralScratch) -> f64 {
        s.a.clear();
        s.a.extend_from_slice(input);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            s.b.clear();
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let z = layer.bias[o] + row.iter().zip(&s.a).map(|(w, x)| w * x).sum::<f64>();
                s.b.push(if li < last { z.max(0.0) } else { z });
            }
            std::mem::swap(&mut s.a, &mut s.b);
        }
        s.a[0]
    }

    fn combine(&self, f: f64, u: f64) -> f64 {
        match self.mode {
            NoiseMode::Additive => f + u,
            NoiseMode::Multiplicative => f * u,
        }
    }

    pub fn eval(&self, pa: &[f64], u: f64) -> f64 {
        let f = self.forward(pa, &mut NeuralScratch::default());
        self.combine(f, u)
    }
}

/// Samples a linear or neural mechanism with i.i.d. Uniform[-1, 1] parameters.
pub fn sample_continuous_mechanism(
    family: crate::soi::MechanismFamily,
    arity: usize,
    hidden_sizes: &[usize],
    mode: NoiseMode,
    rng: &mut Rng,
) -> Result<Mechanism> {
    use crate::soi::MechanismFamily;
    let init = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| init.sample(rng)).collect() };
    match family {
        MechanismFamily::Linear => Ok(Mechanism::Linear(LinearMechanism {
            weights: draw(arity),
            mode,
        })),
        MechanismFamily::NeuralNet => {
            if hidden_sizes.contains(&0) {
                return Err(Error::Param("hidden layer widths must be positive".into()));
            }
            let mut sizes = vec![arity];
            sizes.extend_from_slice(hidden_sizes);
            sizes.push(1);
            let layers = sizes
                .windows(2)
                .map(|w| DenseLayer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: draw(w[0] * w[1]),
                    bias: draw(w[1]),
                })
                .collect();
            Ok(Mechanism::Neural(NeuralMechanism { layers, mode }))
        }
        MechanismFamily::Tabular => Err(Error::Param(
            "tabular mechanisms are sampled with sample_regional".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedNode;
    use crate::soi::MechanismFamily;
    use proptest::prelude::*;

    fn rng(k: u64) -> crate::seed::Rng {
        SeedNode::root(k).rng()
    }

    const UNIT: (f64, f64) = (0.0, 1.0);

    #[test]
    fn single_region_is_deterministic() {
        let m = sample_regional(
            DiscreteSampling::SampleRejection,
            &[2],
            2,
            1,
            UNIT,
            1000,
            &mut rng(1),
        )
        .unwrap();
        assert_eq!(m.num_regions(), 1);
        let v = m.eval(&[1.0], 0.3).unwrap();
        for u in [0.0, 0.5, 1.0] {
            assert_eq!(m.eval(&[1.0], u).unwrap(), v);
        }
    }

    #[test]
    fn rejection_caps_regions_at_table_count() {
        let m = sample_regional(
            DiscreteSampling::SampleRejection,
            &[],
            2,
            10,
            UNIT,
            1000,
            &mut rng(2),
        )
        .unwrap();
        assert_eq!(m.num_regions(), 2);
        let mut tables = m.mappings.clone();
        tables.sort();
        assert_eq!(tables, vec![vec![0], vec![1]]);
        let lengths = m.region_lengths();
        let p1 = if m.mappings[0] == vec![1] {
            lengths[0]
        } else {
            lengths[1]
        };
        assert!((m.conditional(0)[1] - p1).abs() < 1e-15);
    }

    #[test]
    fn rejection_with_all_tables_is_a_permutation() {
        let m = sample_regional(
            DiscreteSampling::SampleRejection,
            &[2],
            2,
            4,
            UNIT,
            1000,
            &mut rng(3),
        )
        .unwrap();
        let mut tables = m.mappings.clone();
        tables.sort();
        assert_eq!(tables, enumerate_tables(2, 2));
    }

    #[test]
    fn exhaustive_counts() {
        let root = sample_regional(
            DiscreteSampling::Exhaustive,
            &[],
            2,
            1,
            UNIT,
            1000,
            &mut rng(4),
        )
        .unwrap();
        assert_eq!(root.num_regions(), 2);
        let two = sample_regional(
            DiscreteSampling::Exhaustive,
            &[2, 2],
            2,
            1,
            UNIT,
            1000,
            &mut rng(5),
        )
        .unwrap();
        assert_eq!(two.num_regions(), 16);
    }

    #[test]
    fn budget_overflow() {
        let err = sample_regional(
            DiscreteSampling::Exhaustive,
            &[2, 2, 2, 2, 2],
            2,
            1,
            UNIT,
            1_000_000,
            &mut rng(6),
        );
        assert!(matches!(err, Err(Error::Overflow { .. })));
        // rejection only stores R' tables, so the same parents are fine
        let ok = sample_regional(
            DiscreteSampling::SampleRejection,
            &[2, 2, 2, 2, 2],
            2,
            10,
            UNIT,
            1_000_000,
            &mut rng(6),
        );
        assert_eq!(ok.unwrap().num_regions(), 10);
        let tight = sample_regional(
            DiscreteSampling::UnbiasedRandom,
            &[3, 3],
            3,
            10,
            UNIT,
            50,
            &mut rng(6),
        );
        assert!(matches!(tight, Err(Error::Overflow { .. })));
    }

    #[test]
    fn unbiased_duplicate_rate_matches_birthday_arithmetic() {
        let mut r = rng(7);
        let trials = 10_000;
        let dup = (0..trials)
            .filter(|_| {
                let m = sample_regional(
                    DiscreteSampling::UnbiasedRandom,
                    &[2],
                    2,
                    3,
                    UNIT,
                    1000,
                    &mut r,
                )
                .unwrap();
                let set: HashSet<_> = m.mappings.iter().collect();
                set.len() < 3
            })
            .count();
        let rate = dup as f64 / trials as f64;
        // 1 - 4*3*2/4^3 = 0.625; binomial sd ~ 0.005
        assert!((rate - 0.625).abs() < 0.02, "{rate}");
    }

    #[test]
    fn region_lookup_and_domain() {
        let m = RegionalMechanism {
            parent_cards: vec![],
            card: 2,
            boundaries: vec![0.0, 0.3, 1.0],
            mappings: vec![vec![0], vec![1]],
        };
        assert_eq!(m.region_of(0.0).unwrap(), 0);
        assert_eq!(m.region_of(0.2999).unwrap(), 0);
        assert_eq!(m.region_of(0.3).unwrap(), 1);
        assert_eq!(m.region_of(1.0).unwrap(), 1);
        assert!(matches!(m.region_of(1.5), Err(Error::Domain(_))));
        let mut r = rng(8);
        let n = 100_000;
        let ones: f64 = sample_noise(&NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }, n, &mut r)
            .unwrap()
            .iter()
            .map(|&u| m.eval(&[], u).unwrap())
            .sum();
        assert!((ones / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn mixed_radix_puts_first_parent_first() {
        let m = RegionalMechanism {
            parent_cards: vec![2, 3],
            card: 6,
            boundaries: vec![0.0, 1.0],
            mappings: vec![(0..6).collect()],
        };
        assert_eq!(m.eval(&[1.0, 2.0], 0.5).unwrap(), 5.0);
        assert_eq!(m.eval(&[0.0, 2.0], 0.5).unwrap(), 2.0);
        assert!(m.eval(&[2.0, 0.0], 0.5).is_err());
        let mech = Mechanism::Regional(m);
        assert!(matches!(mech.eval(&[1.0], 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_arithmetic() {
        let m = LinearMechanism {
            weights: vec![2.0],
            mode: NoiseMode::Additive,
        };
        assert_eq!(m.eval(&[3.0], 0.5), 6.5);
        let m = LinearMechanism {
            weights: vec![2.0],
            mode: NoiseMode::Multiplicative,
        };
        assert_eq!(m.eval(&[3.0], 0.5), 3.0);
        let root = sample_continuous_mechanism(
            MechanismFamily::Linear,
            0,
            &[],
            NoiseMode::Additive,
            &mut rng(9),
        )
        .unwrap();
        assert_eq!(root.eval(&[], 0.25).unwrap(), 0.25);
    }

    #[test]
    fn neural_shapes() {
        for k in 0..4 {
            let m = sample_continuous_mechanism(
                MechanismFamily::NeuralNet,
                k,
                &[8, 8],
                NoiseMode::Additive,
                &mut rng(10),
            )
            .unwrap();
            let Mechanism::Neural(n) = &m else {
                unreachable!()
            };
            assert_eq!(n.parameter_count(), (k * 8 + 8) + (8 * 8 + 8) + (8 + 1));
            assert_eq!(m.arity(), k);
        }
    }

    #[test]
    fn noise_moments() {
        assert!(
            sample_noise(&NoiseSpec::Uniform { lo: 0.0, hi: 1.0 }, 0, &mut rng(11))
                .unwrap()
                .is_empty()
        );
        let xs = sample_noise(
            &NoiseSpec::Uniform { lo: 0.0, hi: 1.0 },
            100_000,
            &mut rng(12),
        )
        .unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        assert!(matches!(
            sample_noise(
                &NoiseSpec::Normal {
                    mean: 0.0,
                    std: -1.0
                },
                3,
                &mut rng(13)
            ),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn serialization_is_bit_exact() {
        let m = sample_continuous_mechanism(
            MechanismFamily::NeuralNet,
            3,
            &[8, 8],
            NoiseMode::Multiplicative,
            &mut rng(14),
        )
        .unwrap();
        let back: Mechanism = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let r = Mechanism::Regional(
            sample_regional(
                DiscreteSampling::UnbiasedRandom,
                &[3],
                2,
                7,
                UNIT,
                1000,
                &mut rng(15),
            )
            .unwrap(),
        );
        let back: Mechanism = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn column_eval_matches_pointwise() {
        let mut r = rng(16);
        for family in [MechanismFamily::Linear, MechanismFamily::NeuralNet] {
            let m = sample_continuous_mechanism(family, 2, &[4], NoiseMode::Multiplicative, &mut r)
                .unwrap();
            let a = sample_noise(
                &NoiseSpec::Normal {
                    mean: 0.0,
                    std: 1.0,
                },
                50,
                &mut r,
            )
            .unwrap();
            let b = sample_noise(
                &NoiseSpec::Normal {
                    mean: 0.0,
                    std: 1.0,
                },
                50,
                &mut r,
            )
            .unwrap();
            let u = sample_noise(
                &NoiseSpec::Normal {
                    mean: 0.0,
                    std: 1.0,
                },
                50,
                &mut r,
            )
            .unwrap();
            let mut out = vec![0.0; 50];
            m.eval_column(&[&a, &b], &u, &mut out).unwrap();
            for i in 0..50 {
                assert_eq!(
                    out[i].to_bits(),
                    m.eval(&[a[i], b[i]], u[i]).unwrap().to_bits()
                );
            }
        }
    }

    proptest! {
        #[test]
        fn boundaries_partition_the_support(r in 1u64..40, seed in any::<u64>()) {
            let m = sample_regional(DiscreteSampling::UnbiasedRandom, &[2], 3, r, (-1.0, 1.0), 10_000, &mut rng(seed)).unwrap();
            prop_assert_eq!(m.boundaries.len(), r as usize + 1);
            prop_assert_eq!(m.boundaries[0], -1.0);
            prop_assert_eq!(*m.boundaries.last().unwrap(), 1.0);
            prop_assert!(m.boundaries.windows(2).all(|w| w[0] < w[1]));
            // each boundary opens exactly its own region
            for (k, &b) in m.boundaries[..r as usize].iter().enumerate() {
                prop_assert_eq!(m.region_of(b).unwrap(), k);
            }
            let total: f64 = (0..3).map(|v| m.conditional(1)[v]).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rejection_tables_are_distinct(card in 2usize..4, arity in 0usize..3, r in 1u64..30, seed in any::<u64>()) {
            let pc = vec![card; arity];
            let m = sample_regional(DiscreteSampling::SampleRejection, &pc, card, r, UNIT, 1_000_000, &mut rng(seed)).unwrap();
            let set: HashSet<_> = m.mappings.iter().collect();
            prop_assert_eq!(set.len(), m.num_regions());
            let total = (card as u64).pow(card.pow(arity as u32) as u32);
            prop_assert_eq!(m.num_regions() as u64, r.min(total));
        }

        #[test]
        fn exhaustive_tables_are_the_full_enumeration(card in 2usize..4, arity in 0usize..2, seed in any::<u64>()) {
            let pc = vec![card; arity];
            let m = sample_regional(DiscreteSampling::Exhaustive, &pc, card, 1, UNIT, 1_000_000, &mut rng(seed)).unwrap();
            let mut tables = m.mappings.clone();
            tables.sort();
            prop_assert_eq!(tables, enumerate_tables(card, card.pow(arity as u32)));
        }
    }
}
