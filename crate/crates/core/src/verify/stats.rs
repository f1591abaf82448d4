//! Pearson χ² tests, the sample-size filter and Benjamini–Hochberg.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn p_value(statistic: f64, df: usize) -> f64 {
    if statistic.is_infinite() {
        return 0.0;
    }
    match ChiSquared::new(df as f64) {
        Ok(d) => d.sf(statistic).clamp(0.0, 1.0),
        Err(_) => f64::NAN,
    }
}

/// Drops all-zero rows and columns.
pub fn reduce_table(table: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let cols = table.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..cols)
        .filter(|&j| table.iter().any(|r| r[j] > 0))
        .collect();
    table
        .iter()
        .filter(|r| r.iter().any(|&c| c > 0))
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect()
}

/// Pearson χ² test of independence on an r×c contingency table.
/// Zero rows and columns are dropped first; fewer than two of either
/// remaining gives `DegenerateTable`.
pub fn chi2_independence(table: &[Vec<u64>]) -> Result<ChiSquare> {
    if table.iter().any(|r| r.len() != table[0].len()) {
        return Err(Error::Param("ragged contingency table".into()));
    }
    let t = reduce_table(table);
    let (r, c) = (t.len(), t.first().map_or(0, Vec::len));
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!(
            "{r}x{c} after dropping empty margins"
        )));
    }
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c)
        .map(|j| t.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let n: f64 = rows.iter().sum();
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] * cols[j] / n;
            stat += (t[i][j] as f64 - e).powi(2) / e;
        }
    }
    let df = (r - 1) * (c - 1);
    Ok(ChiSquare {
        statistic: stat,
        df,
        p_value: p_value(stat, df),
    })
}

/// Pearson χ² goodness of fit of `observed` counts against `expected`
/// proportions (normalized here). Categories with zero expected mass are
/// dropped; any count landing in one makes the statistic infinite.
pub fn chi2_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::Param("observed and expected lengths differ".into()));
    }
    if expected.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(Error::Param(
            "expected proportions must be finite and nonnegative".into(),
        ));
    }
    let total_e: f64 = expected.iter().sum();
    let n: u64 = observed.iter().sum();
    let support = expected.iter().filter(|&&e| e > 0.0).count();
    if total_e <= 0.0 || n == 0 || support < 2 {
        return Err(Error::DegenerateTable(format!(
            "{support} categories with expected mass, {n} observations"
        )));
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        let e = e / total_e * n as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
        } else if o > 0 {
            stat = f64::INFINITY;
        }
    }
    let df = support - 1;
    Ok(ChiSquare {
        statistic: stat,
        df,
        p_value: p_value(stat, df),
    })
}

/// Benjamini–Hochberg step-up: rejects the `k` smallest p-values where `k`
/// is the largest rank with `p_(k) <= k * alpha / m`.
pub fn bh_correct(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let k = (1..=m)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &i in &order[..k] {
        reject[i] = true;
    }
    reject
}

/// Sample-size rule deciding whether a χ² stratum is trustworthy. It stands
/// in for Koehler's guidance, which has no single operational form: a table
/// is testable when it has at least `min_per_cell` observations per cell
/// and every expected count reaches `min_expected`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KoehlerRule {
    pub min_per_cell: f64,
    pub min_expected: f64,
}

impl Default for KoehlerRule {
    fn default() -> Self {
        Self {
            min_per_cell: 5.0,
            min_expected: 1.0,
        }
    }
}

impl KoehlerRule {
    /// Judged on the table with empty margins removed.
    pub fn ok(&self, table: &[Vec<u64>]) -> bool {
        let t = reduce_table(table);
        let cells = t.len() * t.first().map_or(0, Vec::len);
        if cells == 0 {
            return false;
        }
        let rows: Vec<f64> = t.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
        let n: f64 = rows.iter().sum();
        if n < self.min_per_cell * cells as f64 {
            return false;
        }
        let cols: Vec<f64> = (0..t[0].len())
            .map(|j| t.iter().map(|r| r[j]).sum::<u64>() as f64)
            .collect();
        rows.iter()
            .all(|ri| cols.iter().all(|cj| ri * cj / n >= self.min_expected))
    }
}

/// [`KoehlerRule::ok`] with the default thresholds.
pub fn koehler_ok(table: &[Vec<u64>]) -> bool {
    KoehlerRule::default().ok(table)
}
