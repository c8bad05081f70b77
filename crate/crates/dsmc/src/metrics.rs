//! Clustering quality metrics: accuracy under optimal cluster-to-class
//! matching, normalized mutual information, and purity.
//!
//! Labels on both sides may be arbitrary nonnegative integers; they are
//! canonicalized to contiguous ids before the contingency table is built, so
//! every metric is invariant under bijective relabeling.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Predicted-cluster by true-class co-occurrence counts with marginals.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    /// counts[i][j] = instances in predicted cluster i with true class j.
    pub counts: Vec<Vec<usize>>,
    pub pred_totals: Vec<usize>,
    pub truth_totals: Vec<usize>,
    pub total: usize,
}

impl ContingencyTable {
    pub fn from_labels(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "label lists have different lengths: {} vs {}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::InvalidInput("label lists are empty".into()));
        }
        let pred = canonicalize(pred);
        let truth = canonicalize(truth);
        let r = pred.iter().max().unwrap() + 1;
        let s = truth.iter().max().unwrap() + 1;
        let mut counts = vec![vec![0usize; s]; r];
        for (p, t) in pred.iter().zip(&truth) {
            counts[*p][*t] += 1;
        }
        let pred_totals = counts.iter().map(|row| row.iter().sum()).collect();
        let truth_totals = (0..s).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            pred_totals,
            truth_totals,
            total: pred.len(),
        })
    }
}

fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(*l).or_insert(next);
    }
    labels.iter().map(|l| ids[l]).collect()
}

/// Fraction of instances that agree under the best one-to-one matching of
/// predicted clusters to true classes (optimal assignment on the negated
/// contingency table, zero-padded square when cluster counts differ).
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let n = table.counts.len().max(table.counts[0].len());
    let cost: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| -(*table.counts.get(i).and_then(|row| row.get(j)).unwrap_or(&0) as i64))
                .collect()
        })
        .collect();
    let matched = -hungarian_min(&cost);
    Ok(matched as f64 / table.total as f64)
}

/// Mutual information normalized by the geometric mean of the two label
/// entropies (natural log). Identical single-cluster partitions score 1;
/// if exactly one side is a single cluster the score is 0.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let p = table.total as f64;
    let entropy = |totals: &[usize]| -> f64 {
        totals
            .iter()
            .filter(|t| **t > 0)
            .map(|t| {
                let q = *t as f64 / p;
                -q * q.ln()
            })
            .sum()
    };
    let h_pred = entropy(&table.pred_totals);
    let h_truth = entropy(&table.truth_totals);
    if h_pred == 0.0 && h_truth == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }
    let mut info = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let joint = c as f64 / p;
            let marginal = (table.pred_totals[i] as f64 / p) * (table.truth_totals[j] as f64 / p);
            info += joint * (joint / marginal).ln();
        }
    }
    Ok((info / (h_pred * h_truth).sqrt()).clamp(0.0, 1.0))
}

/// Average majority-class fraction over predicted clusters.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::from_labels(pred, truth)?;
    let majority: usize = table
        .counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / table.total as f64)
}

/// Minimum-cost perfect matching on a square cost matrix (potentials-based
/// shortest augmenting path, O(n^3)).
fn hungarian_min(cost: &[Vec<i64>]) -> i64 {
    let n = cost.len();
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[matched[j] - 1][j - 1]).sum()
}
