//! Classification accuracy and the clustering-error score.
//!
//! The clustering score matches predicted clusters to true classes one-to-one
//! so that the total number of matched samples is maximal, and reports that
//! total as a fraction of all samples (higher is better).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Cluster-by-class count matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[p][t]`: samples assigned to cluster `p` with true class `t`.
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn build<A: Ord + Clone, B: Ord + Clone>(assignments: &[A], truth: &[B]) -> Result<Self> {
        if assignments.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: assignments.len(),
                right: truth.len(),
            });
        }
        let pred_index = dense_index(assignments);
        let true_index = dense_index(truth);
        let mut counts = vec![vec![0u64; true_index.len()]; pred_index.len()];
        for (a, b) in assignments.iter().zip(truth) {
            counts[pred_index[a]][true_index[b]] += 1;
        }
        Ok(ContingencyTable {
            counts,
            n: assignments.len() as u64,
        })
    }

    pub fn clusters(&self) -> usize {
        self.counts.len()
    }

    pub fn classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// Largest total count over one-to-one cluster/class matchings.
    pub fn best_matched_total(&self) -> u64 {
        let size = self.clusters().max(self.classes());
        if size == 0 {
            return 0;
        }
        let mut square = vec![vec![0.0; size]; size];
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                square[i][j] = c as f64;
            }
        }
        let perm = optimal_assignment(&square).expect("square by construction");
        perm.iter()
            .enumerate()
            .filter(|&(i, &j)| i < self.clusters() && j < self.classes())
            .map(|(i, &j)| self.counts[i][j])
            .sum()
    }
}

fn dense_index<T: Ord + Clone>(values: &[T]) -> BTreeMap<T, usize> {
    let mut index = BTreeMap::new();
    for v in values {
        index.entry(v.clone()).or_insert(0);
    }
    for (i, slot) in index.values_mut().enumerate() {
        *slot = i;
    }
    index
}

/// Fraction of positions where a prediction is present and correct.
pub fn accuracy<C: PartialEq>(predicted: &[Option<C>], truth: &[C]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Contract("accuracy of an empty sequence".into()));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == Some(*t))
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Matched fraction under the best one-to-one cluster/class correspondence.
pub fn clustering_error<A: Ord + Clone, B: Ord + Clone>(assignments: &[A], truth: &[B]) -> Result<f64> {
    let table = ContingencyTable::build(assignments, truth)?;
    if table.n == 0 {
        return Err(Error::Contract("clustering error of an empty sequence".into()));
    }
    Ok(table.best_matched_total() as f64 / table.n as f64)
}

/// Permutation `p` maximizing `sum_i values[i][p[i]]` (Hungarian method with
/// potentials, O(n^3)).
pub fn optimal_assignment(values: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = values.len();
    for row in values {
        if row.len() != n {
            return Err(Error::Contract(format!(
                "assignment matrix must be square, got a row of {} in a {n}-row matrix",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("assignment matrix has non-finite entries".into()));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // minimize negated values; 1-based arrays with a sentinel column 0
    let cost = |i: usize, j: usize| -values[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    Ok(perm)
}
