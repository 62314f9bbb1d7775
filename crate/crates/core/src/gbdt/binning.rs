//! Quantile binning of raw features into at most 255 bins.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-feature bin indices, stored column-major, plus the edges that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    n_rows: usize,
    bins: Vec<u8>,
    mapper: BinMapper,
}

/// Upper bin edges per feature. A value `x` falls in the first bin `i` with
/// `x <= edges[i]`, or in the last bin when it exceeds every edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub edges: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    pub fn bin(&self, feature: usize, x: f64) -> usize {
        bin_value(&self.edges[feature], x)
    }

    /// Bins new rows with the stored edges.
    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<BinnedMatrix> {
        let n_features = self.n_features();
        if let Some(r) = rows.iter().find(|r| r.len() != n_features) {
            return Err(Error::domain(format!("row has {} features, expected {n_features}", r.len())));
        }
        let n_rows = rows.len();
        let mut bins = vec![0u8; n_rows * n_features];
        for f in 0..n_features {
            let col = &mut bins[f * n_rows..(f + 1) * n_rows];
            for (slot, row) in col.iter_mut().zip(rows) {
                *slot = bin_value(&self.edges[f], row[f]) as u8;
            }
        }
        Ok(BinnedMatrix { n_rows, bins, mapper: self.clone() })
    }
}

pub fn bin_value(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x)
}

/// Quantile edges for one feature.
///
/// With no more distinct values than `max_bins`, every distinct value gets its
/// own bin. Otherwise distinct values are accumulated greedily and a cut is
/// placed whenever the running count passes the next multiple of
/// `n / max_bins`, so heavy ties collapse into a single bin.
pub fn compute_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let cut = |a: f64, b: f64| {
        let mid = a + (b - a) / 2.0;
        if mid < b && mid >= a {
            mid
        } else {
            a
        }
    };
    let mut edges = Vec::new();
    if distinct.len() <= max_bins {
        for w in distinct.windows(2) {
            edges.push(cut(w[0].0, w[1].0));
        }
        return edges;
    }
    let total: usize = distinct.iter().map(|d| d.1).sum();
    let per_bin = total as f64 / max_bins as f64;
    let mut seen = 0usize;
    for i in 0..distinct.len() - 1 {
        seen += distinct[i].1;
        if seen as f64 >= per_bin * (edges.len() + 1) as f64 {
            edges.push(cut(distinct[i].0, distinct[i + 1].0));
            if edges.len() == max_bins - 1 {
                break;
            }
        }
    }
    edges
}

/// Bins every feature of `rows` into at most `max_bins` quantile bins.
pub fn bin_features(rows: &[Vec<f64>], max_bins: usize) -> Result<BinnedMatrix> {
    if rows.is_empty() {
        return Err(Error::domain("cannot bin an empty feature matrix"));
    }
    if !(2..=255).contains(&max_bins) {
        return Err(Error::domain(format!("max_bins must be in 2..=255, got {max_bins}")));
    }
    let n_features = rows[0].len();
    let mut column = Vec::with_capacity(rows.len());
    let edges = (0..n_features)
        .map(|f| {
            column.clear();
            column.extend(rows.iter().map(|r| r[f]));
            compute_edges(&column, max_bins)
        })
        .collect();
    BinMapper { edges }.apply(rows)
}

impl BinnedMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.mapper.n_features()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.mapper.n_bins(feature)
    }

    pub fn column(&self, feature: usize) -> &[u8] {
        &self.bins[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    pub fn get(&self, row: usize, feature: usize) -> usize {
        self.bins[feature * self.n_rows + row] as usize
    }

    pub fn mapper(&self) -> &BinMapper {
        &self.mapper
    }

    /// Upper edge of `bin` for `feature`, i.e. the raw split threshold.
    pub fn threshold(&self, feature: usize, bin: usize) -> f64 {
        self.mapper.edges[feature][bin]
    }
}
