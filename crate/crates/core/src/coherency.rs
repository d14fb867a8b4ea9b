//! Complex Pearson coherency between bus feature rows, the clamped
//! similarity matrix, and the grid integrity indices (GCI/GSI).
//!
//! Two buses are maximally coherent when their feature rows correlate at
//! `1∠0`; the matrix entry is `max(0, Re r)`, so anti-swinging pairs clamp
//! to zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hdbscan::Partition;
use crate::par;
use crate::spectrum::FeatureMatrix;

/// Symmetric bus-similarity matrix with unit diagonal, entries in `[0, 1]`.
/// Buses whose feature rows have zero centered energy are listed in
/// `degenerate` and score 0 against every other bus.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub bus_ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub degenerate: Vec<usize>,
}

impl SimilarityMatrix {
    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    /// Bus ids of the degenerate rows.
    pub fn degenerate_bus_ids(&self) -> Vec<String> {
        self.degenerate.iter().map(|&i| self.bus_ids[i].clone()).collect()
    }
}

/// GCI/GSI sampled on one analysis window. `gsi` is `None` when the window
/// produced a single group (no cross-group pair exists).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrityIndices {
    pub gci: f64,
    pub gsi: Option<f64>,
    pub window_index: usize,
    pub t_start: f64,
}

/// Complex Pearson correlation with the second argument conjugated:
/// `r = sum (x - x̄) conj(y - ȳ) / sqrt(sum |x - x̄|² sum |y - ȳ|²)`.
///
/// Swapping the arguments conjugates the result, so `Re r` is symmetric.
pub fn complex_pearson(x: &[Complex64], y: &[Complex64]) -> Result<Complex64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "correlation needs two equal-length vectors of at least 2 entries, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<Complex64>() / n;
    let my = y.iter().sum::<Complex64>() / n;

    let mut num = Complex64::new(0.0, 0.0);
    let mut ex = 0.0;
    let mut ey = 0.0;
    for (a, b) in x.iter().zip(y) {
        let da = a - mx;
        let db = b - my;
        num += da * db.conj();
        ex += da.norm_sqr();
        ey += db.norm_sqr();
    }
    if ex == 0.0 || ey == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let r = num / (ex * ey).sqrt();
    debug_assert!(r.norm() <= 1.0 + 1e-12, "|r| = {}", r.norm());
    Ok(r)
}

fn centered_energy(row: &[Complex64]) -> f64 {
    let mean = row.iter().sum::<Complex64>() / row.len() as f64;
    row.iter().map(|c| (c - mean).norm_sqr()).sum()
}

/// Pairwise clamped coherency matrix: `values[i][j] = max(0, Re r_ij)` for
/// `i != j`, unit diagonal. Degenerate feature rows are reported, not fatal.
pub fn similarity_matrix(features: &FeatureMatrix) -> SimilarityMatrix {
    similarity_matrix_inner(features, false)
}

/// Sequential variant of [`similarity_matrix`]; identical output.
pub fn similarity_matrix_seq(features: &FeatureMatrix) -> SimilarityMatrix {
    similarity_matrix_inner(features, true)
}

fn similarity_matrix_inner(features: &FeatureMatrix, force_seq: bool) -> SimilarityMatrix {
    let n = features.bus_count();
    let degenerate: Vec<usize> = (0..n)
        .filter(|&i| centered_energy(&features.rows[i]) == 0.0)
        .collect();
    let is_degenerate: Vec<bool> = {
        let mut flags = vec![false; n];
        for &i in &degenerate {
            flags[i] = true;
        }
        flags
    };

    // Upper-triangle tails, one per row; row i holds entries for j > i.
    let row_tail = |i: usize| -> Vec<f64> {
        ((i + 1)..n)
            .map(|j| {
                if is_degenerate[i] || is_degenerate[j] {
                    0.0
                } else {
                    let r = complex_pearson(&features.rows[i], &features.rows[j])
                        .expect("non-degenerate rows");
                    r.re.max(0.0)
                }
            })
            .collect()
    };
    let tails: Vec<Vec<f64>> = if force_seq {
        par::map_indexed_seq(n, row_tail)
    } else {
        par::map_indexed(n, row_tail)
    };

    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for (off, &v) in tails[i].iter().enumerate() {
            let j = i + 1 + off;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    SimilarityMatrix {
        bus_ids: features.bus_ids.clone(),
        values,
        degenerate,
    }
}

/// Mean similarity over unordered within-group pairs, self-pairs excluded.
pub fn group_coherency_index(s: &SimilarityMatrix, partition: &Partition) -> Result<f64> {
    pair_mean(s, partition, true).ok_or(Error::UndefinedIndex("group coherency index"))
}

/// Mean similarity over unordered cross-group pairs. Smaller means stronger
/// separation.
pub fn group_separation_index(s: &SimilarityMatrix, partition: &Partition) -> Result<f64> {
    pair_mean(s, partition, false).ok_or(Error::UndefinedIndex("group separation index"))
}

fn pair_mean(s: &SimilarityMatrix, partition: &Partition, within: bool) -> Option<f64> {
    let n = s.bus_count();
    assert_eq!(partition.labels.len(), n, "partition does not cover the bus set");
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if (partition.labels[i] == partition.labels[j]) == within {
                sum += s.values[i][j];
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Similarity CSV: first row and column carry bus ids, cells hold 17
/// significant digits.
pub fn similarity_csv_string(s: &SimilarityMatrix) -> String {
    let mut out = String::from("bus");
    for id in &s.bus_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (id, row) in s.bus_ids.iter().zip(&s.values) {
        out.push_str(id);
        for v in row {
            let _ = write!(out, ",{}", crate::timeseries::fmt_sig17(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_similarity_csv(path: impl AsRef<Path>, s: &SimilarityMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, similarity_csv_string(s)).map_err(|e| Error::io(path, e))
}
