//! Label-vector comparison utilities used by tests and validation runs.

use std::collections::HashMap;

fn comb2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same points. Noise
/// labels (-1) count as a group of their own. Returns 1.0 for identical
/// partitions (up to relabeling), ~0 for independent ones.
pub fn adjusted_rand_index(a: &[i32], b: &[i32]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    let n = a.len();
    if n == 0 {
        return 1.0;
    }

    let mut cells: HashMap<(i32, i32), usize> = HashMap::new();
    let mut rows: HashMap<i32, usize> = HashMap::new();
    let mut cols: HashMap<i32, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }

    let index: f64 = cells.values().map(|&c| comb2(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| comb2(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(n);
    let expected = row_sum * col_sum / total.max(1.0);
    let max_index = 0.5 * (row_sum + col_sum);

    if (max_index - expected).abs() < 1e-300 {
        // Both partitions trivial (all-singletons or all-one): identical by
        // construction of the contingency table iff index == max.
        return if (index - max_index).abs() < 1e-300 { 1.0 } else { 0.0 };
    }
    (index - expected) / (max_index - expected)
}
