//! Tiny indirection over rayon so every data-parallel loop in the crate has a
//! sequential twin. With the `parallel` feature (default) `map_indexed` fans
//! out over the rayon pool; without it both functions are plain iterator maps.
//! Results are collected by index, so output is identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sequential mapping regardless of feature flags. Public-facing `*_seq`
/// entry points route through this so benchmarks can compare both paths in
/// one build.
pub(crate) fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}
