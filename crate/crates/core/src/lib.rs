//! Coherency detection and controlled-islanding support for power grids.
//!
//! The pipeline turns per-bus voltage-angle time series into a partition of
//! the network:
//!
//! 1. [`timeseries`] — ingest angle CSVs, window them, differentiate to
//!    angular velocities.
//! 2. [`spectrum`] — per-bus DFT of the velocities, band-limited complex
//!    feature rows.
//! 3. [`coherency`] — complex Pearson correlation between feature rows,
//!    clamped to the non-negative similarity matrix, plus the group
//!    coherency/separation indices (GCI/GSI).
//! 4. [`hdbscan`] — density-based hierarchical clustering of buses on
//!    `1 - similarity` distances.
//! 5. [`partition`] — topology-aware island repair, cutset extraction and
//!    report assembly.
//!
//! [`swingsim`] generates test data (a classical multi-machine swing
//! simulator and a planted-group signal generator); [`pipeline`] and
//! [`config`] orchestrate end-to-end runs for the CLI.
//!
//! With the default `parallel` feature the per-bus, per-pair and per-window
//! loops fan out over rayon; built with `--no-default-features` the same
//! code runs sequentially and produces bit-identical results.

pub mod coherency;
pub mod config;
pub mod error;
pub mod hdbscan;
pub mod labels;
pub mod partition;
mod par;
pub mod pipeline;
pub mod spectrum;
pub mod swingsim;
pub mod timeseries;

pub use error::{Error, Result};
