//! End-to-end orchestration: windowed analysis (velocities, features,
//! similarity, clustering, indices) and the island report, shared by the
//! CLI subcommands.
//!
//! Windows are independent; with the `parallel` feature they run across the
//! rayon pool, and results are always emitted in window order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::coherency::{
    group_coherency_index, group_separation_index, similarity_matrix, IntegrityIndices,
    SimilarityMatrix,
};
use crate::config::{AnalysisParams, PipelineConfig};
use crate::error::{Error, Result};
use crate::hdbscan::{self, Partition};
use crate::partition::{enforce_island_connectivity, island_report, GridTopology, IslandReport};
use crate::spectrum::build_feature_matrix;
use crate::timeseries::{angular_velocity, load_angle_csv, sliding_windows, AngleTraceSet};
use crate::par;

/// Everything computed on one analysis window.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub window_index: usize,
    pub t_start: f64,
    pub similarity: SimilarityMatrix,
    /// Final labels: noise assigned, islands repaired when a topology was
    /// supplied.
    pub partition: Partition,
    pub noise_pre_assign: usize,
    pub gci: f64,
    pub gsi: Option<f64>,
}

impl WindowAnalysis {
    pub fn indices(&self) -> IntegrityIndices {
        IntegrityIndices {
            gci: self.gci,
            gsi: self.gsi,
            window_index: self.window_index,
            t_start: self.t_start,
        }
    }
}

fn analyze_one(
    window_index: usize,
    window: &AngleTraceSet,
    topo: Option<&GridTopology>,
    params: &AnalysisParams,
) -> Result<WindowAnalysis> {
    let stage = |e: Error, stage: &'static str| e.at_stage(stage, window_index);

    let velocities = angular_velocity(window).map_err(|e| stage(e, "angular_velocity"))?;
    let features =
        build_feature_matrix(&velocities, &params.band).map_err(|e| stage(e, "feature_matrix"))?;
    let similarity = similarity_matrix(&features);
    let clustering =
        hdbscan::cluster(&similarity, &params.hdbscan).map_err(|e| stage(e, "hdbscan"))?;
    let noise_pre_assign = clustering.raw.noise_count();
    let partition = match topo {
        Some(t) => enforce_island_connectivity(&clustering.assigned, t, &similarity),
        None => clustering.assigned,
    };
    let gci = group_coherency_index(&similarity, &partition)
        .map_err(|e| stage(e, "coherency_index"))?;
    let gsi = match group_separation_index(&similarity, &partition) {
        Ok(v) => Some(v),
        Err(Error::UndefinedIndex(_)) => None,
        Err(e) => return Err(stage(e, "separation_index")),
    };
    Ok(WindowAnalysis {
        window_index,
        t_start: window.meta.t0,
        similarity,
        partition,
        noise_pre_assign,
        gci,
        gsi,
    })
}

/// Windowed analysis of a trace set. With a topology, per-window partitions
/// are repaired to connected islands before the indices are computed.
pub fn analyze_windows(
    traces: &AngleTraceSet,
    topo: Option<&GridTopology>,
    params: &AnalysisParams,
) -> Result<Vec<WindowAnalysis>> {
    let windows = sliding_windows(traces, &params.window)?;
    par::map_indexed(windows.len(), |i| analyze_one(i, &windows[i], topo, params))
        .into_iter()
        .collect()
}

/// Sequential variant of [`analyze_windows`]; identical output.
pub fn analyze_windows_seq(
    traces: &AngleTraceSet,
    topo: Option<&GridTopology>,
    params: &AnalysisParams,
) -> Result<Vec<WindowAnalysis>> {
    let windows = sliding_windows(traces, &params.window)?;
    par::map_indexed_seq(windows.len(), |i| analyze_one(i, &windows[i], topo, params))
        .into_iter()
        .collect()
}

/// One row of the index-series CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub window: usize,
    pub t_start: f64,
    pub gci: f64,
    pub gsi: Option<f64>,
    pub k: usize,
    pub noise_pre_assign: usize,
}

pub fn index_series(windows: &[WindowAnalysis]) -> Vec<IndexRow> {
    windows
        .iter()
        .map(|w| IndexRow {
            window: w.window_index,
            t_start: w.t_start,
            gci: w.gci,
            gsi: w.gsi,
            k: w.partition.k,
            noise_pre_assign: w.noise_pre_assign,
        })
        .collect()
}

/// Index-series CSV: `window,t_start,gci,gsi,k,noise_pre_assign`. An
/// undefined GSI is written as `nan`.
pub fn index_csv_string(rows: &[IndexRow]) -> String {
    let mut out = String::from("window,t_start,gci,gsi,k,noise_pre_assign\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.window,
            crate::timeseries::fmt_sig17(r.t_start),
            crate::timeseries::fmt_sig17(r.gci),
            match r.gsi {
                Some(v) => crate::timeseries::fmt_sig17(v),
                None => "nan".to_string(),
            },
            r.k,
            r.noise_pre_assign
        );
    }
    out
}

pub fn write_index_csv(path: impl AsRef<Path>, rows: &[IndexRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, index_csv_string(rows)).map_err(|e| Error::io(path, e))
}

/// Full pipeline product: per-window analyses plus the island report built
/// on the report window.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub windows: Vec<WindowAnalysis>,
    pub report: IslandReport,
    pub report_window: usize,
}

impl PipelineOutput {
    pub fn report_analysis(&self) -> &WindowAnalysis {
        &self.windows[self.report_window]
    }
}

/// Run the full pipeline on in-memory inputs.
pub fn run_pipeline_on(
    traces: &AngleTraceSet,
    topo: &GridTopology,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    config.validate()?;
    let topo = topo.aligned_to(&traces.bus_ids)?;
    let windows = analyze_windows(traces, Some(&topo), &config.analysis)?;
    if windows.is_empty() {
        return Err(Error::WindowTooLong {
            window: config.analysis.window.length,
            samples: traces.sample_count(),
        });
    }
    let report_window = match config.report_window {
        Some(w) if w < windows.len() => w,
        Some(w) => {
            return Err(Error::Config(format!(
                "pipeline.report_window {w} out of range ({} windows)",
                windows.len()
            )))
        }
        None => windows.len() - 1,
    };
    let wa = &windows[report_window];
    let report = island_report(&wa.partition, &topo, &wa.similarity, &wa.indices())?;
    Ok(PipelineOutput {
        windows,
        report,
        report_window,
    })
}

/// Run the full pipeline from the files named in the configuration.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    let angles_path = config
        .input_angles
        .as_ref()
        .ok_or_else(|| Error::Config("input.angles is required".into()))?;
    let topo_path = config
        .input_topology
        .as_ref()
        .ok_or_else(|| Error::Config("input.topology is required".into()))?;
    let traces = load_angle_csv(angles_path, config.dt_tolerance)?;
    let topo = GridTopology::load_csv(topo_path)?;
    run_pipeline_on(&traces, &topo, config)
}

/// Report JSON document: the island report plus the report-window position
/// and the effective configuration, for reproducibility.
pub fn report_document(output: &PipelineOutput, config: &PipelineConfig) -> serde_json::Value {
    let mut doc = serde_json::to_value(&output.report).expect("serializable report");
    let map = doc.as_object_mut().expect("report is an object");
    map.insert("report_window".into(), serde_json::json!(output.report_window));
    map.insert(
        "report_t_start".into(),
        serde_json::json!(output.report_analysis().t_start),
    );
    map.insert("config".into(), config.to_effective_json());
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::adjusted_rand_index;
    use crate::swingsim::{planted_group_signals, GroupMode, GroupSpec};

    fn three_group_spec(sigma: f64) -> GroupSpec {
        let buses = |range: std::ops::Range<usize>| -> Vec<String> {
            range.map(|i| format!("b{}", i + 1)).collect()
        };
        GroupSpec {
            groups: vec![
                GroupMode { buses: buses(0..4), f_hz: 0.6, amp_rad: 0.2, phase_rad: 0.0 },
                GroupMode { buses: buses(4..8), f_hz: 1.1, amp_rad: 0.2, phase_rad: 0.7 },
                GroupMode { buses: buses(8..12), f_hz: 1.9, amp_rad: 0.2, phase_rad: 1.9 },
            ],
            jitter_sigma: sigma,
            trend_rad_per_s: 0.02,
        }
    }

    /// Chain topology inside groups, single ties between them.
    fn three_group_topology() -> GridTopology {
        let ids: Vec<String> = (1..=12).map(|i| format!("b{i}")).collect();
        let mut raw = Vec::new();
        for g in 0..3 {
            let base = g * 4;
            for k in 0..3 {
                raw.push((ids[base + k].clone(), ids[base + k + 1].clone(), None));
            }
        }
        raw.push((ids[3].clone(), ids[4].clone(), Some("T1".into())));
        raw.push((ids[7].clone(), ids[8].clone(), Some("T2".into())));
        GridTopology::new(ids, &raw).unwrap()
    }

    fn config() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.analysis.window.length = 400;
        c.analysis.window.stride = 200;
        c.analysis.hdbscan.min_cluster_size = 3;
        c.analysis.hdbscan.m_pts = 4;
        c
    }

    #[test]
    fn planted_three_groups_recovered_end_to_end() {
        let spec = three_group_spec(0.01);
        let traces = planted_group_signals(&spec, 0.01, 20.0, 5).unwrap();
        let topo = three_group_topology();
        let out = run_pipeline_on(&traces, &topo, &config()).unwrap();
        assert_eq!(out.report.islands.len(), 3);
        let truth = spec.truth_labels();
        assert_eq!(
            adjusted_rand_index(&out.report_analysis().partition.labels, &truth),
            1.0
        );
        assert_eq!(out.report.cutset.len(), 2);
    }

    #[test]
    fn single_group_yields_one_island_without_gsi() {
        let spec = GroupSpec {
            groups: vec![GroupMode {
                buses: (1..=5).map(|i| format!("b{i}")).collect(),
                f_hz: 0.8,
                amp_rad: 0.3,
                phase_rad: 0.0,
            }],
            jitter_sigma: 0.005,
            trend_rad_per_s: 0.0,
        };
        let traces = planted_group_signals(&spec, 0.01, 12.0, 2).unwrap();
        let ids: Vec<String> = (1..=5).map(|i| format!("b{i}")).collect();
        let raw: Vec<(String, String, Option<String>)> = (0..4)
            .map(|i| (ids[i].clone(), ids[i + 1].clone(), None))
            .collect();
        let topo = GridTopology::new(ids, &raw).unwrap();
        let out = run_pipeline_on(&traces, &topo, &config()).unwrap();
        assert_eq!(out.report.islands.len(), 1);
        assert_eq!(out.report.gsi, None);
        assert!(out.report.cutset.is_empty());
        let rows = index_series(&out.windows);
        let csv = index_csv_string(&rows);
        assert!(csv.lines().skip(1).all(|l| l.split(',').nth(3) == Some("nan")));
    }

    #[test]
    fn parallel_and_sequential_windows_agree() {
        let spec = three_group_spec(0.02);
        let traces = planted_group_signals(&spec, 0.01, 15.0, 9).unwrap();
        let params = config().analysis;
        let a = analyze_windows(&traces, None, &params).unwrap();
        let b = analyze_windows_seq(&traces, None, &params).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.partition, y.partition);
            assert_eq!(x.similarity.values, y.similarity.values);
            assert_eq!(x.gci.to_bits(), y.gci.to_bits());
            assert_eq!(x.gsi.map(f64::to_bits), y.gsi.map(f64::to_bits));
        }
    }

    #[test]
    fn stage_errors_carry_window_and_stage() {
        // Band selecting < 2 bins fails in feature extraction on window 0.
        let spec = three_group_spec(0.0);
        let traces = planted_group_signals(&spec, 0.01, 10.0, 1).unwrap();
        let mut params = config().analysis;
        params.band.f_lo_hz = Some(2.0);
        params.band.f_hi_hz = Some(2.1);
        let err = analyze_windows(&traces, None, &params).unwrap_err();
        match err {
            Error::Stage { stage, window, source } => {
                assert_eq!(stage, "feature_matrix");
                assert_eq!(window, 0);
                assert!(matches!(*source, Error::BandTooNarrow { .. }));
            }
            other => panic!("expected stage error, got {other}"),
        }
    }

    #[test]
    fn report_document_embeds_effective_config() {
        let spec = three_group_spec(0.01);
        let traces = planted_group_signals(&spec, 0.01, 15.0, 5).unwrap();
        let topo = three_group_topology();
        let cfg = config();
        let out = run_pipeline_on(&traces, &topo, &cfg).unwrap();
        let doc = report_document(&out, &cfg);
        assert_eq!(doc["config"]["window.length"], serde_json::json!(400));
        assert!(doc["islands"].is_array());
        assert_eq!(doc["report_window"], serde_json::json!(out.report_window));
    }
}
