//! `gridcoh` — detect bus coherency from voltage-angle traces and split the
//! grid into connected islands.
//!
//! Subcommands: `simulate` (generate angle CSVs from a swing system or a
//! planted-group spec), `analyze` (angle CSV -> similarity + index-series
//! CSVs), `partition` (angle CSV + topology CSV -> island-report JSON), and
//! `pipeline` (everything in one run). Options merge as flags > config file
//! > defaults.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridcoh::config::PipelineConfig;
use gridcoh::error::{Error, Result};
use gridcoh::partition::GridTopology;
use gridcoh::pipeline::{
    self, analyze_windows, index_series, report_document, run_pipeline_on,
};
use gridcoh::swingsim::{
    integrate_swing, load_faults_json, planted_group_signals, settled_state, GroupSpec,
    InitialState, SwingSystem,
};
use gridcoh::timeseries::{load_angle_csv, variation_index, write_angle_csv};
use gridcoh::{coherency, spectrum, timeseries};

#[derive(Parser)]
#[command(name = "gridcoh", version, about = "Bus coherency detection and grid islanding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an angle CSV from a swing-system or planted-group model.
    Simulate(SimulateArgs),
    /// Windowed coherency analysis: similarity and index-series CSVs.
    Analyze(AnalyzeArgs),
    /// Island partition of the report window: island-report JSON.
    Partition(PartitionArgs),
    /// Full pipeline: analyze and partition in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Configuration file (key = value lines, # comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Analysis window length, samples.
    #[arg(long)]
    window_length: Option<usize>,
    /// Analysis window stride, samples.
    #[arg(long)]
    window_stride: Option<usize>,
    /// Band lower edge, Hz.
    #[arg(long)]
    f_lo_hz: Option<f64>,
    /// Band upper edge, Hz.
    #[arg(long)]
    f_hi_hz: Option<f64>,
    /// Cap on retained frequency bins.
    #[arg(long)]
    max_bins: Option<usize>,
    /// Core-distance neighborhood size (self-inclusive).
    #[arg(long)]
    m_pts: Option<usize>,
    /// Minimum cluster size for the condensed tree.
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Window index the report and similarity dump are built from.
    #[arg(long)]
    report_window: Option<usize>,
    /// Relative timestamp jitter tolerance for angle CSVs.
    #[arg(long)]
    dt_tolerance: Option<f64>,
}

impl CommonArgs {
    fn into_config(self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.window_length {
            config.analysis.window.length = v;
        }
        if let Some(v) = self.window_stride {
            config.analysis.window.stride = v;
        }
        if let Some(v) = self.f_lo_hz {
            config.analysis.band.f_lo_hz = Some(v);
        }
        if let Some(v) = self.f_hi_hz {
            config.analysis.band.f_hi_hz = Some(v);
        }
        if let Some(v) = self.max_bins {
            config.analysis.band.max_bins = Some(v);
        }
        if let Some(v) = self.m_pts {
            config.analysis.hdbscan.m_pts = v;
        }
        if let Some(v) = self.min_cluster_size {
            config.analysis.hdbscan.min_cluster_size = v;
        }
        if let Some(v) = self.report_window {
            config.report_window = Some(v);
        }
        if let Some(v) = self.dt_tolerance {
            config.dt_tolerance = v;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swing-system JSON file.
    #[arg(long, conflicts_with = "planted")]
    system: Option<PathBuf>,
    /// Planted-group spec JSON file.
    #[arg(long)]
    planted: Option<PathBuf>,
    /// Fault-schedule JSON (swing systems only).
    #[arg(long)]
    faults: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Std-dev of seeded initial speed kicks, rad/s.
    #[arg(long)]
    kick_sigma: Option<f64>,
    /// Damped pre-run length toward equilibrium, s (0 = start flat).
    #[arg(long)]
    settle_t: Option<f64>,
    /// Damping override during the pre-run.
    #[arg(long)]
    settle_d: Option<f64>,
    /// Output angle CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input angle CSV.
    #[arg(long)]
    angles: Option<PathBuf>,
    /// Optional topology CSV; when given, per-window partitions are
    /// repaired to connected islands exactly as in `pipeline`.
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Similarity-matrix CSV for the report window.
    #[arg(long)]
    similarity_out: Option<PathBuf>,
    /// Index-series CSV (one row per window).
    #[arg(long)]
    index_out: Option<PathBuf>,
    /// Debug dump of per-bus bin magnitudes for the report window.
    #[arg(long)]
    spectrum_out: Option<PathBuf>,
    /// Diagnostic variation-matrix CSV for the report window.
    #[arg(long)]
    variation_out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input angle CSV.
    #[arg(long)]
    angles: Option<PathBuf>,
    /// Topology CSV (`bus_a,bus_b[,line_id]`).
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Island-report JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input angle CSV.
    #[arg(long)]
    angles: Option<PathBuf>,
    /// Topology CSV (`bus_a,bus_b[,line_id]`).
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    similarity_out: Option<PathBuf>,
    #[arg(long)]
    index_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
        Command::Partition(args) => partition_cmd(args),
        Command::Pipeline(args) => pipeline_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn require(path: Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.or(fallback)
        .ok_or_else(|| Error::Config(format!("{what} is required (flag or config key)")))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut config = args.common.clone().into_config()?;
    if let Some(v) = args.dt {
        config.sim.dt = v;
    }
    if let Some(v) = args.t_end {
        config.sim.t_end = v;
    }
    if let Some(v) = args.seed {
        config.sim.seed = v;
    }
    if let Some(v) = args.kick_sigma {
        config.sim.kick_sigma = v;
    }
    if let Some(v) = args.settle_t {
        config.sim.settle_t = v;
    }
    if let Some(v) = args.settle_d {
        config.sim.settle_d = v;
    }
    if let Some(v) = args.system {
        config.input_system = Some(v);
    }
    if let Some(v) = args.planted {
        config.input_planted = Some(v);
    }
    if let Some(v) = args.faults {
        config.input_faults = Some(v);
    }
    let out = require(args.out, config.output_angles.clone(), "output angle CSV (--out)")?;

    let traces = if let Some(planted) = &config.input_planted {
        let spec = GroupSpec::load_json(planted)?;
        planted_group_signals(&spec, config.sim.dt, config.sim.t_end, config.sim.seed)?
    } else if let Some(system) = &config.input_system {
        let sys = SwingSystem::load_json(system)?;
        let faults = match &config.input_faults {
            Some(path) => load_faults_json(path)?,
            None => Vec::new(),
        };
        let mut init = if config.sim.settle_t > 0.0 {
            settled_state(&sys, config.sim.settle_d, config.sim.settle_t, config.sim.dt)?
        } else {
            InitialState::at_rest(sys.machine_count())
        };
        if config.sim.kick_sigma > 0.0 {
            init.add_speed_kicks(config.sim.kick_sigma, config.sim.seed);
        }
        integrate_swing(&sys, &faults, &init, config.sim.dt, config.sim.t_end)?
    } else {
        return Err(Error::Config(
            "simulate needs --system or --planted (or the matching config keys)".into(),
        ));
    };

    write_angle_csv(&out, &traces)?;
    eprintln!(
        "wrote {} ({} buses x {} samples)",
        out.display(),
        traces.bus_count(),
        traces.sample_count()
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mut config = args.common.clone().into_config()?;
    if let Some(v) = args.angles {
        config.input_angles = Some(v);
    }
    if let Some(v) = args.topology {
        config.input_topology = Some(v);
    }
    if let Some(v) = args.similarity_out {
        config.output_similarity = Some(v);
    }
    if let Some(v) = args.index_out {
        config.output_index_series = Some(v);
    }
    if let Some(v) = args.spectrum_out {
        config.output_spectrum = Some(v);
    }
    if let Some(v) = args.variation_out {
        config.output_variation = Some(v);
    }

    let angles_path = require(None, config.input_angles.clone(), "input angle CSV (--angles)")?;
    let traces = load_angle_csv(&angles_path, config.dt_tolerance)?;
    let topo = match &config.input_topology {
        Some(path) => Some(GridTopology::load_csv(path)?.aligned_to(&traces.bus_ids)?),
        None => None,
    };
    let windows = analyze_windows(&traces, topo.as_ref(), &config.analysis)?;
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

    if let Some(path) = &config.output_index_series {
        pipeline::write_index_csv(path, &index_series(&windows))?;
    }
    if let Some(path) = &config.output_similarity {
        coherency::write_similarity_csv(path, &windows[report_window].similarity)?;
    }
    if config.output_spectrum.is_some() || config.output_variation.is_some() {
        let window_traces =
            timeseries::sliding_windows(&traces, &config.analysis.window)?.remove(report_window);
        if let Some(path) = &config.output_spectrum {
            let velocities = timeseries::angular_velocity(&window_traces)?;
            let features = spectrum::build_feature_matrix(&velocities, &config.analysis.band)?;
            spectrum::write_spectrum_csv(path, &features)?;
        }
        if let Some(path) = &config.output_variation {
            let variation = variation_index(&window_traces, config.analysis.baseline_sample)?;
            let mut text = String::new();
            for row in &variation.values {
                let cells: Vec<String> =
                    row.iter().map(|v| timeseries::fmt_sig17(*v)).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(path, text).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
        }
    }
    let last = &windows[report_window];
    eprintln!(
        "analyzed {} windows; report window {} at t={:.3}s: k={}, gci={:.4}, gsi={}",
        windows.len(),
        report_window,
        last.t_start,
        last.partition.k,
        last.gci,
        last.gsi.map_or("nan".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

fn partition_cmd(args: PartitionArgs) -> Result<()> {
    let mut config = args.common.clone().into_config()?;
    if let Some(v) = args.angles {
        config.input_angles = Some(v);
    }
    if let Some(v) = args.topology {
        config.input_topology = Some(v);
    }
    if let Some(v) = args.report_out {
        config.output_report = Some(v);
    }
    let report_out = require(None, config.output_report.clone(), "report output (--report-out)")?;

    let output = pipeline::run_pipeline(&config)?;
    let doc = report_document(&output, &config);
    write_json(&report_out, &doc)?;
    eprintln!(
        "wrote {} ({} islands, {} cut lines)",
        report_out.display(),
        output.report.islands.len(),
        output.report.cutset.len()
    );
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs) -> Result<()> {
    let mut config = args.common.clone().into_config()?;
    if let Some(v) = args.angles {
        config.input_angles = Some(v);
    }
    if let Some(v) = args.topology {
        config.input_topology = Some(v);
    }
    if let Some(v) = args.similarity_out {
        config.output_similarity = Some(v);
    }
    if let Some(v) = args.index_out {
        config.output_index_series = Some(v);
    }
    if let Some(v) = args.report_out {
        config.output_report = Some(v);
    }

    let angles_path = require(None, config.input_angles.clone(), "input angle CSV (--angles)")?;
    let topo_path = require(None, config.input_topology.clone(), "topology CSV (--topology)")?;
    let traces = load_angle_csv(&angles_path, config.dt_tolerance)?;
    let topo = GridTopology::load_csv(&topo_path)?;
    let output = run_pipeline_on(&traces, &topo, &config)?;

    if let Some(path) = &config.output_index_series {
        pipeline::write_index_csv(path, &index_series(&output.windows))?;
    }
    if let Some(path) = &config.output_similarity {
        coherency::write_similarity_csv(path, &output.report_analysis().similarity)?;
    }
    if let Some(path) = &config.output_report {
        write_json(path, &report_document(&output, &config))?;
    }
    eprintln!(
        "pipeline done: {} windows, report window {} -> {} islands, gci={:.4}, gsi={}",
        output.windows.len(),
        output.report_window,
        output.report.islands.len(),
        output.report.gci,
        output.report.gsi.map_or("nan".into(), |v| format!("{v:.4}")),
    );
    Ok(())
}

fn write_json(path: &PathBuf, doc: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("serializable document");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}
