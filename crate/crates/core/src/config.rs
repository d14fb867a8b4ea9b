//! Run configuration: plain-text `key = value` files with `#` comments and
//! dotted key paths, merged as flags > file > defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::hdbscan::HdbscanParams;
use crate::spectrum::BandSpec;
use crate::timeseries::WindowSpec;

/// Analysis knobs shared by every subcommand that processes angle traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    pub window: WindowSpec,
    pub band: BandSpec,
    pub hdbscan: HdbscanParams,
    /// Baseline sample for the variation-index diagnostic.
    pub baseline_sample: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            window: WindowSpec { length: 200, stride: 50 },
            band: BandSpec::default(),
            hdbscan: HdbscanParams::default(),
            baseline_sample: 0,
        }
    }
}

/// Simulation knobs for the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Std-dev of seeded initial speed kicks, rad/s.
    pub kick_sigma: f64,
    /// Damped pre-run length toward the loaded equilibrium; 0 starts flat.
    pub settle_t: f64,
    /// Damping override during the pre-run.
    pub settle_d: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.01,
            t_end: 20.0,
            seed: 0,
            kick_sigma: 0.0,
            settle_t: 0.0,
            settle_d: 0.5,
        }
    }
}

/// Full pipeline configuration: analysis parameters, file locations and
/// simulation settings. Field defaults are the documented key defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub analysis: AnalysisParams,
    pub sim: SimParams,
    /// Relative jitter tolerance for angle CSV timestamps.
    pub dt_tolerance: f64,
    /// Window index the island report is built from; `None` means the last.
    pub report_window: Option<usize>,

    pub input_angles: Option<PathBuf>,
    pub input_topology: Option<PathBuf>,
    pub input_system: Option<PathBuf>,
    pub input_faults: Option<PathBuf>,
    pub input_planted: Option<PathBuf>,

    pub output_angles: Option<PathBuf>,
    pub output_similarity: Option<PathBuf>,
    pub output_index_series: Option<PathBuf>,
    pub output_report: Option<PathBuf>,
    pub output_spectrum: Option<PathBuf>,
    pub output_variation: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            analysis: AnalysisParams::default(),
            sim: SimParams::default(),
            dt_tolerance: 1e-6,
            report_window: None,
            input_angles: None,
            input_topology: None,
            input_system: None,
            input_faults: None,
            input_planted: None,
            output_angles: None,
            output_similarity: None,
            output_index_series: None,
            output_report: None,
            output_spectrum: None,
            output_variation: None,
        }
    }
}

/// Parse the `key = value` format into an ordered map. Later occurrences of
/// a key override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_typed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("key {key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("key {key}: expected a boolean, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Apply `key = value` pairs on top of the current configuration.
    /// Unknown keys are errors; an empty value resets optional keys.
    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            self.apply_one(key, value)?;
        }
        Ok(())
    }

    pub fn apply_one(&mut self, key: &str, value: &str) -> Result<()> {
        let optional_f64 = |key: &str, value: &str| -> Result<Option<f64>> {
            if value.is_empty() {
                Ok(None)
            } else {
                parse_typed::<f64>(key, value).map(Some)
            }
        };
        match key {
            "window.length" => self.analysis.window.length = parse_typed(key, value)?,
            "window.stride" => self.analysis.window.stride = parse_typed(key, value)?,
            "band.drop_dc" => self.analysis.band.drop_dc = parse_bool(key, value)?,
            "band.f_lo_hz" => self.analysis.band.f_lo_hz = optional_f64(key, value)?,
            "band.f_hi_hz" => self.analysis.band.f_hi_hz = optional_f64(key, value)?,
            "band.max_bins" => {
                self.analysis.band.max_bins = if value.is_empty() {
                    None
                } else {
                    Some(parse_typed(key, value)?)
                }
            }
            "hdbscan.m_pts" => self.analysis.hdbscan.m_pts = parse_typed(key, value)?,
            "hdbscan.min_cluster_size" => {
                self.analysis.hdbscan.min_cluster_size = parse_typed(key, value)?
            }
            "hdbscan.d_floor" => self.analysis.hdbscan.d_floor = parse_typed(key, value)?,
            "pipeline.baseline_sample" => {
                self.analysis.baseline_sample = parse_typed(key, value)?
            }
            "pipeline.report_window" => {
                self.report_window = if value.is_empty() {
                    None
                } else {
                    Some(parse_typed(key, value)?)
                }
            }
            "input.dt_tolerance" => self.dt_tolerance = parse_typed(key, value)?,
            "sim.dt" => self.sim.dt = parse_typed(key, value)?,
            "sim.t_end" => self.sim.t_end = parse_typed(key, value)?,
            "sim.seed" => self.sim.seed = parse_typed(key, value)?,
            "sim.kick_sigma" => self.sim.kick_sigma = parse_typed(key, value)?,
            "sim.settle_t" => self.sim.settle_t = parse_typed(key, value)?,
            "sim.settle_d" => self.sim.settle_d = parse_typed(key, value)?,
            "input.angles" => self.input_angles = path_or_none(value),
            "input.topology" => self.input_topology = path_or_none(value),
            "input.system" => self.input_system = path_or_none(value),
            "input.faults" => self.input_faults = path_or_none(value),
            "input.planted" => self.input_planted = path_or_none(value),
            "output.angles" => self.output_angles = path_or_none(value),
            "output.similarity" => self.output_similarity = path_or_none(value),
            "output.index_series" => self.output_index_series = path_or_none(value),
            "output.report" => self.output_report = path_or_none(value),
            "output.spectrum" => self.output_spectrum = path_or_none(value),
            "output.variation" => self.output_variation = path_or_none(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overlaid with a config file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::default();
        config.apply_kv(&parse_kv(&text)?)?;
        Ok(config)
    }

    /// Validate the parameter blocks (window/band/hdbscan bounds that do not
    /// depend on the data).
    pub fn validate(&self) -> Result<()> {
        WindowSpec::new(self.analysis.window.length, self.analysis.window.stride)?;
        self.analysis.band.validate()?;
        if !(self.dt_tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "input.dt_tolerance must be non-negative, got {}",
                self.dt_tolerance
            )));
        }
        Ok(())
    }

    /// Effective configuration as a flat dotted-key JSON object, embedded in
    /// reports for reproducibility.
    pub fn to_effective_json(&self) -> serde_json::Value {
        fn opt_path(v: &Option<PathBuf>) -> serde_json::Value {
            match v {
                Some(p) => serde_json::Value::String(p.display().to_string()),
                None => serde_json::Value::Null,
            }
        }
        fn opt_f64(v: Option<f64>) -> serde_json::Value {
            match v {
                Some(x) => serde_json::json!(x),
                None => serde_json::Value::Null,
            }
        }
        serde_json::json!({
            "window.length": self.analysis.window.length,
            "window.stride": self.analysis.window.stride,
            "band.drop_dc": self.analysis.band.drop_dc,
            "band.f_lo_hz": opt_f64(self.analysis.band.f_lo_hz),
            "band.f_hi_hz": opt_f64(self.analysis.band.f_hi_hz),
            "band.max_bins": match self.analysis.band.max_bins {
                Some(m) => serde_json::json!(m),
                None => serde_json::Value::Null,
            },
            "hdbscan.m_pts": self.analysis.hdbscan.m_pts,
            "hdbscan.min_cluster_size": self.analysis.hdbscan.min_cluster_size,
            "hdbscan.d_floor": self.analysis.hdbscan.d_floor,
            "pipeline.baseline_sample": self.analysis.baseline_sample,
            "pipeline.report_window": match self.report_window {
                Some(w) => serde_json::json!(w),
                None => serde_json::Value::Null,
            },
            "input.dt_tolerance": self.dt_tolerance,
            "sim.dt": self.sim.dt,
            "sim.t_end": self.sim.t_end,
            "sim.seed": self.sim.seed,
            "sim.kick_sigma": self.sim.kick_sigma,
            "sim.settle_t": self.sim.settle_t,
            "sim.settle_d": self.sim.settle_d,
            "input.angles": opt_path(&self.input_angles),
            "input.topology": opt_path(&self.input_topology),
            "input.system": opt_path(&self.input_system),
            "input.faults": opt_path(&self.input_faults),
            "input.planted": opt_path(&self.input_planted),
        })
    }
}

fn path_or_none(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let text = "
# analysis settings
window.length = 100  # samples
window.stride = 25

hdbscan.m_pts = 3
band.f_hi_hz = 3.5
input.angles = /tmp/a.csv
";
        let mut config = PipelineConfig::default();
        config.apply_kv(&parse_kv(text).unwrap()).unwrap();
        assert_eq!(config.analysis.window.length, 100);
        assert_eq!(config.analysis.window.stride, 25);
        assert_eq!(config.analysis.hdbscan.m_pts, 3);
        assert_eq!(config.analysis.band.f_hi_hz, Some(3.5));
        assert_eq!(config.input_angles.as_deref(), Some(Path::new("/tmp/a.csv")));
        // untouched keys keep their defaults
        assert_eq!(config.analysis.hdbscan.min_cluster_size, 3);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let mut config = PipelineConfig::default();
        let err = config.apply_kv(&parse_kv("windw.length = 10\n").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn bad_value_is_a_config_error() {
        let mut config = PipelineConfig::default();
        assert!(matches!(
            config.apply_kv(&parse_kv("window.length = ten\n").unwrap()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            config.apply_kv(&parse_kv("band.drop_dc = maybe\n").unwrap()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_equals_is_rejected() {
        assert!(matches!(parse_kv("just a line\n"), Err(Error::Config(_))));
    }

    #[test]
    fn empty_value_clears_optionals() {
        let mut config = PipelineConfig::default();
        config.apply_kv(&parse_kv("band.f_lo_hz =\nband.f_hi_hz =\n").unwrap()).unwrap();
        assert_eq!(config.analysis.band.f_lo_hz, None);
        assert_eq!(config.analysis.band.f_hi_hz, None);
    }

    #[test]
    fn later_keys_override_earlier_ones() {
        let mut config = PipelineConfig::default();
        config
            .apply_kv(&parse_kv("window.length = 100\nwindow.length = 300\n").unwrap())
            .unwrap();
        assert_eq!(config.analysis.window.length, 300);
    }
}
