//! Ingestion, validation, windowing and differentiation of per-bus
//! voltage-angle time series.
//!
//! Angles are taken as already-unwrapped radians on a uniform time grid; no
//! modular wrap handling is applied. The angle CSV format is
//! `t,<bus_id>,...` with time in seconds and one column per bus.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform sampling grid: `dt` seconds per sample, `count` samples starting
/// at `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingMeta {
    pub dt: f64,
    pub t0: f64,
    pub count: usize,
}

impl SamplingMeta {
    pub fn new(dt: f64, t0: f64, count: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if count < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: count });
        }
        Ok(SamplingMeta { dt, t0, count })
    }

    /// Examination time spanned by the grid, `(count - 1) * dt`.
    pub fn span(&self) -> f64 {
        (self.count - 1) as f64 * self.dt
    }
}

/// Per-bus voltage-angle traces on a shared sampling grid. Row order matches
/// `bus_ids`; every row has `meta.count` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTraceSet {
    pub bus_ids: Vec<String>,
    pub angles: Vec<Vec<f64>>,
    pub meta: SamplingMeta,
}

impl AngleTraceSet {
    pub fn new(bus_ids: Vec<String>, angles: Vec<Vec<f64>>, meta: SamplingMeta) -> Result<Self> {
        if bus_ids.len() != angles.len() {
            return Err(Error::Format(format!(
                "{} bus ids but {} angle rows",
                bus_ids.len(),
                angles.len()
            )));
        }
        for (i, id) in bus_ids.iter().enumerate() {
            if bus_ids[..i].contains(id) {
                return Err(Error::Format(format!("duplicate bus id {id:?}")));
            }
        }
        for (id, row) in bus_ids.iter().zip(&angles) {
            if row.len() != meta.count {
                return Err(Error::Format(format!(
                    "bus {id:?} has {} samples, expected {}",
                    row.len(),
                    meta.count
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("bus {id:?} contains a non-finite angle")));
            }
        }
        Ok(AngleTraceSet { bus_ids, angles, meta })
    }

    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn sample_count(&self) -> usize {
        self.meta.count
    }
}

/// Per-bus angular velocities, rad/s, obtained by first differences; one
/// sample shorter than the source angle traces.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTraceSet {
    pub bus_ids: Vec<String>,
    pub velocities: Vec<Vec<f64>>,
    pub meta: SamplingMeta,
}

/// Pairwise integrated angle-deviation differences. Antisymmetric with a
/// zero diagonal, units rad·s.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationMatrix {
    pub values: Vec<Vec<f64>>,
}

/// Sliding-window shape: `length` samples per window, windows spaced
/// `stride` samples apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub length: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidParameter(format!(
                "window length must be at least 2, got {length}"
            )));
        }
        if stride == 0 {
            return Err(Error::InvalidParameter("window stride must be at least 1".into()));
        }
        Ok(WindowSpec { length, stride })
    }
}

/// Parse an angle CSV from a reader. `tolerance` bounds the allowed relative
/// jitter of successive time deltas around their median.
fn parse_angle_csv<R: BufRead>(reader: R, tolerance: f64) -> Result<AngleTraceSet> {
    let mut lines = reader.lines().enumerate();

    let header = loop {
        match lines.next() {
            Some((_, Ok(line))) => {
                let trimmed = line.trim_end_matches(['\r', '\n']);
                if !trimmed.is_empty() {
                    break trimmed.to_string();
                }
            }
            Some((_, Err(e))) => return Err(Error::Format(format!("read failed: {e}"))),
            None => return Err(Error::Format("empty file".into())),
        }
    };

    let mut cols = header.split(',').map(str::trim);
    match cols.next() {
        Some(t) if t.eq_ignore_ascii_case("t") => {}
        other => {
            return Err(Error::Format(format!(
                "first header column must be 't', got {other:?}"
            )))
        }
    }
    let bus_ids: Vec<String> = cols.map(|s| s.to_string()).collect();
    if bus_ids.is_empty() {
        return Err(Error::Format("header names no bus columns".into()));
    }
    for (i, id) in bus_ids.iter().enumerate() {
        if id.is_empty() {
            return Err(Error::Format(format!("empty bus name in header column {}", i + 2)));
        }
        if bus_ids[..i].contains(id) {
            return Err(Error::Format(format!("duplicate bus name {id:?} in header")));
        }
    }

    let n_bus = bus_ids.len();
    let mut times: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_bus];

    for (line_no, line) in lines {
        let line = line.map_err(|e| Error::Format(format!("read failed: {e}")))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != n_bus + 1 {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, got {}",
                line_no + 1,
                n_bus + 1,
                fields.len()
            )));
        }
        let mut parsed = fields.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: bad number {f:?}", line_no + 1)))
        });
        times.push(parsed.next().unwrap()?);
        for row in rows.iter_mut() {
            row.push(parsed.next().unwrap()?);
        }
    }

    let n = times.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }

    let mut deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = deltas.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let dt = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    if !(dt > 0.0) {
        return Err(Error::Format(format!("non-increasing timestamps (median delta {dt})")));
    }
    for (k, d) in deltas.drain(..).enumerate() {
        if ((d - dt) / dt).abs() > tolerance {
            return Err(Error::NonUniformSampling {
                row: k + 1,
                delta: d,
                dt,
                tolerance,
            });
        }
    }

    let meta = SamplingMeta::new(dt, times[0], n)?;
    AngleTraceSet::new(bus_ids, rows, meta)
}

/// Load an angle CSV file. `dt` becomes the median of successive time deltas
/// and `t0` the first timestamp; deltas off the median by more than
/// `tolerance` (relative) are rejected.
pub fn load_angle_csv(path: impl AsRef<Path>, tolerance: f64) -> Result<AngleTraceSet> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_angle_csv(BufReader::new(file), tolerance)
}

/// 17-significant-digit rendering used by every CSV writer.
pub fn fmt_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render an angle trace set in the angle CSV format: LF line endings and 17
/// significant digits.
pub fn angle_csv_string(traces: &AngleTraceSet) -> String {
    let mut out = String::new();
    out.push('t');
    for id in &traces.bus_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for k in 0..traces.meta.count {
        let t = traces.meta.t0 + k as f64 * traces.meta.dt;
        let _ = write!(out, "{}", fmt_sig17(t));
        for row in &traces.angles {
            let _ = write!(out, ",{}", fmt_sig17(row[k]));
        }
        out.push('\n');
    }
    out
}

pub fn write_angle_csv(path: impl AsRef<Path>, traces: &AngleTraceSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, angle_csv_string(traces)).map_err(|e| Error::io(path, e))
}

/// First-difference angular velocities: `w[i][k] = (a[i][k+1] - a[i][k]) / dt`.
pub fn angular_velocity(traces: &AngleTraceSet) -> Result<VelocityTraceSet> {
    let n = traces.sample_count();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let dt = traces.meta.dt;
    let velocities = traces
        .angles
        .iter()
        .map(|row| row.windows(2).map(|w| (w[1] - w[0]) / dt).collect())
        .collect();
    Ok(VelocityTraceSet {
        bus_ids: traces.bus_ids.clone(),
        velocities,
        meta: SamplingMeta {
            dt,
            t0: traces.meta.t0,
            count: n - 1,
        },
    })
}

/// Integrated pairwise deviation difference over the trace window, rectangle
/// rule with step `dt` over the `N-1` sample intervals. Deviation is taken
/// from the angle at `baseline_sample`. Output is exactly antisymmetric with
/// a zero diagonal.
pub fn variation_index(traces: &AngleTraceSet, baseline_sample: usize) -> Result<VariationMatrix> {
    let n = traces.sample_count();
    if baseline_sample >= n {
        return Err(Error::InvalidParameter(format!(
            "baseline sample {baseline_sample} out of range (trace has {n} samples)"
        )));
    }
    let n_bus = traces.bus_count();
    let dt = traces.meta.dt;

    // One integral per bus; the pairwise index is the difference of the two,
    // which keeps s[i][j] = -s[j][i] exact.
    let integrals: Vec<f64> = traces
        .angles
        .iter()
        .map(|row| {
            let base = row[baseline_sample];
            row[..n - 1].iter().map(|&v| (v - base) * dt).sum()
        })
        .collect();

    let mut values = vec![vec![0.0; n_bus]; n_bus];
    for i in 0..n_bus {
        for j in (i + 1)..n_bus {
            let s = integrals[i] - integrals[j];
            values[i][j] = s;
            values[j][i] = -s;
        }
    }
    Ok(VariationMatrix { values })
}

/// Cut a trace set into sliding windows: offsets 0, stride, 2·stride, …
/// while `offset + length <= N`. Each window carries an adjusted `t0`.
pub fn sliding_windows(traces: &AngleTraceSet, spec: &WindowSpec) -> Result<Vec<AngleTraceSet>> {
    let n = traces.sample_count();
    if spec.length > n {
        return Err(Error::WindowTooLong {
            window: spec.length,
            samples: n,
        });
    }
    let mut windows = Vec::new();
    let mut offset = 0;
    while offset + spec.length <= n {
        let angles = traces
            .angles
            .iter()
            .map(|row| row[offset..offset + spec.length].to_vec())
            .collect();
        windows.push(AngleTraceSet {
            bus_ids: traces.bus_ids.clone(),
            angles,
            meta: SamplingMeta {
                dt: traces.meta.dt,
                t0: traces.meta.t0 + offset as f64 * traces.meta.dt,
                count: spec.length,
            },
        });
        offset += spec.stride;
    }
    Ok(windows)
}
