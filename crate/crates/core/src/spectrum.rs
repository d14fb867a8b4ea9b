//! Per-bus frequency features: DFT of angular-velocity traces and assembly
//! of the band-limited complex feature matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::timeseries::VelocityTraceSet;

/// Full complex spectrum of one real signal. `bins[f]` is the DFT at bin
/// `f`, `bin_width_hz = 1 / (N dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
    pub bin_width_hz: f64,
}

/// Frequency-bin selection for feature rows. Only the lower half-spectrum
/// (`f <= N/2`) is ever eligible; on top of that DC can be dropped, the band
/// restricted to `[f_lo_hz, f_hi_hz]`, and the count capped at `max_bins`
/// lowest retained frequencies.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BandSpec {
    pub drop_dc: bool,
    pub f_lo_hz: Option<f64>,
    pub f_hi_hz: Option<f64>,
    pub max_bins: Option<usize>,
}

impl Default for BandSpec {
    /// Electromechanical-oscillation band: DC dropped, 0.1–2.5 Hz.
    fn default() -> Self {
        BandSpec {
            drop_dc: true,
            f_lo_hz: Some(0.1),
            f_hi_hz: Some(2.5),
            max_bins: None,
        }
    }
}

impl BandSpec {
    /// Keep every non-DC bin of the lower half-spectrum.
    pub fn wide_open() -> Self {
        BandSpec {
            drop_dc: true,
            f_lo_hz: None,
            f_hi_hz: None,
            max_bins: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let (Some(lo), Some(hi)) = (self.f_lo_hz, self.f_hi_hz) {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "band limits must satisfy f_lo < f_hi, got {lo} and {hi}"
                )));
            }
        }
        if let Some(m) = self.max_bins {
            if m == 0 {
                return Err(Error::InvalidParameter("max_bins must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Complex feature rows, one per bus, restricted to the selected band.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub bus_ids: Vec<String>,
    pub rows: Vec<Vec<Complex64>>,
    pub band: BandSpec,
    pub dt: f64,
    /// Physical frequency of each retained bin, Hz.
    pub bin_hz: Vec<f64>,
}

impl FeatureMatrix {
    pub fn bus_count(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bin_count(&self) -> usize {
        self.bin_hz.len()
    }
}

/// DFT of a real signal: `bins[f] = sum_k signal[k] e^{-j 2 pi f k / N}`.
///
/// Power-of-two lengths go through an iterative radix-2 FFT; other lengths
/// use direct summation with a precomputed twiddle table. Both agree with
/// the textbook sum to better than 1e-9 relative.
pub fn dft(signal: &[f64]) -> Result<ComplexSpectrum> {
    let n = signal.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let bins = if n.is_power_of_two() && n >= 4 {
        fft_pow2(signal)
    } else {
        dft_direct(signal)
    };
    // Bin width for unit sample spacing; divide by dt for physical Hz.
    Ok(ComplexSpectrum {
        bins,
        bin_width_hz: 1.0 / n as f64,
    })
}

fn dft_direct(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    // e^{-j 2 pi m / N} for m = 0..N; exponent f*k is reduced mod N.
    let twiddle: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * m as f64 / n as f64))
        .collect();
    (0..n)
        .map(|f| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for &x in signal {
                acc += twiddle[idx] * x;
                idx += f;
                if idx >= n {
                    idx -= n;
                }
            }
            acc
        })
        .collect()
}

fn fft_pow2(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    debug_assert!(n.is_power_of_two());
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) & (n - 1);
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let base = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI / len as f64);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                w *= base;
            }
        }
        len <<= 1;
    }
    buf
}

fn selected_bins(n: usize, dt: f64, band: &BandSpec) -> Vec<usize> {
    let bin_width = 1.0 / (n as f64 * dt);
    let mut keep = Vec::new();
    for f in 0..=(n / 2) {
        if f == 0 && band.drop_dc {
            continue;
        }
        let hz = f as f64 * bin_width;
        if let Some(lo) = band.f_lo_hz {
            if hz < lo {
                continue;
            }
        }
        if let Some(hi) = band.f_hi_hz {
            if hz > hi {
                continue;
            }
        }
        keep.push(f);
    }
    if let Some(cap) = band.max_bins {
        keep.truncate(cap);
    }
    keep
}

struct FeaturePlan {
    keep: Vec<usize>,
    bin_hz: Vec<f64>,
}

impl FeaturePlan {
    fn new(velocities: &VelocityTraceSet, band: &BandSpec) -> Result<Self> {
        band.validate()?;
        let n = velocities.meta.count;
        if n < 4 {
            return Err(Error::InsufficientSamples { needed: 4, got: n });
        }
        let keep = selected_bins(n, velocities.meta.dt, band);
        if keep.len() < 2 {
            return Err(Error::BandTooNarrow { selected: keep.len() });
        }
        let bin_width = 1.0 / (n as f64 * velocities.meta.dt);
        let bin_hz = keep.iter().map(|&f| f as f64 * bin_width).collect();
        Ok(FeaturePlan { keep, bin_hz })
    }

    fn row(&self, signal: &[f64]) -> Vec<Complex64> {
        let full = dft(signal).expect("non-empty by construction").bins;
        self.keep.iter().map(|&f| full[f]).collect()
    }
}

/// Per-bus DFT of the velocity rows, restricted to the selected band.
pub fn build_feature_matrix(velocities: &VelocityTraceSet, band: &BandSpec) -> Result<FeatureMatrix> {
    let plan = FeaturePlan::new(velocities, band)?;
    let rows = par::map_indexed(velocities.velocities.len(), |i| {
        plan.row(&velocities.velocities[i])
    });
    Ok(assemble(velocities, band, plan, rows))
}

/// Sequential variant of [`build_feature_matrix`]; identical output.
pub fn build_feature_matrix_seq(
    velocities: &VelocityTraceSet,
    band: &BandSpec,
) -> Result<FeatureMatrix> {
    let plan = FeaturePlan::new(velocities, band)?;
    let rows = par::map_indexed_seq(velocities.velocities.len(), |i| {
        plan.row(&velocities.velocities[i])
    });
    Ok(assemble(velocities, band, plan, rows))
}

fn assemble(
    velocities: &VelocityTraceSet,
    band: &BandSpec,
    plan: FeaturePlan,
    rows: Vec<Vec<Complex64>>,
) -> FeatureMatrix {
    FeatureMatrix {
        bus_ids: velocities.bus_ids.clone(),
        rows,
        band: band.clone(),
        dt: velocities.meta.dt,
        bin_hz: plan.bin_hz,
    }
}

/// Debug dump of per-bus bin magnitudes: `bus_id,f_hz,mag,phase_rad`.
pub fn spectrum_csv_string(features: &FeatureMatrix) -> String {
    let mut out = String::from("bus_id,f_hz,mag,phase_rad\n");
    for (id, row) in features.bus_ids.iter().zip(&features.rows) {
        for (hz, c) in features.bin_hz.iter().zip(row) {
            let _ = writeln!(
                out,
                "{id},{},{},{}",
                crate::timeseries::fmt_sig17(*hz),
                crate::timeseries::fmt_sig17(c.norm()),
                crate::timeseries::fmt_sig17(c.arg())
            );
        }
    }
    out
}

pub fn write_spectrum_csv(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, spectrum_csv_string(features)).map_err(|e| Error::io(path, e))
}
