//! Sensing features: windowed RMS, the voltage feature and the impedance
//! feature with its capacitance inverse.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trace::{sig9, SignalTrace};

/// Default lower bound on V_C RMS below which |Z| is not computed (V).
pub const DEFAULT_VC_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Voltage,
    Impedance,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Voltage => "voltage",
            FeatureKind::Impedance => "impedance",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "voltage" => Ok(FeatureKind::Voltage),
            "impedance" => Ok(FeatureKind::Impedance),
            other => Err(Error::Parse(format!(
                "unknown feature kind `{other}` (expected voltage or impedance)"
            ))),
        }
    }
}

/// Non-overlapping RMS windows over a sampled trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsConfig {
    /// Samples per window.
    pub window: usize,
    /// Sample rate (Hz).
    pub fs: f64,
    /// Sensing sine frequency (Hz); each window must hold whole periods.
    pub f_sense: f64,
}

impl Default for RmsConfig {
    fn default() -> Self {
        // 200 samples = 4 periods of 2 kHz at 100 kHz
        Self {
            window: 200,
            fs: 100e3,
            f_sense: 2e3,
        }
    }
}

impl RmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::invalid(format!(
                "estimation.window must be >= 2, got {}",
                self.window
            )));
        }
        if !(self.fs > 0.0 && self.f_sense > 0.0) {
            return Err(Error::invalid("RMS window needs fs > 0 and f_sense > 0"));
        }
        let periods = self.periods_per_window();
        if (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
            return Err(Error::invalid(format!(
                "estimation.window = {} holds {periods} sensing periods; must be a whole number",
                self.window
            )));
        }
        Ok(())
    }

    pub fn periods_per_window(&self) -> f64 {
        self.window as f64 * self.f_sense / self.fs
    }

    /// Feature rate `fs / window` (Hz).
    pub fn rate(&self) -> f64 {
        self.fs / self.window as f64
    }
}

/// Feature values at the window rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub values: Vec<f64>,
    /// Feature rate (Hz).
    pub rate: f64,
    pub kind: FeatureKind,
    /// Time stamp of the first value (s): centre of its window.
    pub t0: f64,
}

impl FeatureStream {
    pub fn new(values: Vec<f64>, rate: f64, kind: FeatureKind, t0: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("feature rate must be > 0, got {rate}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature values"));
        }
        Ok(Self {
            values,
            rate,
            kind,
            t0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    /// CSV with header `t_s,value,kind`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,value,kind")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", sig9(self.time_at(i)), sig9(*v), self.kind)?;
        }
        Ok(())
    }
}

/// RMS over consecutive non-overlapping windows; a trailing partial window
/// is dropped.
pub fn windowed_rms(trace: &SignalTrace, cfg: &RmsConfig) -> Result<FeatureStream> {
    cfg.validate()?;
    if (trace.fs() - cfg.fs).abs() > 1e-9 * cfg.fs {
        return Err(Error::mismatch(format!(
            "trace rate {} Hz differs from RMS config rate {} Hz",
            trace.fs(),
            cfg.fs
        )));
    }
    if trace.len() < cfg.window {
        return Err(Error::domain(format!(
            "trace of {} samples is shorter than one RMS window ({})",
            trace.len(),
            cfg.window
        )));
    }
    let values = trace
        .samples()
        .chunks_exact(cfg.window)
        .map(crate::trace::rms)
        .collect();
    let t0 = trace.t0() + 0.5 * cfg.window as f64 / cfg.fs;
    FeatureStream::new(values, cfg.rate(), FeatureKind::Voltage, t0)
}

/// Mean of each non-overlapping window; aligns per-sample quantities (ground
/// truth) with the RMS features.
pub fn window_means(samples: &[f64], window: usize) -> Vec<f64> {
    samples
        .chunks_exact(window.max(1))
        .map(crate::trace::mean)
        .collect()
}

/// `|Z| = V_Hrms · R_C / V_Crms`, refusing V_C below `vc_floor`.
pub fn impedance_magnitude(v_h_rms: f64, v_c_rms: f64, r_c: f64, vc_floor: f64) -> Result<f64> {
    if !(r_c > 0.0) {
        return Err(Error::domain(format!("r_c must be > 0, got {r_c}")));
    }
    if !(v_c_rms > vc_floor) {
        return Err(Error::BelowNoiseFloor(format!(
            "V_C RMS {v_c_rms} V at or below floor {vc_floor} V"
        )));
    }
    Ok(v_h_rms / v_c_rms * r_c)
}

/// Element-wise [`impedance_magnitude`] over matching RMS streams.
pub fn impedance_feature(
    v_h_rms: &FeatureStream,
    v_c_rms: &FeatureStream,
    r_c: f64,
    vc_floor: f64,
) -> Result<FeatureStream> {
    if v_h_rms.len() != v_c_rms.len() || v_h_rms.rate != v_c_rms.rate {
        return Err(Error::mismatch("V_H and V_C RMS streams differ in length or rate"));
    }
    let values = v_h_rms
        .values
        .iter()
        .zip(&v_c_rms.values)
        .map(|(&h, &c)| impedance_magnitude(h, c, r_c, vc_floor))
        .collect::<Result<Vec<_>>>()?;
    FeatureStream::new(values, v_h_rms.rate, FeatureKind::Impedance, v_h_rms.t0)
}

/// `|Z| = sqrt(R_E² + 1/(2πf·C_E)²)`.
pub fn impedance_of_capacitance(c_e: f64, r_e: f64, f: f64) -> f64 {
    let x = 1.0 / (2.0 * PI * f * c_e);
    r_e.hypot(x)
}

/// Inverse of [`impedance_of_capacitance`] for known `r_e` and `f`.
pub fn capacitance_from_impedance(z_mag: f64, r_e: f64, f: f64) -> Result<f64> {
    if !(f > 0.0) || r_e < 0.0 || !z_mag.is_finite() || !r_e.is_finite() {
        return Err(Error::domain(format!(
            "capacitance inverse needs f > 0 and r_e >= 0, got f = {f}, r_e = {r_e}"
        )));
    }
    if !(z_mag > r_e) {
        return Err(Error::NonPhysicalImpedance { z_mag, r_e });
    }
    // (z − r)(z + r) keeps precision when |Z| is close to r_e
    let reactance = ((z_mag - r_e) * (z_mag + r_e)).sqrt();
    Ok(1.0 / (2.0 * PI * f * reactance))
}

/// The voltage-method feature is the V_H RMS stream itself.
pub fn voltage_feature(v_h_rms: FeatureStream) -> FeatureStream {
    FeatureStream {
        kind: FeatureKind::Voltage,
        ..v_h_rms
    }
}

/// Causal moving average over the last `len` values (off when `len <= 1`).
pub fn moving_average(stream: &FeatureStream, len: usize) -> FeatureStream {
    if len <= 1 {
        return stream.clone();
    }
    let mut out = Vec::with_capacity(stream.len());
    let mut acc = 0.0;
    for (i, &v) in stream.values.iter().enumerate() {
        acc += v;
        if i >= len {
            acc -= stream.values[i - len];
        }
        out.push(acc / (i + 1).min(len) as f64);
    }
    FeatureStream {
        values: out,
        ..stream.clone()
    }
}
