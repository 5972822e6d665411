//! Uniformly sampled real-valued waveform.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

const TRACE_HEADER: &str = "t_s,value_v";

/// Uniformly sampled waveform in volts, starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    samples: Vec<f64>,
    fs: f64,
    t0: f64,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, fs: f64, t0: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid(format!("sample rate must be > 0, got {fs}")));
        }
        if !t0.is_finite() {
            return Err(Error::NonFinite("trace start time"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("trace samples"));
        }
        Ok(Self { samples, fs, t0 })
    }

    pub fn zeros(len: usize, fs: f64) -> Result<Self> {
        Self::new(vec![0.0; len], fs, 0.0)
    }

    /// Sample `f(t)` at `len` points starting at t = 0.
    pub fn from_fn(len: usize, fs: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..len).map(|i| f(i as f64 / fs)).collect();
        Self::new(samples, fs, 0.0)
    }

    /// Sine of amplitude `amp` (V) at `freq` (Hz), zero phase at t = 0.
    pub fn sine(len: usize, fs: f64, freq: f64, amp: f64) -> Result<Self> {
        let w = 2.0 * std::f64::consts::PI * freq;
        Self::from_fn(len, fs, |t| amp * (w * t).sin())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Root mean square over the whole trace (0 for an empty trace).
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    /// Sub-trace `[start, end)` keeping the absolute time base.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.samples.len() {
            return Err(Error::domain(format!(
                "slice {start}..{end} out of range for trace of length {}",
                self.samples.len()
            )));
        }
        Ok(Self {
            samples: self.samples[start..end].to_vec(),
            fs: self.fs,
            t0: self.time_at(start),
        })
    }

    /// Same length, same rate, same start time.
    pub fn check_compatible(&self, other: &SignalTrace) -> Result<()> {
        if self.samples.len() != other.samples.len() {
            return Err(Error::mismatch(format!(
                "trace lengths differ: {} vs {}",
                self.samples.len(),
                other.samples.len()
            )));
        }
        if self.fs != other.fs {
            return Err(Error::mismatch(format!(
                "sample rates differ: {} Hz vs {} Hz",
                self.fs, other.fs
            )));
        }
        Ok(())
    }

    /// CSV with header `t_s,value_v`, 9 significant digits per field.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", sig9(self.time_at(i)), sig9(*v))?;
        }
        Ok(())
    }

    /// Inverse of [`SignalTrace::write_csv`]. The rate is recovered from the
    /// mean spacing of the time stamps.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some(TRACE_HEADER) {
            return Err(Error::Parse(format!("expected header `{TRACE_HEADER}`")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("row {}: expected two fields", n + 2)))?;
            times.push(parse_f64(t, n + 2)?);
            values.push(parse_f64(v, n + 2)?);
        }
        if times.len() < 2 {
            return Err(Error::Parse("trace needs at least two rows".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Parse("time stamps must increase".into()));
        }
        Self::new(values, 1.0 / dt, times[0])
    }
}

fn parse_f64(s: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: bad number `{}`", s.trim())))
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Scientific notation with 9 significant digits.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Scientific notation with 12 significant digits.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rate_and_nan() {
        assert!(SignalTrace::new(vec![0.0], 0.0, 0.0).is_err());
        assert!(SignalTrace::new(vec![f64::NAN], 1.0, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_nine_digits() {
        let tr = SignalTrace::sine(50, 100_000.0, 2000.0, 1.234_567_891_23).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,value_v\n"));
        let back = SignalTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), tr.len());
        assert!((back.fs() - tr.fs()).abs() / tr.fs() < 1e-8);
        for (a, b) in back.samples().iter().zip(tr.samples()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn slice_keeps_time_base() {
        let tr = SignalTrace::from_fn(10, 10.0, |t| t).unwrap();
        let s = tr.slice(3, 6).unwrap();
        assert_eq!(s.len(), 3);
        assert!((s.t0() - 0.3).abs() < 1e-15);
        assert!(tr.slice(6, 11).is_err());
    }
}
