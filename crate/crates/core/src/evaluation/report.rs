use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::calibration::Mapping;
use crate::error::{Error, Result};
use crate::estimation::FeatureKind;
use crate::trace::sig9;

pub const REPORT_HEADER: &str = "scenario,method,mapping,freq_hz,nrmse,phase_deg,seed";

/// Scores for one channel of a multi-channel run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub channel: usize,
    pub label: String,
    pub nrmse: f64,
    /// Fresh estimates per second.
    pub update_rate_hz: f64,
}

/// Outcome of one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scenario: String,
    pub method: FeatureKind,
    pub mapping: Mapping,
    /// Actuation frequency, for periodic scenarios.
    pub freq_hz: Option<f64>,
    pub nrmse: f64,
    /// Positive when the estimate lags; periodic scenarios only.
    pub phase_deg: Option<f64>,
    pub seed: u64,
    pub channels: Vec<ChannelReport>,
    /// Scenario-specific scalar results.
    pub extra: Vec<(String, f64)>,
    /// Model closure values and processing decisions behind the numbers.
    pub metadata: Vec<(String, String)>,
}

impl EvalReport {
    pub fn extra(&self, key: &str) -> Option<f64> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(sig9).unwrap_or_default()
}

/// Report rows: one per report, then one per channel named `scenario/label`.
pub fn write_report_csv<W: Write>(reports: &[EvalReport], mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.scenario,
            r.method,
            r.mapping,
            opt(r.freq_hz),
            sig9(r.nrmse),
            opt(r.phase_deg),
            r.seed
        )?;
        for c in &r.channels {
            writeln!(
                w,
                "{}/{},{},{},{},{},,{}",
                r.scenario,
                c.label,
                r.method,
                r.mapping,
                opt(r.freq_hz),
                sig9(c.nrmse),
                r.seed
            )?;
        }
    }
    Ok(())
}

/// `key,value` listing of extras, channel rates and metadata.
pub fn write_metadata_csv<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    writeln!(w, "key,value")?;
    writeln!(w, "scenario,{}", report.scenario)?;
    for (k, v) in &report.extra {
        writeln!(w, "{k},{}", sig9(*v))?;
    }
    for c in &report.channels {
        writeln!(w, "{}.update_rate_hz,{}", c.label, sig9(c.update_rate_hz))?;
    }
    for (k, v) in &report.metadata {
        writeln!(w, "{k},{v}")?;
    }
    Ok(())
}

/// Write `path` through a temporary file in the same directory, renamed into
/// place once complete.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            scenario: "sine".into(),
            method: FeatureKind::Voltage,
            mapping: Mapping::Single,
            freq_hz: Some(1.0),
            nrmse: 0.025,
            phase_deg: None,
            seed: 7,
            channels: vec![ChannelReport {
                channel: 0,
                label: "ch0".into(),
                nrmse: 0.5,
                update_rate_hz: 125.0,
            }],
            extra: vec![("steady_error".into(), 0.01)],
            metadata: vec![("rms_window".into(), "200".into())],
        }
    }

    #[test]
    fn report_rows() {
        let mut buf = Vec::new();
        write_report_csv(&[report()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], REPORT_HEADER);
        assert_eq!(lines[1], "sine,voltage,single,1.00000000e0,2.50000000e-2,,7");
        assert_eq!(lines[2], "sine/ch0,voltage,single,1.00000000e0,5.00000000e-1,,7");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("report.csv");
        write_atomic(&path, |w| Ok(writeln!(w, "first")?)).unwrap();
        write_atomic(&path, |w| Ok(writeln!(w, "second")?)).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second\n");
        // a failing writer leaves the old file alone
        let err = write_atomic(&path, |_| Err(Error::domain("boom")));
        assert!(err.is_err());
        assert_eq!(fs::read_to_string(&path).unwrap(), "second\n");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
