//! CSV artifacts written by the command-line tools. Every file goes through
//! [`write_atomic`].

use std::path::{Path, PathBuf};

use crate::actuator::ActuatorTrajectory;
use crate::circuit::SensingFrame;
use crate::error::{Result, Stage, StageExt};
use crate::estimation::{FeatureKind, FeatureStream};
use crate::trace::{sig9, SignalTrace};

use super::joints::JointRun;
use super::pipeline::{Drive, Pipeline};
use super::report::{write_atomic, write_metadata_csv, write_report_csv, EvalReport};
use super::scenario::{MuxDemo, NoiseBench, Scenario, ScenarioRun};

/// Raw output of one simulated pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub drive: Drive,
    pub trajectory: ActuatorTrajectory,
    pub v_in: SignalTrace,
    pub frame: SensingFrame,
    pub features: Vec<FeatureStream>,
}

/// Simulate the scenario's scored drive once with noise seed `seed`.
pub fn simulate(p: &Pipeline, s: &Scenario, seed: u64) -> Result<Simulated> {
    p.validate()?;
    s.validate()?;
    let drive = s.drive(p)?;
    let trajectory = p.trajectory(&drive)?;
    let frame = p.frame(&trajectory, &drive, seed)?;
    let v_in = p.circuit.sensing_input(drive.len()).stage(Stage::Circuit)?;
    let features = [FeatureKind::Voltage, FeatureKind::Impedance]
        .into_iter()
        .map(|k| p.features(&frame, k))
        .collect::<Result<_>>()?;
    Ok(Simulated {
        drive,
        trajectory,
        v_in,
        frame,
        features,
    })
}

fn write_trace(path: &Path, t: &SignalTrace) -> Result<()> {
    write_atomic(path, |w| t.write_csv(w))
}

fn write_samples(path: &Path, header: &str, fs: f64, columns: &[&[f64]]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{header}")?;
        let n = columns.iter().map(|c| c.len()).min().unwrap_or(0);
        for i in 0..n {
            write!(w, "{}", sig9(i as f64 / fs))?;
            for c in columns {
                write!(w, ",{}", sig9(c[i]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Traces, truth and features of a simulated pass. Returns the files
/// written.
pub fn write_simulation(dir: &Path, sim: &Simulated) -> Result<Vec<PathBuf>> {
    let fs = sim.frame.fs();
    let mut files = Vec::new();
    let hv: Vec<f64> = sim.drive.kv.iter().map(|kv| kv * 1e3).collect();
    let hv = SignalTrace::new(hv, fs, 0.0)?;
    for (name, trace) in [
        ("drive_hv.csv", &hv),
        ("v_in.csv", &sim.v_in),
        ("v_h.csv", &sim.frame.v_h),
        ("v_c.csv", &sim.frame.v_c),
        ("v_k.csv", &sim.frame.v_k),
    ] {
        let path = dir.join(name);
        write_trace(&path, trace)?;
        files.push(path);
    }
    let path = dir.join("truth.csv");
    write_samples(
        &path,
        "t_s,displacement_m,c_e_f,load_n",
        fs,
        &[&sim.trajectory.q, &sim.trajectory.c_e, &sim.drive.load_n],
    )?;
    files.push(path);
    for f in &sim.features {
        let path = dir.join(format!("features_{}.csv", f.kind));
        write_atomic(&path, |w| f.write_csv(w))?;
        files.push(path);
    }
    Ok(files)
}

fn write_reports(dir: &Path, reports: &[EvalReport], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join("report.csv");
    write_atomic(&path, |w| write_report_csv(reports, w))?;
    files.push(path);
    if let Some(first) = reports.first() {
        let path = dir.join("metadata.csv");
        write_atomic(&path, |w| write_metadata_csv(first, w))?;
        files.push(path);
    }
    Ok(())
}

/// Report, metadata, and per-method features, maps and estimates.
pub fn write_scenario_run(dir: &Path, run: &ScenarioRun) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    write_reports(dir, &run.reports, &mut files)?;
    for (report, m) in run.reports.iter().zip(&run.runs) {
        let tag = format!("{}_{}", report.method, report.mapping);
        let path = dir.join(format!("features_{}.csv", report.method));
        if !files.contains(&path) {
            write_atomic(&path, |w| m.features.write_csv(w))?;
            files.push(path);
        }
        let path = dir.join(format!("map_{tag}.csv"));
        write_atomic(&path, |w| m.map.write(w))?;
        files.push(path);
        let path = dir.join(format!("estimate_{tag}.csv"));
        write_atomic(&path, |w| {
            writeln!(w, "t_s,estimate_m,truth_m")?;
            for (i, (e, t)) in m.estimate.iter().zip(&run.truth).enumerate() {
                writeln!(w, "{},{},{}", sig9(m.features.time_at(i)), sig9(*e), sig9(*t))?;
            }
            Ok(())
        })?;
        files.push(path);
    }
    Ok(files)
}

/// Report rows for several runs (a sweep).
pub fn write_report_set(dir: &Path, reports: &[EvalReport]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    write_reports(dir, reports, &mut files)?;
    Ok(files)
}

pub fn write_noise_bench(dir: &Path, nb: &NoiseBench) -> Result<Vec<PathBuf>> {
    let path = dir.join("noise.csv");
    write_atomic(&path, |w| {
        writeln!(w, "quantity,value")?;
        for (k, v) in [
            ("rms_vk_v", nb.rms_vk),
            ("rms_vc_v", nb.rms_vc),
            ("rms_vh_v", nb.rms_vh),
            ("rms_vh_ideal_cmrr_v", nb.rms_vh_ideal),
            ("floor_v", nb.floor_v),
            ("reduction_vk_over_vh", nb.reduction()),
            ("c_couple_f", nb.c_couple),
            ("c_hv_f", nb.c_hv),
        ] {
            writeln!(w, "{k},{}", sig9(v))?;
        }
        Ok(())
    })?;
    Ok(vec![path])
}

pub fn write_mux_demo(dir: &Path, demo: &MuxDemo) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let path = dir.join("mux.csv");
    write_atomic(&path, |w| demo.run.write_csv(w))?;
    files.push(path);
    write_reports(dir, std::slice::from_ref(&demo.report), &mut files)?;
    Ok(files)
}

pub fn write_joint_run(dir: &Path, jr: &JointRun) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let path = dir.join("joints.csv");
    write_atomic(&path, |w| jr.run.write_csv_as(w, "angle_deg"))?;
    files.push(path);
    write_reports(dir, std::slice::from_ref(&jr.report), &mut files)?;
    for (j, map) in jr.maps.iter().enumerate() {
        let label = &jr.report.channels[j].label;
        let path = dir.join(format!("map_{label}.csv"));
        write_atomic(&path, |w| map.write(w))?;
        files.push(path);
    }
    Ok(files)
}
