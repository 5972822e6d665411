//! Simulated joint tracking: each joint pulls a string across an actuator
//! held at constant drive, so flexion shows up as extra tensile load.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::actuator::GRAVITY;
use crate::calibration::{CalibrationMap, ClampRange, Mapping};
use crate::circuit::SensingFrame;
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimation::FeatureKind;
use crate::mux::{step_mux, FeatureSpec, MuxPlan, MuxRun};
use crate::trace::mean;

use super::metrics::nrmse;
use super::pipeline::{Drive, Pipeline};
use super::report::{ChannelReport, EvalReport};
use super::scenario::pipeline_metadata;

pub const JOINT_NAMES: [&str; 4] = ["knee_left", "knee_right", "hip_left", "hip_right"];

/// Physical range of every joint (deg).
pub const MAX_ANGLE_DEG: f64 = 135.0;

#[derive(Debug, Clone, PartialEq)]
pub struct JointSetup {
    /// String path-length change per radian of flexion (m).
    pub moment_arm_m: f64,
    /// Stiffness of the string and series elastic stages (N/m).
    pub chain_stiffness: f64,
    /// Angle each joint must reach during calibration (deg).
    pub full_flexion_deg: f64,
    pub drive_kv: f64,
    /// Mass hanging on each actuator besides the string (kg).
    pub preload_kg: f64,
    /// Peak angle of the calibration sweeps (deg).
    pub calib_peak_deg: f64,
    pub calib_duration_s: f64,
    pub eval_duration_s: f64,
}

impl Default for JointSetup {
    fn default() -> Self {
        Self {
            moment_arm_m: 0.03,
            chain_stiffness: 12.0,
            full_flexion_deg: 120.0,
            drive_kv: 4.0,
            preload_kg: 0.0478,
            calib_peak_deg: 130.0,
            calib_duration_s: 12.0,
            eval_duration_s: 12.0,
        }
    }
}

impl JointSetup {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.moment_arm_m > 0.0, "joints.moment_arm_m must be > 0"),
            (self.chain_stiffness > 0.0, "joints.chain_stiffness must be > 0"),
            (self.preload_kg >= 0.0, "joints.preload_kg must be >= 0"),
            (
                self.full_flexion_deg > 0.0 && self.full_flexion_deg <= MAX_ANGLE_DEG,
                "joints.full_flexion_deg must lie in (0, 135]",
            ),
            (
                self.calib_peak_deg > 0.0 && self.calib_peak_deg <= MAX_ANGLE_DEG,
                "joints.calib_peak_deg must lie in (0, 135]",
            ),
            (self.calib_duration_s > 0.0, "joints.calib_duration_s must be > 0"),
            (self.eval_duration_s > 0.0, "joints.eval_duration_s must be > 0"),
            (
                self.drive_kv.abs() <= super::pipeline::SUPPLY_CEILING_KV,
                "joints.drive_kv exceeds the supply ceiling",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::invalid(msg));
            }
        }
        Ok(())
    }

    /// Total tensile load on the actuator at a joint angle (N).
    pub fn load_at(&self, angle_deg: f64) -> f64 {
        self.preload_kg * GRAVITY + self.chain_stiffness * self.moment_arm_m * angle_deg.to_radians()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub name: String,
    pub angle_deg: Vec<f64>,
}

/// Angle trajectories of all joints, sampled at the circuit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSession {
    pub joints: Vec<JointTrajectory>,
}

impl JointSession {
    pub fn validate(&self) -> Result<()> {
        let len = self.joints.first().map_or(0, |j| j.angle_deg.len());
        if len == 0 {
            return Err(Error::invalid("joint session is empty"));
        }
        for j in &self.joints {
            if j.angle_deg.len() != len {
                return Err(Error::mismatch(format!(
                    "joint {} has {} samples, expected {len}",
                    j.name,
                    j.angle_deg.len()
                )));
            }
            if j.angle_deg.iter().any(|a| !(0.0..=MAX_ANGLE_DEG).contains(a)) {
                return Err(Error::domain(format!(
                    "joint {} leaves [0, {MAX_ANGLE_DEG}] deg",
                    j.name
                )));
            }
        }
        Ok(())
    }

    fn from_fn(fs: f64, duration_s: f64, f: impl Fn(usize, f64) -> f64) -> Self {
        let len = (duration_s * fs).round() as usize;
        let joints = JOINT_NAMES
            .iter()
            .enumerate()
            .map(|(j, name)| JointTrajectory {
                name: name.to_string(),
                angle_deg: (0..len).map(|i| f(j, i as f64 / fs).clamp(0.0, MAX_ANGLE_DEG)).collect(),
            })
            .collect();
        Self { joints }
    }

    /// Repeated full flexions, a little faster for each joint.
    pub fn calibration(setup: &JointSetup, fs: f64, duration_s: f64) -> Self {
        Self::from_fn(fs, duration_s, |j, t| {
            let f = 0.25 + 0.05 * j as f64;
            0.5 * setup.calib_peak_deg * (1.0 - (2.0 * PI * f * t).cos())
        })
    }

    /// Gait-like motion: a stride tone plus its second harmonic, knees
    /// flexing further than hips and left/right half a stride apart.
    pub fn gait(fs: f64, duration_s: f64) -> Self {
        Self::from_fn(fs, duration_s, |j, t| {
            let (a, b) = if j < 2 { (70.0, 15.0) } else { (45.0, 10.0) };
            let stride = 0.45 + 0.03 * j as f64;
            let shift = if j % 2 == 0 { 0.0 } else { PI };
            let w = 2.0 * PI * stride * t;
            0.5 * a * (1.0 - (w + shift).cos()) + 0.5 * b * (1.0 - (2.0 * w + shift).cos())
        })
    }

    /// Every joint at a fixed angle.
    pub fn held(fs: f64, duration_s: f64, angle_deg: f64) -> Self {
        Self::from_fn(fs, duration_s, |_, _| angle_deg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRun {
    pub report: EvalReport,
    /// Angle estimates (deg) in the `displacement` column.
    pub run: MuxRun,
    pub maps: Vec<CalibrationMap>,
}

/// Options for a joint run that do not describe the motion itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRunOptions {
    pub method: FeatureKind,
    pub mapping: Mapping,
    pub seed: u64,
    pub negate_drive: bool,
}

impl Default for JointRunOptions {
    fn default() -> Self {
        Self {
            method: FeatureKind::Voltage,
            mapping: Mapping::Single,
            seed: 1,
            negate_drive: false,
        }
    }
}

fn joint_drive(setup: &JointSetup, angles: &[f64], negate: bool) -> Result<Drive> {
    let kv = if negate { -setup.drive_kv } else { setup.drive_kv };
    Drive::new(vec![kv; angles.len()], angles.iter().map(|&a| setup.load_at(a)).collect())
}

/// Angle estimates of a session before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTracking {
    /// Angle estimates (deg) in the `displacement` column.
    pub run: MuxRun,
    pub maps: Vec<CalibrationMap>,
    /// Window-averaged true angle per joint (deg).
    pub truth: Vec<Vec<f64>>,
}

/// Calibrate angle maps on `calib`, then track `eval` through the
/// multiplexer. Channel `j` of the plan is joint `j`.
pub fn track_joints(
    p: &Pipeline,
    setup: &JointSetup,
    calib: &JointSession,
    eval: &JointSession,
    plan: &MuxPlan,
    opts: &JointRunOptions,
) -> Result<JointTracking> {
    p.validate()?;
    setup.validate()?;
    plan.validate().stage(Stage::Mux)?;
    calib.validate().stage(Stage::Evaluation)?;
    eval.validate().stage(Stage::Evaluation)?;
    if calib.joints.len() != plan.n_channels || eval.joints.len() != plan.n_channels {
        return Err(Error::mismatch(format!(
            "mux plan has {} channels but the session has {} calibration and {} evaluation joints",
            plan.n_channels,
            calib.joints.len(),
            eval.joints.len()
        )));
    }
    for j in &calib.joints {
        let max_deg = j.angle_deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max_deg < setup.full_flexion_deg {
            return Err(Error::MissingFlexion {
                joint: j.name.clone(),
                max_deg,
                required_deg: setup.full_flexion_deg,
            });
        }
    }

    struct Prepared {
        map: CalibrationMap,
        frame: SensingFrame,
        truth: Vec<f64>,
    }
    let prepared: Vec<Prepared> = (0..plan.n_channels)
        .into_par_iter()
        .map(|j| {
            let seed = opts.seed.wrapping_add(2 * j as u64);
            let cal_angles = &calib.joints[j].angle_deg;
            let drive = joint_drive(setup, cal_angles, opts.negate_drive)?;
            let traj = p.trajectory(&drive)?;
            let frame = p.frame(&traj, &drive, seed)?;
            let obs = p.observe(&frame, cal_angles, opts.method)?;
            let map = p.fit(&obs, opts.mapping)?;

            let angles = &eval.joints[j].angle_deg;
            let drive = joint_drive(setup, angles, opts.negate_drive)?;
            let traj = p.trajectory(&drive)?;
            let frame = p.frame(&traj, &drive, seed.wrapping_add(1))?;
            Ok(Prepared {
                map,
                frame,
                truth: p.truth_windows(angles),
            })
        })
        .collect::<Result<_>>()?;

    let frames: Vec<&SensingFrame> = prepared.iter().map(|c| &c.frame).collect();
    let maps: Vec<CalibrationMap> = prepared.iter().map(|c| c.map).collect();
    let spec = FeatureSpec {
        rms: p.rms(),
        kind: opts.method,
        r_c: p.circuit.r_c,
        vc_floor: p.vc_floor,
    };
    let clamp = ClampRange::around_span(MAX_ANGLE_DEG);
    let run = step_mux(plan, &frames, &maps, &spec, clamp).stage(Stage::Mux)?;
    Ok(JointTracking {
        run,
        maps,
        truth: prepared.into_iter().map(|c| c.truth).collect(),
    })
}

/// [`track_joints`], scored per joint by angle NRMSE over the fresh windows
/// after warm-up.
pub fn run_joint_session(
    p: &Pipeline,
    setup: &JointSetup,
    calib: &JointSession,
    eval: &JointSession,
    plan: &MuxPlan,
    opts: &JointRunOptions,
) -> Result<JointRun> {
    let JointTracking { run, maps, truth } = track_joints(p, setup, calib, eval, plan, opts)?;
    let warm = p.warmup_windows();
    let mut channels = Vec::with_capacity(plan.n_channels);
    for (j, tru_j) in truth.iter().enumerate() {
        let (est, tru): (Vec<f64>, Vec<f64>) = run
            .fresh(j)
            .filter(|e| e.window >= warm)
            .map(|e| (e.displacement, tru_j[e.window]))
            .unzip();
        let name = &eval.joints[j].name;
        let score = nrmse(&est, &tru)
            .map_err(|e| Error::domain(format!("joint {name}: {e}")))
            .stage(Stage::Evaluation)?;
        channels.push(ChannelReport {
            channel: j,
            label: name.clone(),
            nrmse: score,
            update_rate_hz: run.update_rate(j),
        });
    }

    let mut metadata = pipeline_metadata(p);
    metadata.extend([
        ("joints.moment_arm_m".into(), format!("{:e}", setup.moment_arm_m)),
        ("joints.chain_stiffness".into(), format!("{:e}", setup.chain_stiffness)),
        ("joints.full_flexion_deg".into(), format!("{:e}", setup.full_flexion_deg)),
        ("joints.drive_kv".into(), format!("{:e}", setup.drive_kv.abs())),
        ("joints.preload_kg".into(), format!("{:e}", setup.preload_kg)),
        ("joints.mapping".into(), "feature to angle, per joint".into()),
        ("mux.n_channels".into(), plan.n_channels.to_string()),
        ("mux.slot_windows".into(), plan.slot_windows.to_string()),
        ("mux.settle_windows".into(), plan.settle_windows.to_string()),
        ("scenario.calibration_seed".into(), opts.seed.to_string()),
    ]);
    let report = EvalReport {
        scenario: "joints".into(),
        method: opts.method,
        mapping: opts.mapping,
        freq_hz: None,
        nrmse: mean(&channels.iter().map(|c| c.nrmse).collect::<Vec<_>>()),
        phase_deg: None,
        seed: opts.seed,
        channels,
        extra: vec![(
            "expected_update_rate_hz".into(),
            plan.channel_rate(p.rms().rate()),
        )],
        metadata,
    };
    Ok(JointRun { report, run, maps })
}
