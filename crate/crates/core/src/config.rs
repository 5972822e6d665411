//! Scenario configuration files.
//!
//! TOML with the sections `actuator`, `circuit`, `noise`, `estimation`,
//! `calibration`, `mux` and `scenario`. Every key is optional and falls back
//! to the library default; unknown sections or keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::actuator::{
    balance_force_coefficient, ActuatorParams, DEFAULT_TARGET_FRACTION, DEFAULT_TARGET_KV, GRAVITY,
};
use crate::calibration::{DualSettings, Mapping};
use crate::circuit::{CircuitParams, NoiseModel};
use crate::error::{Error, Result};
use crate::estimation::{FeatureKind, DEFAULT_VC_FLOOR};
use crate::evaluation::{JointSetup, NoiseBenchConfig, Pipeline, Scenario, ScenarioKind, SWEEP_FREQS};
use crate::mux::MuxPlan;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorSection {
    pub c_full: f64,
    pub c_empty: f64,
    pub q_max: f64,
    pub r_e: f64,
    pub mass: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Explicit force coefficient (N/kV²). When absent it is derived so that
    /// `target_kv` with `reference_mass` hanging sits at `target_fraction`
    /// of the stroke.
    pub k_f: Option<f64>,
    pub target_kv: f64,
    pub target_fraction: f64,
    pub reference_mass: f64,
    pub tau_c: f64,
    pub c_couple: f64,
    pub retention_frac: f64,
    pub retention_tau: f64,
}

impl Default for ActuatorSection {
    fn default() -> Self {
        let d = ActuatorParams::default();
        Self {
            c_full: d.c_full,
            c_empty: d.c_empty,
            q_max: d.q_max,
            r_e: d.r_e,
            mass: d.mass,
            stiffness: d.stiffness,
            damping: d.damping,
            k_f: None,
            target_kv: DEFAULT_TARGET_KV,
            target_fraction: DEFAULT_TARGET_FRACTION,
            reference_mass: d.mass,
            tau_c: d.tau_c,
            c_couple: d.c_couple,
            retention_frac: d.retention_frac,
            retention_tau: d.retention_tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub r_n: f64,
    pub r_c: f64,
    pub r_k: f64,
    pub f_sense: f64,
    pub a_sense: f64,
    pub fs: f64,
    pub cmrr_db: f64,
    pub legacy_sine: bool,
}

impl Default for CircuitSection {
    fn default() -> Self {
        let d = CircuitParams::default();
        Self {
            r_n: d.r_n,
            r_c: d.r_c,
            r_k: d.r_k,
            f_sense: d.f_sense,
            a_sense: d.a_sense,
            fs: d.fs,
            cmrr_db: d.cmrr_db,
            legacy_sine: d.legacy_sine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub enabled: bool,
    pub tone_hz: f64,
    pub tone_v: f64,
    pub white_v: f64,
    pub ref_kv: f64,
    pub c_hv: f64,
    pub floor_v: f64,
    pub bench_kv: f64,
    pub bench_duration_s: f64,
    pub fit_targets: bool,
    pub target_vk_v: f64,
    pub target_vc_v: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let d = NoiseModel::default();
        let b = NoiseBenchConfig::default();
        Self {
            enabled: true,
            tone_hz: d.tone_hz,
            tone_v: d.tone_v,
            white_v: d.white_v,
            ref_kv: d.ref_kv,
            c_hv: d.c_hv,
            floor_v: d.floor_v,
            bench_kv: b.drive_kv,
            bench_duration_s: b.duration_s,
            fit_targets: b.fit,
            target_vk_v: b.target_vk_v,
            target_vc_v: b.target_vc_v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub window: usize,
    pub method: String,
    pub vc_floor: f64,
    pub smoothing: usize,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            window: 200,
            method: "voltage".into(),
            vc_floor: DEFAULT_VC_FLOOR,
            smoothing: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub mapping: String,
    pub slope_window: usize,
    pub hold_last_on_tie: bool,
    pub tie_tolerance: f64,
    pub warmup_s: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = DualSettings::default();
        Self {
            mapping: "single".into(),
            slope_window: d.slope_window,
            hold_last_on_tie: d.hold_last_on_tie,
            tie_tolerance: d.tie_tolerance,
            warmup_s: Pipeline::default().warmup_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MuxSection {
    pub n_channels: usize,
    pub slot_windows: usize,
    pub settle_windows: usize,
    /// Visiting order; defaults to 0, 1, …, n−1.
    pub order: Option<Vec<usize>>,
}

impl Default for MuxSection {
    fn default() -> Self {
        Self {
            n_channels: 4,
            slot_windows: 1,
            settle_windows: 0,
            order: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: String,
    pub kind: String,
    pub amplitude_kv: f64,
    pub offset_kv: f64,
    pub freq_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub negate_drive: bool,
    pub load_n: Option<f64>,
    pub load_after_n: f64,
    pub t_step_s: f64,
    pub settle_window_s: f64,
    pub calib_amplitude_kv: f64,
    pub calib_offset_kv: f64,
    pub calib_freq_hz: f64,
    pub calib_duration_s: f64,
    /// Frequencies for `sweep` (Hz).
    pub frequencies: Vec<f64>,
    pub joint_moment_arm_m: f64,
    pub joint_chain_stiffness: f64,
    pub joint_full_flexion_deg: f64,
    pub joint_drive_kv: f64,
    pub joint_preload_kg: f64,
    pub joint_calib_peak_deg: f64,
    pub joint_calib_duration_s: f64,
    pub joint_eval_duration_s: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = Scenario::default();
        let j = JointSetup::default();
        Self {
            name: s.name,
            kind: s.kind.to_string(),
            amplitude_kv: s.amplitude_kv,
            offset_kv: s.offset_kv,
            freq_hz: s.freq_hz,
            duration_s: s.duration_s,
            seed: s.seed,
            negate_drive: s.negate_drive,
            load_n: s.load_n,
            load_after_n: s.load_after_n,
            t_step_s: s.t_step_s,
            settle_window_s: s.settle_window_s,
            calib_amplitude_kv: s.calib_amplitude_kv,
            calib_offset_kv: s.calib_offset_kv,
            calib_freq_hz: s.calib_freq_hz,
            calib_duration_s: s.calib_duration_s,
            frequencies: SWEEP_FREQS.to_vec(),
            joint_moment_arm_m: j.moment_arm_m,
            joint_chain_stiffness: j.chain_stiffness,
            joint_full_flexion_deg: j.full_flexion_deg,
            joint_drive_kv: j.drive_kv,
            joint_preload_kg: j.preload_kg,
            joint_calib_peak_deg: j.calib_peak_deg,
            joint_calib_duration_s: j.calib_duration_s,
            joint_eval_duration_s: j.eval_duration_s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub actuator: ActuatorSection,
    pub circuit: CircuitSection,
    pub noise: NoiseSection,
    pub estimation: EstimationSection,
    pub calibration: CalibrationSection,
    pub mux: MuxSection,
    pub scenario: ScenarioSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn actuator(&self) -> Result<ActuatorParams> {
        let a = &self.actuator;
        let mut p = ActuatorParams {
            c_full: a.c_full,
            c_empty: a.c_empty,
            q_max: a.q_max,
            r_e: a.r_e,
            mass: a.mass,
            stiffness: a.stiffness,
            damping: a.damping,
            k_f: 0.0,
            tau_c: a.tau_c,
            c_couple: a.c_couple,
            retention_frac: a.retention_frac,
            retention_tau: a.retention_tau,
        };
        p.k_f = match a.k_f {
            Some(k) => k,
            None => {
                if !(a.target_fraction > 0.0 && a.target_fraction < 1.0) {
                    return Err(Error::invalid("actuator.target_fraction must lie in (0, 1)"));
                }
                if !(a.target_kv.is_finite() && a.target_kv != 0.0) {
                    return Err(Error::invalid("actuator.target_kv must be non-zero"));
                }
                balance_force_coefficient(
                    &p,
                    a.target_kv,
                    a.reference_mass * GRAVITY,
                    a.target_fraction * a.q_max,
                )
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn circuit(&self) -> Result<CircuitParams> {
        let c = &self.circuit;
        let n = &self.noise;
        let p = CircuitParams {
            r_n: c.r_n,
            r_c: c.r_c,
            r_k: c.r_k,
            f_sense: c.f_sense,
            a_sense: c.a_sense,
            fs: c.fs,
            cmrr_db: c.cmrr_db,
            legacy_sine: c.legacy_sine,
            ripple: NoiseModel {
                tone_hz: n.tone_hz,
                tone_v: n.tone_v,
                white_v: n.white_v,
                ref_kv: n.ref_kv,
                c_hv: n.c_hv,
                floor_v: n.floor_v,
                // set per pass by the scenario runner
                seed: 0,
            },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn method(&self) -> Result<FeatureKind> {
        self.estimation.method.parse()
    }

    pub fn mapping(&self) -> Result<Mapping> {
        self.calibration.mapping.parse()
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let cal = &self.calibration;
        let p = Pipeline {
            actuator: self.actuator()?,
            circuit: self.circuit()?,
            noise_on: self.noise.enabled,
            window: self.estimation.window,
            vc_floor: self.estimation.vc_floor,
            smoothing: self.estimation.smoothing,
            dual: DualSettings {
                slope_window: cal.slope_window,
                hold_last_on_tie: cal.hold_last_on_tie,
                tie_tolerance: cal.tie_tolerance,
            },
            warmup_s: cal.warmup_s,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.scenario;
        let scenario = Scenario {
            name: s.name.clone(),
            kind: s.kind.parse::<ScenarioKind>()?,
            amplitude_kv: s.amplitude_kv,
            offset_kv: s.offset_kv,
            freq_hz: s.freq_hz,
            duration_s: s.duration_s,
            load_n: s.load_n,
            load_after_n: s.load_after_n,
            t_step_s: s.t_step_s,
            settle_window_s: s.settle_window_s,
            calib_amplitude_kv: s.calib_amplitude_kv,
            calib_offset_kv: s.calib_offset_kv,
            calib_freq_hz: s.calib_freq_hz,
            calib_duration_s: s.calib_duration_s,
            method: self.method()?,
            mapping: self.mapping()?,
            seed: s.seed,
            negate_drive: s.negate_drive,
        };
        if scenario.name.is_empty() || scenario.name.contains([',', '\n', '/']) {
            return Err(Error::invalid(
                "scenario.name must be non-empty and free of commas, slashes and newlines",
            ));
        }
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn frequencies(&self) -> Result<Vec<f64>> {
        let f = &self.scenario.frequencies;
        if f.is_empty() || f.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid("scenario.frequencies must be a non-empty list of positive values"));
        }
        Ok(f.clone())
    }

    pub fn mux_plan(&self) -> Result<MuxPlan> {
        let m = &self.mux;
        let plan = MuxPlan {
            n_channels: m.n_channels,
            slot_windows: m.slot_windows,
            settle_windows: m.settle_windows,
            order: m.order.clone().unwrap_or_else(|| (0..m.n_channels).collect()),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn noise_bench(&self) -> Result<NoiseBenchConfig> {
        let n = &self.noise;
        let cfg = NoiseBenchConfig {
            drive_kv: n.bench_kv,
            duration_s: n.bench_duration_s,
            fit: n.fit_targets,
            target_vk_v: n.target_vk_v,
            target_vc_v: n.target_vc_v,
        };
        if !(cfg.target_vk_v > 0.0 && cfg.target_vc_v > 0.0) {
            return Err(Error::invalid("noise targets must be > 0"));
        }
        Ok(cfg)
    }

    pub fn joint_setup(&self) -> Result<JointSetup> {
        let s = &self.scenario;
        let j = JointSetup {
            moment_arm_m: s.joint_moment_arm_m,
            chain_stiffness: s.joint_chain_stiffness,
            full_flexion_deg: s.joint_full_flexion_deg,
            drive_kv: s.joint_drive_kv,
            preload_kg: s.joint_preload_kg,
            calib_peak_deg: s.joint_calib_peak_deg,
            calib_duration_s: s.joint_calib_duration_s,
            eval_duration_s: s.joint_eval_duration_s,
        };
        j.validate()?;
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_library_defaults() {
        let c = Config::parse("").unwrap();
        let p = c.pipeline().unwrap();
        let d = Pipeline::default();
        assert_eq!(p.circuit, d.circuit);
        assert!((p.actuator.k_f - d.actuator.k_f).abs() <= 1e-15 * d.actuator.k_f);
        assert_eq!(p.window, 200);
        assert_eq!(c.scenario().unwrap(), Scenario::default());
        assert_eq!(c.mux_plan().unwrap(), MuxPlan::round_robin(4));
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        for text in ["[actuator]\nc_ful = 1e-10\n", "[bogus]\nx = 1\n", "top = 1\n"] {
            let err = Config::parse(text).unwrap_err();
            assert!(err.is_validation(), "{text}: {err}");
        }
    }

    #[test]
    fn values_are_checked() {
        let c = Config::parse("[circuit]\nr_n = 2e6\n").unwrap();
        assert!(c.pipeline().unwrap_err().is_validation());
        let c = Config::parse("[estimation]\nmethod = \"phase\"\n").unwrap();
        assert!(c.scenario().unwrap_err().is_validation());
        let c = Config::parse("[scenario]\namplitude_kv = 3.0\noffset_kv = 3.5\n").unwrap();
        assert!(c.scenario().unwrap_err().is_validation());
        let c = Config::parse("[mux]\nsettle_windows = 1\n").unwrap();
        assert!(c.mux_plan().unwrap_err().is_validation());
    }

    #[test]
    fn infinite_cmrr_parses() {
        let c = Config::parse("[circuit]\ncmrr_db = inf\n").unwrap();
        assert_eq!(c.circuit().unwrap().cmrr_leak(), 0.0);
    }
}
