use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibration::{CalibrationMap, Mapping};
use crate::circuit::{calibrate_coupling, simulate_sensing_path, SensingInputs};
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimation::{FeatureKind, FeatureStream};
use crate::mux::{step_mux, FeatureSpec, MuxPlan, MuxRun};
use crate::trace::{mean, SignalTrace};

use super::metrics::{nrmse, phase_lag};
use super::pipeline::{Drive, Observation, Pipeline, Waveform};
use super::report::{ChannelReport, EvalReport};

/// Actuation frequencies of the default sweep (Hz).
pub const SWEEP_FREQS: [f64; 7] = [0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0];

/// Sine segments of the `step_sines` scenario (Hz), played after the step part.
pub const STEP_SINES_SINE_FREQS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];
const STEP_SINES_STEP_KV: (f64, f64) = (2.0, 2.5);
const STEP_SINES_STEP_HZ: f64 = 0.25;
const STEP_SINES_STEP_S: f64 = 8.0;

/// Shortest periodic scenario, in actuation periods.
pub const MIN_PERIODS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Sine,
    /// Square wave between `offset ± amplitude`.
    Step,
    /// Steps followed by a ladder of sines.
    StepSines,
    /// Constant drive with a step in tensile load.
    LoadStep,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Sine => "sine",
            ScenarioKind::Step => "step",
            ScenarioKind::StepSines => "step_sines",
            ScenarioKind::LoadStep => "load_step",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(ScenarioKind::Sine),
            "step" => Ok(ScenarioKind::Step),
            "step_sines" => Ok(ScenarioKind::StepSines),
            "load_step" => Ok(ScenarioKind::LoadStep),
            other => Err(Error::invalid(format!(
                "unknown scenario kind `{other}` (expected sine, step, step_sines or load_step)"
            ))),
        }
    }
}

/// One actuation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub amplitude_kv: f64,
    pub offset_kv: f64,
    pub freq_hz: f64,
    /// Scored duration after warm-up (s). Ignored by `step_sines`, whose length is
    /// fixed by its segments.
    pub duration_s: f64,
    /// Tensile load; `None` means the weight of the actuator's mass.
    pub load_n: Option<f64>,
    /// Load after the step (`load_step` only).
    pub load_after_n: f64,
    /// Time of the load step from the start of the run (s).
    pub t_step_s: f64,
    /// Trailing span used to judge steady state (s).
    pub settle_window_s: f64,
    /// Sine used for calibration when the scenario itself cannot be
    /// calibrated on (`load_step`).
    pub calib_amplitude_kv: f64,
    pub calib_offset_kv: f64,
    pub calib_freq_hz: f64,
    pub calib_duration_s: f64,
    pub method: FeatureKind,
    pub mapping: Mapping,
    /// Calibration noise seed; evaluation uses `seed + 1`.
    pub seed: u64,
    pub negate_drive: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "sine".into(),
            kind: ScenarioKind::Sine,
            amplitude_kv: 1.0,
            offset_kv: 3.5,
            freq_hz: 1.0,
            duration_s: 10.0,
            load_n: None,
            load_after_n: 0.468,
            t_step_s: 6.0,
            settle_window_s: 1.0,
            calib_amplitude_kv: 2.0,
            calib_offset_kv: 2.5,
            calib_freq_hz: 0.5,
            calib_duration_s: 20.0,
            method: FeatureKind::Voltage,
            mapping: Mapping::Single,
            seed: 1,
            negate_drive: false,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("scenario.{what} must be > 0, got {x}")))
            }
        };
        positive(self.duration_s, "duration_s")?;
        self.waveform().validate()?;
        if let Some(load) = self.load_n {
            if !load.is_finite() {
                return Err(Error::invalid("scenario.load_n must be finite"));
            }
        }
        match self.kind {
            ScenarioKind::Sine | ScenarioKind::Step => {
                positive(self.freq_hz, "freq_hz")?;
                if self.kind == ScenarioKind::Sine && self.duration_s * self.freq_hz < MIN_PERIODS - 1e-9 {
                    return Err(Error::invalid(format!(
                        "scenario.duration_s = {} s covers fewer than {MIN_PERIODS} periods of {} Hz",
                        self.duration_s, self.freq_hz
                    )));
                }
            }
            ScenarioKind::StepSines => {}
            ScenarioKind::LoadStep => {
                positive(self.t_step_s, "t_step_s")?;
                positive(self.settle_window_s, "settle_window_s")?;
                if !self.load_after_n.is_finite() {
                    return Err(Error::invalid("scenario.load_after_n must be finite"));
                }
                if self.t_step_s + self.settle_window_s >= self.duration_s {
                    return Err(Error::invalid(
                        "scenario.t_step_s + settle_window_s must fall inside duration_s",
                    ));
                }
                positive(self.calib_freq_hz, "calib_freq_hz")?;
                positive(self.calib_duration_s, "calib_duration_s")?;
                self.calibration_waveform().validate()?;
            }
        }
        Ok(())
    }

    pub fn waveform(&self) -> Waveform {
        match self.kind {
            ScenarioKind::Sine => Waveform::Sine {
                amplitude_kv: self.amplitude_kv,
                offset_kv: self.offset_kv,
                freq_hz: self.freq_hz,
            },
            ScenarioKind::Step => Waveform::Square {
                amplitude_kv: self.amplitude_kv,
                offset_kv: self.offset_kv,
                freq_hz: self.freq_hz,
            },
            ScenarioKind::StepSines => {
                let mut parts = vec![(
                    STEP_SINES_STEP_S,
                    Waveform::Square {
                        amplitude_kv: STEP_SINES_STEP_KV.0,
                        offset_kv: STEP_SINES_STEP_KV.1,
                        freq_hz: STEP_SINES_STEP_HZ,
                    },
                )];
                for f in STEP_SINES_SINE_FREQS {
                    parts.push((
                        (3.0 / f).max(2.0),
                        Waveform::Sine {
                            amplitude_kv: self.amplitude_kv,
                            offset_kv: self.offset_kv,
                            freq_hz: f,
                        },
                    ));
                }
                Waveform::Sequence(parts)
            }
            ScenarioKind::LoadStep => Waveform::Constant { kv: self.offset_kv },
        }
    }

    fn calibration_waveform(&self) -> Waveform {
        Waveform::Sine {
            amplitude_kv: self.calib_amplitude_kv,
            offset_kv: self.calib_offset_kv,
            freq_hz: self.calib_freq_hz,
        }
    }

    /// Scored duration (s).
    pub fn scored_duration(&self) -> f64 {
        match (self.kind, self.waveform()) {
            (ScenarioKind::StepSines, Waveform::Sequence(parts)) => parts.iter().map(|(len, _)| len).sum(),
            _ => self.duration_s,
        }
    }

    /// Periodic scenarios report a phase lag at this frequency.
    pub fn phase_freq(&self) -> Option<f64> {
        (self.kind == ScenarioKind::Sine).then_some(self.freq_hz)
    }

    fn load(&self, p: &Pipeline) -> f64 {
        self.load_n.unwrap_or_else(|| p.actuator.load_weight())
    }

    fn polarity(&self, d: Drive) -> Drive {
        if self.negate_drive {
            d.negated()
        } else {
            d
        }
    }

    /// Drive for the scored run, warm-up included.
    pub fn drive(&self, p: &Pipeline) -> Result<Drive> {
        let len = p.samples_for(p.warmup_s + self.scored_duration());
        let kv = self.waveform().sample(p.circuit.fs, len);
        let base = self.load(p);
        let load = match self.kind {
            ScenarioKind::LoadStep => (0..len)
                .map(|i| {
                    if i as f64 / p.circuit.fs < self.t_step_s {
                        base
                    } else {
                        self.load_after_n
                    }
                })
                .collect(),
            _ => vec![base; len],
        };
        Ok(self.polarity(Drive::new(kv, load)?))
    }

    /// Drive for the calibration pass, or `None` when it equals the scored
    /// drive.
    pub fn calibration_drive(&self, p: &Pipeline) -> Result<Option<Drive>> {
        if self.kind != ScenarioKind::LoadStep {
            return Ok(None);
        }
        let len = p.samples_for(p.warmup_s + self.calib_duration_s);
        let d = Drive::from_waveform(&self.calibration_waveform(), self.load(p), p.circuit.fs, len)?;
        Ok(Some(self.polarity(d)))
    }

    pub fn eval_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

/// Closure values and processing decisions, for report metadata.
pub fn pipeline_metadata(p: &Pipeline) -> Vec<(String, String)> {
    let a = &p.actuator;
    let c = &p.circuit;
    let r = &c.ripple;
    let mut m: Vec<(String, String)> = [
        ("actuator.c_full", a.c_full),
        ("actuator.c_empty", a.c_empty),
        ("actuator.q_max", a.q_max),
        ("actuator.r_e", a.r_e),
        ("actuator.mass", a.mass),
        ("actuator.stiffness", a.stiffness),
        ("actuator.damping", a.damping),
        ("actuator.k_f", a.k_f),
        ("actuator.tau_c", a.tau_c),
        ("actuator.c_couple", a.c_couple),
        ("actuator.retention_frac", a.retention_frac),
        ("actuator.retention_tau", a.retention_tau),
        ("circuit.r_n", c.r_n),
        ("circuit.r_c", c.r_c),
        ("circuit.r_k", c.r_k),
        ("circuit.f_sense", c.f_sense),
        ("circuit.a_sense", c.a_sense),
        ("circuit.fs", c.fs),
        ("circuit.cmrr_db", c.cmrr_db),
        ("noise.tone_hz", r.tone_hz),
        ("noise.tone_v", r.tone_v),
        ("noise.white_v", r.white_v),
        ("noise.ref_kv", r.ref_kv),
        ("noise.c_hv", r.c_hv),
        ("noise.floor_v", r.floor_v),
        ("estimation.vc_floor", p.vc_floor),
        ("calibration.tie_tolerance", p.dual.tie_tolerance),
        ("calibration.warmup_s", p.warmup_s),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), format!("{v:e}")))
    .collect();
    let text = [
        ("actuator.origin", "model closure values, not measured actuator data".to_string()),
        ("noise.enabled", p.noise_on.to_string()),
        ("noise.origin", "ripple amplitudes fitted to target RMS values".into()),
        ("circuit.legacy_sine", c.legacy_sine.to_string()),
        ("estimation.window", p.window.to_string()),
        ("estimation.windows", "non-overlapping, trailing partial window dropped".into()),
        ("estimation.smoothing", p.smoothing.to_string()),
        ("calibration.slope_window", p.dual.slope_window.to_string()),
        (
            "calibration.tie_rule",
            if p.dual.hold_last_on_tie {
                "hold previous phase"
            } else {
                "treat tie as rising"
            }
            .into(),
        ),
        ("calibration.truth_alignment", "truth averaged over each RMS window".into()),
        ("evaluation.nrmse", "RMSE / (max(truth) - min(truth))".into()),
        ("evaluation.phase", "single-bin DFT over whole periods".into()),
    ];
    m.extend(text.into_iter().map(|(k, v)| (k.to_string(), v)));
    m
}

fn scenario_metadata(p: &Pipeline, s: &Scenario) -> Vec<(String, String)> {
    let mut m = pipeline_metadata(p);
    m.push(("scenario.kind".into(), s.kind.to_string()));
    m.push(("scenario.calibration_seed".into(), s.seed.to_string()));
    m.push(("scenario.evaluation_seed".into(), s.eval_seed().to_string()));
    m.push(("scenario.scored_duration_s".into(), format!("{:e}", s.scored_duration())));
    m
}

/// Estimates from one (method, mapping) pair on the scored run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub map: CalibrationMap,
    pub features: FeatureStream,
    pub estimate: Vec<f64>,
}

/// Everything a scenario produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    /// Window-averaged truth for the scored run, warm-up removed.
    pub truth: Vec<f64>,
    pub reports: Vec<EvalReport>,
    pub runs: Vec<MethodRun>,
}

fn steady_error(p: &Pipeline, s: &Scenario, truth: &[f64], est: &[f64]) -> f64 {
    let n = (s.settle_window_s * p.rms().rate()).round() as usize;
    let n = n.clamp(1, truth.len());
    let tail = truth.len() - n;
    (mean(&est[tail..]) - mean(&truth[tail..])).abs() / p.actuator.q_max
}

/// Run a scenario for every combination of `methods` and `mappings`.
///
/// Calibration uses noise seed `seed`, scoring uses `seed + 1`; the
/// actuation is identical unless the scenario defines its own calibration
/// drive.
pub fn evaluate(
    p: &Pipeline,
    s: &Scenario,
    methods: &[FeatureKind],
    mappings: &[Mapping],
) -> Result<ScenarioRun> {
    p.validate()?;
    s.validate()?;
    let drive = s.drive(p)?;
    let traj = p.trajectory(&drive)?;
    let cal_drive = s.calibration_drive(p)?;
    let cal_traj = match &cal_drive {
        Some(d) => Some(p.trajectory(d)?),
        None => None,
    };
    let frame = p.frame(&traj, &drive, s.eval_seed())?;
    let cal_frame = p.frame(
        cal_traj.as_ref().unwrap_or(&traj),
        cal_drive.as_ref().unwrap_or(&drive),
        s.seed,
    )?;
    let cal_q = &cal_traj.as_ref().unwrap_or(&traj).q;

    let mut truth = Vec::new();
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for &kind in methods {
        let cal = p.observe(&cal_frame, cal_q, kind)?;
        let obs = p.observe(&frame, &traj.q, kind)?;
        for &mapping in mappings {
            let map = p.fit(&cal, mapping)?;
            let estimate = p.estimate(&map, &obs.features, p.clamp())?;
            let score = nrmse(&estimate, &obs.truth).stage(Stage::Evaluation)?;
            let phase_deg = match s.phase_freq() {
                Some(f) => Some(phase_lag(&estimate, &obs.truth, obs.features.rate, f).stage(Stage::Evaluation)?),
                None => None,
            };
            let mut extra = vec![("calibration_samples".into(), cal.truth.len() as f64)];
            if s.kind == ScenarioKind::LoadStep {
                extra.push(("steady_error_frac".into(), steady_error(p, s, &obs.truth, &estimate)));
            }
            let mut metadata = scenario_metadata(p, s);
            metadata.push(("scenario.method".into(), kind.to_string()));
            reports.push(EvalReport {
                scenario: s.name.clone(),
                method: kind,
                mapping,
                freq_hz: s.phase_freq(),
                nrmse: score,
                phase_deg,
                seed: s.seed,
                channels: Vec::new(),
                extra,
                metadata,
            });
            runs.push(MethodRun {
                map,
                features: obs.features.clone(),
                estimate,
            });
        }
        truth = obs.truth;
    }
    Ok(ScenarioRun { truth, reports, runs })
}

/// Run a scenario with its own method and mapping.
pub fn run_scenario(p: &Pipeline, s: &Scenario) -> Result<ScenarioRun> {
    evaluate(p, s, &[s.method], &[s.mapping])
}

/// Fit the scenario's calibration pass only.
pub fn calibrate(p: &Pipeline, s: &Scenario) -> Result<(CalibrationMap, Observation)> {
    p.validate()?;
    s.validate()?;
    let drive = match s.calibration_drive(p)? {
        Some(d) => d,
        None => s.drive(p)?,
    };
    let traj = p.trajectory(&drive)?;
    let frame = p.frame(&traj, &drive, s.seed)?;
    let obs = p.observe(&frame, &traj.q, s.method)?;
    let map = p.fit(&obs, s.mapping)?;
    Ok((map, obs))
}

/// Sine scenarios at each frequency, scored for every method and mapping.
/// Each runs for at least `MIN_PERIODS` periods and at least the base
/// scenario's duration.
pub fn run_sweep(
    p: &Pipeline,
    base: &Scenario,
    freqs: &[f64],
    methods: &[FeatureKind],
    mappings: &[Mapping],
) -> Result<Vec<EvalReport>> {
    let per_freq: Vec<Vec<EvalReport>> = freqs
        .par_iter()
        .map(|&f| {
            let s = Scenario {
                kind: ScenarioKind::Sine,
                freq_hz: f,
                duration_s: (MIN_PERIODS / f).max(base.duration_s),
                ..base.clone()
            };
            evaluate(p, &s, methods, mappings).map(|r| r.reports)
        })
        .collect::<Result<_>>()?;
    Ok(per_freq.into_iter().flatten().collect())
}

/// Settings of the ripple-only measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBenchConfig {
    pub drive_kv: f64,
    pub duration_s: f64,
    /// Fit the coupling capacitances to the targets before measuring.
    pub fit: bool,
    pub target_vk_v: f64,
    pub target_vc_v: f64,
}

impl Default for NoiseBenchConfig {
    fn default() -> Self {
        Self {
            drive_kv: 4.8,
            duration_s: 1.0,
            fit: true,
            target_vk_v: 0.6186,
            target_vc_v: 1.382,
        }
    }
}

/// RMS noise on each measurement with no sensing signal applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBench {
    pub rms_vh: f64,
    pub rms_vc: f64,
    pub rms_vk: f64,
    /// RMS(v_h) with perfect common-mode rejection.
    pub rms_vh_ideal: f64,
    pub floor_v: f64,
    pub c_couple: f64,
    pub c_hv: f64,
}

impl NoiseBench {
    /// RMS(v_k) / RMS(v_h).
    pub fn reduction(&self) -> f64 {
        self.rms_vk / self.rms_vh
    }
}

pub fn run_noise_bench(p: &Pipeline, cfg: &NoiseBenchConfig, seed: u64, negate: bool) -> Result<NoiseBench> {
    p.validate()?;
    if !(cfg.duration_s > 0.0) {
        return Err(Error::invalid("noise.bench_duration_s must be > 0"));
    }
    Waveform::Constant { kv: cfg.drive_kv }.validate()?;
    let len = p.samples_for(cfg.duration_s);
    let mut drive = Drive::from_waveform(
        &Waveform::Constant { kv: cfg.drive_kv },
        p.actuator.load_weight(),
        p.circuit.fs,
        len,
    )?;
    if negate {
        drive = drive.negated();
    }
    let traj = p.trajectory(&drive)?;
    let mut circuit = p.circuit.clone();
    circuit.ripple.seed = seed;
    let mut c_couple = p.actuator.c_couple;
    if cfg.fit {
        let fit = calibrate_coupling(&circuit, cfg.drive_kv, len, cfg.target_vk_v, cfg.target_vc_v)
            .stage(Stage::Circuit)?;
        c_couple = fit.c_couple;
        circuit.ripple.c_hv = fit.c_hv;
    }
    let v_in = SignalTrace::zeros(len, circuit.fs).stage(Stage::Circuit)?;
    let inputs = SensingInputs {
        c_e: &traj.c_e,
        v_in: &v_in,
        drive_kv: &drive.kv,
        r_e: p.actuator.r_e,
        c_couple,
    };
    let frame = simulate_sensing_path(&inputs, &circuit, true).stage(Stage::Circuit)?;
    let ideal = {
        let mut c = circuit.clone();
        c.cmrr_db = f64::INFINITY;
        simulate_sensing_path(&inputs, &c, true).stage(Stage::Circuit)?
    };
    Ok(NoiseBench {
        rms_vh: frame.v_h.rms(),
        rms_vc: frame.v_c.rms(),
        rms_vk: frame.v_k.rms(),
        rms_vh_ideal: ideal.v_h.rms(),
        floor_v: circuit.ripple.floor_v,
        c_couple,
        c_hv: circuit.ripple.c_hv,
    })
}

/// Multiplexed run over several actuators, each with its own map.
#[derive(Debug, Clone, PartialEq)]
pub struct MuxDemo {
    pub run: MuxRun,
    pub report: EvalReport,
}

/// Actuation frequency of mux channel `c` (Hz).
pub fn mux_channel_freq(base_hz: f64, channel: usize) -> f64 {
    base_hz * (1.0 + 0.5 * channel as f64)
}

/// Drive each of `plan.n_channels` actuators with its own sine, calibrate
/// each channel at the full window rate, then score the multiplexed run.
pub fn run_mux_demo(p: &Pipeline, s: &Scenario, plan: &MuxPlan) -> Result<MuxDemo> {
    p.validate()?;
    plan.validate().stage(Stage::Mux)?;
    let channels: Vec<Scenario> = (0..plan.n_channels)
        .map(|c| Scenario {
            name: format!("{}/ch{c}", s.name),
            kind: ScenarioKind::Sine,
            freq_hz: mux_channel_freq(s.freq_hz, c),
            seed: s.seed.wrapping_add(2 * c as u64),
            ..s.clone()
        })
        .collect();
    for ch in &channels {
        ch.validate()?;
    }

    struct Prepared {
        map: CalibrationMap,
        frame: crate::circuit::SensingFrame,
        truth: Vec<f64>,
    }
    let prepared: Vec<Prepared> = channels
        .par_iter()
        .map(|ch| {
            let drive = ch.drive(p)?;
            let traj = p.trajectory(&drive)?;
            let cal_frame = p.frame(&traj, &drive, ch.seed)?;
            let cal = p.observe(&cal_frame, &traj.q, ch.method)?;
            let map = p.fit(&cal, ch.mapping)?;
            let frame = p.frame(&traj, &drive, ch.eval_seed())?;
            Ok(Prepared {
                map,
                frame,
                truth: p.truth_windows(&traj.q),
            })
        })
        .collect::<Result<_>>()?;

    let frames: Vec<&crate::circuit::SensingFrame> = prepared.iter().map(|c| &c.frame).collect();
    let maps: Vec<CalibrationMap> = prepared.iter().map(|c| c.map).collect();
    let spec = FeatureSpec {
        rms: p.rms(),
        kind: s.method,
        r_c: p.circuit.r_c,
        vc_floor: p.vc_floor,
    };
    let run = step_mux(plan, &frames, &maps, &spec, p.clamp()).stage(Stage::Mux)?;

    let warm = p.warmup_windows();
    let mut channel_reports = Vec::with_capacity(plan.n_channels);
    for (c, prep) in prepared.iter().enumerate() {
        let (est, tru): (Vec<f64>, Vec<f64>) = run
            .fresh(c)
            .filter(|e| e.window >= warm)
            .map(|e| (e.displacement, prep.truth[e.window]))
            .unzip();
        channel_reports.push(ChannelReport {
            channel: c,
            label: format!("ch{c}"),
            nrmse: nrmse(&est, &tru).stage(Stage::Evaluation)?,
            update_rate_hz: run.update_rate(c),
        });
    }
    let mean_nrmse = mean(&channel_reports.iter().map(|c| c.nrmse).collect::<Vec<_>>());
    let mut metadata = scenario_metadata(p, s);
    metadata.extend([
        ("mux.n_channels".into(), plan.n_channels.to_string()),
        ("mux.slot_windows".into(), plan.slot_windows.to_string()),
        ("mux.settle_windows".into(), plan.settle_windows.to_string()),
        ("mux.nrmse".into(), "mean of per-channel NRMSE over fresh estimates".into()),
    ]);
    let expected_rate = plan.channel_rate(p.rms().rate());
    let report = EvalReport {
        scenario: s.name.clone(),
        method: s.method,
        mapping: s.mapping,
        freq_hz: None,
        nrmse: mean_nrmse,
        phase_deg: None,
        seed: s.seed,
        channels: channel_reports,
        extra: vec![("expected_update_rate_hz".into(), expected_rate)],
        metadata,
    };
    Ok(MuxDemo { run, report })
}

