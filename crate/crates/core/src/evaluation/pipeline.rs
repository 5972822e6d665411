use std::f64::consts::PI;

use crate::actuator::{simulate_trajectory, ActuatorParams, ActuatorState, ActuatorTrajectory};
use crate::calibration::{fit_map, CalibrationMap, ClampRange, DualSettings, Estimator, Mapping};
use crate::circuit::{simulate_sensing_path, CircuitParams, SensingFrame, SensingInputs};
use crate::error::{Error, Result, Stage, StageExt};
use crate::estimation::{
    impedance_feature, moving_average, voltage_feature, window_means, windowed_rms, FeatureKind,
    FeatureStream, RmsConfig,
};

/// Highest drive the supply can deliver (kV).
pub const SUPPLY_CEILING_KV: f64 = 6.0;

/// Drive voltage shape (kV over time in s).
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Constant { kv: f64 },
    Sine { amplitude_kv: f64, offset_kv: f64, freq_hz: f64 },
    /// Alternates between `offset + amplitude` and `offset − amplitude`,
    /// starting high.
    Square { amplitude_kv: f64, offset_kv: f64, freq_hz: f64 },
    /// Segments played back to back, each with its own local clock.
    Sequence(Vec<(f64, Waveform)>),
}

impl Waveform {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { kv } => *kv,
            Waveform::Sine {
                amplitude_kv,
                offset_kv,
                freq_hz,
            } => offset_kv + amplitude_kv * (2.0 * PI * freq_hz * t).sin(),
            Waveform::Square {
                amplitude_kv,
                offset_kv,
                freq_hz,
            } => {
                if (t * freq_hz).fract() < 0.5 {
                    offset_kv + amplitude_kv
                } else {
                    offset_kv - amplitude_kv
                }
            }
            Waveform::Sequence(parts) => {
                let mut start = 0.0;
                for (len, w) in parts {
                    if t < start + len {
                        return w.at(t - start);
                    }
                    start += len;
                }
                parts.last().map_or(0.0, |(len, w)| w.at(t - (start - len)))
            }
        }
    }

    /// Largest |v| the waveform reaches.
    pub fn peak_kv(&self) -> f64 {
        match self {
            Waveform::Constant { kv } => kv.abs(),
            Waveform::Sine {
                amplitude_kv,
                offset_kv,
                ..
            }
            | Waveform::Square {
                amplitude_kv,
                offset_kv,
                ..
            } => (offset_kv + amplitude_kv.abs()).abs().max((offset_kv - amplitude_kv.abs()).abs()),
            Waveform::Sequence(parts) => parts.iter().map(|(_, w)| w.peak_kv()).fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let peak = self.peak_kv();
        if !peak.is_finite() {
            return Err(Error::invalid("drive waveform is not finite"));
        }
        if peak > SUPPLY_CEILING_KV {
            return Err(Error::invalid(format!(
                "drive peaks at {peak} kV, above the {SUPPLY_CEILING_KV} kV supply ceiling"
            )));
        }
        if let Waveform::Sequence(parts) = self {
            for (len, w) in parts {
                if !(*len > 0.0) {
                    return Err(Error::invalid("waveform segments need a positive length"));
                }
                w.validate()?;
            }
        }
        Ok(())
    }

    /// Sample at `fs` for `len` samples starting at t = 0.
    pub fn sample(&self, fs: f64, len: usize) -> Vec<f64> {
        (0..len).map(|i| self.at(i as f64 / fs)).collect()
    }
}

/// Drive voltage (kV) and total external tensile load (N), sampled at the
/// circuit rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub kv: Vec<f64>,
    pub load_n: Vec<f64>,
}

impl Drive {
    pub fn new(kv: Vec<f64>, load_n: Vec<f64>) -> Result<Self> {
        if kv.len() != load_n.len() {
            return Err(Error::mismatch(format!(
                "drive has {} samples but load has {}",
                kv.len(),
                load_n.len()
            )));
        }
        if kv.is_empty() {
            return Err(Error::domain("drive is empty"));
        }
        Ok(Self { kv, load_n })
    }

    /// Waveform under a constant load.
    pub fn from_waveform(w: &Waveform, load_n: f64, fs: f64, len: usize) -> Result<Self> {
        Self::new(w.sample(fs, len), vec![load_n; len])
    }

    pub fn len(&self) -> usize {
        self.kv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kv.is_empty()
    }

    /// Same drive with the polarity of every sample flipped.
    pub fn negated(&self) -> Self {
        Self {
            kv: self.kv.iter().map(|v| -v).collect(),
            load_n: self.load_n.clone(),
        }
    }
}

/// Windowed features paired with window-averaged truth, warm-up removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: FeatureStream,
    pub truth: Vec<f64>,
}

/// Everything needed to go from drive to estimate, except the drive itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub actuator: ActuatorParams,
    pub circuit: CircuitParams,
    pub noise_on: bool,
    /// Samples per RMS window.
    pub window: usize,
    pub vc_floor: f64,
    /// Causal moving average over this many features; 0 or 1 disables it.
    pub smoothing: usize,
    pub dual: DualSettings,
    /// Leading time excluded from calibration and scoring (s).
    pub warmup_s: f64,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self {
            actuator: ActuatorParams::default(),
            circuit: CircuitParams::default(),
            noise_on: true,
            window: 200,
            vc_floor: crate::estimation::DEFAULT_VC_FLOOR,
            smoothing: 0,
            dual: DualSettings::default(),
            warmup_s: 0.5,
        }
    }
}

impl Pipeline {
    pub fn validate(&self) -> Result<()> {
        self.actuator.validate().stage(Stage::Actuator)?;
        self.circuit.validate().stage(Stage::Circuit)?;
        self.rms().validate().stage(Stage::Estimation)?;
        self.dual.validate().stage(Stage::Calibration)?;
        if !(self.vc_floor >= 0.0) {
            return Err(Error::invalid("estimation.vc_floor must be >= 0"));
        }
        if !(self.warmup_s >= 0.0 && self.warmup_s.is_finite()) {
            return Err(Error::invalid("calibration.warmup_s must be >= 0"));
        }
        Ok(())
    }

    pub fn rms(&self) -> RmsConfig {
        RmsConfig {
            window: self.window,
            fs: self.circuit.fs,
            f_sense: self.circuit.f_sense,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.circuit.fs
    }

    /// Number of circuit samples covering `seconds`.
    pub fn samples_for(&self, seconds: f64) -> usize {
        (seconds * self.circuit.fs).round() as usize
    }

    pub fn warmup_windows(&self) -> usize {
        (self.warmup_s * self.rms().rate()).ceil() as usize
    }

    /// Output clamp for displacement estimates.
    pub fn clamp(&self) -> ClampRange {
        ClampRange::around_span(self.actuator.q_max)
    }

    /// Actuator response, starting from static equilibrium under the first
    /// drive and load samples.
    pub fn trajectory(&self, drive: &Drive) -> Result<ActuatorTrajectory> {
        let run = || {
            let start = ActuatorState::at_equilibrium(drive.kv[0], drive.load_n[0], &self.actuator)?;
            simulate_trajectory(start, &drive.kv, &drive.load_n, self.dt(), &self.actuator)
        };
        run().stage(Stage::Actuator)
    }

    /// Sensing-circuit response to a trajectory, with the noise seed `seed`.
    pub fn frame(&self, traj: &ActuatorTrajectory, drive: &Drive, seed: u64) -> Result<SensingFrame> {
        let run = || {
            let mut circuit = self.circuit.clone();
            circuit.ripple.seed = seed;
            let v_in = circuit.sensing_input(traj.c_e.len())?;
            let inputs = SensingInputs {
                c_e: &traj.c_e,
                v_in: &v_in,
                drive_kv: &drive.kv,
                r_e: self.actuator.r_e,
                c_couple: self.actuator.c_couple,
            };
            simulate_sensing_path(&inputs, &circuit, self.noise_on)
        };
        run().stage(Stage::Circuit)
    }

    /// Full-length feature stream of one kind.
    pub fn features(&self, frame: &SensingFrame, kind: FeatureKind) -> Result<FeatureStream> {
        let run = || {
            let cfg = self.rms();
            let vh = windowed_rms(&frame.v_h, &cfg)?;
            let stream = match kind {
                FeatureKind::Voltage => voltage_feature(vh),
                FeatureKind::Impedance => {
                    let vc = windowed_rms(&frame.v_c, &cfg)?;
                    impedance_feature(&vh, &vc, self.circuit.r_c, self.vc_floor)?
                }
            };
            Ok(if self.smoothing > 1 {
                moving_average(&stream, self.smoothing)
            } else {
                stream
            })
        };
        run().stage(Stage::Estimation)
    }

    /// Per-window means of a per-sample truth signal.
    pub fn truth_windows(&self, truth: &[f64]) -> Vec<f64> {
        window_means(truth, self.window)
    }

    /// Features paired with truth, warm-up removed.
    pub fn observe(&self, frame: &SensingFrame, truth: &[f64], kind: FeatureKind) -> Result<Observation> {
        let features = self.features(frame, kind)?;
        let truth = self.truth_windows(truth);
        let n = features.len().min(truth.len());
        let skip = self.warmup_windows().min(n);
        let trimmed = FeatureStream::new(
            features.values[skip..n].to_vec(),
            features.rate,
            kind,
            features.time_at(skip),
        )
        .stage(Stage::Estimation)?;
        Ok(Observation {
            features: trimmed,
            truth: truth[skip..n].to_vec(),
        })
    }

    pub fn fit(&self, obs: &Observation, mapping: Mapping) -> Result<CalibrationMap> {
        fit_map(
            &obs.features.values,
            &obs.truth,
            obs.features.kind,
            mapping,
            &self.dual,
        )
        .stage(Stage::Calibration)
    }

    pub fn estimate(&self, map: &CalibrationMap, features: &FeatureStream, clamp: ClampRange) -> Result<Vec<f64>> {
        if map.kind() != features.kind {
            return Err(Error::mismatch(format!(
                "map expects {} features but got {}",
                map.kind(),
                features.kind
            )))
            .stage(Stage::Calibration);
        }
        Estimator::new(*map, clamp)
            .run(&features.values)
            .stage(Stage::Calibration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waveform_shapes() {
        let s = Waveform::Sine {
            amplitude_kv: 1.0,
            offset_kv: 3.5,
            freq_hz: 2.0,
        };
        assert_eq!(s.at(0.0), 3.5);
        assert!((s.at(0.125) - 4.5).abs() < 1e-12);
        assert_eq!(s.peak_kv(), 4.5);

        let q = Waveform::Square {
            amplitude_kv: 2.0,
            offset_kv: 2.5,
            freq_hz: 0.5,
        };
        assert_eq!(q.at(0.1), 4.5);
        assert_eq!(q.at(1.5), 0.5);

        let seq = Waveform::Sequence(vec![(1.0, Waveform::Constant { kv: 1.0 }), (2.0, s.clone())]);
        assert_eq!(seq.at(0.5), 1.0);
        assert_eq!(seq.at(1.0), 3.5);
        assert!((seq.at(10.0) - s.at(8.0)).abs() < 1e-12);
        assert_eq!(seq.peak_kv(), 4.5);
    }

    #[test]
    fn supply_ceiling_enforced() {
        let w = Waveform::Sine {
            amplitude_kv: 2.0,
            offset_kv: 4.5,
            freq_hz: 1.0,
        };
        assert!(w.validate().unwrap_err().is_validation());
        assert!(Waveform::Constant { kv: -6.0 }.validate().is_ok());
    }

    #[test]
    fn negation_flips_only_drive() {
        let d = Drive::new(vec![1.0, -2.0], vec![0.1, 0.2]).unwrap();
        let n = d.negated();
        assert_eq!(n.kv, vec![-1.0, 2.0]);
        assert_eq!(n.load_n, d.load_n);
        assert!(Drive::new(vec![1.0], vec![]).is_err());
    }
}
