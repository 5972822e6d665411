//! Low-voltage sensing path of one F-HASEL.
//!
//! Series loop driven by the sensing sine `v_in`:
//!
//! ```text
//! v_in ── R_N ──A── R_E ── C_E ──B── R_C ── gnd
//!                 └──── v_h ─────┘  └ v_c ┘
//! ```
//!
//! The charge `Q` on `C_E` obeys `dQ/dt = (v_in − Q/C_E(t)) / (R_N + R_E + R_C)`
//! and is integrated with the trapezoidal rule in [`SUBSTEPS`] sub-steps per
//! sample. Between samples the input is Catmull–Rom interpolated and `C_E(t)`
//! (from the actuator model) linearly.
//!
//! With noise enabled, HV supply ripple couples through `c_couple` into both
//! sensing nodes. Because `R_N = R_C` the injected currents raise A and B by
//! the same amount, so the disturbance is purely common mode and reaches
//! `v_h` only through the instrumentation amplifier's finite CMRR, while
//! `v_c` (ground referenced) carries it in full. The legacy measurement
//! `v_k` sits in the HV return path and sees the ripple current through the
//! HV electrode capacitance directly.
//!
//! The coupling network's own time constant (`R·c_couple`, about 2 µs) is far
//! below the sample period, so the injected current is applied
//! quasi-statically.

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::trace::SignalTrace;

/// HV supply ripple and measurement noise.
///
/// Ripple voltage at drive `v_d` is `|v_d|/ref_kv · (tone + white)`: a
/// deterministic tone at the converter switching frequency plus seeded white
/// noise. Every measured channel also carries an independent white floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Switching tone frequency (Hz).
    pub tone_hz: f64,
    /// Tone amplitude at `ref_kv` (V).
    pub tone_v: f64,
    /// White ripple RMS at `ref_kv` (V).
    pub white_v: f64,
    /// Drive level the amplitudes refer to (kV).
    pub ref_kv: f64,
    /// HV electrode capacitance in the legacy R_K path (F).
    pub c_hv: f64,
    /// Broadband measurement floor on each channel (V RMS).
    pub floor_v: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            tone_hz: 30e3,
            tone_v: 5.0,
            white_v: 0.5,
            ref_kv: 4.8,
            c_hv: 92.2e-12,
            floor_v: 5e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// High-side series resistor (Ω).
    pub r_n: f64,
    /// Current-sense resistor (Ω).
    pub r_c: f64,
    /// Legacy HV-path sense resistor (Ω).
    pub r_k: f64,
    /// Sensing sine frequency (Hz).
    pub f_sense: f64,
    /// Sensing sine amplitude after the 1:2 input stage (V).
    pub a_sense: f64,
    /// Sample rate (Hz).
    pub fs: f64,
    /// Instrumentation amplifier CMRR (dB); `inf` for ideal rejection.
    pub cmrr_db: f64,
    /// Also drive the sensing sine through the legacy R_K path.
    pub legacy_sine: bool,
    pub ripple: NoiseModel,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            r_n: 1e6,
            r_c: 1e6,
            r_k: 10e3,
            f_sense: 2e3,
            a_sense: 10.0,
            fs: 100e3,
            cmrr_db: 32.0,
            legacy_sine: false,
            ripple: NoiseModel::default(),
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r_n", self.r_n), ("r_c", self.r_c), ("r_k", self.r_k)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("circuit.{name} must be > 0, got {v}")));
            }
        }
        if (self.r_n - self.r_c).abs() > 1e-9 * self.r_c {
            return Err(Error::invalid(format!(
                "circuit.r_n ({}) must equal circuit.r_c ({}) for common-mode rejection",
                self.r_n, self.r_c
            )));
        }
        if !(self.f_sense.is_finite() && self.f_sense > 0.0) {
            return Err(Error::invalid("circuit.f_sense must be > 0"));
        }
        if !(self.fs.is_finite() && self.fs >= 20.0 * self.f_sense) {
            return Err(Error::invalid(format!(
                "circuit.fs ({}) must be at least 20·f_sense ({})",
                self.fs,
                20.0 * self.f_sense
            )));
        }
        if !(self.a_sense.is_finite() && self.a_sense >= 0.0) {
            return Err(Error::invalid("circuit.a_sense must be >= 0"));
        }
        if self.cmrr_db.is_nan() || self.cmrr_db < 0.0 {
            return Err(Error::invalid("circuit.cmrr_db must be >= 0 (or inf)"));
        }
        let n = &self.ripple;
        for (name, v) in [
            ("tone_hz", n.tone_hz),
            ("tone_v", n.tone_v),
            ("white_v", n.white_v),
            ("c_hv", n.c_hv),
            ("floor_v", n.floor_v),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("noise.{name} must be >= 0, got {v}")));
            }
        }
        if !(n.ref_kv.is_finite() && n.ref_kv > 0.0) {
            return Err(Error::invalid("noise.ref_kv must be > 0"));
        }
        Ok(())
    }

    /// Total series resistance of the sensing loop excluding the electrode.
    pub fn r_loop(&self) -> f64 {
        self.r_n + self.r_c
    }

    /// Sensing sine sampled over `len` samples.
    pub fn sensing_input(&self, len: usize) -> Result<SignalTrace> {
        SignalTrace::sine(len, self.fs, self.f_sense, self.a_sense)
    }

    /// Linear CMRR leak factor `10^(−cmrr_db/20)`.
    pub fn cmrr_leak(&self) -> f64 {
        cmrr_leak(self.cmrr_db)
    }
}

fn cmrr_leak(cmrr_db: f64) -> f64 {
    if cmrr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-cmrr_db / 20.0)
    }
}

/// First-order low-pass corner of the sensing loop (Hz).
pub fn cutoff_frequency(r_series: f64, r_e: f64, c_e: f64) -> Result<f64> {
    if !(r_series > 0.0 && r_e > 0.0 && c_e > 0.0) {
        return Err(Error::domain(format!(
            "cutoff needs positive inputs, got r_series = {r_series}, r_e = {r_e}, c_e = {c_e}"
        )));
    }
    Ok(1.0 / (2.0 * PI * (r_series + r_e) * c_e))
}

/// Steady-state response of the series loop to a unit sine at `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorGains {
    /// |v_h| / |v_in|.
    pub gain_vh: f64,
    /// |v_c| / |v_in|.
    pub gain_vc: f64,
    /// Phase of v_h relative to v_in (rad).
    pub phase_vh: f64,
    /// Phase of v_c relative to v_in (rad).
    pub phase_vc: f64,
}

/// Electrode impedance `R_E + 1/(jωC_E)`.
pub fn electrode_impedance(f: f64, r_e: f64, c_e: f64) -> Complex<f64> {
    let w = 2.0 * PI * f;
    Complex::new(r_e, -1.0 / (w * c_e))
}

pub fn steady_state_gains(f: f64, params: &CircuitParams, r_e: f64, c_e: f64) -> PhasorGains {
    let z_e = electrode_impedance(f, r_e, c_e);
    let z_tot = z_e + Complex::new(params.r_n + params.r_c, 0.0);
    let h_vh = z_e / z_tot;
    let h_vc = Complex::new(params.r_c, 0.0) / z_tot;
    PhasorGains {
        gain_vh: h_vh.norm(),
        gain_vc: h_vc.norm(),
        phase_vh: h_vh.arg(),
        phase_vc: h_vc.arg(),
    }
}

/// Differential measurement with finite common-mode rejection:
/// `(v+ − v−) + 10^(−cmrr/20)·(v+ + v−)/2`.
pub fn instrumentation_amp(
    v_plus: &SignalTrace,
    v_minus: &SignalTrace,
    cmrr_db: f64,
) -> Result<SignalTrace> {
    v_plus.check_compatible(v_minus)?;
    let leak = cmrr_leak(cmrr_db);
    let out = v_plus
        .samples()
        .iter()
        .zip(v_minus.samples())
        .map(|(&p, &m)| ina(p, m, leak))
        .collect();
    SignalTrace::new(out, v_plus.fs(), v_plus.t0())
}

#[inline]
fn ina(p: f64, m: f64, leak: f64) -> f64 {
    (p - m) + leak * (p + m) * 0.5
}

/// Everything the sensing path needs from the actuator side.
#[derive(Debug, Clone, Copy)]
pub struct SensingInputs<'a> {
    /// Sensing-electrode capacitance per sample (F).
    pub c_e: &'a [f64],
    pub v_in: &'a SignalTrace,
    /// HV drive per sample (kV); only its magnitude matters.
    pub drive_kv: &'a [f64],
    /// Electrode series resistance (Ω).
    pub r_e: f64,
    /// HV→LV coupling capacitance per sensing node (F).
    pub c_couple: f64,
}

/// The three differential measurements, plus the loop charge for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingFrame {
    pub v_h: SignalTrace,
    pub v_c: SignalTrace,
    pub v_k: SignalTrace,
    /// Charge on `C_E` (C).
    pub charge: SignalTrace,
}

impl SensingFrame {
    pub fn len(&self) -> usize {
        self.v_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_h.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.v_h.fs()
    }
}

/// Per-sample noise draws, in a fixed order so runs are reproducible.
struct NoiseSource {
    rng: ChaCha8Rng,
    model: NoiseModel,
    fs: f64,
    w_prev: f64,
    n: usize,
}

struct NoiseSample {
    /// Ripple slew at `ref_kv` (V/s), before drive scaling.
    ripple_rate: f64,
    floor_h: f64,
    floor_c: f64,
    floor_k: f64,
}

impl NoiseSource {
    fn new(model: NoiseModel, fs: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        let w_prev = model.white_v * gauss(&mut rng);
        Self {
            rng,
            model,
            fs,
            w_prev,
            n: 0,
        }
    }

    fn next(&mut self) -> NoiseSample {
        let m = &self.model;
        let t = self.n as f64 / self.fs;
        self.n += 1;
        let wt = 2.0 * PI * m.tone_hz;
        let tone_rate = wt * m.tone_v * (wt * t).cos();
        let w: f64 = m.white_v * gauss(&mut self.rng);
        let white_rate = (w - self.w_prev) * self.fs;
        self.w_prev = w;
        let rng = &mut self.rng;
        let mut floor = || m.floor_v * gauss(rng);
        NoiseSample {
            ripple_rate: tone_rate + white_rate,
            floor_h: floor(),
            floor_c: floor(),
            floor_k: floor(),
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Trapezoidal sub-steps per sample. One step per sample warps the loop's
/// frequency response by about 0.13 % at 2 kHz / 100 kHz; eight bring that
/// down to 2e-5.
pub const SUBSTEPS: usize = 8;

/// Trapezoidal integrator for an RC loop with time-varying capacitance.
struct RcLoop {
    r_total: f64,
    h: f64,
    charge: f64,
    current: f64,
    started: bool,
}

impl RcLoop {
    fn new(r_total: f64, dt: f64) -> Self {
        Self {
            r_total,
            h: dt / SUBSTEPS as f64,
            charge: 0.0,
            current: 0.0,
            started: false,
        }
    }

    /// Advance one sample period. `v` holds the input at samples i−2..=i+1
    /// and is Catmull–Rom interpolated; `c` is interpolated linearly from
    /// sample i−1 to i. Returns (charge, current) at sample i.
    #[inline]
    fn step(&mut self, v: [f64; 4], c: (f64, f64)) -> (f64, f64) {
        if !self.started {
            self.started = true;
            self.current = (v[2] - self.charge / c.1) / self.r_total;
            return (self.charge, self.current);
        }
        let h2r = 0.5 * self.h / self.r_total;
        for j in 1..=SUBSTEPS {
            let (vs, cs) = if j == SUBSTEPS {
                (v[2], c.1)
            } else {
                let u = j as f64 / SUBSTEPS as f64;
                (catmull_rom(v, u), c.0 + (c.1 - c.0) * u)
            };
            self.charge = (self.charge + 0.5 * self.h * self.current + h2r * vs) / (1.0 + h2r / cs);
            self.current = (vs - self.charge / cs) / self.r_total;
        }
        (self.charge, self.current)
    }
}

#[inline]
fn catmull_rom(p: [f64; 4], u: f64) -> f64 {
    let [p0, p1, p2, p3] = p;
    0.5 * (2.0 * p1
        + u * ((p2 - p0) + u * ((2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) + u * (3.0 * (p1 - p2) + p3 - p0))))
}

const C_E_MIN: f64 = 1e-12;
const C_E_MAX: f64 = 1e-6;

/// Transient simulation of the sensing path.
pub fn simulate_sensing_path(
    inputs: &SensingInputs<'_>,
    params: &CircuitParams,
    noise_on: bool,
) -> Result<SensingFrame> {
    let n = inputs.v_in.len();
    if inputs.c_e.len() != n || inputs.drive_kv.len() != n {
        return Err(Error::mismatch(format!(
            "sensing inputs disagree in length: v_in {n}, c_e {}, drive {}",
            inputs.c_e.len(),
            inputs.drive_kv.len()
        )));
    }
    if (inputs.v_in.fs() - params.fs).abs() > 1e-9 * params.fs {
        return Err(Error::mismatch(format!(
            "v_in rate {} Hz differs from circuit rate {} Hz",
            inputs.v_in.fs(),
            params.fs
        )));
    }
    if let Some(c) = inputs
        .c_e
        .iter()
        .find(|c| !(C_E_MIN..=C_E_MAX).contains(*c))
    {
        return Err(Error::domain(format!("electrode capacitance {c} F outside [1 pF, 1 µF]")));
    }
    if !(inputs.r_e.is_finite() && inputs.r_e > 0.0) {
        return Err(Error::domain("electrode resistance must be > 0"));
    }
    if inputs.drive_kv.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("drive voltage"));
    }

    let dt = 1.0 / params.fs;
    let leak = params.cmrr_leak();
    let mut sense = RcLoop::new(params.r_n + inputs.r_e + params.r_c, dt);
    let mut legacy = RcLoop::new(params.r_k, dt);
    let mut noise = noise_on.then(|| NoiseSource::new(params.ripple, params.fs));

    let mut v_h = Vec::with_capacity(n);
    let mut v_c = Vec::with_capacity(n);
    let mut v_k = Vec::with_capacity(n);
    let mut charge = Vec::with_capacity(n);

    let vs = inputs.v_in.samples();
    for i in 0..n {
        let v = [vs[i.saturating_sub(2)], vs[i.saturating_sub(1)], vs[i], vs[(i + 1).min(n - 1)]];
        let c = inputs.c_e[i];
        let (q, cur) = sense.step(v, (inputs.c_e[i.saturating_sub(1)], c));
        charge.push(q);
        let diff = cur * inputs.r_e + q / c;
        let node_b = cur * params.r_c;

        let k_sig = if params.legacy_sine && params.ripple.c_hv > 0.0 {
            legacy.step(v, (params.ripple.c_hv, params.ripple.c_hv)).1 * params.r_k
        } else {
            0.0
        };

        match noise.as_mut() {
            None => {
                v_h.push(diff);
                v_c.push(node_b);
                v_k.push(k_sig);
            }
            Some(src) => {
                let s = src.next();
                let scale = inputs.drive_kv[i].abs() / params.ripple.ref_kv;
                let rate = scale * s.ripple_rate;
                let v_cm = params.r_c * inputs.c_couple * rate;
                let a = node_b + diff + v_cm;
                let b = node_b + v_cm;
                v_h.push(ina(a, b, leak) + s.floor_h);
                v_c.push(b + s.floor_c);
                v_k.push(k_sig + params.r_k * params.ripple.c_hv * rate + s.floor_k);
            }
        }
    }

    let fs = params.fs;
    let t0 = inputs.v_in.t0();
    Ok(SensingFrame {
        v_h: SignalTrace::new(v_h, fs, t0)?,
        v_c: SignalTrace::new(v_c, fs, t0)?,
        v_k: SignalTrace::new(v_k, fs, t0)?,
        charge: SignalTrace::new(charge, fs, t0)?,
    })
}

/// Coupling capacitances that reproduce target noise RMS values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingFit {
    /// HV→LV coupling per sensing node (F).
    pub c_couple: f64,
    /// HV electrode capacitance in the legacy path (F).
    pub c_hv: f64,
}

/// Solve for the coupling capacitances that give RMS(v_k) and RMS(v_c) equal
/// to the targets under a constant drive with no sensing signal. The noise
/// realisation is the one `simulate_sensing_path` draws for the same seed,
/// so the fit is exact for that seed.
pub fn calibrate_coupling(
    params: &CircuitParams,
    drive_kv: f64,
    len: usize,
    target_vk_rms: f64,
    target_vc_rms: f64,
) -> Result<CouplingFit> {
    if len == 0 {
        return Err(Error::domain("noise calibration needs at least one sample"));
    }
    let scale = drive_kv.abs() / params.ripple.ref_kv;
    let mut src = NoiseSource::new(params.ripple, params.fs);
    let (mut xx, mut xc, mut cc, mut xk, mut kk) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..len {
        let s = src.next();
        let x = scale * s.ripple_rate;
        xx += x * x;
        xc += x * s.floor_c;
        cc += s.floor_c * s.floor_c;
        xk += x * s.floor_k;
        kk += s.floor_k * s.floor_k;
    }
    let n = len as f64;
    // mean((a·x + f)²) = target² is quadratic in the gain a
    let solve = |xf: f64, ff: f64, target: f64| -> Result<f64> {
        let (qa, qb, qc) = (xx / n, 2.0 * xf / n, ff / n - target * target);
        let disc = qb * qb - 4.0 * qa * qc;
        if qa <= 0.0 || disc < 0.0 {
            return Err(Error::domain(format!(
                "noise target {target} V not reachable with this ripple model"
            )));
        }
        let a = (-qb + disc.sqrt()) / (2.0 * qa);
        if a < 0.0 {
            return Err(Error::domain(format!(
                "noise target {target} V lies below the measurement floor"
            )));
        }
        Ok(a)
    };
    let gain_c = solve(xc, cc, target_vc_rms)?;
    let gain_k = solve(xk, kk, target_vk_rms)?;
    Ok(CouplingFit {
        c_couple: gain_c / params.r_c,
        c_hv: gain_k / params.r_k,
    })
}
