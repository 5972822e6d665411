//! Lumped electro-mechanical model of one F-HASEL actuator.
//!
//! The HV electrodes pull the pouch together with a force quadratic in the
//! driving voltage; a linear spring, viscous damper and the external tensile
//! load oppose it. The LV sensing electrodes see a capacitance that falls
//! affinely with contraction and follows the geometry with a first-order lag
//! (`tau_c`), which stands in for fluid redistribution inside the pouch and
//! is what produces the rate-dependent hysteresis between displacement and
//! the sensed capacitance.
//!
//! Displacement `q` is contraction: 0 is the relaxed (fully extended) pouch,
//! `q_max` the full stroke. A larger tensile load lowers `q`.

use crate::error::{ensure_finite, Error, Result};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.806_65;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    /// Sensing-electrode capacitance at q = 0 (F).
    pub c_full: f64,
    /// Sensing-electrode capacitance at q = q_max (F).
    pub c_empty: f64,
    /// Full stroke (m).
    pub q_max: f64,
    /// Electrode series resistance (Ω).
    pub r_e: f64,
    /// Suspended load mass (kg).
    pub mass: f64,
    /// Restoring stiffness (N/m).
    pub stiffness: f64,
    /// Viscous damping (N·s/m).
    pub damping: f64,
    /// Electrostatic force coefficient (N/kV²).
    pub k_f: f64,
    /// Capacitance lag time constant (s). 0 disables the lag.
    pub tau_c: f64,
    /// Parasitic HV→LV coupling capacitance per sensing node (F).
    pub c_couple: f64,
    /// Charge-retention hook: fraction of the drive retained as residual
    /// voltage. 0 (default) disables it.
    pub retention_frac: f64,
    /// Charge-retention time constant (s).
    pub retention_tau: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        let mut p = Self {
            c_full: 200e-12,
            c_empty: 50e-12,
            q_max: 6e-3,
            r_e: 100e3,
            mass: 0.0478,
            stiffness: 300.0,
            damping: 6.0,
            k_f: 0.0,
            tau_c: 1.2e-3,
            c_couple: 2.06e-12,
            retention_frac: 0.0,
            retention_tau: 0.0,
        };
        p.k_f = balance_force_coefficient(&p, DEFAULT_TARGET_KV, p.load_weight(), DEFAULT_TARGET_FRACTION * p.q_max);
        p
    }
}

/// Default static operating point used to derive `k_f`: 4 kV with the
/// 47.8 g load sits at 60 % of the stroke.
pub const DEFAULT_TARGET_KV: f64 = 4.0;
pub const DEFAULT_TARGET_FRACTION: f64 = 0.6;

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_full", self.c_full),
            ("c_empty", self.c_empty),
            ("q_max", self.q_max),
            ("r_e", self.r_e),
            ("mass", self.mass),
            ("stiffness", self.stiffness),
            ("damping", self.damping),
            ("k_f", self.k_f),
            ("tau_c", self.tau_c),
            ("c_couple", self.c_couple),
            ("retention_frac", self.retention_frac),
            ("retention_tau", self.retention_tau),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("actuator.{name} must be finite")));
            }
            if v < 0.0 {
                return Err(Error::invalid(format!("actuator.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.c_empty > 0.0 && self.c_full > self.c_empty) {
            return Err(Error::invalid(format!(
                "need c_full > c_empty > 0, got c_full = {}, c_empty = {}",
                self.c_full, self.c_empty
            )));
        }
        if self.q_max <= 0.0 {
            return Err(Error::invalid("actuator.q_max must be > 0"));
        }
        if self.r_e <= 0.0 {
            return Err(Error::invalid("actuator.r_e must be > 0"));
        }
        if self.mass == 0.0 && self.damping == 0.0 {
            return Err(Error::invalid("actuator needs mass > 0 or damping > 0"));
        }
        if self.retention_frac > 0.0 && self.retention_tau <= 0.0 {
            return Err(Error::invalid("retention_tau must be > 0 when retention is enabled"));
        }
        Ok(())
    }

    /// Weight of the suspended mass (N).
    pub fn load_weight(&self) -> f64 {
        self.mass * GRAVITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorState {
    /// Contraction (m).
    pub q: f64,
    /// Contraction rate (m/s).
    pub q_dot: f64,
    /// Sensing-electrode capacitance (F).
    pub c_e: f64,
    /// Simulation time (s).
    pub t: f64,
    /// Residual voltage from the retention hook (kV).
    pub retained_kv: f64,
}

impl ActuatorState {
    /// Relaxed actuator at rest.
    pub fn relaxed(params: &ActuatorParams) -> Self {
        Self {
            q: 0.0,
            q_dot: 0.0,
            c_e: params.c_full,
            t: 0.0,
            retained_kv: 0.0,
        }
    }

    /// At rest in static equilibrium under constant drive and load, with the
    /// capacitance settled.
    pub fn at_equilibrium(v_d: f64, f_ext: f64, params: &ActuatorParams) -> Result<Self> {
        let q = static_displacement(v_d, f_ext, params)?;
        Ok(Self {
            q,
            q_dot: 0.0,
            c_e: capacitance_of_displacement(q, params)?,
            t: 0.0,
            retained_kv: 0.0,
        })
    }

    /// Mechanical energy relative to q = 0 at rest (J).
    pub fn mechanical_energy(&self, params: &ActuatorParams) -> f64 {
        0.5 * params.mass * self.q_dot * self.q_dot + 0.5 * params.stiffness * self.q * self.q
    }
}

/// Affine capacitance map: `c_full` relaxed, `c_empty` at full stroke.
pub fn capacitance_of_displacement(q: f64, params: &ActuatorParams) -> Result<f64> {
    if !(0.0..=params.q_max).contains(&q) {
        return Err(Error::domain(format!(
            "displacement {q} m outside [0, {}]",
            params.q_max
        )));
    }
    let s = q / params.q_max;
    Ok(params.c_full * (1.0 - s) + params.c_empty * s)
}

/// Inverse of [`capacitance_of_displacement`].
pub fn displacement_of_capacitance(c_e: f64, params: &ActuatorParams) -> Result<f64> {
    if !(params.c_empty..=params.c_full).contains(&c_e) {
        return Err(Error::domain(format!(
            "capacitance {c_e} F outside [{}, {}]",
            params.c_empty, params.c_full
        )));
    }
    Ok(params.q_max * (params.c_full - c_e) / (params.c_full - params.c_empty))
}

/// Zipping force (N) for a drive of `v_d` kV. Even in `v_d`.
pub fn electrostatic_force(v_d: f64, params: &ActuatorParams) -> f64 {
    params.k_f * (v_d * v_d)
}

/// Static contraction under constant drive and tensile load, clamped to the
/// stroke.
pub fn static_displacement(v_d: f64, f_ext: f64, params: &ActuatorParams) -> Result<f64> {
    ensure_finite(v_d, "drive voltage")?;
    ensure_finite(f_ext, "external force")?;
    let net = electrostatic_force(v_d, params) - f_ext;
    let q = if params.stiffness > 0.0 {
        net / params.stiffness
    } else if net > 0.0 {
        params.q_max
    } else {
        0.0
    };
    Ok(q.clamp(0.0, params.q_max))
}

/// Closed-form `k_f` from the static balance `k_f·v² = stiffness·q + f_ext`,
/// valid when `q` lies inside the stroke.
pub fn balance_force_coefficient(params: &ActuatorParams, v_kv: f64, f_ext: f64, q: f64) -> f64 {
    (params.stiffness * q + f_ext) / (v_kv * v_kv)
}

/// Find the force coefficient that puts the static equilibrium under
/// `v_kv` and tensile load `f_ext` at contraction `target_q`, by bisection on
/// the static balance.
pub fn calibrate_force_coefficient(
    params: &ActuatorParams,
    v_kv: f64,
    f_ext: f64,
    target_q: f64,
) -> Result<f64> {
    if !(target_q > 0.0 && target_q < params.q_max) {
        return Err(Error::domain(format!(
            "target displacement {target_q} m must lie strictly inside (0, {})",
            params.q_max
        )));
    }
    if v_kv == 0.0 || !v_kv.is_finite() {
        return Err(Error::domain("calibration voltage must be finite and non-zero"));
    }
    if params.stiffness <= 0.0 {
        return Err(Error::domain("force calibration needs stiffness > 0"));
    }
    let residual = |k_f: f64| -> Result<f64> {
        let p = ActuatorParams { k_f, ..*params };
        Ok(static_displacement(v_kv, f_ext, &p)? - target_q)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while residual(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::domain("force calibration failed to bracket a root"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Advance the actuator by `dt` under drive `v_d` (kV) and total external
/// tensile force `f_ext` (N).
///
/// The mechanics use the implicit midpoint rule, which for this linear
/// oscillator dissipates exactly `damping·dt·v̄²` per step. Contact with the
/// stroke limits is inelastic.
pub fn step_dynamics(
    state: &ActuatorState,
    v_d: f64,
    f_ext: f64,
    dt: f64,
    params: &ActuatorParams,
) -> Result<ActuatorState> {
    ensure_finite(v_d, "drive voltage")?;
    ensure_finite(f_ext, "external force")?;
    ensure_finite(dt, "time step")?;
    ensure_finite(state.q, "actuator state")?;
    ensure_finite(state.q_dot, "actuator state")?;
    ensure_finite(state.c_e, "actuator state")?;
    if dt <= 0.0 {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    if params.tau_c > 0.0 && dt > params.tau_c / 10.0 * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "time step {dt} s exceeds tau_c/10 = {} s",
            params.tau_c / 10.0
        )));
    }

    let retained_kv = if params.retention_frac > 0.0 {
        let a = 1.0 - (-dt / params.retention_tau).exp();
        state.retained_kv + a * (params.retention_frac * v_d - state.retained_kv)
    } else {
        state.retained_kv
    };
    let v_eff = v_d + retained_kv;

    let (m, k, c) = (params.mass, params.stiffness, params.damping);
    let drive = electrostatic_force(v_eff, params) - f_ext;
    let lhs = m + 0.25 * dt * dt * k + 0.5 * dt * c;
    let rhs_coef = m - 0.25 * dt * dt * k - 0.5 * dt * c;
    let mut q_dot = (rhs_coef * state.q_dot + dt * (drive - k * state.q)) / lhs;
    let mut q = state.q + 0.5 * dt * (state.q_dot + q_dot);
    if q < 0.0 {
        q = 0.0;
        q_dot = q_dot.max(0.0);
    } else if q > params.q_max {
        q = params.q_max;
        q_dot = q_dot.min(0.0);
    }

    let c_geom = capacitance_of_displacement(q, params)?;
    let c_e = if params.tau_c > 0.0 {
        let a = 1.0 - (-dt / params.tau_c).exp();
        (state.c_e + a * (c_geom - state.c_e)).clamp(params.c_empty, params.c_full)
    } else {
        c_geom
    };

    Ok(ActuatorState {
        q,
        q_dot,
        c_e,
        t: state.t + dt,
        retained_kv,
    })
}

/// Trajectory sampled at a fixed rate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActuatorTrajectory {
    pub q: Vec<f64>,
    pub c_e: Vec<f64>,
}

/// Run the model over sampled drive and load sequences. Sample `i` of the
/// output is the state after the step driven by sample `i` of the inputs.
pub fn simulate_trajectory(
    initial: ActuatorState,
    drive_kv: &[f64],
    f_ext: &[f64],
    dt: f64,
    params: &ActuatorParams,
) -> Result<ActuatorTrajectory> {
    if drive_kv.len() != f_ext.len() {
        return Err(Error::mismatch(format!(
            "drive has {} samples but load has {}",
            drive_kv.len(),
            f_ext.len()
        )));
    }
    let mut out = ActuatorTrajectory {
        q: Vec::with_capacity(drive_kv.len()),
        c_e: Vec::with_capacity(drive_kv.len()),
    };
    let mut s = initial;
    for (&v, &f) in drive_kv.iter().zip(f_ext) {
        s = step_dynamics(&s, v, f, dt, params)?;
        out.q.push(s.q);
        out.c_e.push(s.c_e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ActuatorParams {
        ActuatorParams::default()
    }

    #[test]
    fn capacitance_endpoints_and_midpoint() {
        let p = p();
        assert_eq!(capacitance_of_displacement(0.0, &p).unwrap(), p.c_full);
        assert_eq!(capacitance_of_displacement(p.q_max, &p).unwrap(), p.c_empty);
        let mid = capacitance_of_displacement(p.q_max / 2.0, &p).unwrap();
        assert!((mid - (p.c_full + p.c_empty) / 2.0).abs() < 1e-24);
        assert!(capacitance_of_displacement(-1e-9, &p).is_err());
        assert!(capacitance_of_displacement(p.q_max * 1.001, &p).is_err());
    }

    #[test]
    fn force_is_even_and_zero_at_zero() {
        let p = p();
        assert_eq!(electrostatic_force(0.0, &p), 0.0);
        assert_eq!(electrostatic_force(-4.0, &p), electrostatic_force(4.0, &p));
    }

    #[test]
    fn default_k_f_puts_four_kv_at_sixty_percent() {
        let p = p();
        let q = static_displacement(4.0, p.load_weight(), &p).unwrap();
        assert!((q / p.q_max - 0.6).abs() < 1e-12);
    }

    #[test]
    fn force_calibration_matches_closed_form_balance() {
        let p = p();
        let target = 0.45 * p.q_max;
        let k_f = calibrate_force_coefficient(&p, 4.0, p.load_weight(), target).unwrap();
        // k_f·V² = stiffness·q + m·g
        let closed = (p.stiffness * target + p.mass * GRAVITY) / 16.0;
        assert!((k_f - closed).abs() / closed < 1e-10, "{k_f} vs {closed}");
        assert!(calibrate_force_coefficient(&p, 4.0, 0.1, p.q_max).is_err());
    }

    #[test]
    fn zero_lag_tracks_geometry_exactly() {
        let p = ActuatorParams { tau_c: 0.0, ..p() };
        let mut s = ActuatorState::relaxed(&p);
        for i in 0..5000 {
            let v = 4.0 * (i as f64 * 1e-4).sin();
            s = step_dynamics(&s, v, p.load_weight(), 1e-5, &p).unwrap();
            assert_eq!(s.c_e, capacitance_of_displacement(s.q, &p).unwrap());
        }
    }

    #[test]
    fn settles_to_static_equilibrium() {
        let p = p();
        let mut s = ActuatorState::relaxed(&p);
        for _ in 0..200_000 {
            s = step_dynamics(&s, 4.0, p.load_weight(), 1e-5, &p).unwrap();
        }
        let q_eq = static_displacement(4.0, p.load_weight(), &p).unwrap();
        assert!(s.q_dot.abs() < 1e-9, "q_dot = {}", s.q_dot);
        assert!((s.q - q_eq).abs() < 1e-9);
    }

    #[test]
    fn load_step_extends_actuator() {
        let p = ActuatorParams { mass: 0.0138, ..p() };
        let mut s = ActuatorState::at_equilibrium(4.0, 0.135, &p).unwrap();
        let before = s.q;
        for _ in 0..200_000 {
            s = step_dynamics(&s, 4.0, 0.468, 1e-5, &p).unwrap();
        }
        // more tensile load, less contraction
        assert!(s.q < before);
        let expected = static_displacement(4.0, 0.468, &p).unwrap();
        assert!((s.q - expected).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_steps() {
        let p = p();
        let s = ActuatorState::relaxed(&p);
        assert!(step_dynamics(&s, f64::NAN, 0.0, 1e-5, &p).is_err());
        assert!(step_dynamics(&s, 1.0, f64::INFINITY, 1e-5, &p).is_err());
        assert!(step_dynamics(&s, 1.0, 0.0, 0.0, &p).is_err());
        // dt must resolve the capacitance lag
        assert!(step_dynamics(&s, 1.0, 0.0, p.tau_c / 5.0, &p).is_err());
    }

    #[test]
    fn validation_catches_inverted_capacitance() {
        let mut p = p();
        p.c_empty = p.c_full;
        assert!(p.validate().is_err());
        assert!(ActuatorParams::default().validate().is_ok());
    }

    #[test]
    fn retention_hook_leaves_residual_contraction() {
        let p = ActuatorParams {
            retention_frac: 0.5,
            retention_tau: 0.05,
            ..p()
        };
        let mut s = ActuatorState::relaxed(&p);
        for _ in 0..100_000 {
            s = step_dynamics(&s, 5.0, 0.0, 1e-5, &p).unwrap();
        }
        for _ in 0..1_000 {
            s = step_dynamics(&s, 0.0, 0.0, 1e-5, &p).unwrap();
        }
        assert!(s.retained_kv > 0.0);
        assert!(s.q > 0.0);
    }
}
