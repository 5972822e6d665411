#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive};

use hasel_sense::circuit::{simulate_sensing_path, CircuitParams, SensingInputs};
use hasel_sense::trace::{rms, SignalTrace};

const PI_DIGITS: &str = "314159265358979323846264338327950288419716939937510582097494459";

fn pi_exact() -> BigRational {
    let num = BigInt::parse_bytes(PI_DIGITS.as_bytes(), 10).unwrap();
    let den = BigInt::from(10u8).pow(PI_DIGITS.len() as u32 - 1);
    BigRational::new(num, den)
}

fn exact(x: f64) -> BigRational {
    BigRational::from_f64(x).unwrap()
}

/// `1/(2π(r_s + r_e)c)` in exact rational arithmetic with π to 62 digits,
/// rounded to f64 once at the end.
pub fn cutoff_exact(r_series: f64, r_e: f64, c_e: f64) -> f64 {
    let two = BigRational::from_integer(BigInt::from(2));
    let denom = two * pi_exact() * (exact(r_series) + exact(r_e)) * exact(c_e);
    denom.recip().to_f64().unwrap()
}

/// `(|v_h|/|v_in|, |v_c|/|v_in|)` for the series loop, written out in real
/// arithmetic.
pub fn loop_gains(f: f64, r_n: f64, r_c: f64, r_e: f64, c_e: f64) -> (f64, f64) {
    let x = 1.0 / (2.0 * std::f64::consts::PI * f * c_e);
    let r_tot = r_n + r_c + r_e;
    let z_tot = (r_tot * r_tot + x * x).sqrt();
    let z_e = (r_e * r_e + x * x).sqrt();
    (z_e / z_tot, r_c / z_tot)
}

/// Noise-free steady-state RMS of `(v_h, v_c)` for a constant capacitance,
/// measured over whole sensing periods after the loop has settled.
pub fn simulated_steady_rms(p: &CircuitParams, r_e: f64, c_e: f64) -> (f64, f64) {
    let tau = (p.r_n + p.r_c + r_e) * c_e;
    let period = (p.fs / p.f_sense).round() as usize;
    let skip = ((12.0 * tau * p.fs).ceil() as usize).div_ceil(period) * period;
    let keep = 40 * period;
    let n = skip + keep;
    let v_in = SignalTrace::sine(n, p.fs, p.f_sense, p.a_sense).unwrap();
    let c = vec![c_e; n];
    let drive = vec![0.0; n];
    let inputs = SensingInputs {
        c_e: &c,
        v_in: &v_in,
        drive_kv: &drive,
        r_e,
        c_couple: 0.0,
    };
    let frame = simulate_sensing_path(&inputs, p, false).unwrap();
    (
        rms(&frame.v_h.samples()[skip..]),
        rms(&frame.v_c.samples()[skip..]),
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}
