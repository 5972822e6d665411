use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Root-mean-square error normalised by the range of `truth`.
pub fn nrmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::mismatch(format!(
            "estimate has {} samples but truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::domain("nrmse needs at least two samples"));
    }
    let (lo, hi) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::domain("truth is constant; nrmse is undefined"));
    }
    let sse: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    let rmse = (sse / truth.len() as f64).sqrt();
    if !rmse.is_finite() {
        return Err(Error::NonFinite("estimate"));
    }
    Ok(rmse / range)
}

/// Fraction of the stream's AC RMS the tested tone must carry before its
/// phase is trusted.
const TONE_FLOOR: f64 = 0.1;

/// Complex amplitude of the `f` component of `x` sampled at `rate`, after
/// removing the mean, projected under a Hann window to keep the negative
/// frequency image from leaking into the bin. Also returns the AC RMS of `x`.
fn tone(x: &[f64], rate: f64, f: f64) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let w = 2.0 * PI * f / rate;
    let (mut re, mut im, mut ss, mut wsum) = (0.0, 0.0, 0.0, 0.0);
    for (k, &v) in x.iter().enumerate() {
        let d = v - mean;
        let hann = 0.5 * (1.0 - (2.0 * PI * k as f64 / n).cos());
        let (s, c) = (w * k as f64).sin_cos();
        re += hann * d * c;
        im -= hann * d * s;
        ss += d * d;
        wsum += hann;
    }
    (2.0 * re / wsum, 2.0 * im / wsum, (ss / n).sqrt())
}

/// Phase lag of `estimate` behind `truth` at `f_act`, in degrees wrapped to
/// (−180, 180]. Positive means the estimate lags.
///
/// Both streams share `rate`. They are cut to a whole number of `f_act`
/// periods and projected onto a single Fourier bin.
pub fn phase_lag(estimate: &[f64], truth: &[f64], rate: f64, f_act: f64) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::mismatch(format!(
            "estimate has {} samples but truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    if !(rate > 0.0 && f_act > 0.0) {
        return Err(Error::domain("rate and frequency must be > 0"));
    }
    let periods = (truth.len() as f64 * f_act / rate).floor();
    if periods < 5.0 {
        return Err(Error::domain(format!(
            "phase lag needs at least 5 periods of {f_act} Hz, got {periods}"
        )));
    }
    let m = ((periods * rate / f_act).round() as usize).min(truth.len());

    let mut phase = [0.0; 2];
    for (slot, (name, x)) in [("truth", &truth[..m]), ("estimate", &estimate[..m])]
        .into_iter()
        .enumerate()
    {
        let (re, im, ac) = tone(x, rate, f_act);
        let amp = re.hypot(im);
        if !(amp > 0.0) || amp < TONE_FLOOR * ac * std::f64::consts::SQRT_2 {
            return Err(Error::BelowNoiseFloor(format!(
                "{f_act} Hz component of {name} (amplitude {amp:.3e}) is buried in the rest of the signal (AC RMS {ac:.3e})"
            )));
        }
        phase[slot] = im.atan2(re);
    }
    let mut lag = (phase[0] - phase[1]).to_degrees();
    while lag <= -180.0 {
        lag += 360.0;
    }
    while lag > 180.0 {
        lag -= 360.0;
    }
    Ok(lag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize, rate: f64, f: f64, delay: f64) -> Vec<f64> {
        (0..n)
            .map(|k| (2.0 * PI * f * (k as f64 / rate - delay)).sin() + 3.0)
            .collect()
    }

    #[test]
    fn nrmse_of_offset_is_offset_over_range() {
        let truth: Vec<f64> = (0..100).map(|i| i as f64 * 0.02).collect();
        let est: Vec<f64> = truth.iter().map(|t| t + 0.05).collect();
        let range = truth[99] - truth[0];
        assert!((nrmse(&est, &truth).unwrap() - 0.05 / range).abs() < 1e-15);
        assert_eq!(nrmse(&truth, &truth).unwrap(), 0.0);
        assert!(nrmse(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(nrmse(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn quarter_period_delay_is_ninety_degrees() {
        let (rate, f) = (500.0, 2.0);
        let truth = sine(2000, rate, f, 0.0);
        let est = sine(2000, rate, f, 0.25 / f);
        assert!((phase_lag(&est, &truth, rate, f).unwrap() - 90.0).abs() < 1e-9);
        assert!(phase_lag(&truth, &truth, rate, f).unwrap().abs() < 1e-12);
        // leading estimate
        let lead = sine(2000, rate, f, -0.1 / f);
        assert!((phase_lag(&lead, &truth, rate, f).unwrap() + 36.0).abs() < 1e-9);
    }

    #[test]
    fn phase_lag_needs_periods_and_signal() {
        let truth = sine(400, 500.0, 2.0, 0.0);
        assert!(phase_lag(&truth, &truth, 500.0, 2.0).is_err());
        let flat = vec![1.0; 2000];
        let truth = sine(2000, 500.0, 2.0, 0.0);
        assert!(matches!(
            phase_lag(&flat, &truth, 500.0, 2.0),
            Err(Error::BelowNoiseFloor(_))
        ));
    }
}
