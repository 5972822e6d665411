//! Round-robin multiplexing of one sensing front end across several actuators.
//!
//! Switching happens on RMS-window boundaries. Each channel owns a slot of
//! `slot_windows` windows per cycle; the first `settle_windows` of a slot are
//! discarded. Between its slots a channel's last estimate is held, and it is
//! flagged stale once it is older than a full cycle.

use std::io::Write;

use crate::calibration::{CalibrationMap, ClampRange, Estimator};
use crate::circuit::SensingFrame;
use crate::error::{Error, Result};
use crate::estimation::{impedance_magnitude, FeatureKind, RmsConfig};
use crate::trace::{rms, sig9};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuxPlan {
    pub n_channels: usize,
    /// RMS windows per slot.
    pub slot_windows: usize,
    /// Windows discarded at the start of each slot.
    pub settle_windows: usize,
    /// Channel visiting order within a cycle.
    pub order: Vec<usize>,
}

impl MuxPlan {
    /// Plain round robin 0, 1, …, n−1 with one window per slot.
    pub fn round_robin(n_channels: usize) -> Self {
        Self {
            n_channels,
            slot_windows: 1,
            settle_windows: 0,
            order: (0..n_channels).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::invalid("mux.n_channels must be >= 1"));
        }
        if self.slot_windows == 0 {
            return Err(Error::invalid("mux.slot_windows must be >= 1"));
        }
        if self.settle_windows >= self.slot_windows {
            return Err(Error::invalid(format!(
                "mux.settle_windows ({}) must be smaller than mux.slot_windows ({})",
                self.settle_windows, self.slot_windows
            )));
        }
        let mut seen = vec![false; self.n_channels];
        if self.order.len() != self.n_channels {
            return Err(Error::invalid("mux.order must list every channel exactly once"));
        }
        for &c in &self.order {
            if c >= self.n_channels || std::mem::replace(&mut seen[c], true) {
                return Err(Error::invalid("mux.order must list every channel exactly once"));
            }
        }
        Ok(())
    }

    pub fn cycle_windows(&self) -> usize {
        self.n_channels * self.slot_windows
    }

    /// Per-channel update rate for a given base window rate (Hz).
    pub fn channel_rate(&self, base_rate: f64) -> f64 {
        base_rate * (self.slot_windows - self.settle_windows) as f64
            / (self.n_channels * self.slot_windows) as f64
    }
}

/// What the front end does during one RMS window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Window measures this channel.
    Measure(usize),
    /// Window belongs to this channel but is discarded while the switch settles.
    Settle(usize),
}

impl Slot {
    pub fn channel(&self) -> usize {
        match *self {
            Slot::Measure(c) | Slot::Settle(c) => c,
        }
    }
}

pub fn schedule(plan: &MuxPlan, window_index: usize) -> Slot {
    let pos = window_index % plan.cycle_windows();
    let channel = plan.order[pos / plan.slot_windows];
    if pos % plan.slot_windows < plan.settle_windows {
        Slot::Settle(channel)
    } else {
        Slot::Measure(channel)
    }
}

/// How features are formed from a channel's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureSpec {
    pub rms: RmsConfig,
    pub kind: FeatureKind,
    /// Current-sense resistor, for the impedance feature (Ω).
    pub r_c: f64,
    pub vc_floor: f64,
}

fn check_frames(frames: &[&SensingFrame], plan: &MuxPlan, rms: &RmsConfig) -> Result<usize> {
    if frames.len() != plan.n_channels {
        return Err(Error::mismatch(format!(
            "mux plan has {} channels but {} frames were given",
            plan.n_channels,
            frames.len()
        )));
    }
    let first = frames[0];
    for (i, f) in frames.iter().enumerate() {
        if f.fs() != first.fs() || f.len() != first.len() {
            return Err(Error::mismatch(format!(
                "channel {i} frame ({} samples at {} Hz) differs from channel 0 ({} at {} Hz)",
                f.len(),
                f.fs(),
                first.len(),
                first.fs()
            )));
        }
    }
    if (first.fs() - rms.fs).abs() > 1e-9 * rms.fs {
        return Err(Error::mismatch("frame rate differs from RMS window rate"));
    }
    Ok(first.len() / rms.window)
}

fn window_feature(frame: &SensingFrame, w: usize, spec: &FeatureSpec) -> Result<f64> {
    let range = w * spec.rms.window..(w + 1) * spec.rms.window;
    let vh = rms(&frame.v_h.samples()[range.clone()]);
    match spec.kind {
        FeatureKind::Voltage => Ok(vh),
        FeatureKind::Impedance => {
            let vc = rms(&frame.v_c.samples()[range]);
            impedance_magnitude(vh, vc, spec.r_c, spec.vc_floor)
        }
    }
}

/// Feature samples each channel receives: `(window index, feature)` pairs.
pub fn mux_features(
    plan: &MuxPlan,
    frames: &[&SensingFrame],
    spec: &FeatureSpec,
) -> Result<Vec<Vec<(usize, f64)>>> {
    plan.validate()?;
    spec.rms.validate()?;
    let n_windows = check_frames(frames, plan, &spec.rms)?;
    let mut out = vec![Vec::new(); plan.n_channels];
    for w in 0..n_windows {
        if let Slot::Measure(c) = schedule(plan, w) {
            out[c].push((w, window_feature(frames[c], w, spec)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub channel: usize,
    /// RMS window this row describes.
    pub window: usize,
    /// Time of the window this row describes (s).
    pub t: f64,
    /// Mapped quantity (displacement in m, or whatever the map outputs).
    pub displacement: f64,
    pub feature: f64,
    /// Held value older than one full cycle.
    pub stale: bool,
    /// Measured in this window rather than held.
    pub fresh: bool,
}

/// Output of a multiplexed run: for every window, the current estimate of
/// every channel that has one.
#[derive(Debug, Clone, PartialEq)]
pub struct MuxRun {
    pub estimates: Vec<ChannelEstimate>,
    pub n_channels: usize,
    pub n_windows: usize,
    /// Base window rate (Hz).
    pub window_rate: f64,
}

impl MuxRun {
    pub fn duration(&self) -> f64 {
        self.n_windows as f64 / self.window_rate
    }

    pub fn fresh(&self, channel: usize) -> impl Iterator<Item = &ChannelEstimate> {
        self.estimates
            .iter()
            .filter(move |e| e.fresh && e.channel == channel)
    }

    /// Fresh estimates per second for `channel`.
    pub fn update_rate(&self, channel: usize) -> f64 {
        self.fresh(channel).count() as f64 / self.duration()
    }

    /// CSV with header `t_s,channel,displacement_m,stale`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write_csv_as(w, "displacement_m")
    }

    /// Same layout with a different name for the value column, for maps that
    /// output something other than displacement.
    pub fn write_csv_as<W: Write>(&self, mut w: W, value_column: &str) -> Result<()> {
        writeln!(w, "t_s,channel,{value_column},stale")?;
        for e in &self.estimates {
            writeln!(
                w,
                "{},{},{},{}",
                sig9(e.t),
                e.channel,
                sig9(e.displacement),
                e.stale
            )?;
        }
        Ok(())
    }
}

/// Run the multiplexed front end over pre-simulated per-channel frames.
pub fn step_mux(
    plan: &MuxPlan,
    frames: &[&SensingFrame],
    maps: &[CalibrationMap],
    spec: &FeatureSpec,
    clamp: ClampRange,
) -> Result<MuxRun> {
    plan.validate()?;
    spec.rms.validate()?;
    if maps.len() != plan.n_channels {
        return Err(Error::mismatch(format!(
            "mux plan has {} channels but {} maps were given",
            plan.n_channels,
            maps.len()
        )));
    }
    let n_windows = check_frames(frames, plan, &spec.rms)?;
    let window_dt = spec.rms.window as f64 / spec.rms.fs;
    let cycle_dt = plan.cycle_windows() as f64 * window_dt;
    let t0 = frames[0].v_h.t0();

    let mut estimators: Vec<Estimator> = maps
        .iter()
        .map(|m| Estimator::new(*m, clamp))
        .collect();
    // last fresh (time, value, feature) per channel
    let mut held: Vec<Option<(f64, f64, f64)>> = vec![None; plan.n_channels];
    let mut estimates = Vec::with_capacity(n_windows * plan.n_channels);

    for w in 0..n_windows {
        let t = t0 + (w as f64 + 0.5) * window_dt;
        let active = match schedule(plan, w) {
            Slot::Measure(c) => {
                let spec_c = FeatureSpec {
                    kind: maps[c].kind(),
                    ..*spec
                };
                let x = window_feature(frames[c], w, &spec_c)?;
                let d = estimators[c].update(x)?;
                held[c] = Some((t, d, x));
                Some(c)
            }
            Slot::Settle(_) => None,
        };
        for (c, h) in held.iter().enumerate() {
            if let Some((t_last, d, x)) = *h {
                estimates.push(ChannelEstimate {
                    channel: c,
                    window: w,
                    t,
                    displacement: d,
                    feature: x,
                    stale: t - t_last > cycle_dt * (1.0 + 1e-9),
                    fresh: active == Some(c),
                });
            }
        }
    }

    Ok(MuxRun {
        estimates,
        n_channels: plan.n_channels,
        n_windows,
        window_rate: spec.rms.rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_channel_always_zero() {
        let plan = MuxPlan::round_robin(1);
        for w in 0..10 {
            assert_eq!(schedule(&plan, w), Slot::Measure(0));
        }
    }

    #[test]
    fn four_channel_round_robin() {
        let plan = MuxPlan::round_robin(4);
        let got: Vec<usize> = (0..8).map(|w| schedule(&plan, w).channel()).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn first_window_of_each_slot_settles() {
        let plan = MuxPlan {
            slot_windows: 2,
            settle_windows: 1,
            ..MuxPlan::round_robin(4)
        };
        for w in 0..16 {
            let s = schedule(&plan, w);
            assert_eq!(matches!(s, Slot::Settle(_)), w % 2 == 0, "window {w}");
            assert_eq!(s.channel(), (w / 2) % 4);
        }
        assert_eq!(plan.channel_rate(500.0), 62.5);
    }

    #[test]
    fn custom_order_and_validation() {
        let plan = MuxPlan {
            order: vec![2, 0, 1],
            ..MuxPlan::round_robin(3)
        };
        plan.validate().unwrap();
        let got: Vec<usize> = (0..6).map(|w| schedule(&plan, w).channel()).collect();
        assert_eq!(got, vec![2, 0, 1, 2, 0, 1]);

        let dup = MuxPlan {
            order: vec![0, 0, 1],
            ..MuxPlan::round_robin(3)
        };
        assert!(dup.validate().is_err());
        let settle = MuxPlan {
            settle_windows: 1,
            ..MuxPlan::round_robin(3)
        };
        assert!(settle.validate().is_err());
        assert!(MuxPlan::round_robin(0).validate().is_err());
    }
}
