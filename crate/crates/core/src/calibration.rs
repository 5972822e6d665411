//! Feature → displacement maps.
//!
//! A single third-order polynomial suffices while the feature is a function
//! of displacement. At high actuation rates the capacitance lags the
//! geometry and the (feature, displacement) pairs trace a loop; the dual map
//! keeps one cubic for the rising branch of the feature and one for the
//! falling branch, and picks between them at run time from the least-squares
//! slope of the last few feature values.
//!
//! Features are centred on their calibration mean and divided by half their
//! calibration range before fitting, so the cubic's basis stays O(1).

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimation::{FeatureKind, FeatureStream};
use crate::trace::sig12;

pub const DEFAULT_SLOPE_WINDOW: usize = 5;
/// Slope tie band as a fraction of the calibration feature range.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-6;

/// Direction of the feature over the recent history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Rising,
    Falling,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Rising => "rising",
            Phase::Falling => "falling",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Affine feature normalisation `u = (x − mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    /// Half the calibration feature range.
    pub scale: f64,
}

impl Normalization {
    pub fn from_features(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::RankDeficient("no calibration features".into()));
        }
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let scale = 0.5 * (hi - lo);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::RankDeficient("calibration features are constant".into()));
        }
        Ok(Self {
            mean: crate::trace::mean(x),
            scale,
        })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    /// Calibration feature range (max − min).
    pub fn range(&self) -> f64 {
        2.0 * self.scale
    }
}

/// Cubic in the normalised feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyMap3 {
    /// c0 + c1·u + c2·u² + c3·u³.
    pub coeffs: [f64; 4],
    pub norm: Normalization,
    pub kind: FeatureKind,
}

impl PolyMap3 {
    #[inline]
    pub fn eval(&self, feature: f64) -> f64 {
        let u = self.norm.apply(feature);
        let c = &self.coeffs;
        c[0] + u * (c[1] + u * (c[2] + u * c[3]))
    }

    /// RMS of `truth − map(features)`.
    pub fn residual_rms(&self, features: &[f64], truth: &[f64]) -> f64 {
        let sse: f64 = features
            .iter()
            .zip(truth)
            .map(|(&x, &y)| (y - self.eval(x)).powi(2))
            .sum();
        (sse / features.len().max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyFit {
    pub map: PolyMap3,
    pub residual_rms: f64,
}

/// Least-squares cubic with a fixed normalisation.
fn fit_coeffs(x: &[f64], y: &[f64], norm: &Normalization) -> Result<[f64; 4]> {
    let n = x.len();
    let design = DMatrix::from_fn(n, 4, |i, j| norm.apply(x[i]).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = design.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 1e-10 * s_max) {
        return Err(Error::RankDeficient(format!(
            "cubic design is singular (singular values {s_min:.3e} / {s_max:.3e}); \
             features take too few distinct values"
        )));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::RankDeficient(e.to_string()))?;
    let coeffs = [sol[0], sol[1], sol[2], sol[3]];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficients"));
    }
    Ok(coeffs)
}

fn check_pairs(features: &[f64], truth: &[f64]) -> Result<()> {
    if features.len() != truth.len() {
        return Err(Error::mismatch(format!(
            "{} features but {} truth samples",
            features.len(),
            truth.len()
        )));
    }
    if features.len() < 4 {
        return Err(Error::RankDeficient(format!(
            "a cubic needs at least 4 samples, got {}",
            features.len()
        )));
    }
    if features.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("calibration data"));
    }
    Ok(())
}

/// Least-squares cubic from features to (window-aligned) truth.
pub fn fit_poly3(features: &FeatureStream, truth: &[f64]) -> Result<PolyFit> {
    fit_poly3_values(&features.values, truth, features.kind)
}

pub fn fit_poly3_values(features: &[f64], truth: &[f64], kind: FeatureKind) -> Result<PolyFit> {
    check_pairs(features, truth)?;
    let norm = Normalization::from_features(features)?;
    let coeffs = fit_coeffs(features, truth, &norm)?;
    let map = PolyMap3 { coeffs, norm, kind };
    Ok(PolyFit {
        map,
        residual_rms: map.residual_rms(features, truth),
    })
}

/// Least-squares slope of `history` against sample index.
pub fn history_slope(history: &[f64]) -> f64 {
    let n = history.len() as f64;
    let i_mean = (n - 1.0) / 2.0;
    let x_mean = crate::trace::mean(history);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &x) in history.iter().enumerate() {
        let di = i as f64 - i_mean;
        num += di * (x - x_mean);
        den += di * di;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Classify the feature direction over `history` (oldest first).
///
/// A slope within `tie_tol` of zero keeps `prev` when `hold_on_tie` is set;
/// otherwise the sign alone decides, with exact zero counted as rising.
pub fn classify_phase(history: &[f64], prev: Phase, tie_tol: f64, hold_on_tie: bool) -> Phase {
    let slope = history_slope(history);
    if hold_on_tie {
        if slope > tie_tol {
            Phase::Rising
        } else if slope < -tie_tol {
            Phase::Falling
        } else {
            prev
        }
    } else if slope >= 0.0 {
        Phase::Rising
    } else {
        Phase::Falling
    }
}

/// Per-stream phase state: the last `window` features and the current label.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTracker {
    window: usize,
    tie_tol: f64,
    hold_on_tie: bool,
    history: VecDeque<f64>,
    phase: Phase,
}

impl PhaseTracker {
    pub fn new(window: usize, tie_tol: f64, hold_on_tie: bool) -> Self {
        Self {
            window,
            tie_tol,
            hold_on_tie,
            history: VecDeque::with_capacity(window + 1),
            phase: Phase::Rising,
        }
    }

    pub fn for_map(map: &DualPolyMap3) -> Self {
        Self::new(map.slope_window, map.tie_tol, map.hold_last_on_tie)
    }

    /// Push a feature and return the updated phase.
    pub fn push(&mut self, x: f64) -> Phase {
        self.history.push_back(x);
        if self.history.len() > self.window {
            self.history.pop_front();
        }
        if self.is_primed() {
            let h = self.history.make_contiguous();
            self.phase = classify_phase(h, self.phase, self.tie_tol, self.hold_on_tie);
        }
        self.phase
    }

    /// True once a full window of history is available.
    pub fn is_primed(&self) -> bool {
        self.history.len() == self.window
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn history(&self) -> impl Iterator<Item = &f64> {
        self.history.iter()
    }
}

/// Rising/falling pair of cubics sharing one normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPolyMap3 {
    pub rising: PolyMap3,
    pub falling: PolyMap3,
    pub slope_window: usize,
    pub hold_last_on_tie: bool,
    /// Absolute slope tie band (feature units per sample).
    pub tie_tol: f64,
}

impl DualPolyMap3 {
    pub fn branch(&self, phase: Phase) -> &PolyMap3 {
        match phase {
            Phase::Rising => &self.rising,
            Phase::Falling => &self.falling,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        self.rising.kind
    }
}

/// Settings for the dual map that are not fitted from data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSettings {
    pub slope_window: usize,
    pub hold_last_on_tie: bool,
    /// Tie band relative to the calibration feature range.
    pub tie_tolerance: f64,
}

impl Default for DualSettings {
    fn default() -> Self {
        Self {
            slope_window: DEFAULT_SLOPE_WINDOW,
            hold_last_on_tie: true,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }
}

impl DualSettings {
    pub fn validate(&self) -> Result<()> {
        if self.slope_window < 2 {
            return Err(Error::invalid(format!(
                "calibration.slope_window must be >= 2, got {}",
                self.slope_window
            )));
        }
        if !(self.tie_tolerance.is_finite() && self.tie_tolerance >= 0.0) {
            return Err(Error::invalid("calibration.tie_tolerance must be >= 0"));
        }
        Ok(())
    }
}

/// Label every sample with the phase the run-time tracker would assign.
/// Samples before the history fills are `None`.
pub fn label_phases(features: &[f64], settings: &DualSettings, tie_tol: f64) -> Vec<Option<Phase>> {
    let mut tracker = PhaseTracker::new(settings.slope_window, tie_tol, settings.hold_last_on_tie);
    features
        .iter()
        .map(|&x| {
            let p = tracker.push(x);
            tracker.is_primed().then_some(p)
        })
        .collect()
}

/// Partition the calibration data by phase and fit one cubic per branch.
pub fn fit_dual_poly3(
    features: &FeatureStream,
    truth: &[f64],
    settings: &DualSettings,
) -> Result<DualPolyMap3> {
    fit_dual_poly3_values(&features.values, truth, features.kind, settings)
}

pub fn fit_dual_poly3_values(
    features: &[f64],
    truth: &[f64],
    kind: FeatureKind,
    settings: &DualSettings,
) -> Result<DualPolyMap3> {
    settings.validate()?;
    check_pairs(features, truth)?;
    let norm = Normalization::from_features(features)?;
    let tie_tol = settings.tie_tolerance * norm.range();

    let labels = label_phases(features, settings, tie_tol);
    let mut parts: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    for ((&x, &y), label) in features.iter().zip(truth).zip(&labels) {
        match label {
            Some(Phase::Rising) => {
                parts[0].0.push(x);
                parts[0].1.push(y);
            }
            Some(Phase::Falling) => {
                parts[1].0.push(x);
                parts[1].1.push(y);
            }
            None => {}
        }
    }
    for (i, phase) in [Phase::Rising, Phase::Falling].into_iter().enumerate() {
        if parts[i].0.len() < 4 {
            return Err(Error::MissingPhase {
                phase: phase.as_str(),
                found: parts[i].0.len(),
                needed: 4,
            });
        }
    }
    let rising = PolyMap3 {
        coeffs: fit_coeffs(&parts[0].0, &parts[0].1, &norm)?,
        norm,
        kind,
    };
    let falling = PolyMap3 {
        coeffs: fit_coeffs(&parts[1].0, &parts[1].1, &norm)?,
        norm,
        kind,
    };
    Ok(DualPolyMap3 {
        rising,
        falling,
        slope_window: settings.slope_window,
        hold_last_on_tie: settings.hold_last_on_tie,
        tie_tol,
    })
}

/// Which map family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mapping {
    Single,
    Dual,
}

impl Mapping {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mapping::Single => "single",
            Mapping::Dual => "dual",
        }
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mapping::Single),
            "dual" => Ok(Mapping::Dual),
            other => Err(Error::invalid(format!(
                "unknown mapping `{other}` (expected single or dual)"
            ))),
        }
    }
}

/// Fit either map family from raw feature/truth pairs.
pub fn fit_map(
    features: &[f64],
    truth: &[f64],
    kind: FeatureKind,
    mapping: Mapping,
    settings: &DualSettings,
) -> Result<CalibrationMap> {
    Ok(match mapping {
        Mapping::Single => CalibrationMap::Single(fit_poly3_values(features, truth, kind)?.map),
        Mapping::Dual => CalibrationMap::Dual(fit_dual_poly3_values(features, truth, kind, settings)?),
    })
}

/// Either kind of fitted map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMap {
    Single(PolyMap3),
    Dual(DualPolyMap3),
}

impl CalibrationMap {
    pub fn mapping(&self) -> Mapping {
        match self {
            CalibrationMap::Single(_) => Mapping::Single,
            CalibrationMap::Dual(_) => Mapping::Dual,
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            CalibrationMap::Single(m) => m.kind,
            CalibrationMap::Dual(m) => m.kind(),
        }
    }

    pub fn norm(&self) -> Normalization {
        match self {
            CalibrationMap::Single(m) => m.norm,
            CalibrationMap::Dual(m) => m.rising.norm,
        }
    }

    /// Text form: `kind`, `mean`, `scale` header lines, then a
    /// `branch,c0,c1,c2,c3` table with one row per branch, 12 significant
    /// digits.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let norm = self.norm();
        writeln!(w, "kind,{}", self.kind())?;
        writeln!(w, "mean,{}", sig12(norm.mean))?;
        writeln!(w, "scale,{}", sig12(norm.scale))?;
        writeln!(w, "branch,c0,c1,c2,c3")?;
        let mut row = |name: &str, m: &PolyMap3| -> Result<()> {
            let c = m.coeffs.map(sig12);
            writeln!(w, "{name},{},{},{},{}", c[0], c[1], c[2], c[3])?;
            Ok(())
        };
        match self {
            CalibrationMap::Single(m) => row("single", m)?,
            CalibrationMap::Dual(m) => {
                row("rising", &m.rising)?;
                row("falling", &m.falling)?;
            }
        }
        Ok(())
    }

    /// Parse the text form. Dual-map run-time settings are not stored in the
    /// file and come from `settings`.
    pub fn read<R: BufRead>(r: R, settings: &DualSettings) -> Result<Self> {
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .collect();
        let header = |idx: usize, key: &str| -> Result<String> {
            let line = lines
                .get(idx)
                .ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
            match line.split_once(',') {
                Some((k, v)) if k.trim() == key => Ok(v.trim().to_string()),
                _ => Err(Error::Parse(format!("line {}: expected `{key},<value>`", idx + 1))),
            }
        };
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{}`", s.trim())))
        };
        let kind: FeatureKind = header(0, "kind")?.parse()?;
        let norm = Normalization {
            mean: num(&header(1, "mean")?)?,
            scale: num(&header(2, "scale")?)?,
        };
        if !(norm.scale > 0.0) {
            return Err(Error::Parse("scale must be > 0".into()));
        }
        if lines.get(3).map(|l| l.trim()) != Some("branch,c0,c1,c2,c3") {
            return Err(Error::Parse("line 4: expected `branch,c0,c1,c2,c3`".into()));
        }
        let mut branches = Vec::new();
        for (i, line) in lines.iter().enumerate().skip(4) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", i + 1)));
            }
            let coeffs = [num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?];
            branches.push((fields[0].trim().to_string(), PolyMap3 { coeffs, norm, kind }));
        }
        match branches.as_slice() {
            [(b, m)] if b == "single" => Ok(CalibrationMap::Single(*m)),
            [(b0, rising), (b1, falling)] if b0 == "rising" && b1 == "falling" => {
                settings.validate()?;
                Ok(CalibrationMap::Dual(DualPolyMap3 {
                    rising: *rising,
                    falling: *falling,
                    slope_window: settings.slope_window,
                    hold_last_on_tie: settings.hold_last_on_tie,
                    tie_tol: settings.tie_tolerance * norm.range(),
                }))
            }
            _ => Err(Error::Parse(
                "expected one `single` row or `rising` and `falling` rows".into(),
            )),
        }
    }
}

/// Output clamp for estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampRange {
    pub lo: f64,
    pub hi: f64,
}

impl ClampRange {
    /// `[−5 %, 105 %]` of a full-scale span starting at zero.
    pub fn around_span(full_scale: f64) -> Self {
        Self {
            lo: -0.05 * full_scale,
            hi: 1.05 * full_scale,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Evaluate a map for one feature value.
///
/// For a dual map the branch comes from `history` (the last features,
/// oldest first, normally ending with `feature`); a history shorter than the
/// slope window keeps `prev`. Returns the clamped estimate and the phase used.
pub fn estimate_displacement(
    map: &CalibrationMap,
    feature: f64,
    history: &[f64],
    prev: Phase,
    clamp: &ClampRange,
) -> Result<(f64, Phase)> {
    if !feature.is_finite() {
        return Err(Error::NonFinite("feature"));
    }
    let (raw, phase) = match map {
        CalibrationMap::Single(m) => (m.eval(feature), prev),
        CalibrationMap::Dual(m) => {
            let phase = if history.len() >= m.slope_window {
                let h = &history[history.len() - m.slope_window..];
                classify_phase(h, prev, m.tie_tol, m.hold_last_on_tie)
            } else {
                prev
            };
            (m.branch(phase).eval(feature), phase)
        }
    };
    Ok((clamp.apply(raw), phase))
}

/// Streaming estimator: a map plus its per-stream phase state.
#[derive(Debug, Clone)]
pub struct Estimator {
    map: CalibrationMap,
    tracker: Option<PhaseTracker>,
    clamp: ClampRange,
}

impl Estimator {
    pub fn new(map: CalibrationMap, clamp: ClampRange) -> Self {
        let tracker = match &map {
            CalibrationMap::Single(_) => None,
            CalibrationMap::Dual(m) => Some(PhaseTracker::for_map(m)),
        };
        Self {
            map,
            tracker,
            clamp,
        }
    }

    pub fn map(&self) -> &CalibrationMap {
        &self.map
    }

    pub fn update(&mut self, feature: f64) -> Result<f64> {
        if !feature.is_finite() {
            return Err(Error::NonFinite("feature"));
        }
        let raw = match (&self.map, self.tracker.as_mut()) {
            (CalibrationMap::Dual(m), Some(t)) => m.branch(t.push(feature)).eval(feature),
            (CalibrationMap::Single(m), _) => m.eval(feature),
            (CalibrationMap::Dual(_), None) => unreachable!("dual map always has a tracker"),
        };
        Ok(self.clamp.apply(raw))
    }

    /// Run over a whole stream.
    pub fn run(&mut self, features: &[f64]) -> Result<Vec<f64>> {
        features.iter().map(|&x| self.update(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(v: Vec<f64>) -> FeatureStream {
        FeatureStream::new(v, 500.0, FeatureKind::Voltage, 0.0).unwrap()
    }

    #[test]
    fn recovers_exact_cubic() {
        let x: Vec<f64> = (0..50).map(|i| 0.3 + 0.01 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| 1.0 - 2.0 * v + 0.5 * v * v - 3.0 * v.powi(3)).collect();
        let fit = fit_poly3(&stream(x.clone()), &y).unwrap();
        let scale = y.iter().fold(0f64, |a, v| a.max(v.abs()));
        assert!(fit.residual_rms / scale < 1e-9);
        for (&xi, &yi) in x.iter().zip(&y) {
            assert!((fit.map.eval(xi) - yi).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn constant_truth_projects_onto_constant() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let fit = fit_poly3(&stream(x.clone()), &vec![2.5e-3; 20]).unwrap();
        let c = fit.map.coeffs;
        assert!((c[0] - 2.5e-3).abs() < 1e-15);
        for ci in &c[1..] {
            assert!(ci.abs() < 1e-15, "{c:?}");
        }
        let mean = crate::trace::mean(&x);
        let (d, _) = estimate_displacement(
            &CalibrationMap::Single(fit.map),
            mean,
            &[],
            Phase::Rising,
            &ClampRange::around_span(6e-3),
        )
        .unwrap();
        assert!((d - 2.5e-3).abs() < 1e-15);
    }

    #[test]
    fn constant_features_are_rank_deficient() {
        let err = fit_poly3(&stream(vec![1.0; 10]), &[0.0; 10]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
        // three distinct values cannot pin a cubic
        let x = vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        assert!(fit_poly3(&stream(x), &[0.0; 6]).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify_phase(&[1.0, 2.0, 3.0, 4.0, 5.0], Phase::Falling, 1e-9, true),
            Phase::Rising
        );
        assert_eq!(
            classify_phase(&[2.0; 5], Phase::Falling, 1e-9, true),
            Phase::Falling
        );
        assert_eq!(
            classify_phase(&[5.0, 4.0, 3.0, 2.0, 1.0], Phase::Rising, 1e-9, true),
            Phase::Falling
        );
        assert_eq!(classify_phase(&[2.0; 5], Phase::Falling, 1e-9, false), Phase::Rising);
    }

    #[test]
    fn only_contraction_is_missing_phase() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y = x.clone();
        let err = fit_dual_poly3(&stream(x), &y, &DualSettings::default()).unwrap_err();
        match err {
            Error::MissingPhase { phase, .. } => assert_eq!(phase, "falling"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn dual_branch_selection_follows_history() {
        // rising branch maps to +1, falling to −1
        let x: Vec<f64> = (0..40)
            .map(|i| {
                let k = i % 20;
                if k < 10 { k as f64 } else { (20 - k) as f64 }
            })
            .collect();
        let labels = label_phases(&x, &DualSettings::default(), 0.0);
        let y: Vec<f64> = labels
            .iter()
            .map(|l| match l {
                Some(Phase::Falling) => -1.0,
                _ => 1.0,
            })
            .collect();
        let map = fit_dual_poly3(&stream(x), &y, &DualSettings::default()).unwrap();
        let m = CalibrationMap::Dual(map);
        let clamp = ClampRange { lo: -10.0, hi: 10.0 };
        let (up, p) = estimate_displacement(&m, 4.0, &[0.0, 1.0, 2.0, 3.0, 4.0], Phase::Falling, &clamp).unwrap();
        assert_eq!(p, Phase::Rising);
        assert!((up - map.rising.eval(4.0)).abs() < 1e-12);
        let (down, p) = estimate_displacement(&m, 4.0, &[8.0, 7.0, 6.0, 5.0, 4.0], Phase::Rising, &clamp).unwrap();
        assert_eq!(p, Phase::Falling);
        assert!((down - map.falling.eval(4.0)).abs() < 1e-12);
    }

    #[test]
    fn estimates_are_clamped_and_nan_rejected() {
        let map = CalibrationMap::Single(PolyMap3 {
            coeffs: [1.0, 0.0, 0.0, 0.0],
            norm: Normalization { mean: 0.0, scale: 1.0 },
            kind: FeatureKind::Voltage,
        });
        let clamp = ClampRange::around_span(6e-3);
        let (d, _) = estimate_displacement(&map, 0.3, &[], Phase::Rising, &clamp).unwrap();
        assert_eq!(d, 1.05 * 6e-3);
        assert!(estimate_displacement(&map, f64::NAN, &[], Phase::Rising, &clamp).is_err());
    }

    #[test]
    fn map_file_layout() {
        let m = PolyMap3 {
            coeffs: [1.5e-3, -2.0e-4, 3.0e-5, 1.0e-6],
            norm: Normalization { mean: 0.75, scale: 0.25 },
            kind: FeatureKind::Impedance,
        };
        let mut buf = Vec::new();
        CalibrationMap::Single(m).write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,impedance");
        assert_eq!(lines[1], "mean,7.50000000000e-1");
        assert_eq!(lines[3], "branch,c0,c1,c2,c3");
        assert!(lines[4].starts_with("single,1.50000000000e-3,"));
        let back = CalibrationMap::read(buf.as_slice(), &DualSettings::default()).unwrap();
        assert_eq!(back, CalibrationMap::Single(m));
    }

    #[test]
    fn map_file_rejects_garbage() {
        let bad = "kind,voltage\nmean,0\nscale,1\nbranch,c0,c1,c2,c3\nrising,1,2,3,4\n";
        assert!(CalibrationMap::read(bad.as_bytes(), &DualSettings::default()).is_err());
        let bad = "kind,optical\nmean,0\nscale,1\nbranch,c0,c1,c2,c3\nsingle,1,2,3,4\n";
        assert!(CalibrationMap::read(bad.as_bytes(), &DualSettings::default()).is_err());
    }
}
