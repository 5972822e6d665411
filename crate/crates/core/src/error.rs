//! Error type shared by every stage of the pipeline.

use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage an error originated in, used to tag propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Actuator,
    Circuit,
    Estimation,
    Calibration,
    Mux,
    Evaluation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Actuator => "actuator",
            Stage::Circuit => "circuit",
            Stage::Estimation => "estimation",
            Stage::Calibration => "calibration",
            Stage::Mux => "mux",
            Stage::Evaluation => "evaluation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set or scenario violates one of its invariants.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Two inputs that must agree in length or rate do not.
    #[error("shape mismatch: {0}")]
    Mismatch(String),

    /// A non-finite value entered a numerical routine.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("signal below noise floor: {0}")]
    BelowNoiseFloor(String),

    /// |Z| not larger than the electrode resistance; usually noise or a wrong r_e.
    #[error("non-physical impedance: |Z| = {z_mag} Ω does not exceed r_e = {r_e} Ω")]
    NonPhysicalImpedance { z_mag: f64, r_e: f64 },

    #[error("rank-deficient least-squares design: {0}")]
    RankDeficient(String),

    /// Dual-map calibration data lacks enough samples for one branch.
    #[error("calibration data has only {found} samples in the {phase} phase (need {needed})")]
    MissingPhase {
        phase: &'static str,
        found: usize,
        needed: usize,
    },

    /// Joint-session calibration never reached full flexion for a joint.
    #[error("calibration pass never reaches full flexion for joint `{joint}` (max {max_deg:.1}° < {required_deg:.1}°)")]
    MissingFlexion {
        joint: String,
        max_deg: f64,
        required_deg: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub fn mismatch(msg: impl Into<String>) -> Self {
        Error::Mismatch(msg.into())
    }

    /// True for errors caused by bad user input (config, scenario, parameters)
    /// rather than by the model at run time.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParam(_) | Error::Config(_) | Error::Parse(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Innermost error, with stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Attach a stage tag to errors leaving a pipeline stage.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            // keep the innermost tag
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

pub(crate) fn ensure_finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
