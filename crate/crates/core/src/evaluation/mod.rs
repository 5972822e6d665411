//! Scenario runner and scoring.
//!
//! A scenario drives the actuator model, simulates the sensing circuit
//! twice with different noise seeds, calibrates a map on the first pass and
//! scores it on the second.

pub mod joints;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod scenario;

pub use joints::{
    run_joint_session, track_joints, JointRun, JointTracking, JointRunOptions, JointSession, JointSetup, JOINT_NAMES,
};
pub use metrics::{nrmse, phase_lag};
pub use output::{simulate, Simulated};
pub use pipeline::{Drive, Observation, Pipeline, Waveform, SUPPLY_CEILING_KV};
pub use report::{write_atomic, write_metadata_csv, write_report_csv, ChannelReport, EvalReport};
pub use scenario::{
    calibrate, evaluate, run_mux_demo, run_noise_bench, run_scenario, run_sweep, MuxDemo, NoiseBench,
    NoiseBenchConfig, Scenario, ScenarioKind, ScenarioRun, SWEEP_FREQS,
};
