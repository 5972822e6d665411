//! Simulation and displacement estimation for capacitive self-sensing of
//! F-HASEL soft actuators.
//!
//! The pipeline runs from an electro-mechanical actuator model
//! ([`actuator`]) through a transient simulation of the low-voltage sensing
//! circuit ([`circuit`]) to windowed RMS features ([`estimation`]), which
//! polynomial maps turn back into displacement ([`calibration`]). Several
//! actuators can share one front end through [`mux`], and [`evaluation`]
//! ties it together into scenarios with NRMSE and phase-lag metrics.

pub mod actuator;
pub mod calibration;
pub mod circuit;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod estimation;
pub mod mux;
pub mod trace;

pub use error::{Error, Result, Stage};
