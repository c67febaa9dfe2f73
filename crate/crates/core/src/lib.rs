//! Deterministic simulation and evaluation toolkit for take-over misuse
//! scenarios.
//!
//! The crate covers the whole batch pipeline:
//!
//! - [`scenario`]: the missing-lane-marking take-over scenario, a kinematic
//!   vehicle model, the ADS mode machine and episode traces.
//! - [`driver`]: non-responding, parametric and scripted driver models that
//!   stand in for a human in batch runs.
//! - [`classifier`]: test-case records, misuse labels and the online misuse
//!   detector.
//! - [`testmanager`]: test-case series configuration, execution, the
//!   ten-question checklist and report rendering.
//! - [`metrics`]: joint event counts, conditional-probability analysis,
//!   FMEM, the event tree and controllability rates.

pub mod classifier;
pub mod driver;
pub mod metrics;
pub mod scenario;
pub mod testmanager;

/// Tolerance used when comparing simulation times against configured
/// thresholds. Step times are computed as `k * dt`, which is not exact in
/// binary floating point.
pub const TIME_EPS: f64 = 1e-9;
