//! The missing-lane-marking take-over scenario.
//!
//! An ego vehicle under ADS control changes from the right to the left lane
//! of a two-lane one-way highway. Mid-manoeuvre it enters a stretch without
//! lane markings, the ADS warns the driver and then requests a take-over.
//! The driver either takes over or the ADS falls back to a minimal risk
//! manoeuvre (lane hold and stop). Any departure from the left lane after the
//! lane change is recorded as a hazard.

mod config;
mod controller;
mod episode;
mod mode;
mod road;
mod trace;
mod vehicle;

pub use config::{ControllerGains, ScenarioTimeline, SimConfig, LANE_CHANGE_DURATION};
pub use controller::{ads_controller, ideal_swa, lane_change_target, ADS_SWA_LIMIT};
pub use episode::{run_episode, run_episode_with, Episode};
pub use mode::AdsMode;
pub use road::{detect_hazard, Hazard, RoadSpec, LANE_COUNT};
pub use trace::{EpisodeTrace, EventKind, Sample, TraceEvent, TRACE_CSV_HEADER};
pub use vehicle::{step, VehicleParams, VehicleState};

use crate::driver::DriverError;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
    #[error("episode invalid: {0}")]
    EpisodeInvalid(String),
    #[error("non-finite vehicle input")]
    NonFinite,
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error("trace parse error: {0}")]
    Parse(String),
}
