use serde::{Deserialize, Serialize};

use super::road::RoadSpec;
use super::vehicle::{VehicleParams, VehicleState};

/// Duration of the right-to-left lane change manoeuvre, seconds.
pub const LANE_CHANGE_DURATION: f64 = 4.0;

/// Scripted timing of the take-over scenario, seconds of simulation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioTimeline {
    pub warning_time: f64,
    pub tor_time: f64,
    pub lane_change_start: f64,
    pub episode_max_duration: f64,
}

impl Default for ScenarioTimeline {
    fn default() -> Self {
        Self {
            warning_time: 6.04,
            tor_time: 7.96,
            lane_change_start: 4.0,
            episode_max_duration: 30.0,
        }
    }
}

impl ScenarioTimeline {
    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        let values = [
            self.lane_change_start,
            self.warning_time,
            self.tor_time,
            self.episode_max_duration,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            errors.push("timeline values must be finite".to_string());
            return;
        }
        let ordered = 0.0 < self.lane_change_start
            && self.lane_change_start < self.warning_time
            && self.warning_time < self.tor_time
            && self.tor_time < self.episode_max_duration;
        if !ordered {
            errors.push(format!(
                "timeline must satisfy 0 < lane_change_start < warning_time < tor_time < \
                 episode_max_duration (got {} / {} / {} / {})",
                self.lane_change_start, self.warning_time, self.tor_time, self.episode_max_duration
            ));
        }
    }
}

/// Lane-keeping controller gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    /// Lateral offset gain, 1/m.
    pub kp: f64,
    /// Lateral velocity gain, s/m.
    pub kd: f64,
    /// Heading gain.
    pub kh: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: 0.1,
            kd: 0.05,
            kh: 1.0,
        }
    }
}

/// Complete simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub road: RoadSpec,
    pub timeline: ScenarioTimeline,
    pub initial_state: VehicleState,
    pub dt: f64,
    pub wheelbase: f64,
    pub steering_ratio: f64,
    pub vehicle_width: f64,
    pub mrm_grace: f64,
    pub mrm_decel: f64,
    pub gains: ControllerGains,
    /// Growth rate of the ADS lateral reference error while the lane
    /// markings are missing, m/s. Positive drifts towards the west edge.
    pub gap_drift_rate: f64,
    /// Re-place the marking gap so the vehicle enters it at `warning_time`.
    pub auto_place_gap: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            road: RoadSpec::default(),
            timeline: ScenarioTimeline::default(),
            initial_state: VehicleState::default(),
            dt: 0.01,
            wheelbase: 2.7,
            steering_ratio: 15.0,
            vehicle_width: 1.8,
            mrm_grace: 5.0,
            mrm_decel: 2.0,
            gains: ControllerGains::default(),
            gap_drift_rate: 0.03,
            auto_place_gap: true,
        }
    }
}

impl SimConfig {
    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams {
            wheelbase: self.wheelbase,
            steering_ratio: self.steering_ratio,
        }
    }

    /// Returns every violated invariant, or `Ok` when the configuration is
    /// usable.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        self.road.validate(&mut errors);
        self.timeline.validate(&mut errors);
        self.initial_state.validate(&mut errors);
        let positive = [
            ("dt", self.dt),
            ("wheelbase", self.wheelbase),
            ("steering_ratio", self.steering_ratio),
            ("vehicle_width", self.vehicle_width),
            ("mrm_grace", self.mrm_grace),
            ("mrm_decel", self.mrm_decel),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!("{name} must be a finite value > 0 (got {value})"));
            }
        }
        let gains = [
            ("gains.kp", self.gains.kp),
            ("gains.kd", self.gains.kd),
            ("gains.kh", self.gains.kh),
            ("gap_drift_rate", self.gap_drift_rate),
        ];
        for (name, value) in gains {
            if !value.is_finite() {
                errors.push(format!("{name} must be finite"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}
