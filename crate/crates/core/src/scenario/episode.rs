use crate::driver::{
    instantiate, Driver, DriverAction, DriverInstance, DriverSpec, MAX_DRIVER_SWA,
};
use crate::TIME_EPS;

use super::config::SimConfig;
use super::controller::{ads_controller, ideal_swa, lane_change_target};
use super::mode::AdsMode;
use super::road::{detect_hazard, Hazard};
use super::trace::{EpisodeTrace, EventKind, Sample, TraceEvent};
use super::vehicle::{step, VehicleState};
use super::ScenarioError;

impl SimConfig {
    /// Validates the configuration and, when `auto_place_gap` is set, moves
    /// the marking gap so that the vehicle reaches it exactly at the first
    /// step with `t >= warning_time`.
    ///
    /// The placement replays the automated part of the episode, which is
    /// identical for every driver, so the gap entry lands on the same step in
    /// the real run.
    pub fn prepared(&self) -> Result<SimConfig, ScenarioError> {
        self.validate().map_err(ScenarioError::ConfigInvalid)?;
        if !self.auto_place_gap {
            return Ok(self.clone());
        }
        let gap_length = self.road.marking_gap_end - self.road.marking_gap_start;

        let mut probe = self.clone();
        probe.road.marking_gap_start = 1e12;
        probe.road.marking_gap_end = 1e12 + gap_length;
        let mut episode = Episode::new(probe)?;
        let mut driver = DriverInstance::NonResponder;
        while episode.time() < self.timeline.warning_time - TIME_EPS {
            episode.step(&mut driver)?;
        }

        let mut placed = self.clone();
        placed.road.marking_gap_start = episode.state().s;
        placed.road.marking_gap_end = episode.state().s + gap_length;
        placed.auto_place_gap = false;
        Ok(placed)
    }
}

/// Fixed-timestep episode stepper implementing the ADS mode machine.
///
/// Batch runs drive it to completion with [`run_episode`]; the interactive
/// server advances it tick by tick with a driver fed from the network.
#[derive(Debug, Clone)]
pub struct Episode {
    config: SimConfig,
    step_index: u64,
    state: VehicleState,
    mode: AdsMode,
    trace: EpisodeTrace,
    tor_at: Option<f64>,
    pending_takeover: bool,
    hazard_armed: bool,
    hazard_seen: bool,
    gap_entered: Option<f64>,
    mrm_target: f64,
    finished: bool,
}

impl Episode {
    /// Starts an episode with the configuration used as-is. Call
    /// [`SimConfig::prepared`] first to get the emergent gap placement.
    pub fn new(config: SimConfig) -> Result<Self, ScenarioError> {
        config.validate().map_err(ScenarioError::ConfigInvalid)?;
        let state = config.initial_state;
        let trace = EpisodeTrace {
            dt: config.dt,
            samples: Vec::new(),
            events: Vec::new(),
        };
        Ok(Self {
            mrm_target: config.road.left_lane_center(),
            config,
            step_index: 0,
            state,
            mode: AdsMode::Automated,
            trace,
            tor_at: None,
            pending_takeover: false,
            hazard_armed: false,
            hazard_seen: false,
            gap_entered: None,
            finished: false,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Simulation time of the next step.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn mode(&self) -> AdsMode {
        self.mode
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }

    /// Lateral target the ADS is currently tracking.
    pub fn target_lane(&self) -> f64 {
        if self.mode == AdsMode::ReducedFunctionalityMrm || self.mode == AdsMode::Stopped {
            self.mrm_target
        } else {
            lane_change_target(self.time(), &self.config.timeline, &self.config.road)
        }
    }

    /// Error of the ADS lateral reference. Without lane markings the ADS
    /// dead-reckons its lane position and the error grows linearly; it is
    /// cleared once the markings resume.
    fn reference_drift(&self, t: f64) -> f64 {
        match self.gap_entered {
            Some(entry) if self.config.road.in_marking_gap(self.state.s) => {
                self.config.gap_drift_rate * (t - entry)
            }
            _ => 0.0,
        }
    }

    fn emit(&mut self, t: f64, kind: EventKind) {
        self.trace.events.push(TraceEvent { t, kind });
    }

    fn transition(&mut self, next: AdsMode) {
        debug_assert!(self.mode.can_transition_to(next), "{} -> {next}", self.mode);
        self.mode = next;
    }

    /// Performs one timestep. Does nothing once the episode has finished.
    pub fn step(&mut self, driver: &mut dyn Driver) -> Result<(), ScenarioError> {
        if self.finished {
            return Ok(());
        }
        let t = self.time();
        let timeline = self.config.timeline.clone();
        let mut transitioned = false;

        if self.gap_entered.is_none() && self.state.s >= self.config.road.marking_gap_start {
            self.gap_entered = Some(t);
            self.emit(t, EventKind::MarkingGapEntry);
        }

        // At most one mode transition per step; a take-over that collides with
        // a system transition is applied on the following step.
        if self.pending_takeover && self.mode.accepts_takeover() {
            self.pending_takeover = false;
            self.transition(AdsMode::DriverControl);
            self.emit(t, EventKind::TakeOver);
            transitioned = true;
        }
        if !transitioned {
            let next = match self.mode {
                AdsMode::Automated if t >= timeline.warning_time - TIME_EPS => {
                    Some((AdsMode::WarningIssued, EventKind::Warning))
                }
                AdsMode::WarningIssued if t >= timeline.tor_time - TIME_EPS => {
                    Some((AdsMode::TorIssued, EventKind::Tor))
                }
                AdsMode::TorIssued
                    if self
                        .tor_at
                        .is_some_and(|tor| t >= tor + self.config.mrm_grace - TIME_EPS) =>
                {
                    Some((AdsMode::ReducedFunctionalityMrm, EventKind::MrmStart))
                }
                AdsMode::ReducedFunctionalityMrm if self.state.speed == 0.0 => {
                    Some((AdsMode::Stopped, EventKind::MrmStopped))
                }
                _ => None,
            };
            if let Some((mode, kind)) = next {
                match kind {
                    EventKind::Tor => self.tor_at = Some(t),
                    EventKind::MrmStart => {
                        self.mrm_target =
                            lane_change_target(t, &self.config.timeline, &self.config.road)
                    }
                    _ => {}
                }
                self.transition(mode);
                self.emit(t, kind);
                transitioned = true;
            }
        }

        let ideal = ideal_swa(&self.state, &self.config);
        let mut driver_steer = None;
        match driver.act(t, self.tor_at, ideal)? {
            DriverAction::TakeOver if self.mode.accepts_takeover() => {
                if transitioned {
                    self.pending_takeover = true;
                } else {
                    self.transition(AdsMode::DriverControl);
                    self.emit(t, EventKind::TakeOver);
                }
            }
            DriverAction::Steer { swa } => driver_steer = Some(swa),
            // Take-over requests before the TOR are not accepted by the ADS.
            DriverAction::TakeOver | DriverAction::None => {}
        }

        if t >= timeline.lane_change_start - TIME_EPS {
            let half = self.config.vehicle_width / 2.0;
            if !self.hazard_armed && self.state.y - half >= self.config.road.lane_divider_y() {
                self.hazard_armed = true;
            }
            if self.hazard_armed && !self.hazard_seen {
                match detect_hazard(self.state.y, &self.config.road, self.config.vehicle_width) {
                    Hazard::None => {}
                    Hazard::HazardEast => {
                        self.hazard_seen = true;
                        self.emit(t, EventKind::HazardEast);
                    }
                    Hazard::HazardWest => {
                        self.hazard_seen = true;
                        self.emit(t, EventKind::HazardWest);
                    }
                }
            }
        }

        let (swa, accel, driver_swa) = match self.mode {
            AdsMode::DriverControl => {
                let swa = driver_steer.unwrap_or(self.state.swa);
                if !swa.is_finite() || swa.abs() > MAX_DRIVER_SWA {
                    return Err(ScenarioError::EpisodeInvalid(format!(
                        "driver steering-wheel angle {swa} outside ±{MAX_DRIVER_SWA}°"
                    )));
                }
                (swa, 0.0, Some(swa))
            }
            AdsMode::Stopped => (self.state.swa, 0.0, None),
            mode => {
                let target = if mode == AdsMode::ReducedFunctionalityMrm {
                    self.mrm_target
                } else {
                    lane_change_target(t, &self.config.timeline, &self.config.road)
                };
                let target = target + self.reference_drift(t);
                let (swa, accel) = ads_controller(&self.state, target, mode, &self.config);
                (swa, accel, None)
            }
        };

        self.trace.samples.push(Sample {
            t,
            state: self.state,
            mode: self.mode,
            driver_swa,
        });

        if self.mode == AdsMode::Stopped || t >= timeline.episode_max_duration - TIME_EPS {
            self.emit(t, EventKind::EpisodeEnd);
            self.finished = true;
            return Ok(());
        }

        self.state = step(
            &self.state,
            swa,
            accel,
            self.config.dt,
            self.config.vehicle_params(),
        )
        .map_err(|e| match e {
            ScenarioError::EpisodeInvalid(msg) => {
                ScenarioError::EpisodeInvalid(format!("t = {t:.2} s: {msg}"))
            }
            other => other,
        })?;
        self.step_index += 1;
        Ok(())
    }
}

/// Runs a complete episode with a driver model instantiated from `driver`.
///
/// The result is a pure function of `(config, driver, seed)`.
pub fn run_episode(
    config: &SimConfig,
    driver: &DriverSpec,
    seed: u64,
) -> Result<EpisodeTrace, ScenarioError> {
    let mut instance = instantiate(driver, seed)?;
    run_episode_with(config, &mut instance)
}

/// Runs a complete episode with an already constructed driver.
pub fn run_episode_with(
    config: &SimConfig,
    driver: &mut dyn Driver,
) -> Result<EpisodeTrace, ScenarioError> {
    let mut episode = Episode::new(config.prepared()?)?;
    while !episode.is_finished() {
        episode.step(driver)?;
    }
    Ok(episode.into_trace())
}
