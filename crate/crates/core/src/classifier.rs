//! Test-case records, ground-truth misuse labels and the online misuse
//! detector.
//!
//! [`derive_record`] turns an episode trace into one row of the test-case
//! table. [`label_misuse`] assigns the two misuse causes (false recognition
//! of the take-over need, misjudged steering) and the controllability
//! outcome. [`detect_fm_online`] models the ADS-side detector as a noisy
//! re-measurement of the same features with the same thresholds.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scenario::{ideal_swa, EpisodeTrace, EventKind, SimConfig};
use crate::TIME_EPS;

/// Take-over delays at or above this many seconds count as delayed.
pub const TAKEOVER_THRESHOLD: f64 = 1.77;

/// Length of the steering window after take-over, seconds.
pub const SWA_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("incomplete trace: no EPISODE_END event")]
    IncompleteTrace,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

/// Thresholds shared by the ground-truth labelling and the detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub takeover_threshold: f64,
    pub swa_window: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            takeover_threshold: TAKEOVER_THRESHOLD,
            swa_window: SWA_WINDOW,
            rel_tol: 0.10,
            abs_floor: 1.0,
        }
    }
}

/// Measurement noise of the online detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    /// Standard deviation of the measured take-over delay, seconds.
    pub sigma_t: f64,
    /// Standard deviation of the measured steering deviation, degrees.
    pub sigma_swa: f64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            sigma_t: 0.05,
            sigma_swa: 0.5,
        }
    }
}

/// One row of the test-case table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCaseRecord {
    #[serde(rename = "TC")]
    pub tc: u32,
    #[serde(rename = "TO")]
    pub to: u8,
    #[serde(rename = "TO_t2")]
    pub to_t2: f64,
    #[serde(rename = "delta_T2")]
    pub delta_t2: f64,
    #[serde(rename = "DelTO")]
    pub del_to: u8,
    #[serde(rename = "SWA")]
    pub swa: f64,
    #[serde(rename = "H")]
    pub h: u8,
    #[serde(rename = "H_t3")]
    pub h_t3: f64,
    #[serde(rename = "delta_T3")]
    pub delta_t3: f64,
}

impl TestCaseRecord {
    pub fn took_over(&self) -> bool {
        self.to == 1
    }

    pub fn hazard(&self) -> bool {
        self.h == 1
    }

    /// Checks the structural invariants of a record. The timing relations
    /// are checked too when `tor_time` is given.
    pub fn validate(&self, tor_time: Option<f64>) -> Result<(), ClassifierError> {
        let bad = |msg: String| {
            Err(ClassifierError::InvalidRecord(format!(
                "TC {}: {msg}",
                self.tc
            )))
        };
        for (name, flag) in [("TO", self.to), ("DelTO", self.del_to), ("H", self.h)] {
            if flag > 1 {
                return bad(format!("{name} must be 0 or 1 (got {flag})"));
            }
        }
        let floats = [
            self.to_t2,
            self.delta_t2,
            self.swa,
            self.h_t3,
            self.delta_t3,
        ];
        if floats.iter().any(|v| !v.is_finite()) {
            return bad("non-finite field".into());
        }
        if self.to == 0
            && (self.to_t2 != 0.0 || self.delta_t2 != 0.0 || self.del_to != 0 || self.swa != 0.0)
        {
            return bad("TO = 0 requires TO_t2, delta_T2, DelTO and SWA to be 0".into());
        }
        if self.h == 0 && (self.h_t3 != 0.0 || self.delta_t3 != 0.0) {
            return bad("H = 0 requires H_t3 and delta_T3 to be 0".into());
        }
        let Some(tor) = tor_time else {
            return Ok(());
        };
        if self.to == 1 && (self.delta_t2 - (self.to_t2 - tor)).abs() > 1e-6 {
            return bad(format!("delta_T2 {} != TO_t2 - {tor}", self.delta_t2));
        }
        if self.to == 1 && self.h == 1 && (self.delta_t3 - (self.h_t3 - self.to_t2)).abs() > 1e-6 {
            return bad(format!("delta_T3 {} != H_t3 - TO_t2", self.delta_t3));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SteerClass {
    Ok,
    Oversteer,
    Understeer,
}

impl SteerClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SteerClass::Ok => "OK",
            SteerClass::Oversteer => "OVERSTEER",
            SteerClass::Understeer => "UNDERSTEER",
        }
    }
}

impl fmt::Display for SteerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Controllability {
    Provided,
    NotProvided,
    NotApplicable,
}

impl Controllability {
    pub fn as_str(self) -> &'static str {
        match self {
            Controllability::Provided => "PROVIDED",
            Controllability::NotProvided => "NOT_PROVIDED",
            Controllability::NotApplicable => "NOT_APPLICABLE",
        }
    }
}

impl fmt::Display for Controllability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth misuse causes of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisuseLabels {
    pub del_to: u8,
    pub steer_class: SteerClass,
    /// Misjudgment: the steering correction was outside the tolerance band.
    pub mj: u8,
    /// False recognition: the take-over was delayed or never happened.
    pub fr: u8,
    pub fm: u8,
    pub controllability: Controllability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub fm_flagged: u8,
    /// Seconds from TOR to take-over; the episode length when the driver
    /// never took over.
    pub measured_delay: f64,
    pub measured_swa_dev: f64,
}

/// Driver steering compared with the ideal angle at the sample of largest
/// deviation inside the window after take-over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringAssessment {
    pub t: f64,
    pub applied: f64,
    pub ideal: f64,
}

impl SteeringAssessment {
    pub fn deviation(&self) -> f64 {
        self.applied - self.ideal
    }
}

fn window_samples(
    trace: &EpisodeTrace,
    to: f64,
    window: f64,
) -> impl Iterator<Item = (&crate::scenario::Sample, f64)> {
    trace
        .samples
        .iter()
        .filter(move |s| s.t >= to - TIME_EPS && s.t <= to + window + TIME_EPS)
        .filter_map(|s| s.driver_swa.map(|d| (s, d)))
}

/// Builds the test-case record of a completed episode.
///
/// `SWA` is the magnitude of the difference between the wheel angle at the
/// take-over instant and the peak driver command within `window` seconds
/// after it. `delta_T3` is signed and negative when the hazard precedes the
/// take-over.
pub fn derive_record(
    trace: &EpisodeTrace,
    tor_time: f64,
    tc_index: u32,
    config: &ClassifierConfig,
) -> Result<TestCaseRecord, ClassifierError> {
    if !trace.is_complete() {
        return Err(ClassifierError::IncompleteTrace);
    }
    let mut record = TestCaseRecord {
        tc: tc_index,
        to: 0,
        to_t2: 0.0,
        delta_t2: 0.0,
        del_to: 0,
        swa: 0.0,
        h: 0,
        h_t3: 0.0,
        delta_t3: 0.0,
    };
    if let Some(to) = trace.takeover_time() {
        record.to = 1;
        record.to_t2 = to;
        record.delta_t2 = to - tor_time;
        record.del_to = classify_takeover(record.delta_t2, config.takeover_threshold);
        let at_to = trace.sample_at(to).map(|s| s.state.swa).unwrap_or(0.0);
        let peak = window_samples(trace, to, config.swa_window)
            .map(|(_, d)| d)
            .fold(None, |best: Option<f64>, d| match best {
                Some(b) if b.abs() >= d.abs() => Some(b),
                _ => Some(d),
            });
        record.swa = peak.map(|p| (p - at_to).abs()).unwrap_or(0.0);
    }
    if let Some(hazard) = trace.first_hazard() {
        record.h = 1;
        record.h_t3 = hazard.t;
        if record.to == 1 {
            record.delta_t3 = hazard.t - record.to_t2;
        }
    }
    Ok(record)
}

/// 1 when the take-over is delayed, i.e. `delta_t2 >= threshold`.
pub fn classify_takeover(delta_t2: f64, threshold: f64) -> u8 {
    u8::from(delta_t2 >= threshold - TIME_EPS)
}

/// Classifies a steering deviation `applied - ideal` against the tolerance
/// band around `ideal`, measured in the direction the ideal angle steers.
pub fn classify_deviation(deviation: f64, ideal: f64, config: &ClassifierConfig) -> SteerClass {
    let band = (config.rel_tol * ideal.abs()).max(config.abs_floor);
    let directed = if ideal < 0.0 { -deviation } else { deviation };
    if directed > band {
        SteerClass::Oversteer
    } else if directed < -band {
        SteerClass::Understeer
    } else {
        SteerClass::Ok
    }
}

pub fn classify_steering(applied: f64, ideal: f64, config: &ClassifierConfig) -> SteerClass {
    classify_deviation(applied - ideal, ideal, config)
}

/// Finds the sample after take-over whose driver command deviates most from
/// the ideal angle. `None` when the driver never took over or never steered.
pub fn steering_assessment(
    trace: &EpisodeTrace,
    sim: &SimConfig,
    config: &ClassifierConfig,
) -> Option<SteeringAssessment> {
    let to = trace.takeover_time()?;
    // On the take-over step itself the wheel still holds the ADS angle.
    window_samples(trace, to, config.swa_window)
        .filter(|(s, _)| s.t > to + TIME_EPS)
        .map(|(s, applied)| SteeringAssessment {
            t: s.t,
            applied,
            ideal: ideal_swa(&s.state, sim),
        })
        .fold(None, |best: Option<SteeringAssessment>, a| match best {
            Some(b) if b.deviation().abs() >= a.deviation().abs() => Some(b),
            _ => Some(a),
        })
}

pub fn label_misuse(
    record: &TestCaseRecord,
    steer_class: SteerClass,
    to_occurred: bool,
) -> MisuseLabels {
    let del_to = if to_occurred { record.del_to } else { 0 };
    let mj = u8::from(steer_class != SteerClass::Ok);
    let fr = u8::from(del_to == 1 || !to_occurred);
    let controllability = match (to_occurred, record.hazard()) {
        (false, _) => Controllability::NotApplicable,
        (true, false) => Controllability::Provided,
        (true, true) => Controllability::NotProvided,
    };
    MisuseLabels {
        del_to,
        steer_class,
        mj,
        fr,
        fm: mj | fr,
        controllability,
    }
}

/// Noisy detector: re-measures the take-over delay and the steering
/// deviation and applies the labelling thresholds to the measurements.
pub fn detect_fm_online(
    trace: &EpisodeTrace,
    tor_time: f64,
    assessment: Option<&SteeringAssessment>,
    noise_seed: u64,
    noise: &DetectorNoise,
    config: &ClassifierConfig,
) -> Result<DetectorOutput, ClassifierError> {
    if !trace.is_complete() {
        return Err(ClassifierError::IncompleteTrace);
    }
    let Some(to) = trace.takeover_time() else {
        return Ok(DetectorOutput {
            fm_flagged: 1,
            measured_delay: trace.event_time(EventKind::EpisodeEnd).unwrap_or(0.0),
            measured_swa_dev: 0.0,
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let z_t: f64 = StandardNormal.sample(&mut rng);
    let z_swa: f64 = StandardNormal.sample(&mut rng);
    let measured_delay = (to - tor_time) + noise.sigma_t * z_t;
    let (true_dev, ideal) = assessment
        .map(|a| (a.deviation(), a.ideal))
        .unwrap_or((0.0, 0.0));
    let measured_swa_dev = true_dev + noise.sigma_swa * z_swa;
    let delayed = classify_takeover(measured_delay, config.takeover_threshold) == 1;
    let misjudged = classify_deviation(measured_swa_dev, ideal, config) != SteerClass::Ok;
    Ok(DetectorOutput {
        fm_flagged: u8::from(delayed || misjudged),
        measured_delay,
        measured_swa_dev,
    })
}

/// Everything the classifier derives from one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAssessment {
    pub record: TestCaseRecord,
    pub labels: MisuseLabels,
    pub steering: Option<SteeringAssessment>,
    pub detector: DetectorOutput,
}

/// Runs record derivation, labelling and detection in sequence.
pub fn assess_episode(
    trace: &EpisodeTrace,
    sim: &SimConfig,
    tc_index: u32,
    detector_seed: u64,
    noise: &DetectorNoise,
    config: &ClassifierConfig,
) -> Result<EpisodeAssessment, ClassifierError> {
    let tor_time = sim.timeline.tor_time;
    let record = derive_record(trace, tor_time, tc_index, config)?;
    let steering = steering_assessment(trace, sim, config);
    let steer_class = steering
        .map(|a| classify_deviation(a.deviation(), a.ideal, config))
        .unwrap_or(SteerClass::Ok);
    let labels = label_misuse(&record, steer_class, record.took_over());
    let detector = detect_fm_online(
        trace,
        tor_time,
        steering.as_ref(),
        detector_seed,
        noise,
        config,
    )?;
    Ok(EpisodeAssessment {
        record,
        labels,
        steering,
        detector,
    })
}
