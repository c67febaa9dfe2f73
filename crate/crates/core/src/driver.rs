//! Driver models used in place of a human in batch runs.
//!
//! A [`DriverSpec`] describes the behaviour (never responding, parametric
//! delay and steering error, or a scripted action list). [`instantiate`]
//! draws the concrete parameters for one test case from a seeded RNG and
//! returns a [`DriverInstance`] that the episode queries once per step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::TIME_EPS;

/// Hardware-realistic steering-wheel range, degrees either side.
pub const MAX_DRIVER_SWA: f64 = 540.0;

/// Default time the initial (possibly mis-scaled) steering is held.
pub const DEFAULT_STEER_HOLD: f64 = 1.0;

const DELAY_STREAM: u64 = 0;
const SCALE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriverError {
    #[error("invalid driver spec: {0}")]
    InvalidSpec(String),
    #[error("driver queried out of order: t = {t} after {previous}")]
    Ordering { t: f64, previous: f64 },
    #[error("malformed session log: {0}")]
    MalformedLog(String),
}

/// Scalar distribution used for sampled driver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamDist {
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl ParamDist {
    fn validate(&self, name: &str) -> Result<(), DriverError> {
        let bad = |msg: String| Err(DriverError::InvalidSpec(format!("{name}: {msg}")));
        match *self {
            ParamDist::Fixed { value } if !value.is_finite() => bad("value must be finite".into()),
            ParamDist::Uniform { low, high } if !(low.is_finite() && high.is_finite()) => {
                bad("bounds must be finite".into())
            }
            ParamDist::Uniform { low, high } if low > high => {
                bad(format!("uniform low {low} exceeds high {high}"))
            }
            ParamDist::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite()) => {
                bad("parameters must be finite".into())
            }
            ParamDist::LogNormal { sigma, .. } if sigma < 0.0 => {
                bad(format!("lognormal sigma {sigma} is negative"))
            }
            _ => Ok(()),
        }
    }

    /// Smallest value in the support.
    fn lower_bound(&self) -> f64 {
        match *self {
            ParamDist::Fixed { value } => value,
            ParamDist::Uniform { low, .. } => low,
            ParamDist::LogNormal { .. } => 0.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ParamDist::Fixed { value } => value,
            ParamDist::Uniform { low, high } if low == high => low,
            ParamDist::Uniform { low, high } => Uniform::new_inclusive(low, high)
                .expect("validated bounds")
                .sample(rng),
            ParamDist::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated parameters")
                .sample(rng),
        }
    }
}

/// Driver with a sampled take-over delay and steering error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricSpec {
    /// Take-over delay after the TOR, seconds.
    pub delay: ParamDist,
    /// Factor applied to the ideal steering-wheel angle right after take-over.
    pub steer_scale: ParamDist,
    /// Seconds the scaled steering is applied before the driver tracks the
    /// ideal angle.
    #[serde(default = "default_steer_hold")]
    pub steer_hold: f64,
}

fn default_steer_hold() -> f64 {
    DEFAULT_STEER_HOLD
}

impl ParametricSpec {
    /// Campaign default: lognormal delay around the 1.77 s threshold.
    pub fn campaign_default(steer_scale: ParamDist) -> Self {
        Self {
            delay: ParamDist::LogNormal {
                mu: 0.6,
                sigma: 0.35,
            },
            steer_scale,
            steer_hold: DEFAULT_STEER_HOLD,
        }
    }
}

/// A driver action at a point in simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub t: f64,
    #[serde(flatten)]
    pub action: DriverAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DriverAction {
    None,
    TakeOver,
    Steer { swa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DriverSpec {
    NonResponder,
    Parametric(ParametricSpec),
    Scripted { actions: Vec<TimedAction> },
}

impl DriverSpec {
    pub fn validate(&self) -> Result<(), DriverError> {
        match self {
            DriverSpec::NonResponder => Ok(()),
            DriverSpec::Parametric(p) => {
                p.delay.validate("delay")?;
                p.steer_scale.validate("steer_scale")?;
                if p.delay.lower_bound() < 0.0 {
                    return Err(DriverError::InvalidSpec(
                        "delay support must be >= 0".into(),
                    ));
                }
                if p.steer_scale.lower_bound() < 0.0
                    || matches!(p.steer_scale, ParamDist::Fixed { value } if value <= 0.0)
                    || matches!(p.steer_scale, ParamDist::Uniform { low, .. } if low <= 0.0)
                {
                    return Err(DriverError::InvalidSpec(
                        "steer_scale support must be > 0".into(),
                    ));
                }
                if !(p.steer_hold.is_finite() && p.steer_hold >= 0.0) {
                    return Err(DriverError::InvalidSpec("steer_hold must be >= 0".into()));
                }
                Ok(())
            }
            DriverSpec::Scripted { actions } => {
                validate_actions(actions).map_err(DriverError::InvalidSpec)
            }
        }
    }
}

fn validate_actions(actions: &[TimedAction]) -> Result<(), String> {
    let mut takeovers = 0;
    for (i, a) in actions.iter().enumerate() {
        if !(a.t.is_finite() && a.t >= 0.0) {
            return Err(format!("action {i}: time must be finite and >= 0"));
        }
        if i > 0 && a.t <= actions[i - 1].t {
            return Err(format!("action {i}: times must be strictly increasing"));
        }
        match a.action {
            DriverAction::TakeOver => takeovers += 1,
            DriverAction::Steer { swa } if !swa.is_finite() || swa.abs() > MAX_DRIVER_SWA => {
                return Err(format!("action {i}: |swa| must be <= {MAX_DRIVER_SWA}"));
            }
            _ => {}
        }
    }
    if takeovers > 1 {
        return Err(format!(
            "{takeovers} TAKE_OVER actions, at most one allowed"
        ));
    }
    Ok(())
}

/// Behaviour queried by the episode once per step.
pub trait Driver {
    /// `tor_time` is the time the TOR was issued, if it has been. `ideal` is
    /// the steering-wheel angle that would centre the vehicle in the left
    /// lane at this instant.
    fn act(
        &mut self,
        t: f64,
        tor_time: Option<f64>,
        ideal: f64,
    ) -> Result<DriverAction, DriverError>;
}

/// Concrete driver for one episode.
#[derive(Debug, Clone, PartialEq)]
pub enum DriverInstance {
    NonResponder,
    Parametric(ParametricDriver),
    Scripted(ScriptedDriver),
}

impl Driver for DriverInstance {
    fn act(
        &mut self,
        t: f64,
        tor_time: Option<f64>,
        ideal: f64,
    ) -> Result<DriverAction, DriverError> {
        match self {
            DriverInstance::NonResponder => Ok(DriverAction::None),
            DriverInstance::Parametric(d) => d.act(t, tor_time, ideal),
            DriverInstance::Scripted(d) => d.act(t, tor_time, ideal),
        }
    }
}

/// Draws the concrete driver parameters for one test case.
///
/// Delay and steering scale come from separate ChaCha8 streams keyed by
/// `seed`, so the result depends only on `(spec, seed)`.
pub fn instantiate(spec: &DriverSpec, seed: u64) -> Result<DriverInstance, DriverError> {
    spec.validate()?;
    Ok(match spec {
        DriverSpec::NonResponder => DriverInstance::NonResponder,
        DriverSpec::Parametric(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(DELAY_STREAM);
            let delay = p.delay.sample(&mut rng);
            rng.set_stream(SCALE_STREAM);
            rng.set_word_pos(0);
            let steer_scale = p.steer_scale.sample(&mut rng);
            DriverInstance::Parametric(ParametricDriver::new(delay, steer_scale, p.steer_hold))
        }
        DriverSpec::Scripted { actions } => {
            DriverInstance::Scripted(ScriptedDriver::new(actions.clone()))
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricDriver {
    pub delay: f64,
    pub steer_scale: f64,
    pub steer_hold: f64,
    took_over_at: Option<f64>,
    last_t: Option<f64>,
}

impl ParametricDriver {
    pub fn new(delay: f64, steer_scale: f64, steer_hold: f64) -> Self {
        Self {
            delay,
            steer_scale,
            steer_hold,
            took_over_at: None,
            last_t: None,
        }
    }
}

fn check_order(last_t: &mut Option<f64>, t: f64) -> Result<(), DriverError> {
    if let Some(previous) = *last_t {
        if t < previous {
            return Err(DriverError::Ordering { t, previous });
        }
    }
    *last_t = Some(t);
    Ok(())
}

impl Driver for ParametricDriver {
    fn act(
        &mut self,
        t: f64,
        tor_time: Option<f64>,
        ideal: f64,
    ) -> Result<DriverAction, DriverError> {
        check_order(&mut self.last_t, t)?;
        match (self.took_over_at, tor_time) {
            (None, Some(tor)) if t >= tor + self.delay - TIME_EPS => {
                self.took_over_at = Some(t);
                Ok(DriverAction::TakeOver)
            }
            (None, _) => Ok(DriverAction::None),
            (Some(at), _) if t < at + self.steer_hold - TIME_EPS => Ok(DriverAction::Steer {
                swa: (self.steer_scale * ideal).clamp(-MAX_DRIVER_SWA, MAX_DRIVER_SWA),
            }),
            (Some(_), _) => Ok(DriverAction::Steer {
                swa: ideal.clamp(-MAX_DRIVER_SWA, MAX_DRIVER_SWA),
            }),
        }
    }
}

/// Replays a timed action list.
///
/// A TAKE_OVER is emitted once, at the first query at or after its time.
/// STEER actions set the held steering-wheel angle, which is reported on
/// every later query until the next STEER.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptedDriver {
    actions: Vec<TimedAction>,
    cursor: usize,
    takeover_due: bool,
    steer: Option<f64>,
    last_t: Option<f64>,
}

impl ScriptedDriver {
    pub fn new(actions: Vec<TimedAction>) -> Self {
        Self {
            actions,
            ..Self::default()
        }
    }

    /// Appends an action; used when the list grows while an episode runs.
    pub fn push(&mut self, action: TimedAction) -> Result<(), DriverError> {
        let mut next = self.actions.clone();
        next.push(action);
        validate_actions(&next).map_err(DriverError::MalformedLog)?;
        self.actions.push(action);
        Ok(())
    }

    pub fn actions(&self) -> &[TimedAction] {
        &self.actions
    }

    pub fn has_takeover(&self) -> bool {
        self.actions
            .iter()
            .any(|a| a.action == DriverAction::TakeOver)
    }
}

impl Driver for ScriptedDriver {
    fn act(
        &mut self,
        t: f64,
        _tor_time: Option<f64>,
        _ideal: f64,
    ) -> Result<DriverAction, DriverError> {
        check_order(&mut self.last_t, t)?;
        while let Some(next) = self.actions.get(self.cursor) {
            if next.t > t + TIME_EPS {
                break;
            }
            match next.action {
                DriverAction::TakeOver => self.takeover_due = true,
                DriverAction::Steer { swa } => self.steer = Some(swa),
                DriverAction::None => {}
            }
            self.cursor += 1;
        }
        if self.takeover_due {
            self.takeover_due = false;
            return Ok(DriverAction::TakeOver);
        }
        Ok(match self.steer {
            Some(swa) => DriverAction::Steer { swa },
            None => DriverAction::None,
        })
    }
}

/// Turns a recorded interactive session into a replayable scripted driver.
pub fn scripted_from_session(log: &[TimedAction]) -> Result<DriverSpec, DriverError> {
    validate_actions(log).map_err(DriverError::MalformedLog)?;
    Ok(DriverSpec::Scripted {
        actions: log.to_vec(),
    })
}

/// Parses a session log in JSON-lines form, one `{"t":..,"kind":..,"swa":..}`
/// object per line.
pub fn parse_session_log(text: &str) -> Result<Vec<TimedAction>, DriverError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| DriverError::MalformedLog(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn session_log_jsonl(log: &[TimedAction]) -> String {
    let mut out = String::new();
    for action in log {
        out.push_str(&serde_json::to_string(action).expect("actions serialize"));
        out.push('\n');
    }
    out
}
