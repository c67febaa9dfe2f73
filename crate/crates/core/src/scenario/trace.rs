use std::fmt;

use serde::{Deserialize, Serialize};

use super::mode::AdsMode;
use super::vehicle::VehicleState;
use super::ScenarioError;

/// Discrete events recorded during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    /// The vehicle entered the stretch with missing lane markings.
    MarkingGapEntry,
    Warning,
    Tor,
    TakeOver,
    HazardEast,
    HazardWest,
    MrmStart,
    MrmStopped,
    EpisodeEnd,
}

impl EventKind {
    pub const ALL: [EventKind; 9] = [
        EventKind::MarkingGapEntry,
        EventKind::Warning,
        EventKind::Tor,
        EventKind::TakeOver,
        EventKind::HazardEast,
        EventKind::HazardWest,
        EventKind::MrmStart,
        EventKind::MrmStopped,
        EventKind::EpisodeEnd,
    ];

    pub fn is_hazard(self) -> bool {
        matches!(self, EventKind::HazardEast | EventKind::HazardWest)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MarkingGapEntry => "MARKING_GAP_ENTRY",
            EventKind::Warning => "WARNING",
            EventKind::Tor => "TOR",
            EventKind::TakeOver => "TAKE_OVER",
            EventKind::HazardEast => "HAZARD_EAST",
            EventKind::HazardWest => "HAZARD_WEST",
            EventKind::MrmStart => "MRM_START",
            EventKind::MrmStopped => "MRM_STOPPED",
            EventKind::EpisodeEnd => "EPISODE_END",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: EventKind,
}

/// One fixed-timestep sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: VehicleState,
    pub mode: AdsMode,
    /// Steering-wheel angle commanded by the driver for the step starting at
    /// `t`; absent while the ADS is in control.
    pub driver_swa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<TraceEvent>,
}

pub const TRACE_CSV_HEADER: &str = "t,s,y,heading,speed,swa,mode,driver_swa";

impl EpisodeTrace {
    pub fn first_event(&self, kind: EventKind) -> Option<&TraceEvent> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn event_time(&self, kind: EventKind) -> Option<f64> {
        self.first_event(kind).map(|e| e.t)
    }

    pub fn takeover_time(&self) -> Option<f64> {
        self.event_time(EventKind::TakeOver)
    }

    pub fn first_hazard(&self) -> Option<&TraceEvent> {
        self.events.iter().find(|e| e.kind.is_hazard())
    }

    pub fn is_complete(&self) -> bool {
        self.first_event(EventKind::EpisodeEnd).is_some()
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    pub fn final_state(&self) -> Option<&VehicleState> {
        self.samples.last().map(|s| &s.state)
    }

    /// Sample whose time equals `t` up to half a timestep.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        let tol = self.dt / 2.0;
        self.samples.iter().find(|s| (s.t - t).abs() <= tol)
    }

    /// Trace samples as CSV, six decimals per float.
    pub fn samples_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let driver = s.driver_swa.map(|v| format!("{v:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                s.t,
                s.state.s,
                s.state.y,
                s.state.heading,
                s.state.speed,
                s.state.swa,
                s.mode,
                driver
            ));
        }
        out
    }

    /// Events as JSON lines, one `{"t":..,"kind":".."}` object per line.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a trace from its CSV and JSON-lines exports.
    pub fn from_exports(
        dt: f64,
        samples_csv: &str,
        events_jsonl: &str,
    ) -> Result<Self, ScenarioError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(samples_csv.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| ScenarioError::Parse(e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if header != TRACE_CSV_HEADER {
            return Err(ScenarioError::Parse(format!(
                "unexpected trace header `{header}`"
            )));
        }
        let mut samples = Vec::new();
        for (line, row) in reader.records().enumerate() {
            let row = row.map_err(|e| ScenarioError::Parse(e.to_string()))?;
            let num = |i: usize| -> Result<f64, ScenarioError> {
                row.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        ScenarioError::Parse(format!("row {}: bad column {i}", line + 1))
                    })
            };
            let mode = row
                .get(6)
                .and_then(AdsMode::parse)
                .ok_or_else(|| ScenarioError::Parse(format!("row {}: bad mode", line + 1)))?;
            let driver_swa = match row.get(7) {
                Some("") | None => None,
                Some(_) => Some(num(7)?),
            };
            samples.push(Sample {
                t: num(0)?,
                state: VehicleState {
                    s: num(1)?,
                    y: num(2)?,
                    heading: num(3)?,
                    speed: num(4)?,
                    swa: num(5)?,
                },
                mode,
                driver_swa,
            });
        }
        let events = events_jsonl
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| ScenarioError::Parse(e.to_string())))
            .collect::<Result<Vec<TraceEvent>, _>>()?;
        Ok(EpisodeTrace {
            dt,
            samples,
            events,
        })
    }
}
