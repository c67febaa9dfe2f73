//! Interactive driver-in-the-loop sessions over WebSocket.
//!
//! Clients connect to `/session` and exchange JSON frames, one object per
//! line. A session runs one episode in real time: the simulation advances
//! `dt` per step at 50 ticks per second of wall-clock time (scaled by
//! `time_scale`) and broadcasts `STATE` at 20 Hz. Control input received
//! between ticks is applied at the next tick, one action per step.
//!
//! Inbound frames:
//!
//! ```json
//! {"type": "START", "overrides": {"mrm_grace": 4.0}, "seed": 7, "detector_seed": 8}
//! {"type": "CONTROL", "kind": "TAKE_OVER"}
//! {"type": "CONTROL", "kind": "STEER", "swa": -12.5}
//! {"type": "ABORT"}
//! ```
//!
//! Outbound frames are `STATE`, `EVENT`, `RESULT`, `ERROR` and `BUSY`; see
//! [`Outbound`]. A session ends with `RESULT`, or with `ERROR` after a
//! protocol violation.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sotif_core::classifier::{
    assess_episode, ClassifierConfig, DetectorNoise, EpisodeAssessment, MisuseLabels,
    TestCaseRecord,
};
use sotif_core::driver::{
    parse_session_log, scripted_from_session, session_log_jsonl, DriverAction, ScriptedDriver,
    TimedAction, MAX_DRIVER_SWA,
};
use sotif_core::scenario::{run_episode, AdsMode, Episode, EventKind, SimConfig};
use sotif_core::testmanager::{
    apply_overrides, evaluate_checklist, parse_records_csv, record_csv_row, ChecklistResult,
    LabelRow, RECORDS_CSV_HEADER,
};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use crate::commands::{RECORDS_FILE, RESULTS_FILE};
use crate::CliError;

pub const SESSIONS_DIR: &str = "sessions";

const TICK_PERIOD: f64 = 0.02;
const BROADCAST_PERIOD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlKind {
    TakeOver,
    Steer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Inbound {
    Start {
        /// Partial simulation configuration merged onto the server's base.
        #[serde(default)]
        overrides: Value,
        #[serde(default)]
        seed: u64,
        /// Defaults to `seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detector_seed: Option<u64>,
    },
    Control {
        kind: ControlKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        swa: Option<f64>,
    },
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outbound {
    State {
        t: f64,
        y: f64,
        heading: f64,
        speed: f64,
        mode: AdsMode,
        target_lane: f64,
    },
    Event {
        t: f64,
        kind: EventKind,
    },
    Result {
        /// Absent when the session failed or was aborted.
        record: Option<TestCaseRecord>,
        labels: Option<MisuseLabels>,
        failed: bool,
        error: Option<String>,
        checklist: Option<ChecklistResult>,
        /// Number of the stored session log, when one was written.
        session: Option<u32>,
    },
    Error {
        message: String,
    },
    Busy,
}

impl Outbound {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frames serialize") + "\n"
    }
}

/// Replay information stored next to each session's action log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session: u32,
    pub tc: u32,
    pub seed: u64,
    pub detector_seed: u64,
    pub completed: bool,
    pub config: SimConfig,
}

impl SessionMeta {
    pub fn log_path(out: &Path, session: u32) -> PathBuf {
        out.join(SESSIONS_DIR)
            .join(format!("session-{session:04}.jsonl"))
    }

    pub fn meta_path(out: &Path, session: u32) -> PathBuf {
        out.join(SESSIONS_DIR)
            .join(format!("session-{session:04}.json"))
    }
}

/// Re-runs a stored session in batch mode with a scripted driver built from
/// its action log.
pub fn replay_session(out: &Path, session: u32) -> Result<EpisodeAssessment, CliError> {
    let meta_path = SessionMeta::meta_path(out, session);
    let meta: SessionMeta = serde_json::from_str(&crate::read_input(&meta_path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", meta_path.display())))?;
    let log = parse_session_log(&crate::read_input(&SessionMeta::log_path(out, session))?)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let driver = scripted_from_session(&log).map_err(|e| CliError::Invalid(e.to_string()))?;
    let trace = run_episode(&meta.config, &driver, meta.seed)
        .map_err(|e| CliError::Episode(e.to_string()))?;
    assess_episode(
        &trace,
        &meta.config,
        meta.tc,
        meta.detector_seed,
        &DetectorNoise::default(),
        &ClassifierConfig::default(),
    )
    .map_err(|e| CliError::Episode(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub base: SimConfig,
    pub out: PathBuf,
    pub static_dir: Option<PathBuf>,
    /// Wall-clock speed-up; 1.0 is real time.
    pub time_scale: f64,
}

struct AppState {
    options: ServeOptions,
    busy: AtomicBool,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

pub fn router(options: ServeOptions) -> Router {
    let static_dir = options.static_dir.clone();
    let state = Arc::new(AppState {
        options,
        busy: AtomicBool::new(false),
    });
    let router = Router::new().route("/session", get(upgrade));
    let router = match static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { Html(include_str!("console.html")) })),
    };
    router.with_state(state)
}

/// Serves until the process receives Ctrl-C.
pub async fn serve(listener: TcpListener, options: ServeOptions) -> std::io::Result<()> {
    axum::serve(listener, router(options))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| handle_socket(socket, state))
}

enum Incoming {
    Frame(Inbound),
    Malformed(String),
    Closed,
}

async fn handle_socket(mut socket: WebSocket, state: Arc<AppState>) {
    if state
        .busy
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        let _ = socket
            .send(Message::Text(Outbound::Busy.to_line().into()))
            .await;
        let _ = socket.close().await;
        return;
    }
    let _guard = BusyGuard(&state.busy);

    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Outbound>();
    let (in_tx, mut in_rx) = mpsc::unbounded_channel::<Incoming>();

    let writer = tokio::spawn(async move {
        while let Some(frame) = out_rx.recv().await {
            if sink
                .send(Message::Text(frame.to_line().into()))
                .await
                .is_err()
            {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let reader = tokio::spawn(async move {
        while let Some(message) = stream.next().await {
            match message {
                Ok(Message::Text(text)) => {
                    for line in text.as_str().lines().filter(|l| !l.trim().is_empty()) {
                        let incoming = match serde_json::from_str::<Inbound>(line) {
                            Ok(frame) => Incoming::Frame(frame),
                            Err(e) => Incoming::Malformed(format!("malformed frame: {e}")),
                        };
                        let _ = in_tx.send(incoming);
                    }
                }
                Ok(Message::Binary(_)) => {
                    let _ = in_tx.send(Incoming::Malformed(
                        "binary frames are not supported".into(),
                    ));
                }
                Ok(Message::Close(_)) | Err(_) => break,
                Ok(_) => {}
            }
        }
        let _ = in_tx.send(Incoming::Closed);
    });

    run_session(&state.options, &mut in_rx, &out_tx).await;
    drop(out_tx);
    let _ = writer.await;
    reader.abort();
}

fn error(out: &mpsc::UnboundedSender<Outbound>, message: impl Into<String>) {
    let _ = out.send(Outbound::Error {
        message: message.into(),
    });
}

fn failed_result(
    out: &mpsc::UnboundedSender<Outbound>,
    message: impl Into<String>,
    session: Option<u32>,
) {
    let _ = out.send(Outbound::Result {
        record: None,
        labels: None,
        failed: true,
        error: Some(message.into()),
        checklist: None,
        session,
    });
}

fn steps_for(period: f64, dt: f64) -> u64 {
    ((period / dt).round() as u64).max(1)
}

async fn run_session(
    options: &ServeOptions,
    inbound: &mut mpsc::UnboundedReceiver<Incoming>,
    out: &mpsc::UnboundedSender<Outbound>,
) {
    let (overrides, seed, detector_seed) = match inbound.recv().await {
        Some(Incoming::Frame(Inbound::Start {
            overrides,
            seed,
            detector_seed,
        })) => (overrides, seed, detector_seed.unwrap_or(seed)),
        Some(Incoming::Frame(_)) => return error(out, "expected START as the first frame"),
        Some(Incoming::Malformed(message)) => return error(out, message),
        Some(Incoming::Closed) | None => return,
    };
    let sim = match apply_overrides(&options.base, &overrides) {
        Ok(sim) => sim,
        Err(errors) => return error(out, format!("invalid overrides: {}", errors.join("; "))),
    };
    let mut episode = match sim.prepared().and_then(Episode::new) {
        Ok(e) => e,
        Err(e) => return error(out, e.to_string()),
    };

    let steps_per_tick = steps_for(TICK_PERIOD, sim.dt);
    let broadcast_every = steps_for(BROADCAST_PERIOD, sim.dt);
    let period = Duration::from_secs_f64(steps_per_tick as f64 * sim.dt / options.time_scale);
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);

    let mut driver = ScriptedDriver::new(Vec::new());
    let mut pending: VecDeque<DriverAction> = VecDeque::new();
    let mut steps: u64 = 0;
    let mut events_sent = 0;
    let mut step_error = None;

    'ticks: while !episode.is_finished() {
        ticker.tick().await;
        loop {
            match inbound.try_recv() {
                Ok(Incoming::Frame(Inbound::Control { kind, swa })) => match (kind, swa) {
                    (ControlKind::TakeOver, _) => pending.push_back(DriverAction::TakeOver),
                    (ControlKind::Steer, Some(swa))
                        if swa.is_finite() && swa.abs() <= MAX_DRIVER_SWA =>
                    {
                        pending.push_back(DriverAction::Steer { swa })
                    }
                    (ControlKind::Steer, _) => {
                        return error(
                            out,
                            format!("STEER needs a finite swa within ±{MAX_DRIVER_SWA} degrees"),
                        )
                    }
                },
                Ok(Incoming::Frame(Inbound::Abort)) => {
                    return failed_result(out, "aborted by client", None)
                }
                Ok(Incoming::Frame(Inbound::Start { .. })) => {
                    return error(out, "session already started")
                }
                Ok(Incoming::Malformed(message)) => return error(out, message),
                Ok(Incoming::Closed) | Err(mpsc::error::TryRecvError::Disconnected) => return,
                Err(mpsc::error::TryRecvError::Empty) => break,
            }
        }

        for _ in 0..steps_per_tick {
            if episode.is_finished() {
                break;
            }
            let t = episode.time();
            if let Some(action) = pending.pop_front() {
                let accepted = match action {
                    DriverAction::TakeOver => {
                        episode.mode().accepts_takeover() && !driver.has_takeover()
                    }
                    _ => true,
                };
                if accepted {
                    if let Err(e) = driver.push(TimedAction { t, action }) {
                        return error(out, e.to_string());
                    }
                }
            }
            if let Err(e) = episode.step(&mut driver) {
                step_error = Some(e.to_string());
                break 'ticks;
            }
            steps += 1;
            let events = &episode.trace().events;
            for event in &events[events_sent..] {
                let _ = out.send(Outbound::Event {
                    t: event.t,
                    kind: event.kind,
                });
            }
            events_sent = events.len();
            if steps.is_multiple_of(broadcast_every) || episode.is_finished() {
                let state = episode.state();
                let _ = out.send(Outbound::State {
                    t: episode.time(),
                    y: state.y,
                    heading: state.heading,
                    speed: state.speed,
                    mode: episode.mode(),
                    target_lane: episode.target_lane(),
                });
            }
        }
    }

    let result = finish_session(
        options,
        &sim,
        &episode,
        &driver,
        seed,
        detector_seed,
        step_error,
    );
    let _ = out.send(result);
}

/// Classifies the finished episode, stores the session log and, for a
/// completed episode, appends the record and label line to the output
/// series.
fn finish_session(
    options: &ServeOptions,
    sim: &SimConfig,
    episode: &Episode,
    driver: &ScriptedDriver,
    seed: u64,
    detector_seed: u64,
    step_error: Option<String>,
) -> Outbound {
    let tc = match next_tc(&options.out) {
        Ok(tc) => tc,
        Err(e) => {
            return Outbound::Error {
                message: e.to_string(),
            }
        }
    };
    let assessed = match step_error {
        Some(e) => Err(e),
        None => assess_episode(
            episode.trace(),
            sim,
            tc,
            detector_seed,
            &DetectorNoise::default(),
            &ClassifierConfig::default(),
        )
        .map_err(|e| e.to_string())
        .and_then(|a| {
            evaluate_checklist(episode.trace(), &a.record, &a.labels, sim)
                .map(|c| (a, c))
                .map_err(|e| e.to_string())
        }),
    };

    let session = match next_session(&options.out) {
        Ok(n) => n,
        Err(e) => {
            return Outbound::Error {
                message: e.to_string(),
            }
        }
    };
    let meta = SessionMeta {
        session,
        tc,
        seed,
        detector_seed,
        completed: assessed.is_ok(),
        config: sim.clone(),
    };
    let stored =
        store_session(&options.out, &meta, driver.actions()).and_then(|()| match &assessed {
            Ok((a, _)) => append_series(&options.out, a),
            Err(_) => Ok(()),
        });
    if let Err(e) = stored {
        return Outbound::Error {
            message: format!("cannot store session: {e}"),
        };
    }

    match assessed {
        Ok((a, checklist)) => Outbound::Result {
            record: Some(a.record),
            labels: Some(a.labels),
            failed: false,
            error: None,
            checklist: Some(checklist),
            session: Some(session),
        },
        Err(e) => Outbound::Result {
            record: None,
            labels: None,
            failed: true,
            error: Some(e),
            checklist: None,
            session: Some(session),
        },
    }
}

fn next_tc(out: &Path) -> Result<u32, CliError> {
    let path = out.join(RECORDS_FILE);
    if !path.exists() {
        return Ok(1);
    }
    let records = parse_records_csv(&crate::read_input(&path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(records.iter().map(|r| r.tc).max().unwrap_or(0) + 1)
}

fn next_session(out: &Path) -> Result<u32, CliError> {
    let dir = out.join(SESSIONS_DIR);
    if !dir.exists() {
        return Ok(1);
    }
    let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
    let count = entries
        .filter_map(Result::ok)
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .count();
    Ok(count as u32 + 1)
}

fn store_session(out: &Path, meta: &SessionMeta, actions: &[TimedAction]) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(meta).expect("meta serializes");
    json.push('\n');
    crate::write_output(
        &SessionMeta::log_path(out, meta.session),
        &session_log_jsonl(actions),
    )?;
    crate::write_output(&SessionMeta::meta_path(out, meta.session), &json)
}

fn append(path: &Path, header: Option<&str>, line: &str) -> Result<(), CliError> {
    use std::io::Write as _;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut text = String::new();
    if let (true, Some(header)) = (fresh, header) {
        text.push_str(header);
        text.push('\n');
    }
    text.push_str(line);
    text.push('\n');
    file.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

fn append_series(out: &Path, a: &EpisodeAssessment) -> Result<(), CliError> {
    append(
        &out.join(RECORDS_FILE),
        Some(RECORDS_CSV_HEADER),
        &record_csv_row(&a.record),
    )?;
    let row = LabelRow::new(a.record.tc, &a.labels, Some(&a.detector));
    append(
        &out.join(RESULTS_FILE),
        None,
        &serde_json::to_string(&row).expect("labels serialize"),
    )
}
