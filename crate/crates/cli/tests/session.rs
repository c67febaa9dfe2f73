use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use sotif_cli::commands::{RECORDS_FILE, RESULTS_FILE};
use sotif_cli::serve::{replay_session, router, Outbound, ServeOptions, SessionMeta};
use sotif_core::classifier::{assess_episode, ClassifierConfig, DetectorNoise};
use sotif_core::driver::{parse_session_log, scripted_from_session, DriverAction};
use sotif_core::scenario::{run_episode, AdsMode, EventKind, SimConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

const TIME_SCALE: f64 = 25.0;

async fn start_server(out: &Path, static_dir: Option<&Path>) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let address = listener.local_addr().unwrap();
    let app = router(ServeOptions {
        base: SimConfig::default(),
        out: out.to_path_buf(),
        static_dir: static_dir.map(Path::to_path_buf),
        time_scale: TIME_SCALE,
    });
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    address
}

async fn connect(address: SocketAddr) -> Client {
    connect_async(format!("ws://{address}/session"))
        .await
        .unwrap()
        .0
}

async fn send(client: &mut Client, frame: Value) {
    client
        .send(Message::Text(format!("{frame}\n").into()))
        .await
        .unwrap();
}

/// Next outbound frame, or `None` once the server closed the session.
async fn next(client: &mut Client) -> Option<Outbound> {
    loop {
        let message = tokio::time::timeout(Duration::from_secs(30), client.next())
            .await
            .expect("server stalled")?;
        match message.ok()? {
            Message::Text(text) => {
                assert!(text.ends_with('\n'));
                return Some(serde_json::from_str(text.trim_end()).unwrap());
            }
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

async fn until_result(client: &mut Client) -> (Vec<Outbound>, Outbound) {
    let mut frames = Vec::new();
    while let Some(frame) = next(client).await {
        if matches!(frame, Outbound::Result { .. }) {
            assert!(next(client).await.is_none(), "RESULT must be terminal");
            return (frames, frame);
        }
        frames.push(frame);
    }
    panic!("session closed without RESULT: {frames:?}");
}

fn events(frames: &[Outbound]) -> Vec<(f64, EventKind)> {
    frames
        .iter()
        .filter_map(|f| match f {
            Outbound::Event { t, kind } => Some((*t, *kind)),
            _ => None,
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn non_responder_session_streams_events_and_stops() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    let mut client = connect(address).await;
    let started = std::time::Instant::now();
    send(
        &mut client,
        json!({"type": "START", "seed": 5, "unknown": true}),
    )
    .await;
    let (frames, result) = until_result(&mut client).await;
    let wall = started.elapsed().as_secs_f64();

    let kinds: Vec<EventKind> = events(&frames).iter().map(|e| e.1).collect();
    for kind in [
        EventKind::Warning,
        EventKind::Tor,
        EventKind::MrmStart,
        EventKind::MrmStopped,
        EventKind::EpisodeEnd,
    ] {
        assert!(kinds.contains(&kind), "{kind} missing from {kinds:?}");
    }
    let states: Vec<(f64, AdsMode, f64)> = frames
        .iter()
        .filter_map(|f| match f {
            Outbound::State { t, mode, speed, .. } => Some((*t, *mode, *speed)),
            _ => None,
        })
        .collect();
    assert!(states.windows(2).all(|w| w[0].0 < w[1].0));
    let gaps: Vec<f64> = states.windows(2).map(|w| w[1].0 - w[0].0).collect();
    assert!(gaps[..gaps.len() - 1]
        .iter()
        .all(|g| (g - 0.05).abs() < 1e-9));
    let last = states.last().unwrap();
    assert_eq!((last.1, last.2), (AdsMode::Stopped, 0.0));

    // Pacing follows the scaled wall clock.
    let sim_end = events(&frames).last().unwrap().0;
    assert!(
        wall >= 0.8 * sim_end / TIME_SCALE,
        "{wall} s for {sim_end} s"
    );

    let Outbound::Result {
        record: Some(record),
        failed: false,
        session: Some(1),
        ..
    } = result
    else {
        panic!("unexpected result {result:?}");
    };
    assert_eq!((record.to, record.h, record.tc), (0, 0, 1));
    let csv = std::fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_takeover_matches_batch_replay() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    let mut client = connect(address).await;
    send(
        &mut client,
        json!({"type": "START", "seed": 11, "detector_seed": 12}),
    )
    .await;

    let mut frames = Vec::new();
    let mut tor = None;
    let mut took_over = false;
    let mut steered = false;
    let result = loop {
        let frame = next(&mut client).await.expect("session open");
        match &frame {
            Outbound::Event {
                t,
                kind: EventKind::Tor,
            } => tor = Some(*t),
            Outbound::State { t, .. } => {
                if let Some(tor) = tor {
                    if !took_over && *t >= tor + 2.27 {
                        send(&mut client, json!({"type": "CONTROL", "kind": "TAKE_OVER"})).await;
                        took_over = true;
                    } else if took_over && !steered && *t >= tor + 2.5 {
                        // Two frames in one message land in the same tick.
                        let lines = format!(
                            "{}\n{}\n",
                            json!({"type": "CONTROL", "kind": "STEER", "swa": -4.0}),
                            json!({"type": "CONTROL", "kind": "STEER", "swa": 0.5})
                        );
                        client.send(Message::Text(lines.into())).await.unwrap();
                        steered = true;
                    }
                }
            }
            Outbound::Result { .. } => break frame,
            _ => {}
        }
        frames.push(frame);
    };
    assert!(next(&mut client).await.is_none());

    let Outbound::Result {
        record: Some(live),
        labels: Some(live_labels),
        failed: false,
        session: Some(session),
        ..
    } = result
    else {
        panic!("unexpected result {result:?}");
    };
    assert_eq!(live.to, 1);
    assert!(
        live.delta_t2 >= 2.27 - 1e-9 && live.delta_t2 < 3.0,
        "{live:?}"
    );

    // The log holds one action per step in arrival order.
    let log = parse_session_log(
        &std::fs::read_to_string(SessionMeta::log_path(dir.path(), session)).unwrap(),
    )
    .unwrap();
    assert_eq!(log.len(), 3);
    assert_eq!(log[0].action, DriverAction::TakeOver);
    assert!((log[2].t - log[1].t - 0.01).abs() < 1e-9);

    let replayed = replay_session(dir.path(), session).unwrap();
    assert_eq!(replayed.record, live);
    assert_eq!(replayed.labels, live_labels);

    let batch = run_episode(
        &SimConfig::default(),
        &scripted_from_session(&log).unwrap(),
        0,
    )
    .unwrap();
    let assessed = assess_episode(
        &batch,
        &SimConfig::default(),
        live.tc,
        12,
        &DetectorNoise::default(),
        &ClassifierConfig::default(),
    )
    .unwrap();
    assert_eq!(assessed.record, live);
    let live_events = events(&frames);
    let batch_events: Vec<_> = batch.events.iter().map(|e| (e.t, e.kind)).collect();
    assert_eq!(live_events, batch_events);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_connection_is_busy() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    let mut first = connect(address).await;
    send(&mut first, json!({"type": "START"})).await;
    assert!(next(&mut first).await.is_some());

    let mut second = connect(address).await;
    assert_eq!(next(&mut second).await, Some(Outbound::Busy));
    assert_eq!(next(&mut second).await, None);

    send(&mut first, json!({"type": "ABORT"})).await;
    let (_, result) = until_result(&mut first).await;
    assert!(matches!(
        result,
        Outbound::Result {
            failed: true,
            record: None,
            ..
        }
    ));
    assert!(!dir.path().join(RECORDS_FILE).exists());

    // The slot frees up once the first session ends.
    tokio::time::sleep(Duration::from_millis(50)).await;
    let mut third = connect(address).await;
    send(&mut third, json!({"type": "ABORT"})).await;
    assert!(matches!(
        next(&mut third).await,
        Some(Outbound::Error { .. })
    ));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn protocol_violations_end_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    for frames in [
        vec![json!({"type": "CONTROL", "kind": "TAKE_OVER"})],
        vec![json!({"type": "START", "overrides": {"dt": -1.0}})],
        vec![json!({"type": "START"}), json!({"type": "START"})],
        vec![
            json!({"type": "START"}),
            json!({"type": "CONTROL", "kind": "STEER", "swa": 900.0}),
        ],
        vec![
            json!({"type": "START"}),
            json!({"type": "CONTROL", "kind": "STEER"}),
        ],
        vec![json!({"type": "START"}), json!({"type": "WAVE"})],
    ] {
        let mut client = connect(address).await;
        for frame in &frames {
            send(&mut client, frame.clone()).await;
        }
        let mut last = None;
        while let Some(frame) = next(&mut client).await {
            last = Some(frame);
        }
        assert!(
            matches!(last, Some(Outbound::Error { .. })),
            "{frames:?} ended with {last:?}"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert!(!dir.path().join(RECORDS_FILE).exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sessions_accumulate_into_an_evaluable_series() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    for seed in [1, 2] {
        let mut client = connect(address).await;
        send(&mut client, json!({"type": "START", "seed": seed})).await;
        until_result(&mut client).await;
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let csv = std::fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("2,"));
    let report = sotif_cli::commands::evaluate_files(
        &dir.path().join(RECORDS_FILE),
        &dir.path().join(RESULTS_FILE),
    )
    .unwrap();
    assert_eq!(report.joint.n_total, 2);
    assert_eq!(report.tree.non_takeover, 2);
    for session in [1, 2] {
        assert!(SessionMeta::meta_path(dir.path(), session).is_file());
    }
}

async fn http_get(address: SocketAddr, path: &str) -> String {
    let mut stream = TcpStream::connect(address).await.unwrap();
    stream
        .write_all(
            format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
                .as_bytes(),
        )
        .await
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    response
}

#[tokio::test]
async fn static_files_are_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let address = start_server(dir.path(), None).await;
    let page = http_get(address, "/").await;
    assert!(page.starts_with("HTTP/1.1 200"));
    assert!(page.contains("/session"));

    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<p>console</p>").unwrap();
    std::fs::write(assets.path().join("app.js"), "console.log(1);").unwrap();
    let address = start_server(dir.path(), Some(assets.path())).await;
    assert!(http_get(address, "/").await.ends_with("<p>console</p>"));
    assert!(http_get(address, "/app.js")
        .await
        .ends_with("console.log(1);"));
    assert!(http_get(address, "/missing.js")
        .await
        .starts_with("HTTP/1.1 404"));
}
