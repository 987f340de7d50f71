use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use elicit_core::bounds::Answer;
use elicit_core::config::StudyConfig;
use elicit_core::log::{LogRecord, SessionLog};
use elicit_core::protocol::ProtocolKind;
use elicit_core::session::{Phase, Session, Step, Submission};
use elicit_core::task::TaskCompletion;
use elicit_server::{router, AppState, Bounds, Created, ErrorBody, Summary};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(StudyConfig::default()).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call<T: serde::de::DeserializeOwned>(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, T) {
    let (status, bytes) = call(app, method, uri, body).await;
    let parsed = serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes)));
    (status, parsed)
}

/// A scripted respondent: does every task by hand and answers by a fixed
/// rule of the outcome and ordinal, so API and direct runs can be compared.
fn scripted(step: &Step) -> Option<Submission> {
    match step {
        Step::TrainingTask { task, .. } | Step::ExperientialTask { task, .. } => Some(Submission::Task(TaskCompletion {
            accepted_icon: None,
            manual_events: task.goal.complexity(),
            final_style: task.goal.target,
        })),
        Step::PreferencePrompt { ordinal, outcome, .. } => Some(Submission::Preference {
            answer: if (ordinal + outcome.q) % 2 == 0 { Answer::PrefersGamble } else { Answer::PrefersSure },
        }),
        Step::Presentation { query, .. } => Some(Submission::Preference {
            answer: if query.p.value() * 10.0 > f64::from(3 + query.outcome.q + query.outcome.l % 3) {
                Answer::PrefersGamble
            } else {
                Answer::PrefersSure
            },
        }),
        Step::Done { .. } => None,
    }
}

async fn create(app: &Router, id: &str, protocol: &str, seed: u64) -> Created {
    let (status, created) =
        json_call(app, Method::POST, "/sessions", Some(json!({"id": id, "protocol": protocol, "seed": seed}))).await;
    assert_eq!(status, StatusCode::CREATED);
    created
}

async fn drive_to_end(app: &Router, id: &str, first: Step) -> usize {
    let mut step = first;
    let mut submissions = 0;
    while let Some(sub) = scripted(&step) {
        let (status, next): (_, Step) =
            json_call(app, Method::POST, &format!("/sessions/{id}/responses"), Some(serde_json::to_value(sub).unwrap())).await;
        assert_eq!(status, StatusCode::OK);
        step = next;
        submissions += 1;
    }
    submissions
}

fn direct_log(kind: ProtocolKind, id: &str, seed: u64) -> SessionLog {
    let settings = StudyConfig::default().session_settings(kind, seed).unwrap();
    let mut s = Session::create(id, settings).unwrap();
    while let Some(sub) = scripted(&s.next_step().unwrap()) {
        s.submit(sub).unwrap();
    }
    s.log().normalized()
}

async fn fetch_log(app: &Router, id: &str) -> SessionLog {
    let (status, bytes) = call(app, Method::GET, &format!("/sessions/{id}/log?normalized=true"), None).await;
    assert_eq!(status, StatusCode::OK);
    SessionLog::from_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap()
}

#[tokio::test]
async fn create_validates_and_rejects_duplicates() {
    let app = app();
    let c = create(&app, "alice", "conceptual", 1).await;
    assert_eq!(c.phase, Phase::Querying);
    assert!(matches!(c.step, Step::Presentation { .. }));
    assert_eq!(c.config, "conceptual-vs-experiential");

    let (status, err): (_, ErrorBody) =
        json_call(&app, Method::POST, "/sessions", Some(json!({"id": "alice"}))).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::CONFLICT, "duplicate_id"));
    let (status, err): (_, ErrorBody) =
        json_call(&app, Method::POST, "/sessions", Some(json!({"id": "../etc"}))).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "invalid_id"));
    let (status, err): (_, ErrorBody) =
        json_call(&app, Method::POST, "/sessions", Some(json!({"config": "nope"}))).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "unknown_config"));
    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({"protocol": "sideways"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, auto): (_, Created) = json_call(&app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(auto.id, "session-0002");
    assert_eq!(auto.protocol, ProtocolKind::Conceptual);

    let (_, list): (_, Vec<Summary>) = json_call(&app, Method::GET, "/sessions", None).await;
    assert_eq!(list.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["alice", "session-0002"]);
}

#[tokio::test]
async fn primed_sessions_start_in_training() {
    let app = app();
    let c = create(&app, "p", "primed", 2).await;
    assert_eq!(c.phase, Phase::Training);
    assert!(matches!(c.step, Step::TrainingTask { index: 0, total: 6, .. }));
}

#[tokio::test]
async fn api_run_matches_a_direct_run() {
    let app = app();
    for (kind, name) in [(ProtocolKind::Experiential, "experiential"), (ProtocolKind::PrimedPlus, "primed_plus")] {
        let id = format!("run-{name}");
        let c = create(&app, &id, name, 40).await;
        let submitted = drive_to_end(&app, &id, c.step).await;
        assert!(submitted > 20);

        let log = fetch_log(&app, &id).await;
        assert_eq!(log, direct_log(kind, &id, 40), "{name}");
        assert!(log.replay().is_ok());

        let (_, summary): (_, Summary) = json_call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
        assert_eq!((summary.phase, summary.converged, summary.outcomes), (Phase::Done, 18, 18));
        let (status, step): (_, Step) = json_call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert!(matches!(step, Step::Done { .. }));
        let late = json!({"kind": "preference", "answer": "prefers_gamble"});
        let (status, err): (_, ErrorBody) =
            json_call(&app, Method::POST, &format!("/sessions/{id}/responses"), Some(late)).await;
        assert_eq!((status, err.error.as_str()), (StatusCode::GONE, "exhausted"));
    }
}

#[tokio::test]
async fn mismatched_payloads_are_rejected_without_side_effects() {
    let app = app();
    let c = create(&app, "e", "experiential", 3).await;
    let answer = json!({"kind": "preference", "answer": "indifferent"});
    let (status, err): (_, ErrorBody) =
        json_call(&app, Method::POST, "/sessions/e/responses", Some(answer)).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "protocol_violation"));
    let (_, step): (_, Step) = json_call(&app, Method::GET, "/sessions/e/next", None).await;
    assert_eq!(step, c.step);
    let (status, _) = call(&app, Method::POST, "/sessions/e/responses", Some(json!({"kind": "dance"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, err): (_, ErrorBody) = json_call(&app, Method::GET, "/sessions/ghost/next", None).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::NOT_FOUND, "not_found"));
}

#[tokio::test]
async fn bounds_follow_answers() {
    let app = app();
    let c = create(&app, "b", "conceptual", 4).await;
    let Step::Presentation { query, .. } = c.step else { panic!("expected a presentation") };
    let (_, before): (_, Bounds) = json_call(&app, Method::GET, "/sessions/b/bounds", None).await;
    assert_eq!(before.intervals.len(), 18);
    assert_eq!(before.midpoints[&query.outcome], 0.5);
    let sure = json!({"kind": "preference", "answer": "prefers_sure"});
    let (status, _) = call(&app, Method::POST, "/sessions/b/responses", Some(sure)).await;
    assert_eq!(status, StatusCode::OK);
    let (_, after): (_, Bounds) = json_call(&app, Method::GET, "/sessions/b/bounds", None).await;
    assert_eq!(after.intervals[&query.outcome].lo, query.p);
    assert!(after.conflicts.is_empty());
    assert_eq!(after.termination_width, 0.1);
}

#[tokio::test]
async fn suspend_and_resume_over_http() {
    let app = app();
    let c = create(&app, "s", "conceptual", 5).await;
    let (status, s): (_, Summary) = json_call(&app, Method::POST, "/sessions/s/suspend", None).await;
    assert_eq!((status, s.phase), (StatusCode::OK, Phase::Suspended));
    let (status, err): (_, ErrorBody) = json_call(&app, Method::GET, "/sessions/s/next", None).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::CONFLICT, "suspended"));
    let (status, _) = call(&app, Method::POST, "/sessions/s/suspend", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, s): (_, Summary) = json_call(&app, Method::POST, "/sessions/s/resume", None).await;
    assert_eq!((status, s.phase), (StatusCode::OK, Phase::Querying));
    let (status, err): (_, ErrorBody) = json_call(&app, Method::POST, "/sessions/s/resume", None).await;
    assert_eq!((status, err.error.as_str()), (StatusCode::CONFLICT, "not_suspended"));
    let (_, step): (_, Step) = json_call(&app, Method::GET, "/sessions/s/next", None).await;
    assert_eq!(step, c.step);
}

#[tokio::test]
async fn logs_and_snapshots_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let state = || AppState::new(StudyConfig::default()).unwrap().with_log_dir(dir.path()).unwrap();
    let first = router(state());
    let c = create(&first, "r", "experiential", 6).await;
    let mut step = c.step;
    for _ in 0..30 {
        let sub = serde_json::to_value(scripted(&step).unwrap()).unwrap();
        step = json_call(&first, Method::POST, "/sessions/r/responses", Some(sub)).await.1;
    }
    let (status, _) = call(&first, Method::POST, "/sessions/r/suspend", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(dir.path().join("r.session.json").exists());
    drop(first);

    let second = router(state());
    let (_, s): (_, Summary) = json_call(&second, Method::GET, "/sessions/r", None).await;
    assert_eq!(s.phase, Phase::Suspended);
    call(&second, Method::POST, "/sessions/r/resume", None).await;
    assert!(!dir.path().join("r.session.json").exists());
    let (_, resumed): (_, Step) = json_call(&second, Method::GET, "/sessions/r/next", None).await;
    assert_eq!(resumed, step);
    drive_to_end(&second, "r", resumed).await;

    let on_disk = SessionLog::read(&dir.path().join("r.jsonl")).unwrap();
    let (_, bytes) = call(&second, Method::GET, "/sessions/r/log", None).await;
    assert_eq!(on_disk.to_jsonl(), String::from_utf8(bytes).unwrap());
    let kinds = |log: &SessionLog| {
        log.records().iter().filter(|r| matches!(r, LogRecord::Suspended { .. } | LogRecord::Resumed { .. })).count()
    };
    assert_eq!(kinds(&on_disk), 2);
    assert!(on_disk.replay().is_ok());
    assert!(dir.path().join("r.session.json").exists(), "finished sessions keep a snapshot");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_independent() {
    let app = app();
    let mut handles = Vec::new();
    for i in 0..6u64 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let id = format!("c{i}");
            let c = create(&app, &id, "conceptual", 100 + i).await;
            drive_to_end(&app, &id, c.step).await;
            (id, fetch_log(&app, &format!("c{i}")).await)
        }));
    }
    for h in handles {
        let (id, log) = h.await.unwrap();
        let seed = 100 + id[1..].parse::<u64>().unwrap();
        assert_eq!(log, direct_log(ProtocolKind::Conceptual, &id, seed), "{id}");
    }

    // racing submissions to one session are applied one at a time
    create(&app, "race", "conceptual", 7).await;
    let mut racers = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        racers.push(tokio::spawn(async move {
            let body = json!({"kind": "preference", "answer": "prefers_gamble"});
            call(&app, Method::POST, "/sessions/race/responses", Some(body)).await.0
        }));
    }
    let mut ok = 0;
    for r in racers {
        if r.await.unwrap() == StatusCode::OK {
            ok += 1;
        }
    }
    let log = fetch_log(&app, "race").await;
    let responses = log.records().iter().filter(|r| matches!(r, LogRecord::Response { .. })).count();
    assert_eq!(responses, ok);
    assert!(log.replay().is_ok());
}

#[tokio::test]
async fn static_ui_is_served_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>hello</p>").unwrap();
    let app = router(AppState::new(StudyConfig::default()).unwrap().with_ui_dir(dir.path()));
    let (status, body) = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!((status, body.as_slice()), (StatusCode::OK, b"<p>hello</p>".as_slice()));
    let (status, _) = call(&self::app(), Method::GET, "/index.html", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn extra_configs_can_be_named() {
    let mut other = StudyConfig::default();
    other.study.name = "pilot".into();
    other.study.protocol = ProtocolKind::Primed;
    let app = router(AppState::new(StudyConfig::default()).unwrap().with_config(other).unwrap());
    let (status, c): (_, Created) = json_call(&app, Method::POST, "/sessions", Some(json!({"config": "pilot"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!((c.config.as_str(), c.protocol, c.phase), ("pilot", ProtocolKind::Primed, Phase::Training));
}
