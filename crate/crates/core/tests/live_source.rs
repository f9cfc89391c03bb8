use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};
use vandal_core::ingestion::{IngestError, LiveSource, RetryConfig, RevisionSource};

struct Upstream {
    hits: AtomicUsize,
    arrivals: Mutex<Vec<Instant>>,
    /// Requests answered with `status` before the server starts behaving.
    failures: AtomicUsize,
    status: u16,
}

fn revision(rev: u64, parent: u64) -> Value {
    json!({
        "revid": rev,
        "parentid": parent,
        "user": if rev % 2 == 0 { "Editor" } else { "198.51.100.4" },
        "comment": format!("edit {rev}"),
        "timestamp": "2016-03-01T12:00:00Z",
        "slots": {"main": {"content": format!("{{\"type\":\"item\",\"id\":\"Q7\",\"labels\":{{\"en\":{{\"language\":\"en\",\"value\":\"r{rev}\"}}}}}}")}},
    })
}

async fn api(State(up): State<Arc<Upstream>>, Query(q): Query<HashMap<String, String>>) -> (StatusCode, Json<Value>) {
    up.hits.fetch_add(1, Ordering::SeqCst);
    up.arrivals.lock().unwrap().push(Instant::now());
    if up.failures.load(Ordering::SeqCst) > 0 {
        up.failures.fetch_sub(1, Ordering::SeqCst);
        return (StatusCode::from_u16(up.status).unwrap(), Json(json!({})));
    }
    assert_eq!(q.get("format").map(String::as_str), Some("json"));
    if let Some(name) = q.get("ususers") {
        if name == "Ghost" {
            return (StatusCode::OK, Json(json!({"query": {"users": [{"name": name, "missing": true}]}})));
        }
        let user = json!({"name": name, "groups": ["*", "user", "rollbacker"], "registration": "2013-01-01T00:00:00Z"});
        return (StatusCode::OK, Json(json!({"query": {"users": [user]}})));
    }
    let ids: Vec<u64> = q["revids"].split('|').map(|s| s.parse().unwrap()).collect();
    let mut bad = serde_json::Map::new();
    let mut revs = Vec::new();
    for id in ids {
        match id {
            404 => {
                bad.insert(id.to_string(), json!({"revid": id}));
            }
            2000 => revs.push(revision(id, 404)),
            // odd ids below 1000 are creations, others have the previous id as parent
            _ if id % 2 == 1 && id < 1000 => revs.push(revision(id, 0)),
            _ => revs.push(revision(id, id - 1)),
        }
    }
    let mut query = json!({"pages": [{"pageid": 1, "title": "Q7", "revisions": revs}]});
    if !bad.is_empty() {
        query["badrevids"] = Value::Object(bad);
    }
    (StatusCode::OK, Json(json!({ "query": query })))
}

fn serve(failures: usize, status: u16) -> (String, Arc<Upstream>) {
    let up = Arc::new(Upstream { hits: AtomicUsize::new(0), arrivals: Mutex::default(), failures: AtomicUsize::new(failures), status });
    let state = up.clone();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/w/api.php", get(api)).with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    (format!("http://{addr}/w/api.php"), up)
}

fn source(url: &str, rate: f64, attempts: u32) -> LiveSource {
    let retry = RetryConfig { max_attempts: attempts, backoff_base: Duration::from_millis(5) };
    LiveSource::new(url, rate, "vandal-test/0.1", retry).unwrap()
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (url, up) = serve(2, 503);
    let env = source(&url, 1000.0, 4).fetch_revision(10).unwrap();
    assert_eq!(env.meta.rev_id, 10);
    assert_eq!(env.meta.parent_rev_id, 9);
    assert!(env.parent_json.as_deref().unwrap().contains("r9"));
    assert!(env.child_json.contains("r10"));
    assert_eq!(env.meta.user.name, "Editor");
    assert!(env.meta.user.groups.contains("rollbacker"));
    assert!(!env.meta.user.groups.contains("*"));
    // 2 failures + child + parent + user
    assert_eq!(up.hits.load(Ordering::SeqCst), 5);
}

#[test]
fn throttling_is_retried() {
    let (url, up) = serve(1, 429);
    let env = source(&url, 1000.0, 2).fetch_revision(11).unwrap();
    assert!(env.parent_json.is_none());
    assert!(env.meta.user.is_anonymous);
    assert_eq!(up.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, up) = serve(usize::MAX / 2, 500);
    let err = source(&url, 1000.0, 3).fetch_revision(10).unwrap_err();
    assert!(matches!(err, IngestError::Transport(_)), "{err:?}");
    assert_eq!(up.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, up) = serve(1, 403);
    let err = source(&url, 1000.0, 4).fetch_revision(10).unwrap_err();
    assert!(matches!(err, IngestError::Transport(_)), "{err:?}");
    assert_eq!(up.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn bad_revision_ids_are_not_found() {
    let (url, _) = serve(0, 500);
    let src = source(&url, 1000.0, 2);
    assert!(matches!(src.fetch_revision(404), Err(IngestError::NotFound(_))));
    let got = src.fetch_revisions(&[404, 12, 13]);
    assert_eq!(got.iter().map(|(r, _)| *r).collect::<Vec<_>>(), vec![404, 12, 13]);
    assert!(got[0].1.is_err());
    assert!(got[1].1.is_ok() && got[2].1.is_ok());
}

#[test]
fn missing_parent_is_reported() {
    let (url, _) = serve(0, 500);
    let err = source(&url, 1000.0, 2).fetch_revision(2000).unwrap_err();
    assert!(matches!(&err, IngestError::NotFound(m) if m.contains("parent 404")), "{err:?}");
}

#[test]
fn unknown_user_is_not_found_and_users_are_cached() {
    let (url, up) = serve(0, 500);
    let src = source(&url, 1000.0, 2);
    assert!(matches!(src.fetch_user("Ghost"), Err(IngestError::NotFound(_))));
    let a = src.fetch_user("Alice").unwrap();
    let b = src.fetch_user("Alice").unwrap();
    assert_eq!(a, b);
    assert!(src.fetch_user("2001:db8::1").unwrap().is_anonymous);
    assert_eq!(up.hits.load(Ordering::SeqCst), 2);
}

#[test]
fn requests_respect_the_rate_limit() {
    let (url, up) = serve(0, 500);
    let src = source(&url, 10.0, 1);
    for i in 0..35 {
        src.fetch_user(&format!("User{i}")).unwrap();
    }
    let t = up.arrivals.lock().unwrap().clone();
    assert_eq!(t.len(), 35);
    // any 11 consecutive arrivals span at least a second, less loopback jitter
    for w in t.windows(11) {
        assert!(w[10] - w[0] >= Duration::from_millis(990), "{:?}", w[10] - w[0]);
    }
}
