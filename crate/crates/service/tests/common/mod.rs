#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use vandal_core::config::PatternConfig;
use vandal_core::corpus::{build_corpus, split_train_test, RevertConfig, Split};
use vandal_core::eval::design_matrix;
use vandal_core::features::GroupSet;
use vandal_core::forest::{train, ForestParams, TrainedModel};
use vandal_core::ingestion::{Checkpoint, EnvelopeStream, FixtureSource, IngestError, RevisionEnvelope, RevisionSource};
use vandal_core::edit::UserInfo;
use vandal_core::pipeline::Scorer;
use vandal_core::registry::PropertyRegistry;
use vandal_core::synth::{generate, SynthSpec};
use vandal_service::{router, Service, ServiceConfig};

pub struct World {
    _dir: tempfile::TempDir,
    pub fixtures: PathBuf,
    pub rev_ids: Vec<u64>,
    pub models: [TrainedModel; 2],
}

/// 600 synthetic edits on disk and two forests trained with different seeds.
pub fn world() -> &'static World {
    static W: OnceLock<World> = OnceLock::new();
    W.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fixtures");
        let out = generate(&SynthSpec::new(600, 0.1, 5)).unwrap();
        out.write_fixture_dir(&fixtures).unwrap();
        let rev_ids = out.envelopes.iter().map(|e| e.meta.rev_id).collect();
        let mut records =
            build_corpus(out.envelopes, &PropertyRegistry::builtin(), &RevertConfig::default(), &PatternConfig::default())
                .records;
        split_train_test(&mut records, 0.7, 5).unwrap();
        let (x, y) = design_matrix(&records, Split::Train, &GroupSet::all()).unwrap();
        let fit = |seed| {
            train(&x, &y, &GroupSet::all(), &ForestParams { n_trees: 15, seed, ..ForestParams::default() }).unwrap()
        };
        World { fixtures, rev_ids, models: [fit(1), fit(2)], _dir: dir }
    })
}

pub fn scorer(model: usize) -> Scorer {
    Scorer::new(world().models[model].clone(), PropertyRegistry::builtin(), PatternConfig::default()).unwrap()
}

/// Fixture source that can be switched off and counts upstream calls.
pub struct Switch {
    inner: FixtureSource,
    pub up: AtomicBool,
    pub calls: AtomicUsize,
}

impl Switch {
    pub fn new() -> Arc<Self> {
        Arc::new(Switch { inner: FixtureSource::open(&world().fixtures).unwrap(), up: AtomicBool::new(true), calls: AtomicUsize::new(0) })
    }

    fn check(&self) -> Result<(), IngestError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.up.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(IngestError::Transport("connection refused".into()))
        }
    }
}

impl RevisionSource for Switch {
    fn fetch_revision(&self, rev_id: u64) -> Result<RevisionEnvelope, IngestError> {
        self.check()?;
        self.inner.fetch_revision(rev_id)
    }

    fn fetch_revisions(&self, rev_ids: &[u64]) -> Vec<(u64, Result<RevisionEnvelope, IngestError>)> {
        match self.check() {
            Ok(()) => self.inner.fetch_revisions(rev_ids),
            Err(_) => rev_ids.iter().map(|&r| (r, Err(IngestError::Transport("connection refused".into())))).collect(),
        }
    }

    fn fetch_user(&self, name: &str) -> Result<UserInfo, IngestError> {
        self.check()?;
        self.inner.fetch_user(name)
    }

    fn stream_recent(&self, from_ts: i64, checkpoint: Option<Checkpoint>) -> Result<EnvelopeStream<'_>, IngestError> {
        self.check()?;
        self.inner.stream_recent(from_ts, checkpoint)
    }
}

pub fn service(model: usize, source: Arc<dyn RevisionSource>, config: ServiceConfig) -> Arc<Service> {
    Arc::new(Service::new(Some(scorer(model)), Some(source), config).unwrap())
}

pub fn cached_config(dir: &Path) -> ServiceConfig {
    ServiceConfig { cache_dir: Some(dir.to_path_buf()), ..ServiceConfig::default() }
}

pub async fn call(svc: &Arc<Service>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = router(svc.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

pub async fn get_json(svc: &Arc<Service>, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(svc, Method::GET, uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub async fn post_json(svc: &Arc<Service>, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(svc, Method::POST, uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}
