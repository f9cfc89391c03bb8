use std::sync::Arc;

use vandal_client::{Client, ClientError};
use vandal_core::api::{ErrorKind, LabelRequest, ScoreSource};
use vandal_core::corpus::LabelClass;
use vandal_core::jobs::{Job, Outcome, SynthJob, TrainJob};
use vandal_core::ingestion::{FixtureSource, RevisionSource};
use vandal_core::config::PatternConfig;
use vandal_core::pipeline::Scorer;
use vandal_core::registry::PropertyRegistry;
use vandal_core::synth::SynthSpec;
use vandal_service::{Service, ServiceConfig};

/// Starts a service on an ephemeral port on a background runtime.
fn spawn(service: Service) -> (String, tokio::runtime::Runtime) {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    rt.spawn(vandal_service::serve(listener, Arc::new(service), std::future::pending()));
    (url, rt)
}

#[test]
fn pipeline_and_scoring_through_the_client() {
    let dir = tempfile::tempdir().unwrap();
    let (url, _rt) = spawn(Service::new(None, None, ServiceConfig::default()).unwrap());
    let client = Client::new(&url).unwrap();
    assert_eq!(client.health().unwrap().status, "degraded: no model");

    let fx = dir.path().join("fx");
    let synth = Job::SynthCorpus(SynthJob { out_dir: fx.clone(), spec: SynthSpec::new(400, 0.1, 9), build_corpus: true, train_ratio: 0.7 });
    let Outcome::SynthCorpus(s) = client.run(&synth).unwrap() else { panic!() };
    let corpus = s.corpus.unwrap().path;
    let mut train = TrainJob::new(corpus, dir.path().join("model.json"));
    train.params.n_trees = 10;
    let Outcome::Train(t) = client.run(&Job::Train(train)).unwrap() else { panic!() };

    let bytes = std::fs::read(&t.path).unwrap();
    let scorer = Scorer::from_json(&bytes, PropertyRegistry::builtin(), PatternConfig::default()).unwrap();
    assert_eq!(scorer.model_version(), t.model_version);
    let source: Arc<dyn RevisionSource> = Arc::new(FixtureSource::open(&fx).unwrap());
    let ids: Vec<u64> = FixtureSource::open(&fx).unwrap().manifest().iter().copied().take(6).collect();
    let (url, _rt2) = spawn(Service::new(Some(scorer), Some(source), ServiceConfig::default()).unwrap());
    let client = Client::new(&url).unwrap();

    let one = client.score(ids[0], false).unwrap();
    assert_eq!(one.model_version, t.model_version);
    let batch = client.score_batch(&ids, false).unwrap();
    assert_eq!(batch.scores.len(), 6);
    let fresh = client.score(ids[0], true).unwrap();
    assert_eq!((fresh.source, fresh.probability), (ScoreSource::Fresh, one.probability));
    assert_eq!(client.score(0, false).unwrap_err().kind(), ErrorKind::RevisionNotFound);
    assert_eq!(client.score_batch(&[], true).unwrap_err().kind(), ErrorKind::InvalidRequest);

    let page = client.queue(0.0, 1, 100).unwrap();
    assert_eq!(page.total, 6);
    let req = LabelRequest { rev_id: ids[1], class: LabelClass::Vandalism, reviewer: "ann".into(), expected_version: None, confirm: false };
    assert_eq!(client.label(&req).unwrap().version, 1);
    match client.label(&req).unwrap_err() {
        ClientError::Conflict(c) => assert_eq!(c.current.reviewer, "ann"),
        other => panic!("{other}"),
    }
    assert_eq!(client.export_labels(false).unwrap().lines().count(), 1);
    assert_eq!(client.curves("all", "filter").unwrap_err().kind(), ErrorKind::MissingCurves);
    assert!(client.latency().unwrap().records.len() >= 2);
    assert!(client.latency_csv().unwrap().starts_with("mode"));

    let Outcome::Train(again) = client.rerun(&t.manifest).unwrap() else { panic!() };
    assert_eq!(again.model_version, t.model_version);
}
