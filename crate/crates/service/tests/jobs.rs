mod common;

use axum::http::StatusCode;
use common::*;
use serde_json::json;
use vandal_core::jobs::{Job, Outcome, SynthJob};
use vandal_core::synth::SynthSpec;
use vandal_service::ServiceConfig;

#[tokio::test(flavor = "multi_thread")]
async fn jobs_run_and_rerun_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(0, Switch::new(), ServiceConfig::default());
    let job = Job::SynthCorpus(SynthJob {
        out_dir: dir.path().join("fx"),
        spec: SynthSpec::new(300, 0.1, 3),
        build_corpus: true,
        train_ratio: 0.7,
    });
    let (s, body) = post_json(&svc, "/v1/jobs", serde_json::to_value(&job).unwrap()).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let Outcome::SynthCorpus(out) = serde_json::from_value(body).unwrap() else { panic!("wrong outcome") };
    assert!(out.revisions >= 300, "{}", out.revisions);
    let corpus = out.corpus.unwrap();
    let before = std::fs::read(&corpus.path).unwrap();

    let (s, body) = post_json(&svc, "/v1/jobs/rerun", json!({ "manifest": out.manifest })).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["subcommand"], "synth-corpus");
    assert_eq!(std::fs::read(&corpus.path).unwrap(), before);

    let (s, body) = post_json(&svc, "/v1/jobs", json!({ "subcommand": "report", "report": dir.path().join("none.json") })).await;
    assert_eq!((s, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("MissingReport")));
    let (s, _) = post_json(&svc, "/v1/jobs", json!({ "subcommand": "dance" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
