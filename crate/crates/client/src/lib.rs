//! Blocking client for the scoring service's HTTP API.

use std::path::Path;
use std::time::Duration;

use reqwest::blocking::{RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde_json::json;
use url::Url;
use vandal_core::api::{
    BatchRequest, BatchResponse, ErrorBody, ErrorKind, Health, LabelConflict, LabelEvent, LabelRequest, LatencyReport,
    QueuePage, ScoreEntry,
};
use vandal_core::jobs::{Job, Outcome};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{}: {}", .0.error, .0.message)]
    Api(ErrorBody),
    #[error("label conflict: revision {} was labeled {:?} by {}", .0.current.rev_id, .0.current.class, .0.current.reviewer)]
    Conflict(LabelConflict),
    #[error("service unreachable at {url}: {reason}")]
    Unreachable { url: String, reason: String },
    #[error("unexpected response ({status}): {body}")]
    Protocol { status: u16, body: String },
}

impl ClientError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Api(b) => b.error,
            ClientError::Conflict(_) => ErrorKind::ConflictingConcurrentLabel,
            ClientError::Unreachable { .. } => ErrorKind::ServiceUnreachable,
            ClientError::Protocol { .. } => ErrorKind::InvalidData,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: Url,
    http: reqwest::blocking::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self> {
        let unreachable = |reason: String| ClientError::Unreachable { url: base.to_owned(), reason };
        let mut base = Url::parse(base).map_err(|e| unreachable(e.to_string()))?;
        if !base.path().ends_with('/') {
            let path = format!("{}/", base.path());
            base.set_path(&path);
        }
        // jobs can run for minutes, so only connecting is bounded
        let http = reqwest::blocking::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(None)
            .build()
            .map_err(|e| unreachable(e.to_string()))?;
        Ok(Client { base, http })
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Url {
        self.base.join(path).expect("relative API path")
    }

    fn send(&self, req: RequestBuilder) -> Result<Response> {
        req.send().map_err(|e| ClientError::Unreachable { url: self.base.to_string(), reason: e.to_string() })
    }

    fn read(&self, resp: Response) -> Result<String> {
        let status = resp.status();
        let body = resp.text().map_err(|e| ClientError::Unreachable { url: self.base.to_string(), reason: e.to_string() })?;
        if status.is_success() {
            return Ok(body);
        }
        if status == StatusCode::CONFLICT {
            if let Ok(c) = serde_json::from_str::<LabelConflict>(&body) {
                return Err(ClientError::Conflict(c));
            }
        }
        match serde_json::from_str::<ErrorBody>(&body) {
            Ok(e) => Err(ClientError::Api(e)),
            Err(_) => Err(ClientError::Protocol { status: status.as_u16(), body }),
        }
    }

    fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = self.send(req)?;
        let status = resp.status().as_u16();
        let body = self.read(resp)?;
        serde_json::from_str(&body).map_err(|e| ClientError::Protocol { status, body: format!("{e}: {body}") })
    }

    /// `refresh` recomputes a cached score instead of reading it.
    pub fn score(&self, rev_id: u64, refresh: bool) -> Result<ScoreEntry> {
        let mut req = self.http.get(self.url(&format!("v1/scores/{rev_id}")));
        if refresh {
            req = req.query(&[("refresh", true)]);
        }
        self.json(req)
    }

    pub fn score_batch(&self, rev_ids: &[u64], refresh: bool) -> Result<BatchResponse> {
        self.json(self.http.post(self.url("v1/scores")).json(&BatchRequest { rev_ids: rev_ids.to_vec(), refresh }))
    }

    pub fn latency(&self) -> Result<LatencyReport> {
        self.json(self.http.get(self.url("v1/latency")))
    }

    pub fn latency_csv(&self) -> Result<String> {
        let resp = self.send(self.http.get(self.url("v1/latency")).query(&[("format", "csv")]))?;
        self.read(resp)
    }

    pub fn health(&self) -> Result<Health> {
        self.json(self.http.get(self.url("v1/health")))
    }

    pub fn queue(&self, min_score: f64, page: usize, page_size: usize) -> Result<QueuePage> {
        let q = [("min_score", min_score.to_string()), ("page", page.to_string()), ("page_size", page_size.to_string())];
        self.json(self.http.get(self.url("v1/ui/queue")).query(&q))
    }

    pub fn label(&self, req: &LabelRequest) -> Result<LabelEvent> {
        self.json(self.http.post(self.url("v1/labels")).json(req))
    }

    /// JSONL, one label event per line.
    pub fn export_labels(&self, history: bool) -> Result<String> {
        let resp = self.send(self.http.get(self.url("v1/labels/export")).query(&[("history", history)]))?;
        self.read(resp)
    }

    pub fn curves(&self, combo: &str, kind: &str) -> Result<String> {
        let resp = self.send(self.http.get(self.url("v1/curves")).query(&[("combo", combo), ("kind", kind)]))?;
        self.read(resp)
    }

    pub fn run(&self, job: &Job) -> Result<Outcome> {
        self.json(self.http.post(self.url("v1/jobs")).json(job))
    }

    pub fn rerun(&self, manifest: &Path) -> Result<Outcome> {
        self.json(self.http.post(self.url("v1/jobs/rerun")).json(&json!({ "manifest": manifest })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_paths_keep_their_prefix() {
        let c = Client::new("http://h:1/api").unwrap();
        assert_eq!(c.url("v1/health").as_str(), "http://h:1/api/v1/health");
        let c = Client::new("http://h:1").unwrap();
        assert_eq!(c.url("v1/health").as_str(), "http://h:1/v1/health");
    }

    #[test]
    fn closed_port_is_unreachable() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let err = Client::new(&format!("http://127.0.0.1:{port}")).unwrap().health().unwrap_err();
        assert_eq!(err.kind(), ErrorKind::ServiceUnreachable);
        assert_eq!(err.kind().exit_code(), 4);
    }

    #[test]
    fn bad_url_is_rejected() {
        assert!(Client::new("not a url").is_err());
    }
}
