//! Services started inside this process.

use std::sync::Arc;

use tokio::runtime::Runtime;
use tokio::sync::oneshot;
use vandal_core::api::ErrorKind;
use vandal_core::config::PatternConfig;
use vandal_core::ingestion::{RetryConfig, RevisionSource, SourceSpec};
use vandal_core::pipeline::Scorer;
use vandal_core::registry::PropertyRegistry;
use vandal_service::{Service, ServiceConfig};

use crate::args::ServiceArgs;
use crate::error::CliError;

pub fn build_service(a: &ServiceArgs) -> Result<Service, CliError> {
    let registry = match &a.registry {
        Some(p) => PropertyRegistry::load(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
        None => PropertyRegistry::builtin(),
    };
    let patterns = match &a.patterns {
        Some(p) => PatternConfig::load(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
        None => PatternConfig::default(),
    };
    let scorer = match &a.model {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            Some(Scorer::from_json(&bytes, registry, patterns).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let source: Option<Arc<dyn RevisionSource>> = match &a.source {
        Some(s) => {
            let spec = SourceSpec::parse(s).map_err(|e| CliError::config(e.to_string()))?;
            let opened = spec
                .open(RetryConfig::default(), a.upstream_latency.unwrap_or_default())
                .map_err(|e| CliError::config(e.to_string()))?;
            Some(Arc::from(opened))
        }
        None => None,
    };
    let config = ServiceConfig {
        threshold: a.threshold,
        max_batch: a.max_batch,
        cache_dir: a.cache_dir.clone(),
        cache_budget: a.cache_mib << 20,
        curves_dir: a.curves_dir.clone(),
        precache: a.precache,
        precache_from: a.precache_from,
        ..ServiceConfig::default()
    };
    Service::new(scorer, source, config).map_err(|e| CliError::config(e.to_string()))
}

/// A service on a loopback port, shut down when dropped.
pub struct Embedded {
    rt: Runtime,
    url: String,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Embedded {
    pub fn start(service: Service) -> Result<Self, CliError> {
        let rt = Runtime::new().map_err(|e| CliError::config(format!("runtime: {e}")))?;
        let listener = rt
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .map_err(|e| CliError::new(ErrorKind::ServiceUnreachable, format!("binding loopback: {e}")))?;
        let url = format!("http://{}", listener.local_addr()?);
        let (tx, rx) = oneshot::channel::<()>();
        let task = rt.spawn(vandal_service::serve(listener, Arc::new(service), async {
            let _ = rx.await;
        }));
        Ok(Embedded { rt, url, stop: Some(tx), task: Some(task) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Drop for Embedded {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = self.rt.block_on(task);
        }
    }
}
