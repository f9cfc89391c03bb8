//! Latency replay: single requests, batches, then cached re-requests over
//! one random sample of revisions.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vandal_client::{Client, ClientError};
use vandal_core::api::{LatencyMode, LatencyReport};
use vandal_core::ingestion::{FixtureSource, SourceSpec};

use crate::args::ReplayArgs;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct ReplayOutcome {
    pub requested: usize,
    pub failed: usize,
    pub report: LatencyReport,
    /// Median cached < median batch per revision < median single.
    pub ordered: Option<bool>,
}

fn candidates(args: &ReplayArgs) -> Result<Vec<u64>, CliError> {
    if let Some(path) = &args.rev_ids {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        return text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse().map_err(|_| CliError::data(format!("{}: bad revision id {l:?}", path.display()))))
            .collect();
    }
    match args.service.source.as_deref().map(SourceSpec::parse) {
        Some(Ok(SourceSpec::Fixture { dir })) => {
            let src = FixtureSource::open(&dir).map_err(|e| CliError::config(e.to_string()))?;
            Ok(src.manifest().to_vec())
        }
        _ => Err(CliError::config("replay-latency needs --rev-ids or a fixture:<dir> source")),
    }
}

/// Per-request failures such as a missing revision are counted; an
/// unreachable service aborts.
fn tolerate<T>(r: Result<T, ClientError>, failed: &mut usize) -> Result<(), CliError> {
    match r {
        Ok(_) => Ok(()),
        Err(e @ ClientError::Unreachable { .. }) => Err(e.into()),
        Err(e) => {
            tracing::warn!("{e}");
            *failed += 1;
            Ok(())
        }
    }
}

pub fn replay(client: &Client, args: &ReplayArgs) -> Result<ReplayOutcome, CliError> {
    if args.batch_size < 1 {
        return Err(CliError::config("--batch-size must be at least 1"));
    }
    let pool = if args.n == 0 { Vec::new() } else { candidates(args)? };
    if args.n > pool.len() {
        return Err(CliError::config(format!("--n {} exceeds the {} candidate revisions", args.n, pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sample: Vec<u64> = rand::seq::index::sample(&mut rng, pool.len(), args.n).into_iter().map(|i| pool[i]).collect();

    let before = client.latency()?.records.len();
    let mut failed = 0;
    for &rev in &sample {
        tolerate(client.score(rev, true), &mut failed)?;
    }
    for chunk in sample.chunks(args.batch_size) {
        tolerate(client.score_batch(chunk, true), &mut failed)?;
    }
    for &rev in &sample {
        tolerate(client.score(rev, false), &mut failed)?;
    }
    let records = client
        .latency()?
        .records
        .into_iter()
        .skip(before)
        .filter(|r| matches!(r.mode, LatencyMode::Single | LatencyMode::Batch | LatencyMode::Cached))
        .collect();
    let report = LatencyReport::from_records(records);
    let median = |m| report.summary(m).map(|s| s.median);
    let ordered = match (median(LatencyMode::Cached), median(LatencyMode::Batch), median(LatencyMode::Single)) {
        (Some(c), Some(b), Some(s)) => Some(c < b && b < s),
        _ => None,
    };
    let requested = 2 * sample.len() + sample.len().div_ceil(args.batch_size);
    Ok(ReplayOutcome { requested, failed, report, ordered })
}

pub fn write_csv(report: &LatencyReport, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, report.to_csv()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn table(o: &ReplayOutcome) -> String {
    let mut out = format!("{:<8} {:>6} {:>12} {:>12} {:>12}\n", "mode", "count", "mean_s", "median_s", "p95_s");
    for s in &o.report.summaries {
        out += &format!("{:<8} {:>6} {:>12.6} {:>12.6} {:>12.6}\n", s.mode.as_str(), s.count, s.mean, s.median, s.p95);
    }
    out += &format!("requests {} failed {}\n", o.requested, o.failed);
    out += match o.ordered {
        Some(true) => "ordering cached < batch < single: holds\n",
        Some(false) => "ordering cached < batch < single: VIOLATED\n",
        None => "ordering cached < batch < single: not enough samples\n",
    };
    out
}
