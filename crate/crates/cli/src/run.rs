//! Command dispatch.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use vandal_client::Client;
use vandal_core::api::BatchSlot;
use vandal_core::corpus::RevertConfig;
use vandal_core::jobs::{parse_window, BuildCorpusJob, EvaluateJob, Job, Outcome, ReportJob, SynthJob, TrainJob};
use vandal_core::synth::SynthSpec;
use vandal_service::Service;

use crate::args::{Cli, Command, ServeArgs, ServiceArgs};
use crate::embed::{build_service, Embedded};
use crate::error::CliError;
use crate::{export, replay};

/// Paths are resolved here because the service may run elsewhere.
fn abs(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
}

fn opt_abs(p: &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
    p.as_deref().map(abs).transpose()
}

/// The service to talk to, started in-process when no URL was given.
struct Target {
    client: Client,
    _embedded: Option<Embedded>,
}

impl Target {
    fn connect(url: Option<&str>, local: impl FnOnce() -> Result<Service, CliError>) -> Result<Self, CliError> {
        match url {
            Some(u) => Ok(Target { client: Client::new(u)?, _embedded: None }),
            None => {
                let e = Embedded::start(local()?)?;
                Ok(Target { client: Client::new(e.url())?, _embedded: Some(e) })
            }
        }
    }

    fn pipeline(url: Option<&str>) -> Result<Self, CliError> {
        Target::connect(url, || Ok(Service::new(None, None, Default::default())?))
    }

    fn scoring(url: Option<&str>, args: &ServiceArgs) -> Result<Self, CliError> {
        Target::connect(url, || build_service(args))
    }
}

fn job(command: &Command) -> Result<Option<Job>, CliError> {
    Ok(Some(match command {
        Command::SynthCorpus(a) => {
            let spec = SynthSpec {
                n: a.n,
                prevalence: a.prevalence,
                signal: a.signal,
                bot_fraction: a.bot_fraction,
                ..SynthSpec::new(a.n, a.prevalence, a.seed)
            };
            Job::SynthCorpus(SynthJob { out_dir: abs(&a.out)?, spec, build_corpus: !a.no_corpus, train_ratio: a.train_ratio })
        }
        Command::BuildCorpus(a) => {
            let source = match a.source.strip_prefix("fixture:") {
                Some(dir) => format!("fixture:{}", abs(Path::new(dir))?.display()),
                None => a.source.clone(),
            };
            let window = parse_window(&a.revert_window).map_err(|e| CliError::config(e.to_string()))?;
            let mut j = BuildCorpusJob::new(source, abs(&a.out)?);
            j.registry = opt_abs(&a.registry)?;
            j.patterns = opt_abs(&a.patterns)?;
            j.revert = Some(RevertConfig { radius: a.revert_radius, window });
            j.sample = a.sample_size;
            j.sample_mode = a.sample_mode;
            j.train_ratio = a.train_ratio;
            j.seed = a.seed;
            j.labels = opt_abs(&a.labels)?;
            j.from_ts = a.from_ts;
            j.limit = a.limit;
            Job::BuildCorpus(j)
        }
        Command::Train(a) => {
            let mut j = TrainJob::new(abs(&a.corpus)?, abs(&a.out)?);
            j.groups = a.groups.clone();
            j.params = a.forest.params();
            j.grid = opt_abs(&a.forest.params_grid)?;
            j.folds = a.forest.folds;
            Job::Train(j)
        }
        Command::Evaluate(a) => {
            let mut j = EvaluateJob::new(abs(&a.corpus)?, abs(&a.out_dir)?);
            j.model = opt_abs(&a.model)?;
            j.params = a.forest.params();
            j.grid = opt_abs(&a.forest.params_grid)?;
            j.folds = a.forest.folds;
            j.target_recall = a.recall;
            j.combos = (!a.combos.is_empty()).then(|| a.combos.clone());
            Job::Evaluate(j)
        }
        Command::Report(a) => Job::Report(ReportJob { report: abs(&a.report)?, out_dir: opt_abs(&a.out_dir)? }),
        _ => return Ok(None),
    }))
}

fn describe(o: &Outcome) -> String {
    match o {
        Outcome::SynthCorpus(s) => {
            let mut out = format!(
                "{} revisions, {} planted positives -> {}\n",
                s.revisions,
                s.planted_positives,
                s.fixture_dir.display()
            );
            if let Some(c) = &s.corpus {
                out += &format!("{}corpus: {}\n", c.summary_table, c.path.display());
            }
            out + &format!("manifest: {}\n", s.manifest.display())
        }
        Outcome::BuildCorpus(c) => format!(
            "{}{} records, {} positive, {} label overrides -> {}\nmanifest: {}\n",
            c.summary_table,
            c.records,
            c.positives,
            c.overrides_applied,
            c.path.display(),
            c.manifest.display()
        ),
        Outcome::Train(t) => format!(
            "model {} on {} rows ({} positive) -> {}\nmanifest: {}\n",
            t.model_version,
            t.n,
            t.n_positive,
            t.path.display(),
            t.manifest.display()
        ),
        Outcome::Evaluate(e) => format!(
            "{}report: {}\n{} curve files\nmanifest: {}\n",
            e.table,
            e.report_path.display(),
            e.curve_files.len(),
            e.manifest.display()
        ),
        Outcome::Report(r) => format!("{}{} curve files\n", r.table, r.curve_files.len()),
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
    } else {
        print!("{}", text(value));
    }
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let service = Arc::new(build_service(&a.service)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind)
            .await
            .map_err(|e| CliError::config(format!("binding {}: {e}", a.bind)))?;
        let addr = listener.local_addr()?;
        tracing::info!(model = service.model_version().unwrap_or("none"), "listening on http://{addr}");
        println!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        vandal_service::serve(listener, service, shutdown).await.map_err(CliError::from)
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let url = cli.service.as_deref();
    if let Some(j) = job(&cli.command)? {
        let outcome = Target::pipeline(url)?.client.run(&j)?;
        emit(cli.json, &outcome, describe);
        return Ok(());
    }
    match &cli.command {
        Command::Rerun(a) => {
            let outcome = Target::pipeline(url)?.client.rerun(&abs(&a.manifest)?)?;
            emit(cli.json, &outcome, describe);
        }
        Command::Serve(a) => serve(a)?,
        Command::Score(a) => {
            let t = Target::scoring(url, &a.service)?;
            if let [rev] = a.rev_ids[..] {
                let e = t.client.score(rev, a.refresh)?;
                emit(cli.json, &e, |e| {
                    format!("{} {:.6} {} {:?}\n", e.rev_id, e.probability.vandalism, e.prediction, e.source)
                });
            } else {
                let b = t.client.score_batch(&a.rev_ids, a.refresh)?;
                emit(cli.json, &b, |b| {
                    b.scores
                        .iter()
                        .map(|(rev, slot)| match slot {
                            BatchSlot::Entry(e) => format!("{rev} {:.6} {} {:?}\n", e.probability.vandalism, e.prediction, e.source),
                            BatchSlot::Error(err) => format!("{rev} error {}\n", err.error),
                        })
                        .collect()
                });
            }
        }
        Command::ReplayLatency(a) => {
            let t = Target::scoring(url, &a.service)?;
            let outcome = replay::replay(&t.client, a)?;
            if let Some(path) = &a.out {
                replay::write_csv(&outcome.report, path)?;
            }
            emit(cli.json, &outcome, replay::table);
            if a.assert_ordering && outcome.ordered != Some(true) {
                return Err(CliError::data("latency ordering cached < batch < single does not hold"));
            }
        }
        Command::ExportUiData(a) => {
            let t = Target::scoring(url, &a.service)?;
            let outcome = export::export(&t.client, a)?;
            emit(cli.json, &outcome, |o| {
                let mut s = format!("{} queue items, {} labeled, {} curve files\n", o.queue_items, o.labels, o.curve_files.len());
                if !o.missing_curves.is_empty() {
                    s += &format!("no curves for: {}\n", o.missing_curves.join(", "));
                }
                s
            });
        }
        _ => unreachable!("pipeline commands return above"),
    }
    Ok(())
}
