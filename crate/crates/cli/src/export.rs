//! Snapshot of the patrol data a UI needs, written to a directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use vandal_client::Client;
use vandal_core::api::{ErrorKind, QueueItem};
use vandal_core::eval::curve_slug;
use vandal_core::features::GroupSet;

use crate::args::ExportArgs;
use crate::error::CliError;

pub const QUEUE_FILE: &str = "queue.json";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const HISTORY_FILE: &str = "labels_history.jsonl";
pub const UI_CONFIG_FILE: &str = "ui-config.json";

#[derive(Debug, Serialize)]
pub struct ExportOutcome {
    pub queue_items: usize,
    pub labels: usize,
    pub curve_files: Vec<PathBuf>,
    pub missing_curves: Vec<String>,
}

#[derive(Serialize)]
struct UiConfig<'a> {
    service_url: &'a str,
    min_score: f64,
    page_size: usize,
    curve_combos: Vec<String>,
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn export(client: &Client, args: &ExportArgs) -> Result<ExportOutcome, CliError> {
    std::fs::create_dir_all(&args.out)?;
    let mut items: Vec<QueueItem> = Vec::new();
    for page in 1.. {
        let p = client.queue(args.min_score, page, args.page_size)?;
        let done = p.items.len() < args.page_size;
        items.extend(p.items);
        if done || items.len() >= p.total {
            break;
        }
    }
    write(&args.out.join(QUEUE_FILE), serde_json::to_vec_pretty(&items).expect("queue serializes"))?;

    let latest = client.export_labels(false)?;
    write(&args.out.join(LABELS_FILE), &latest)?;
    write(&args.out.join(HISTORY_FILE), client.export_labels(true)?)?;

    let mut combos = if args.combos.is_empty() { GroupSet::ablation_combos() } else { args.combos.clone() };
    combos.dedup();
    let (mut curve_files, mut missing) = (Vec::new(), Vec::new());
    let curves = args.out.join("curves");
    for g in &combos {
        for kind in ["filter", "pr"] {
            let name = format!("curve_{kind}_{}.csv", curve_slug(g));
            match client.curves(&g.to_string(), kind) {
                Ok(csv) => {
                    std::fs::create_dir_all(&curves)?;
                    write(&curves.join(&name), csv)?;
                    curve_files.push(curves.join(name));
                }
                Err(e) if e.kind() == ErrorKind::MissingCurves => missing.push(name),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let config = UiConfig {
        service_url: client.base().as_str(),
        min_score: args.min_score,
        page_size: args.page_size,
        curve_combos: combos.iter().map(curve_slug).collect(),
    };
    write(&args.out.join(UI_CONFIG_FILE), serde_json::to_vec_pretty(&config).expect("config serializes"))?;
    Ok(ExportOutcome { queue_items: items.len(), labels: latest.lines().count(), curve_files, missing_curves: missing })
}
