//! Feature-group ablation: one model per combination, scored on the held-out split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusRecord, Split};
use crate::features::{FeatureGroup, GroupSet, FEATURE_SCHEMA_VERSION};
use crate::forest::{grid_search, train, ForestError, ForestParams, TrainedModel};
use crate::metrics::{self, Curves, MetricError, OperatingPoint, ScoredSet};

pub const REPORT_SCHEMA_VERSION: &str = "vs-eval-1";

pub const AP_NOTE: &str = "pr_auc is step-wise average precision (sum of precision times recall increment); equal scores cross a threshold as one block";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records in the {0:?} split")]
    EmptySplit(Split),
    #[error("record {0} has no feature vector")]
    MissingFeatures(u64),
    #[error("model feature schema {model} does not match corpus schema {corpus}")]
    SchemaMismatch { model: String, corpus: String },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("report has no rows")]
    MissingReport,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Rows for one split, restricted to `groups`.
pub fn design_matrix(records: &[CorpusRecord], split: Split, groups: &GroupSet) -> Result<(Vec<Vec<f64>>, Vec<bool>), EvalError> {
    let idx = groups.indices();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in records.iter().filter(|r| r.split == split) {
        let v = r.features.as_ref().ok_or(EvalError::MissingFeatures(r.rev_id))?;
        x.push(v.select_indices(&idx));
        y.push(r.label);
    }
    if x.is_empty() {
        return Err(EvalError::EmptySplit(split));
    }
    Ok((x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub groups: GroupSet,
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ForestParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_point: Option<OperatingPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<Curves>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ComboResult {
    fn failed(groups: &GroupSet, err: impl ToString) -> Self {
        ComboResult {
            groups: groups.clone(),
            n_features: groups.indices().len(),
            params: None,
            roc_auc: None,
            pr_auc: None,
            operating_point: None,
            curves: None,
            error: Some(err.to_string()),
        }
    }
}

/// Published figures kept for context; not reproducible on synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub groups: String,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub filter_rate: f64,
    pub at_recall: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    [
        ("general", 0.777, 0.010, 0.936, 0.62),
        ("general,context", 0.803, 0.013, 0.937, 0.67),
        ("general,type,context", 0.813, 0.014, 0.940, 0.68),
        ("general,user", 0.927, 0.387, 0.985, 0.86),
        ("all", 0.941, 0.403, 0.982, 0.89),
    ]
    .into_iter()
    .map(|(g, roc, pr, f, r)| ReferenceRow { groups: g.into(), roc_auc: roc, pr_auc: pr, filter_rate: f, at_recall: r })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub feature_schema_version: String,
    pub seed: u64,
    /// `None` picks the highest-recall cut that still filters something.
    pub target_recall: Option<f64>,
    pub group_mapping: BTreeMap<FeatureGroup, Vec<String>>,
    pub pr_auc_note: String,
    pub n_train: usize,
    pub n_test: usize,
    pub test_prevalence: f64,
    pub rows: Vec<ComboResult>,
    pub reference: Vec<ReferenceRow>,
}

fn group_mapping() -> BTreeMap<FeatureGroup, Vec<String>> {
    FeatureGroup::ALL
        .into_iter()
        .map(|g| {
            let set = GroupSet::new([g]).expect("nonempty");
            (g, set.feature_names().into_iter().map(str::to_owned).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    /// One entry trains directly; more runs a cross-validated search first.
    pub grid: Vec<ForestParams>,
    pub folds: usize,
    pub combos: Vec<GroupSet>,
    pub target_recall: Option<f64>,
}

impl AblationConfig {
    pub fn new(params: ForestParams) -> Self {
        AblationConfig { grid: vec![params], folds: 5, combos: GroupSet::ablation_combos(), target_recall: None }
    }
}

/// Scores `model` on the test split.
pub fn score_split(model: &TrainedModel, records: &[CorpusRecord], target_recall: Option<f64>) -> Result<ComboResult, EvalError> {
    model.check_schema()?;
    let (x, y) = design_matrix(records, Split::Test, &model.groups)?;
    let scores: Vec<f64> = x.iter().map(|row| model.predict_proba(row)).collect::<Result<_, _>>()?;
    let set = ScoredSet::from_parts(&scores, &y)?;
    let point = match target_recall {
        Some(r) => metrics::filter_rate_at_recall(&set, r)?,
        None => metrics::default_operating_point(&set)?,
    };
    Ok(ComboResult {
        groups: model.groups.clone(),
        n_features: model.feature_names.len(),
        params: Some(model.params.clone()),
        roc_auc: Some(metrics::roc_auc(&set)?),
        pr_auc: Some(metrics::pr_auc(&set)?),
        operating_point: Some(point),
        curves: Some(metrics::curves(&set)?),
        error: None,
    })
}

fn run_combo(records: &[CorpusRecord], groups: &GroupSet, cfg: &AblationConfig) -> Result<ComboResult, EvalError> {
    let (x, y) = design_matrix(records, Split::Train, groups)?;
    let params = match cfg.grid.as_slice() {
        [] => return Err(ForestError::Grid("grid is empty".into()).into()),
        [only] => only.clone(),
        grid => grid_search(&x, &y, grid, cfg.folds)?.best,
    };
    let model = train(&x, &y, groups, &params)?;
    score_split(&model, records, cfg.target_recall)
}

/// Trains one model per combination on the train split. A failing
/// combination becomes an error row; the others still run.
pub fn ablation_run(records: &[CorpusRecord], cfg: &AblationConfig) -> Result<EvalReport, EvalError> {
    let n_train = records.iter().filter(|r| r.split == Split::Train).count();
    let test: Vec<&CorpusRecord> = records.iter().filter(|r| r.split == Split::Test).collect();
    if n_train == 0 {
        return Err(EvalError::EmptySplit(Split::Train));
    }
    if test.is_empty() {
        return Err(EvalError::EmptySplit(Split::Test));
    }
    let rows = cfg
        .combos
        .iter()
        .map(|g| run_combo(records, g, cfg).unwrap_or_else(|e| ComboResult::failed(g, e)))
        .collect();
    let mut report = EvalReport::empty(cfg.grid.first().map_or(0, |p| p.seed), cfg.target_recall);
    report.n_train = n_train;
    report.n_test = test.len();
    report.test_prevalence = test.iter().filter(|r| r.label).count() as f64 / test.len() as f64;
    report.rows = rows;
    Ok(report)
}

/// File-name form of a group combination, as used by `curve_<kind>_<slug>.csv`.
pub fn curve_slug(groups: &GroupSet) -> String {
    groups.to_string().replace(',', "_")
}

impl EvalReport {
    /// A report with metadata filled in and no rows.
    pub fn empty(seed: u64, target_recall: Option<f64>) -> Self {
        EvalReport {
            schema: REPORT_SCHEMA_VERSION.to_owned(),
            feature_schema_version: FEATURE_SCHEMA_VERSION.to_owned(),
            seed,
            target_recall,
            group_mapping: group_mapping(),
            pr_auc_note: AP_NOTE.to_owned(),
            n_train: 0,
            n_test: 0,
            test_prevalence: 0.0,
            rows: Vec::new(),
            reference: reference_rows(),
        }
    }

    pub fn row(&self, groups: &GroupSet) -> Option<&ComboResult> {
        self.rows.iter().find(|r| &r.groups == groups)
    }

    /// Plain-text table; reference rows follow, marked as such.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:>8} {:>8}  {}\n", "features", "ROC-AUC", "PR-AUC", "filter-rate");
        for r in &self.rows {
            match (r.roc_auc, r.pr_auc, r.operating_point) {
                (Some(roc), Some(pr), Some(op)) => {
                    let zero = if op.zero_filter { " (zero filter)" } else { "" };
                    out.push_str(&format!(
                        "{:<24} {roc:>8.3} {pr:>8.3}  {:.3} at {:.2} recall{zero}\n",
                        r.groups.to_string(),
                        op.filter_rate,
                        op.recall
                    ));
                }
                _ => out.push_str(&format!(
                    "{:<24} failed: {}\n",
                    r.groups.to_string(),
                    r.error.as_deref().unwrap_or("unknown error")
                )),
            }
        }
        for r in &self.reference {
            out.push_str(&format!(
                "{:<24} {:>8.3} {:>8.3}  {:.3} at {:.2} recall  [reference]\n",
                r.groups, r.roc_auc, r.pr_auc, r.filter_rate, r.at_recall
            ));
        }
        out.push_str(&format!(
            "test n = {}, prevalence = {:.4}; {}\n",
            self.n_test, self.test_prevalence, self.pr_auc_note
        ));
        out
    }

    /// Two CSV files per successful row, named by group slug.
    pub fn write_curves(&self, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
        if self.rows.is_empty() {
            return Err(EvalError::MissingReport);
        }
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for r in &self.rows {
            let Some(c) = &r.curves else { continue };
            let s = curve_slug(&r.groups);
            for (name, body) in [(format!("curve_pr_{s}.csv"), c.precision_csv()), (format!("curve_filter_{s}.csv"), c.filter_csv())] {
                let path = dir.join(name);
                std::fs::write(&path, body)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::EditKind;
    use crate::entity::ItemId;
    use crate::corpus::UserTrust;
    use crate::features::{FeatureVector, FEATURES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize, seed: u64) -> Vec<CorpusRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user = GroupSet::new([FeatureGroup::User]).unwrap().indices();
        (0..n)
            .map(|i| {
                let label = rng.random_bool(0.1);
                let mut v: Vec<f64> = (0..FEATURES.len()).map(|_| rng.random_range(0.0..1.0)).collect();
                if label {
                    v[user[0]] += 0.7;
                }
                CorpusRecord {
                    rev_id: i as u64 + 1,
                    item_id: ItemId::new("Q1").unwrap(),
                    timestamp: 0,
                    user_trust: UserTrust::NonTrusted,
                    edit_kind: EditKind::Regular,
                    reverted: label,
                    label,
                    incomplete_history: false,
                    features: Some(FeatureVector::try_from(v).unwrap()),
                    split: if i % 3 == 0 { Split::Test } else { Split::Train },
                }
            })
            .collect()
    }

    fn params() -> ForestParams {
        ForestParams { n_trees: 15, seed: 4, ..ForestParams::default() }
    }

    #[test]
    fn five_rows_and_user_signal_shows() {
        let recs = records(900, 1);
        let report = ablation_run(&recs, &AblationConfig::new(params())).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.reference.len(), 5);
        let all = report.row(&GroupSet::all()).unwrap().roc_auc.unwrap();
        let general = report.row(&"general".parse().unwrap()).unwrap().roc_auc.unwrap();
        assert!(all > general + 0.1, "{all} vs {general}");
        let table = report.to_table();
        assert_eq!(table.lines().filter(|l| l.contains(" at ") && l.contains(" recall")).count(), 10);
    }

    #[test]
    fn curve_files() {
        let recs = records(300, 2);
        let report = ablation_run(&recs, &AblationConfig::new(params())).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = report.write_curves(dir.path()).unwrap();
        assert_eq!(files.len(), 10);
        for f in files {
            let text = std::fs::read_to_string(f).unwrap();
            let recall: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
            assert!(recall.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn failing_combo_keeps_others() {
        let mut recs = records(300, 3);
        // a single-class train split makes every combo fail
        for r in recs.iter_mut().filter(|r| r.split == Split::Train) {
            r.label = false;
        }
        let report = ablation_run(&recs, &AblationConfig::new(params())).unwrap();
        assert!(report.rows.iter().all(|r| r.error.is_some()));
        assert!(report.to_table().contains("failed"));
    }

    #[test]
    fn missing_split() {
        let mut recs = records(50, 4);
        for r in &mut recs {
            r.split = Split::Train;
        }
        assert!(matches!(ablation_run(&recs, &AblationConfig::new(params())), Err(EvalError::EmptySplit(Split::Test))));
    }
}
