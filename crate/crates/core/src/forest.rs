//! Bootstrap-aggregated CART trees with Gini splits and vote-fraction output.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureGroup, FeatureVector, GroupSet, FEATURES, FEATURE_SCHEMA_VERSION};
use crate::metrics::{pr_auc, ScoredSet};

pub const MODEL_FORMAT_VERSION: &str = "vs-forest-1";

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("all labels are {0}")]
    SingleClass(bool),
    #[error("feature width {found}, model expects {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("{rows} rows but {labels} labels")]
    Length { rows: usize, labels: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("parameter grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    #[default]
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, width: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (width as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (width as f64).log2().floor() as usize,
            MaxFeatures::All => width,
        };
        k.clamp(1, width.max(1))
    }
}

impl FromStr for MaxFeatures {
    type Err = ForestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            "all" => Ok(MaxFeatures::All),
            o => Err(ForestError::InvalidParams(format!("features_per_split {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    None,
    #[default]
    Balanced,
}

impl FromStr for ClassWeight {
    type Err = ForestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(ClassWeight::None),
            "balanced" => Ok(ClassWeight::Balanced),
            o => Err(ForestError::InvalidParams(format!("class_weight {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Minimum bootstrap draws per leaf.
    pub min_samples_leaf: usize,
    pub features_per_split: MaxFeatures,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 80,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: MaxFeatures::Sqrt,
            class_weight: ClassWeight::Balanced,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_trees < 1 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

impl fmt::Display for ForestParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let depth = self.max_depth.map_or("unlimited".to_owned(), |d| d.to_string());
        write!(
            f,
            "trees={} depth={} min_leaf={} mtry={:?} weight={:?} seed={}",
            self.n_trees, depth, self.min_samples_leaf, self.features_per_split, self.class_weight, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { w_true: f64, w_false: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { w_true, w_false } => return w_true / (w_true + w_false),
            }
        }
    }

    /// Prediction with the `hidden` features unknown: a split on a hidden
    /// feature blends both branches by their training weight.
    pub fn predict_hiding(&self, x: &[f64], hidden: &[bool]) -> f64 {
        fn weight(nodes: &[Node], i: usize) -> f64 {
            match &nodes[i] {
                Node::Split { left, right, .. } => weight(nodes, *left as usize) + weight(nodes, *right as usize),
                Node::Leaf { w_true, w_false } => w_true + w_false,
            }
        }
        fn walk(nodes: &[Node], i: usize, x: &[f64], hidden: &[bool]) -> f64 {
            match &nodes[i] {
                Node::Split { feature, left, right, .. } if hidden[*feature as usize] => {
                    let (l, r) = (*left as usize, *right as usize);
                    let (wl, wr) = (weight(nodes, l), weight(nodes, r));
                    (walk(nodes, l, x, hidden) * wl + walk(nodes, r, x, hidden) * wr) / (wl + wr)
                }
                Node::Split { feature, threshold, left, right } => {
                    let next = if x[*feature as usize] <= *threshold { *left } else { *right };
                    walk(nodes, next as usize, x, hidden)
                }
                Node::Leaf { w_true, w_false } => w_true / (w_true + w_false),
            }
        }
        walk(&self.nodes, 0, x, hidden)
    }

    pub fn max_feature(&self) -> Option<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Schema-free ensemble over rows of a fixed width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub width: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of per-tree vote fractions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }
}

struct Columns {
    cols: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

/// Rows in a canonical order so the input order never matters.
fn canonical(x: &[Vec<f64>], y: &[bool]) -> Columns {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].cmp(&y[b]))
    });
    let width = x.first().map_or(0, Vec::len);
    Columns {
        cols: (0..width).map(|f| order.iter().map(|&i| x[i][f]).collect()).collect(),
        labels: order.iter().map(|&i| y[i]).collect(),
    }
}

struct Sample {
    row: usize,
    draws: u32,
    weight: f64,
}

struct Builder<'a> {
    data: &'a Columns,
    params: &'a ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    scratch: Vec<(f64, usize)>,
}

fn gini(w_true: f64, w_false: f64) -> f64 {
    let total = w_true + w_false;
    if total <= 0.0 {
        return 0.0;
    }
    let p = w_true / total;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn leaf(samples: &[Sample], labels: &[bool]) -> Node {
        let (mut t, mut f) = (0.0, 0.0);
        for s in samples {
            if labels[s.row] {
                t += s.weight
            } else {
                f += s.weight
            }
        }
        Node::Leaf { w_true: t, w_false: f }
    }

    fn best_split(&mut self, samples: &[Sample]) -> Option<BestSplit> {
        let width = self.data.cols.len();
        let labels = &self.data.labels;
        let min_leaf = self.params.min_samples_leaf as u32;
        let mut order: Vec<usize> = (0..width).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        let total_draws: u32 = samples.iter().map(|s| s.draws).sum();
        let (mut tot_t, mut tot_f) = (0.0, 0.0);
        for s in samples {
            if labels[s.row] {
                tot_t += s.weight
            } else {
                tot_f += s.weight
            }
        }
        for f in order {
            if tried >= self.mtry {
                break;
            }
            let col = &self.data.cols[f];
            self.scratch.clear();
            self.scratch.extend(samples.iter().enumerate().map(|(k, s)| (col[s.row], k)));
            let (lo, hi) = self
                .scratch
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
            if lo == hi {
                continue;
            }
            tried += 1;
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut lt, mut lf, mut ld) = (0.0, 0.0, 0u32);
            for w in 0..self.scratch.len() - 1 {
                let (v, k) = self.scratch[w];
                let s = &samples[k];
                if labels[s.row] {
                    lt += s.weight
                } else {
                    lf += s.weight
                }
                ld += s.draws;
                let next = self.scratch[w + 1].0;
                if next == v || ld < min_leaf || total_draws - ld < min_leaf {
                    continue;
                }
                let (rt, rf) = (tot_t - lt, tot_f - lf);
                let score = (lt + lf) * gini(lt, lf) + (rt + rf) * gini(rt, rf);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(BestSplit { feature: f, threshold, score });
                }
            }
        }
        best
    }

    fn grow(&mut self, mut samples: Vec<Sample>) -> Tree {
        // Work list of (node slot, sample range, depth).
        self.nodes.clear();
        self.nodes.push(Node::Leaf { w_true: 0.0, w_false: 0.0 });
        let n = samples.len();
        let mut stack = vec![(0usize, 0usize, n, 0usize)];
        while let Some((slot, start, end, depth)) = stack.pop() {
            let range = &samples[start..end];
            let leaf = Self::leaf(range, &self.data.labels);
            let Node::Leaf { w_true, w_false } = leaf else { unreachable!() };
            let draws: u32 = range.iter().map(|s| s.draws).sum();
            let pure = w_true == 0.0 || w_false == 0.0;
            let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
            let too_small = draws < 2 * self.params.min_samples_leaf as u32;
            let split = if pure || depth_capped || too_small { None } else { self.best_split(range) };
            let Some(split) = split else {
                self.nodes[slot] = leaf;
                continue;
            };
            let col = &self.data.cols[split.feature];
            let slice = &mut samples[start..end];
            slice.sort_by_key(|s| !(col[s.row] <= split.threshold));
            let mid = start + slice.iter().filter(|s| col[s.row] <= split.threshold).count();
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { w_true: 0.0, w_false: 0.0 });
            self.nodes.push(Node::Leaf { w_true: 0.0, w_false: 0.0 });
            self.nodes[slot] = Node::Split {
                feature: split.feature as u32,
                threshold: split.threshold,
                left: left as u32,
                right: (left + 1) as u32,
            };
            stack.push((left + 1, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
        Tree { nodes: std::mem::take(&mut self.nodes) }
    }
}

/// Fits `params.n_trees` trees. Each tree draws its bootstrap and feature
/// subsets from its own seeded stream, so the result does not depend on
/// thread scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[bool], params: &ForestParams) -> Result<Forest, ForestError> {
    params.validate()?;
    if x.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(ForestError::Length { rows: x.len(), labels: y.len() });
    }
    let width = x[0].len();
    if let Some(bad) = x.iter().find(|r| r.len() != width) {
        return Err(ForestError::SchemaMismatch { expected: width.to_string(), found: bad.len().to_string() });
    }
    let n_pos = y.iter().filter(|l| **l).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(ForestError::SingleClass(y[0]));
    }
    let data = canonical(x, y);
    let n = y.len();
    let class_w = match params.class_weight {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => [n as f64 / (2.0 * (n - n_pos) as f64), n as f64 / (2.0 * n_pos as f64)],
    };
    let mtry = params.features_per_split.count(width);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut draws = vec![0u32; n];
            for _ in 0..n {
                draws[rng.random_range(0..n)] += 1;
            }
            let samples: Vec<Sample> = draws
                .iter()
                .enumerate()
                .filter(|(_, d)| **d > 0)
                .map(|(row, &d)| Sample { row, draws: d, weight: d as f64 * class_w[usize::from(data.labels[row])] })
                .collect();
            let mut b = Builder { data: &data, params, mtry, nodes: Vec::new(), rng, scratch: Vec::new() };
            b.grow(samples)
        })
        .collect();
    Ok(Forest { width, trees })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n: usize,
    pub n_positive: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: String,
    pub feature_schema_version: String,
    pub groups: GroupSet,
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub summary: TrainingSummary,
    pub forest: Forest,
}

/// Trains on rows already restricted to `groups`, in schema order.
pub fn train(x: &[Vec<f64>], y: &[bool], groups: &GroupSet, params: &ForestParams) -> Result<TrainedModel, ForestError> {
    let names = groups.feature_names();
    if let Some(bad) = x.iter().find(|r| r.len() != names.len()) {
        return Err(ForestError::SchemaMismatch { expected: names.len().to_string(), found: bad.len().to_string() });
    }
    let forest = fit_forest(x, y, params)?;
    let n_positive = y.iter().filter(|l| **l).count();
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION.to_owned(),
        feature_schema_version: FEATURE_SCHEMA_VERSION.to_owned(),
        groups: groups.clone(),
        feature_names: names.into_iter().map(str::to_owned).collect(),
        params: params.clone(),
        summary: TrainingSummary { n: y.len(), n_positive, prevalence: n_positive as f64 / y.len() as f64 },
        forest,
    })
}

impl TrainedModel {
    pub fn check_schema(&self) -> Result<(), ForestError> {
        if self.feature_schema_version != FEATURE_SCHEMA_VERSION {
            return Err(ForestError::SchemaMismatch {
                expected: FEATURE_SCHEMA_VERSION.to_owned(),
                found: self.feature_schema_version.clone(),
            });
        }
        let expected = self.groups.feature_names();
        if self.feature_names.iter().map(String::as_str).ne(expected.iter().copied())
            || self.forest.trees.iter().any(|t| t.max_feature().is_some_and(|f| f as usize >= expected.len()))
        {
            return Err(ForestError::SchemaMismatch {
                expected: expected.join(","),
                found: self.feature_names.join(","),
            });
        }
        Ok(())
    }

    /// Probability of the vandalism class for a row restricted to the model's groups.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.forest.width {
            return Err(ForestError::SchemaMismatch {
                expected: self.forest.width.to_string(),
                found: x.len().to_string(),
            });
        }
        Ok(self.forest.predict(x))
    }

    /// Like `predict_proba`, but with the features of `hide` treated as unknown.
    pub fn predict_proba_hiding(&self, x: &[f64], hide: &GroupSet) -> Result<f64, ForestError> {
        self.predict_proba(x)?;
        let hidden: Vec<bool> = self.feature_names.iter().map(|n| self.group_of(n).is_some_and(|g| hide.contains(g))).collect();
        Ok(self.forest.trees.iter().map(|t| t.predict_hiding(x, &hidden)).sum::<f64>() / self.forest.trees.len() as f64)
    }

    pub fn predict_vector(&self, v: &FeatureVector) -> f64 {
        self.forest.predict(&v.select(&self.groups))
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ForestError> {
        let m: TrainedModel = serde_json::from_slice(bytes)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(ForestError::SchemaMismatch {
                expected: MODEL_FORMAT_VERSION.to_owned(),
                found: m.format_version,
            });
        }
        m.check_schema()?;
        Ok(m)
    }

    /// Number of splits that use each feature, across all trees.
    pub fn split_counts(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.feature_names.len()];
        for node in self.forest.trees.iter().flat_map(|t| &t.nodes) {
            if let Node::Split { feature, .. } = node {
                counts[*feature as usize] += 1;
            }
        }
        self.feature_names.iter().cloned().zip(counts).collect()
    }

    pub fn group_of(&self, name: &str) -> Option<FeatureGroup> {
        FEATURES.iter().find(|f| f.name == name).map(|f| f.group)
    }
}

/// Cartesian grid of parameter values. Missing keys take the default;
/// a `max_depth` of 0 means unlimited.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridSpec {
    n_trees: Vec<usize>,
    max_depth: Vec<usize>,
    min_samples_leaf: Vec<usize>,
    features_per_split: Vec<MaxFeatures>,
    class_weight: Vec<ClassWeight>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let d = ForestParams::default();
        GridSpec {
            n_trees: vec![d.n_trees],
            max_depth: vec![0],
            min_samples_leaf: vec![d.min_samples_leaf],
            features_per_split: vec![d.features_per_split],
            class_weight: vec![d.class_weight],
        }
    }
}

pub fn parse_grid(text: &str, seed: u64) -> Result<Vec<ForestParams>, ForestError> {
    let spec: GridSpec = toml::from_str(text).map_err(|e| ForestError::Grid(e.to_string()))?;
    let mut out = Vec::new();
    for &n_trees in &spec.n_trees {
        for &depth in &spec.max_depth {
            for &min_samples_leaf in &spec.min_samples_leaf {
                for &features_per_split in &spec.features_per_split {
                    for &class_weight in &spec.class_weight {
                        let p = ForestParams {
                            n_trees,
                            max_depth: (depth > 0).then_some(depth),
                            min_samples_leaf,
                            features_per_split,
                            class_weight,
                            seed,
                        };
                        p.validate()?;
                        out.push(p);
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(ForestError::Grid("grid is empty".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub cell: usize,
    pub fold: usize,
    pub pr_auc: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub best: ForestParams,
    pub best_cell: usize,
    pub cells: Vec<ForestParams>,
    pub mean_pr_auc: Vec<Option<f64>>,
    pub folds: Vec<FoldResult>,
}

/// Stratified fold index for each row, shuffled by `seed`.
pub fn stratified_folds(y: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; y.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    assign
}

fn depth_key(d: Option<usize>) -> usize {
    d.unwrap_or(usize::MAX)
}

/// Cross-validated PR-AUC for each cell; ties prefer fewer trees, then
/// shallower trees.
pub fn grid_search(x: &[Vec<f64>], y: &[bool], grid: &[ForestParams], folds: usize) -> Result<GridReport, ForestError> {
    if grid.is_empty() {
        return Err(ForestError::Grid("grid is empty".into()));
    }
    if folds < 2 {
        return Err(ForestError::Grid("at least two folds are required".into()));
    }
    if x.is_empty() {
        return Err(ForestError::EmptyInput);
    }
    let assign = stratified_folds(y, folds, grid[0].seed);
    let mut results = Vec::with_capacity(grid.len() * folds);
    for (cell, params) in grid.iter().enumerate() {
        for fold in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..y.len() {
                if assign[i] == fold {
                    vx.push(x[i].clone());
                    vy.push(y[i]);
                } else {
                    tx.push(x[i].clone());
                    ty.push(y[i]);
                }
            }
            let outcome = fit_forest(&tx, &ty, params).and_then(|f| {
                let scores: Vec<f64> = vx.iter().map(|r| f.predict(r)).collect();
                ScoredSet::from_parts(&scores, &vy)
                    .and_then(|s| pr_auc(&s))
                    .map_err(|e| ForestError::InvalidParams(e.to_string()))
            });
            results.push(match outcome {
                Ok(v) => FoldResult { cell, fold, pr_auc: Some(v), skipped: None },
                Err(e) => FoldResult { cell, fold, pr_auc: None, skipped: Some(e.to_string()) },
            });
        }
    }
    let mean_pr_auc: Vec<Option<f64>> = (0..grid.len())
        .map(|c| {
            let vals: Vec<f64> = results.iter().filter(|r| r.cell == c).filter_map(|r| r.pr_auc).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let best_cell = (0..grid.len())
        .filter(|&c| mean_pr_auc[c].is_some())
        .min_by(|&a, &b| {
            mean_pr_auc[b]
                .unwrap()
                .total_cmp(&mean_pr_auc[a].unwrap())
                .then(grid[a].n_trees.cmp(&grid[b].n_trees))
                .then(depth_key(grid[a].max_depth).cmp(&depth_key(grid[b].max_depth)))
                .then(a.cmp(&b))
        })
        .ok_or_else(|| ForestError::Grid("every fold was skipped".into()))?;
    Ok(GridReport { best: grid[best_cell].clone(), best_cell, cells: grid.to_vec(), mean_pr_auc, folds: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;

    fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let pos = i % 4 == 0;
                let v = if pos { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.4) };
                (vec![v], pos)
            })
            .unzip()
    }

    #[test]
    fn separable_data_is_learned() {
        let (x, y) = separable(2_000, 1);
        let f = fit_forest(&x, &y, &ForestParams { n_trees: 10, ..Default::default() }).unwrap();
        let s = ScoredSet::from_parts(&x.iter().map(|r| f.predict(r)).collect::<Vec<_>>(), &y).unwrap();
        assert!(roc_auc(&s).unwrap() >= 0.999);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_forest(&[], &[], &ForestParams::default()), Err(ForestError::EmptyInput)));
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(fit_forest(&x, &[true, true], &ForestParams::default()), Err(ForestError::SingleClass(true))));
    }

    #[test]
    fn stump_and_leaf_fractions() {
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { w_true: 3.0, w_false: 1.0 },
                Node::Leaf { w_true: 2.0, w_false: 0.0 },
            ],
        };
        assert_eq!(tree.predict(&[0.2]), 0.75);
        assert_eq!(tree.predict(&[0.7]), 1.0);
        assert_eq!(tree.predict(&[0.5]), 0.75);
        let copies = Forest { width: 1, trees: vec![tree.clone(); 7] };
        for x in [0.0, 0.5, 0.51, 3.0] {
            assert_eq!(copies.predict(&[x]), tree.predict(&[x]));
        }
    }

    #[test]
    fn deterministic_and_order_free() {
        let (x, y) = separable(300, 2);
        let p = ForestParams { n_trees: 5, seed: 9, ..Default::default() };
        let a = fit_forest(&x, &y, &p).unwrap();
        let b = fit_forest(&x, &y, &p).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let mut rows: Vec<(Vec<f64>, bool)> = x.iter().cloned().zip(y.iter().copied()).collect();
        rows.reverse();
        let (rx, ry): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        assert_eq!(fit_forest(&rx, &ry, &p).unwrap(), a);
    }

    #[test]
    fn depth_and_leaf_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<bool> = (0..400).map(|_| rng.random_bool(0.3)).collect();
        let p = ForestParams { n_trees: 3, max_depth: Some(2), ..Default::default() };
        let f = fit_forest(&x, &y, &p).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 2));
        let p = ForestParams { n_trees: 3, min_samples_leaf: 400, ..Default::default() };
        let f = fit_forest(&x, &y, &p).unwrap();
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn mtry_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(53), 7);
        assert_eq!(MaxFeatures::Log2.count(53), 5);
        assert_eq!(MaxFeatures::All.count(53), 53);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }

    #[test]
    fn grid_parsing_and_single_cell() {
        let grid = parse_grid("n_trees = [10, 20]\nmax_depth = [0, 8]\n", 4).unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[1].max_depth, Some(8));
        assert!(parse_grid("bogus = 1", 0).is_err());
        let (x, y) = separable(200, 5);
        let one = vec![ForestParams { n_trees: 3, ..Default::default() }];
        let r = grid_search(&x, &y, &one, 3).unwrap();
        assert_eq!(r.best, one[0]);
        assert_eq!(r.folds.len(), 3);
    }

    #[test]
    fn planted_signal_beats_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 600;
        let y: Vec<bool> = (0..n).map(|i| i % 5 == 0).collect();
        let x: Vec<Vec<f64>> = y
            .iter()
            .map(|&l| {
                let signal = if l { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.6) };
                vec![signal, rng.random(), rng.random()]
            })
            .collect();
        // Cell 0 only ever sees noise columns: constant signal column is replaced.
        let noisy: Vec<Vec<f64>> = x.iter().map(|r| vec![0.0, r[1], r[2]]).collect();
        let grid = vec![ForestParams { n_trees: 15, ..Default::default() }; 1];
        let sig = grid_search(&x, &y, &grid, 4).unwrap().mean_pr_auc[0].unwrap();
        let noise = grid_search(&noisy, &y, &grid, 4).unwrap().mean_pr_auc[0].unwrap();
        assert!(sig > noise + 0.2, "{sig} vs {noise}");
    }

    #[test]
    fn tie_break_prefers_fewer_trees() {
        // Pure separable data gives every cell a perfect score.
        let (x, y) = separable(200, 8);
        let grid = parse_grid("n_trees = [12, 4]\nmax_depth = [0, 3]\n", 1).unwrap();
        let r = grid_search(&x, &y, &grid, 2).unwrap();
        assert_eq!(r.best.n_trees, 4);
        assert_eq!(r.best.max_depth, Some(3));
        assert_eq!(r.folds.len(), grid.len() * 2);
    }

    #[test]
    fn model_round_trip() {
        let groups: GroupSet = "user".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..300).map(|_| (0..6).map(|_| rng.random_range(0.0..3.0f64).floor()).collect()).collect();
        let y: Vec<bool> = x.iter().map(|r| r[4] > 1.0 || rng.random_bool(0.05)).collect();
        let m = train(&x, &y, &groups, &ForestParams { n_trees: 4, ..Default::default() }).unwrap();
        let back = TrainedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(m.predict_proba(&[0.0; 5]), Err(ForestError::SchemaMismatch { .. })));
        assert!(matches!(train(&x, &y, &"general".parse().unwrap(), &ForestParams::default()), Err(ForestError::SchemaMismatch { .. })));
    }
}
