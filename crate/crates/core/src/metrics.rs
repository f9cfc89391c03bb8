//! Ranking metrics over scored, labeled sets. Equal scores are always
//! treated as one block that crosses a threshold together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("metric needs both classes, got {n_pos} positives and {n_neg} negatives")]
    OneClass { n_pos: usize, n_neg: usize },
    #[error("score {0} outside [0, 1]")]
    BadScore(f64),
    #[error("target {0} outside (0, 1]")]
    BadTarget(f64),
    #[error("{scores} scores for {labels} labels")]
    Length { scores: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pairs: Vec<(f64, bool)>,
    n_pos: usize,
    n_neg: usize,
}

impl ScoredSet {
    pub fn new(pairs: Vec<(f64, bool)>) -> Result<Self, MetricError> {
        if let Some((s, _)) = pairs.iter().find(|(s, _)| !(0.0..=1.0).contains(s)) {
            return Err(MetricError::BadScore(*s));
        }
        let n_pos = pairs.iter().filter(|(_, l)| *l).count();
        let n_neg = pairs.len() - n_pos;
        Ok(ScoredSet { pairs, n_pos, n_neg })
    }

    pub fn from_parts(scores: &[f64], labels: &[bool]) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::Length { scores: scores.len(), labels: labels.len() });
        }
        Self::new(scores.iter().copied().zip(labels.iter().copied()).collect())
    }

    pub fn pairs(&self) -> &[(f64, bool)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn prevalence(&self) -> f64 {
        self.n_pos as f64 / self.pairs.len() as f64
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(MetricError::OneClass { n_pos: self.n_pos, n_neg: self.n_neg });
        }
        Ok(())
    }

    /// Tie blocks in descending score order: (score, positives, negatives).
    fn blocks_desc(&self) -> Vec<(f64, usize, usize)> {
        let mut sorted = self.pairs.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for (s, l) in sorted {
            match out.last_mut() {
                Some(last) if last.0 == s => {
                    if l {
                        last.1 += 1
                    } else {
                        last.2 += 1
                    }
                }
                _ => out.push((s, usize::from(l), usize::from(!l))),
            }
        }
        out
    }
}

/// Probability that a random positive outscores a random negative, ties 1/2.
pub fn roc_auc(s: &ScoredSet) -> Result<f64, MetricError> {
    s.check()?;
    // Rank sum with tie-averaged ranks, ascending.
    let mut rank_sum = 0.0;
    let mut seen = 0usize;
    for (_, pos, neg) in s.blocks_desc().into_iter().rev() {
        let size = pos + neg;
        let avg_rank = seen as f64 + (size as f64 + 1.0) / 2.0;
        rank_sum += avg_rank * pos as f64;
        seen += size;
    }
    let p = s.n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * s.n_neg as f64))
}

/// Step-wise average precision: sum of precision times recall increment.
pub fn pr_auc(s: &ScoredSet) -> Result<f64, MetricError> {
    s.check()?;
    let total = s.n_pos as f64;
    let (mut tp, mut fp, mut ap, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    for (_, pos, neg) in s.blocks_desc() {
        tp += pos;
        fp += neg;
        if pos > 0 {
            let recall = tp as f64 / total;
            ap += (tp as f64 / (tp + fp) as f64) * (recall - prev_recall);
            prev_recall = recall;
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Edits scored at or above this value are reviewed.
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
    /// Fraction of all edits scored below the threshold.
    pub filter_rate: f64,
    /// `1 - filter_rate`.
    pub review_rate: f64,
    /// Set when the chosen threshold lets every edit through to review.
    pub zero_filter: bool,
}

/// Every distinct score as a cut point, descending threshold order, so
/// recall is non-decreasing along the vector.
pub fn operating_points(s: &ScoredSet) -> Result<Vec<OperatingPoint>, MetricError> {
    s.check()?;
    let n = s.len();
    let (mut tp, mut fp) = (0usize, 0usize);
    Ok(s.blocks_desc()
        .into_iter()
        .map(|(score, pos, neg)| {
            tp += pos;
            fp += neg;
            let skipped = n - tp - fp;
            OperatingPoint {
                threshold: score,
                recall: tp as f64 / s.n_pos as f64,
                precision: tp as f64 / (tp + fp) as f64,
                filter_rate: skipped as f64 / n as f64,
                review_rate: 1.0 - skipped as f64 / n as f64,
                zero_filter: skipped == 0,
            }
        })
        .collect())
}

/// Largest threshold whose recall reaches `target_recall`.
pub fn filter_rate_at_recall(s: &ScoredSet, target_recall: f64) -> Result<OperatingPoint, MetricError> {
    if !(target_recall > 0.0 && target_recall <= 1.0) {
        return Err(MetricError::BadTarget(target_recall));
    }
    let points = operating_points(s)?;
    Ok(*points
        .iter()
        .find(|p| p.recall >= target_recall)
        .expect("the lowest threshold reaches full recall"))
}

/// Highest recall among thresholds that skip at least `filter_rate` of all edits.
pub fn recall_at_filter_rate(s: &ScoredSet, filter_rate: f64) -> Result<f64, MetricError> {
    let points = operating_points(s)?;
    Ok(points
        .iter()
        .filter(|p| p.filter_rate >= filter_rate)
        .map(|p| p.recall)
        .fold(0.0, f64::max))
}

/// The highest-recall cut point that still skips some edits.
pub fn default_operating_point(s: &ScoredSet) -> Result<OperatingPoint, MetricError> {
    let points = operating_points(s)?;
    Ok(points
        .iter()
        .filter(|p| !p.zero_filter)
        .max_by(|a, b| a.recall.total_cmp(&b.recall).then(a.filter_rate.total_cmp(&b.filter_rate)))
        .copied()
        .unwrap_or_else(|| *points.last().expect("nonempty")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// (recall, precision), recall non-decreasing.
    pub precision_recall: Vec<(f64, f64)>,
    /// (recall, filter_rate), recall non-decreasing.
    pub filter_recall: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

pub fn curves(s: &ScoredSet) -> Result<Curves, MetricError> {
    let points = operating_points(s)?;
    Ok(Curves {
        precision_recall: points.iter().map(|p| (p.recall, p.precision)).collect(),
        filter_recall: points.iter().map(|p| (p.recall, p.filter_rate)).collect(),
        thresholds: points.iter().map(|p| p.threshold).collect(),
    })
}

impl Curves {
    pub fn precision_csv(&self) -> String {
        let mut out = String::from("recall,precision,threshold\n");
        for ((r, p), t) in self.precision_recall.iter().zip(&self.thresholds) {
            out.push_str(&format!("{r},{p},{t}\n"));
        }
        out
    }

    pub fn filter_csv(&self) -> String {
        let mut out = String::from("recall,filter_rate,threshold\n");
        for ((r, f), t) in self.filter_recall.iter().zip(&self.thresholds) {
            out.push_str(&format!("{r},{f},{t}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(f64, bool)]) -> ScoredSet {
        ScoredSet::new(pairs.to_vec()).unwrap()
    }

    #[test]
    fn roc_examples() {
        let s = set(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]);
        assert_eq!(roc_auc(&s).unwrap(), 0.75);
        assert_eq!(roc_auc(&set(&[(0.9, true), (0.2, false)])).unwrap(), 1.0);
        assert_eq!(roc_auc(&set(&[(0.5, true), (0.5, false), (0.5, false)])).unwrap(), 0.5);
        assert!(matches!(roc_auc(&set(&[(0.5, true)])), Err(MetricError::OneClass { .. })));
    }

    #[test]
    fn ap_examples() {
        let s = set(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]);
        assert!((pr_auc(&s).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(pr_auc(&set(&[(0.9, true), (0.8, true), (0.2, false)])).unwrap(), 1.0);
        // a tie block containing both classes is credited at its own precision
        assert_eq!(pr_auc(&set(&[(0.5, true), (0.5, false)])).unwrap(), 0.5);
    }

    fn worked() -> ScoredSet {
        let mut pairs = vec![(0.95, true), (0.9, true)];
        pairs.extend([0.8, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.01].map(|s| (s, false)));
        ScoredSet::new(pairs).unwrap()
    }

    #[test]
    fn filter_rate_worked_example() {
        let p = filter_rate_at_recall(&worked(), 1.0).unwrap();
        assert_eq!((p.filter_rate, p.recall, p.threshold), (0.8, 1.0, 0.9));
        assert!((p.review_rate - 0.2).abs() < 1e-15);
        assert_eq!(p.review_rate + p.filter_rate, 1.0);
        let p = filter_rate_at_recall(&worked(), 0.5).unwrap();
        assert_eq!((p.filter_rate, p.recall, p.threshold), (0.9, 0.5, 0.95));
        assert!(!p.zero_filter);
    }

    #[test]
    fn constant_scores_flag_zero_filter() {
        let s = set(&[(0.3, true), (0.3, false), (0.3, false), (0.3, true)]);
        let p = filter_rate_at_recall(&s, 0.75).unwrap();
        assert_eq!(p.filter_rate, 0.0);
        assert!(p.zero_filter);
    }

    #[test]
    fn recall_at_fixed_filter() {
        assert_eq!(recall_at_filter_rate(&worked(), 0.8).unwrap(), 1.0);
        assert_eq!(recall_at_filter_rate(&worked(), 0.85).unwrap(), 0.5);
        assert_eq!(recall_at_filter_rate(&worked(), 0.95).unwrap(), 0.0);
    }

    #[test]
    fn default_point_prefers_recall() {
        let p = default_operating_point(&worked()).unwrap();
        assert_eq!((p.recall, p.filter_rate), (1.0, 0.8));
    }

    #[test]
    fn curve_csv_shapes() {
        let c = curves(&worked()).unwrap();
        assert_eq!(c.precision_recall.len(), 10);
        assert!(c.filter_recall.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(c.precision_csv().starts_with("recall,precision"));
        assert_eq!(c.filter_csv().lines().count(), 11);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(ScoredSet::new(vec![(1.5, true)]), Err(MetricError::BadScore(_))));
        assert!(matches!(ScoredSet::new(vec![(f64::NAN, true)]), Err(MetricError::BadScore(_))));
        assert!(matches!(filter_rate_at_recall(&worked(), 0.0), Err(MetricError::BadTarget(_))));
    }
}
