//! ROC AUC, best-threshold F1 and FPR at a fixed TPR.
//!
//! Every metric is computed over the partitions induced by sorting the
//! scores; tied scores always fall on the same side of a threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("need at least one positive and one negative (got {positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("score at index {0} is not finite")]
    NonFinite(usize),
    #[error("TPR target must lie in (0, 1], got {0}")]
    BadTarget(f64),
}

/// Which ground-truth class counts as "positive".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveClass {
    /// High anomaly scores predict the positive class.
    #[default]
    Anomalous,
    /// Low anomaly scores predict the positive class.
    Normal,
}

/// Anomaly scores with binary labels (`true` = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    positive: Vec<bool>,
    meaning: PositiveClass,
    n_pos: usize,
    n_neg: usize,
}

impl ScoredSet {
    pub fn new(
        scores: Vec<f64>,
        positive: Vec<bool>,
        meaning: PositiveClass,
    ) -> Result<Self, MetricsError> {
        if scores.len() != positive.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: positive.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        let n_pos = positive.iter().filter(|&&p| p).count();
        let n_neg = positive.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(MetricsError::SingleClass {
                positives: n_pos,
                negatives: n_neg,
            });
        }
        Ok(ScoredSet {
            scores,
            positive,
            meaning,
            n_pos,
            n_neg,
        })
    }

    /// Builds from per-sample anomaly flags, mapping them onto positives
    /// according to `meaning`.
    pub fn from_anomaly_flags(
        scores: Vec<f64>,
        is_anomalous: &[bool],
        meaning: PositiveClass,
    ) -> Result<Self, MetricsError> {
        let positive = is_anomalous
            .iter()
            .map(|&a| match meaning {
                PositiveClass::Anomalous => a,
                PositiveClass::Normal => !a,
            })
            .collect();
        ScoredSet::new(scores, positive, meaning)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn positives(&self) -> &[bool] {
        &self.positive
    }

    pub fn meaning(&self) -> PositiveClass {
        self.meaning
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Larger decision value = more confidently positive.
    fn decision(&self, i: usize) -> f64 {
        match self.meaning {
            PositiveClass::Anomalous => self.scores[i],
            PositiveClass::Normal => -self.scores[i],
        }
    }

    /// Tie groups ordered by decreasing decision value, as
    /// `(score, positives in group, negatives in group)`.
    fn groups_desc(&self) -> Vec<(f64, usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.decision(b).total_cmp(&self.decision(a)));
        let mut groups: Vec<(f64, usize, usize)> = Vec::new();
        for i in order {
            let s = self.scores[i];
            match groups.last_mut() {
                Some(g) if g.0 == s => {}
                _ => groups.push((s, 0, 0)),
            }
            let g = groups.last_mut().expect("just pushed");
            if self.positive[i] {
                g.1 += 1;
            } else {
                g.2 += 1;
            }
        }
        groups
    }
}

/// Probability that a random positive outranks a random negative, ties
/// counted as one half. Computed from average ranks, exactly.
pub fn roc_auc(set: &ScoredSet) -> f64 {
    // Walk groups from the lowest decision value upward, accumulating
    // doubled average ranks of positives so everything stays integral.
    let mut groups = set.groups_desc();
    groups.reverse();
    let mut rank_start = 1u64;
    let mut doubled_rank_sum = 0u64;
    for (_, pos, neg) in groups {
        let size = (pos + neg) as u64;
        let rank_end = rank_start + size - 1;
        doubled_rank_sum += pos as u64 * (rank_start + rank_end);
        rank_start += size;
    }
    let n_pos = set.n_pos as u64;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    doubled_u as f64 / (2 * n_pos * set.n_neg as u64) as f64
}

/// One operating point: everything at or above a tie group (in decision
/// order) is predicted positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub true_pos: usize,
    pub false_pos: usize,
}

/// Every distinct partition, from "nothing predicted positive" to
/// "everything predicted positive". Thresholds are expressed in score units:
/// predicted positive is `score >= threshold` for anomalous positives and
/// `score < threshold` for normal positives.
pub fn operating_points(set: &ScoredSet) -> Vec<OperatingPoint> {
    let groups = set.groups_desc();
    let mut points = Vec::with_capacity(groups.len() + 1);
    let (mut tp, mut fp) = (0usize, 0usize);
    // nothing predicted positive
    let none_threshold = match set.meaning {
        PositiveClass::Anomalous => f64::INFINITY,
        PositiveClass::Normal => groups[0].0,
    };
    points.push(OperatingPoint {
        threshold: none_threshold,
        true_pos: 0,
        false_pos: 0,
    });
    for (k, &(score, pos, neg)) in groups.iter().enumerate() {
        tp += pos;
        fp += neg;
        let threshold = match set.meaning {
            PositiveClass::Anomalous => score,
            // the next group up in score is the first one excluded
            PositiveClass::Normal => groups.get(k + 1).map_or(f64::INFINITY, |g| g.0),
        };
        points.push(OperatingPoint {
            threshold,
            true_pos: tp,
            false_pos: fp,
        });
    }
    points
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Maximum F1 over all thresholds and the lowest threshold achieving it.
pub fn best_f1(set: &ScoredSet) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for p in operating_points(set) {
        let score = f1(p.true_pos, p.false_pos, set.n_pos - p.true_pos);
        if score > best.0 || (score == best.0 && p.threshold < best.1) {
            best = (score, p.threshold);
        }
    }
    best
}

/// FPR at the strictest operating point whose TPR reaches `tpr_target`.
pub fn fpr_at_tpr(set: &ScoredSet, tpr_target: f64) -> Result<f64, MetricsError> {
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(MetricsError::BadTarget(tpr_target));
    }
    let point = operating_points(set)
        .into_iter()
        .find(|p| p.true_pos as f64 / set.n_pos as f64 >= tpr_target)
        .expect("the all-positive operating point has TPR 1");
    Ok(point.false_pos as f64 / set.n_neg as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
