use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Out-of-sample scores. Undefined values are `None` (JSON `null`), never 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Metrics<T> {
    pub f1: Option<T>,
    pub accuracy: T,
    pub auc: Option<T>,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub threshold: T,
    pub confusion: Confusion,
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks for ties.
/// `None` unless both classes are present.
pub fn auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Option<T> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let midrank = (i + j + 2) as f64 / 2.0;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += midrank * pos_in_tie as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(c(u / (n_pos as f64 * n_neg as f64)))
}

pub fn metrics_from_scores<T: Scalar>(scores: &[T], labels: &[bool], threshold: T) -> Result<Metrics<T>> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Model(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut m = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    let ratio = |num: u64, den: u64| T::from_count(num as usize) / T::from_count(den as usize);
    let total = m.tp + m.fp + m.fn_ + m.tn;
    let has_positives = m.tp + m.fn_ > 0;
    let precision = (has_positives && m.tp + m.fp > 0).then(|| ratio(m.tp, m.tp + m.fp));
    let recall = has_positives.then(|| ratio(m.tp, m.tp + m.fn_));
    let f1 = has_positives.then(|| ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_));
    Ok(Metrics {
        f1,
        accuracy: ratio(m.tp + m.tn, total),
        auc: auc(scores, labels),
        precision,
        recall,
        threshold,
        confusion: m,
    })
}

/// Scores `rows` with `model` and computes metrics at threshold 0.5.
pub fn evaluate<T: Scalar, S: Scorer<T> + ?Sized>(model: &S, rows: &[Vec<T>], labels: &[bool]) -> Result<Metrics<T>> {
    let scores = rows.iter().map(|r| model.score(r)).collect::<Result<Vec<T>>>()?;
    metrics_from_scores(&scores, labels, c(0.5))
}
