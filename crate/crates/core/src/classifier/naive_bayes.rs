//! Multinomial naive Bayes over non-negative count features.

use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MultinomialNb<T> {
    pub columns: Vec<String>,
    pub alpha: T,
    /// log P(class), index 0 = negative, 1 = positive.
    pub class_log_prior: [T; 2],
    /// log θ_ci = log((N_ci + α) / (N_c + α·d)).
    pub feature_log_prob: [Vec<T>; 2],
}

/// Fits class priors and Laplace-smoothed per-class feature distributions.
pub fn train_mnb<T: Scalar>(
    columns: &[String],
    rows: &[Vec<T>],
    labels: &[bool],
    alpha: T,
) -> Result<MultinomialNb<T>> {
    if !(alpha > T::zero()) {
        return Err(Error::Model("smoothing α must be positive".into()));
    }
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Model(format!("{} rows vs {} labels", rows.len(), labels.len())));
    }
    let d = columns.len();
    let mut totals = [vec![T::zero(); d], vec![T::zero(); d]];
    let mut class_n = [0usize; 2];
    for (i, (row, &y)) in rows.iter().zip(labels).enumerate() {
        if row.len() != d {
            return Err(Error::Model(format!(
                "row {i} has {} features, expected {d}",
                row.len()
            )));
        }
        if row.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(Error::Model(format!("row {i} has a negative or non-finite count")));
        }
        let k = usize::from(y);
        class_n[k] += 1;
        for (t, &x) in totals[k].iter_mut().zip(row) {
            *t = *t + x;
        }
    }
    let n = T::from_count(rows.len());
    let class_log_prior = class_n.map(|k| (T::from_count(k) / n).ln());
    let dim = T::from_count(d);
    let feature_log_prob = totals.map(|t| {
        let sum: T = t.iter().copied().sum();
        let denom = (sum + alpha * dim).ln();
        t.into_iter().map(|x| (x + alpha).ln() - denom).collect()
    });
    Ok(MultinomialNb {
        columns: columns.to_vec(),
        alpha,
        class_log_prior,
        feature_log_prob,
    })
}

impl<T: Scalar> MultinomialNb<T> {
    /// Joint log-likelihood per class, up to the shared multinomial coefficient.
    pub fn joint_log_likelihood(&self, row: &[T]) -> Result<[T; 2]> {
        if row.len() != self.columns.len() {
            return Err(Error::Model(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.columns.len()
            )));
        }
        Ok([0, 1].map(|k| {
            let ll = row
                .iter()
                .zip(&self.feature_log_prob[k])
                .fold(T::zero(), |acc, (&x, &lp)| acc + x * lp);
            self.class_log_prior[k] + ll
        }))
    }

    pub fn predict_proba(&self, row: &[T]) -> Result<T> {
        let [neg, pos] = self.joint_log_likelihood(row)?;
        // guards -inf priors when a class is absent from training
        if pos == T::neg_infinity() && neg == T::neg_infinity() {
            return Ok(T::from_f64_lossy(0.5));
        }
        let m = neg.max(pos);
        let (en, ep) = ((neg - m).exp(), (pos - m).exp());
        Ok(ep / (en + ep))
    }
}

impl<T: Scalar> Scorer<T> for MultinomialNb<T> {
    fn score(&self, row: &[T]) -> Result<T> {
        self.predict_proba(row)
    }
}
