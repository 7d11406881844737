//! Migration classifier: L2 logistic regression (selected model), multinomial
//! naive Bayes (baseline) and the evaluation metrics.

mod dataset;
mod logreg;
mod metrics;
mod naive_bayes;

pub use dataset::{Dataset, Part};
pub use logreg::{
    objective, predict_proba, train_logreg, tune_lambda, LogRegConfig, LogRegModel, Standardizer, Termination,
    TrainReport, TuneReport, LAMBDA_GRID,
};
pub use metrics::{auc, evaluate, metrics_from_scores, Confusion, Metrics};
pub use naive_bayes::{train_mnb, MultinomialNb};

use crate::error::Result;
use crate::scalar::Scalar;

/// Anything that maps a feature row to P(label = 1).
pub trait Scorer<T: Scalar> {
    fn score(&self, row: &[T]) -> Result<T>;
}
