//! L2-regularized logistic regression trained by full-batch gradient descent
//! with backtracking line search.
//!
//! Each coordinate's step is scaled by the inverse of a bound on its curvature
//! (`mean(z_j²)/4 + λ` for weights, `1/4` for the intercept). Without the
//! scaling a large λ forces a step so small that the intercept never converges.
//!
//! Objective on standardized features `z`:
//!
//! ```text
//! f(w, b) = (1/n) Σ [-y log p - (1-y) log(1-p)] + (λ/2) ‖w‖²,   p = σ(w·z + b)
//! ```
//!
//! The intercept is not penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Scorer};
use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

const PROB_FLOOR: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// λ grid searched by [`tune_lambda`].
pub const LAMBDA_GRID: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Per-column z-scoring fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub means: Vec<T>,
    /// Population standard deviations; constant columns store 1.
    pub stds: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = T::from_count(rows.len().max(1));
        let mut means = vec![T::zero(); d];
        for row in rows {
            for (m, &x) in means.iter_mut().zip(row) {
                *m = *m + x;
            }
        }
        means.iter_mut().for_each(|m| *m = *m / n);
        let mut vars = vec![T::zero(); d];
        for row in rows {
            for ((v, &x), &m) in vars.iter_mut().zip(row).zip(&means) {
                *v = *v + (x - m) * (x - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > T::epsilon() {
                    s
                } else {
                    T::one()
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn transform(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogRegConfig<T> {
    pub lambda: T,
    pub tolerance: T,
    pub max_iters: usize,
}

impl<T: Scalar> Default for LogRegConfig<T> {
    fn default() -> Self {
        LogRegConfig {
            lambda: c(0.01),
            tolerance: c(1e-6),
            max_iters: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchStalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainReport<T> {
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub final_loss: T,
    pub gradient_max_norm: T,
    /// Objective value before each accepted step, then the final value.
    #[serde(skip)]
    pub loss_history: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogRegModel<T> {
    pub columns: Vec<String>,
    pub standardizer: Standardizer<T>,
    pub weights: Vec<T>,
    pub intercept: T,
    pub lambda: T,
    pub report: TrainReport<T>,
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = c::<T>(PROB_FLOOR);
    p.max(lo).min(T::one() - lo)
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn loss_only<T: Scalar>(z: &[Vec<T>], y: &[bool], w: &[T], b: T, lambda: T) -> T {
    let n = T::from_count(z.len());
    let data: T = z
        .iter()
        .zip(y)
        .map(|(row, &label)| {
            let p = clamp_prob(sigmoid(dot(w, row) + b));
            if label {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum();
    data / n + c::<T>(0.5) * lambda * dot(w, w)
}

/// Objective value and gradient `(loss, ∂loss/∂w, ∂loss/∂b)` on already
/// standardized rows.
pub fn objective<T: Scalar>(z: &[Vec<T>], y: &[bool], w: &[T], b: T, lambda: T) -> (T, Vec<T>, T) {
    let n = T::from_count(z.len());
    let mut grad_w = vec![T::zero(); w.len()];
    let mut grad_b = T::zero();
    let mut data = T::zero();
    for (row, &label) in z.iter().zip(y) {
        let p = sigmoid(dot(w, row) + b);
        let target = if label { T::one() } else { T::zero() };
        let pc = clamp_prob(p);
        data = data - if label { pc.ln() } else { (T::one() - pc).ln() };
        let r = p - target;
        for (g, &x) in grad_w.iter_mut().zip(row) {
            *g = *g + r * x;
        }
        grad_b = grad_b + r;
    }
    for (g, &wi) in grad_w.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    let loss = data / n + c::<T>(0.5) * lambda * dot(w, w);
    (loss, grad_w, grad_b / n)
}

fn check_inputs<T: Scalar>(rows: &[Vec<T>], labels: &[bool]) -> Result<usize> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Model(format!("{} rows vs {} labels", rows.len(), labels.len())));
    }
    let d = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::Model(format!("row {i} has {} features, expected {d}", r.len())));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model(format!("row {i} has a non-finite feature value")));
        }
    }
    Ok(d)
}

/// Fits the model; standardization parameters come from `rows` only.
pub fn train_logreg<T: Scalar>(
    columns: &[String],
    rows: &[Vec<T>],
    labels: &[bool],
    config: &LogRegConfig<T>,
) -> Result<LogRegModel<T>> {
    let d = check_inputs(rows, labels)?;
    if !(config.lambda > T::zero()) {
        return Err(Error::Model("L2 penalty must be positive".into()));
    }
    if columns.len() != d {
        return Err(Error::Model(format!("{} column names for {d} features", columns.len())));
    }
    let standardizer = Standardizer::fit(rows);
    let z: Vec<Vec<T>> = rows.iter().map(|r| standardizer.transform(r)).collect();

    let n = T::from_count(z.len());
    let quarter = c::<T>(0.25);
    let scale_w: Vec<T> = (0..d)
        .map(|j| T::one() / (quarter * z.iter().map(|r| r[j] * r[j]).sum::<T>() / n + config.lambda))
        .collect();
    let scale_b = T::one() / quarter;

    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut step = T::one();
    let mut history = Vec::new();
    let (mut loss, mut gw, mut gb) = objective(&z, labels, &w, b, config.lambda);
    let mut iterations = 0;
    let termination = loop {
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax <= config.tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }
        history.push(loss);
        let dw: Vec<T> = gw.iter().zip(&scale_w).map(|(&g, &s)| g * s).collect();
        let db = gb * scale_b;
        let g2 = dot(&gw, &dw) + gb * db;
        step = step + step;
        let accepted = loop {
            let w_new: Vec<T> = w.iter().zip(&dw).map(|(&wi, &g)| wi - step * g).collect();
            let b_new = b - step * db;
            let candidate = loss_only(&z, labels, &w_new, b_new, config.lambda);
            if candidate <= loss - c::<T>(ARMIJO) * step * g2 {
                break Some((w_new, b_new));
            }
            step = step * c(0.5);
            if step < c(MIN_STEP) {
                break None;
            }
        };
        let Some((w_new, b_new)) = accepted else {
            break Termination::LineSearchStalled;
        };
        w = w_new;
        b = b_new;
        (loss, gw, gb) = objective(&z, labels, &w, b, config.lambda);
        iterations += 1;
    };
    history.push(loss);
    let gradient_max_norm = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
    if termination != Termination::GradientTolerance {
        log::warn!("logistic regression stopped without converging: {termination:?}, |g|max = {gradient_max_norm}");
    }
    Ok(LogRegModel {
        columns: columns.to_vec(),
        standardizer,
        weights: w,
        intercept: b,
        lambda: config.lambda,
        report: TrainReport {
            iterations,
            converged: termination == Termination::GradientTolerance,
            termination,
            final_loss: loss,
            gradient_max_norm,
            loss_history: history,
        },
    })
}

/// P(label = 1 | row), clamped to [1e-12, 1 - 1e-12].
pub fn predict_proba<T: Scalar>(model: &LogRegModel<T>, row: &[T]) -> Result<T> {
    if row.len() != model.weights.len() {
        return Err(Error::Model(format!(
            "row has {} features, model expects {}",
            row.len(),
            model.weights.len()
        )));
    }
    let z = model.standardizer.transform(row);
    Ok(clamp_prob(sigmoid(dot(&model.weights, &z) + model.intercept)))
}

impl<T: Scalar> LogRegModel<T> {
    pub fn predict(&self, row: &[T]) -> Result<bool> {
        Ok(predict_proba(self, row)? >= c(0.5))
    }

    /// Mean clamped log-loss (no penalty) on raw rows.
    pub fn log_loss(&self, rows: &[Vec<T>], labels: &[bool]) -> Result<T> {
        let mut total = T::zero();
        for (row, &y) in rows.iter().zip(labels) {
            let p = predict_proba(self, row)?;
            total = total - if y { p.ln() } else { (T::one() - p).ln() };
        }
        Ok(total / T::from_count(rows.len().max(1)))
    }
}

impl<T: Scalar> Scorer<T> for LogRegModel<T> {
    fn score(&self, row: &[T]) -> Result<T> {
        predict_proba(self, row)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TuneReport<T> {
    pub chosen_lambda: T,
    /// (λ, validation log-loss) for each grid point.
    pub validation_loss: Vec<(T, T)>,
}

/// Picks λ from `grid` by log-loss on a stratified held-out slice of the
/// training rows (`validation_fraction`, e.g. 0.05). Ties keep the earlier
/// grid entry.
pub fn tune_lambda<T: Scalar>(
    train: &Dataset<T>,
    grid: &[T],
    validation_fraction: f64,
    seed: u64,
    base: &LogRegConfig<T>,
) -> Result<TuneReport<T>> {
    if grid.is_empty() {
        return Err(Error::Model("empty λ grid".into()));
    }
    let inner = Dataset {
        split: None,
        ..train.clone()
    }
    .split(1.0 - validation_fraction, seed)?;
    let (fit, val) = (inner.train(), inner.test());
    let scores: Vec<(T, T)> = grid
        .par_iter()
        .map(|&lambda| {
            let cfg = LogRegConfig { lambda, ..*base };
            let model = train_logreg(&fit.columns, &fit.rows, &fit.labels, &cfg)?;
            Ok((lambda, model.log_loss(&val.rows, &val.labels)?))
        })
        .collect::<Result<_>>()?;
    let chosen = scores
        .iter()
        .fold(None::<(T, T)>, |best, &(l, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((l, s)),
        })
        .map(|(l, _)| l)
        .expect("grid is non-empty");
    Ok(TuneReport {
        chosen_lambda: chosen,
        validation_loss: scores,
    })
}
