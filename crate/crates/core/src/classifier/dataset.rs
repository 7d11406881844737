use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Train,
    Test,
}

/// Labeled feature table with an optional train/test assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<bool>,
    pub split: Option<Vec<Part>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(columns: Vec<String>, ids: Vec<String>, rows: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != ids.len() {
            return Err(Error::Dataset(format!(
                "{} rows, {} labels, {} ids",
                rows.len(),
                labels.len(),
                ids.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Dataset(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Dataset(format!("row {i} has a non-finite value")));
            }
        }
        Ok(Dataset {
            columns,
            ids,
            rows,
            labels,
            split: None,
        })
    }

    /// Reads `user_id,<features...>,label`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[0] != "user_id" || header[header.len() - 1] != "label" {
            return Err(Error::Dataset("expected header user_id,<features...>,label".into()));
        }
        let columns = header[1..header.len() - 1].to_vec();
        let (mut ids, mut rows, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            let row = (1..rec.len() - 1)
                .map(|j| {
                    rec[j]
                        .parse::<f64>()
                        .map(T::from_f64_lossy)
                        .map_err(|_| Error::Dataset(format!("line {}: bad value {:?}", line + 2, &rec[j])))
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
            labels.push(match &rec[rec.len() - 1] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Dataset(format!("line {}: bad label {other:?}", line + 2))),
            });
        }
        Dataset::new(columns, ids, rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset<T> {
        Dataset {
            columns: self.columns.clone(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            split: self.split.as_ref().map(|s| idx.iter().map(|&i| s[i]).collect()),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset<T> {
        Dataset {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            ids: self.ids.clone(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&j| r[j]).collect()).collect(),
            labels: self.labels.clone(),
            split: self.split.clone(),
        }
    }

    fn part_indices(&self, part: Part) -> Vec<usize> {
        match &self.split {
            Some(s) => (0..self.len()).filter(|&i| s[i] == part).collect(),
            None => Vec::new(),
        }
    }

    pub fn train(&self) -> Dataset<T> {
        self.subset(&self.part_indices(Part::Train))
    }

    pub fn test(&self) -> Dataset<T> {
        self.subset(&self.part_indices(Part::Test))
    }

    /// Stratified train/test assignment, deterministic in `seed`.
    ///
    /// The overall train size is `round(n · train_fraction)`; positives get
    /// `round(n_pos · train_fraction)` of those slots.
    pub fn split(mut self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0 < train_fraction && train_fraction < 1.0) {
            return Err(Error::Dataset(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        let pos: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i]).collect();
        let neg: Vec<usize> = (0..self.len()).filter(|&i| !self.labels[i]).collect();
        if self.len() < 2 || pos.is_empty() || neg.is_empty() {
            return Err(Error::Dataset(
                "splitting needs at least two rows and both classes".into(),
            ));
        }
        let n_train = ((self.len() as f64 * train_fraction).round() as usize).clamp(1, self.len() - 1);
        let pos_train = ((pos.len() as f64 * train_fraction).round() as usize)
            .min(pos.len())
            .min(n_train)
            .max(n_train.saturating_sub(neg.len()));
        let neg_train = n_train - pos_train;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut parts = vec![Part::Test; self.len()];
        for (mut class, k) in [(pos, pos_train), (neg, neg_train)] {
            class.shuffle(&mut rng);
            for &i in &class[..k] {
                parts[i] = Part::Train;
            }
        }
        self.split = Some(parts);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_pos: usize, n_neg: usize) -> Dataset<f64> {
        let n = n_pos + n_neg;
        Dataset::new(
            vec!["x".into()],
            (0..n).map(|i| format!("u{i}")).collect(),
            (0..n).map(|i| vec![i as f64]).collect(),
            (0..n).map(|i| i < n_pos).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ten_row_split() {
        let d = toy(5, 5).split(0.7, 1).unwrap();
        let train = d.train();
        assert_eq!(train.len(), 7);
        assert_eq!(d.test().len(), 3);
        assert!((3..=4).contains(&train.positives()));
    }

    #[test]
    fn split_is_seeded() {
        let a = toy(30, 70).split(0.7, 9).unwrap();
        let b = toy(30, 70).split(0.7, 9).unwrap();
        let c = toy(30, 70).split(0.7, 10).unwrap();
        assert_eq!(a.split, b.split);
        assert_ne!(a.split, c.split);
    }

    #[test]
    fn thousand_rows_ratio() {
        let d = toy(300, 700).split(0.7, 3).unwrap();
        let test = d.test();
        assert_eq!(test.len(), 300);
        let ratio = test.positives() as f64 / test.len() as f64;
        assert!((ratio - 0.3).abs() <= 0.02);
    }

    #[test]
    fn single_class_rejected() {
        assert!(toy(0, 10).split(0.7, 1).is_err());
        assert!(toy(10, 0).split(0.7, 1).is_err());
    }

    #[test]
    fn validation() {
        assert!(Dataset::new(vec!["x".into()], vec!["a".into()], vec![vec![f64::NAN]], vec![true]).is_err());
        assert!(Dataset::new(vec!["x".into()], vec!["a".into()], vec![vec![1.0, 2.0]], vec![true]).is_err());
        assert!(Dataset::<f64>::new(vec!["x".into()], vec![], vec![], vec![true]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "user_id,a,b,label\nu1,1,0.5,1\nu2,0,2.250000,0\n";
        let d = Dataset::<f64>::from_csv(text).unwrap();
        assert_eq!(d.columns, ["a", "b"]);
        assert_eq!(d.rows[1], [0.0, 2.25]);
        assert_eq!(d.labels, [true, false]);
        assert!(Dataset::<f64>::from_csv("user_id,a,label\nu1,1,2\n").is_err());
    }
}
