//! Confusion matrices and the accuracy summary derived from them.

use crate::data::{LabelMap, Sample};
use crate::error::{Error, Result};

/// Counts indexed `[truth][prediction]`, classes 1..=M stored at 0..M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("confusion matrix must be square".into()));
        }
        Ok(Self {
            n_classes: m,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Count for 0-based (truth, prediction).
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.n_classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|k| self.get(c, k)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|k| self.get(k, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }
}

/// Tallies predictions against the ground truth at the given pixels.
pub fn confusion(pred: &LabelMap, truth: &LabelMap, test: &[Sample]) -> Result<ConfusionMatrix> {
    pred.check_dims(truth.height(), truth.width())?;
    let m = truth.n_classes().max(pred.n_classes());
    let mut cm = ConfusionMatrix::zeros(m);
    for s in test {
        if s.pixel >= truth.labels().len() {
            return Err(Error::DimensionMismatch(format!("test pixel {} outside the image", s.pixel)));
        }
        let (t, p) = (truth.get(s.pixel), pred.get(s.pixel));
        let (r, c) = (s.pixel / truth.width(), s.pixel % truth.width());
        if t == 0 {
            return Err(Error::Data(format!("test pixel at row {r}, col {c} is unlabeled in the ground truth")));
        }
        if p == 0 {
            return Err(Error::Data(format!("test pixel at row {r}, col {c} has no prediction")));
        }
        cm.add(t as usize - 1, p as usize - 1);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub overall_accuracy: f64,
    pub kappa: f64,
    /// Chance agreement `p_e`.
    pub expected_agreement: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    /// Classes never predicted; their precision is reported as 0.
    pub precision_undefined: Vec<bool>,
    /// Classes absent from the truth; their recall is reported as 0.
    pub recall_undefined: Vec<bool>,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    let m = cm.n_classes();
    let n = total as f64;
    let p_o = cm.trace() as f64 / n;
    let p_e = (0..m).map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64).sum::<f64>() / (n * n);
    let kappa = if p_e == 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    let mut precision = Vec::with_capacity(m);
    let mut recall = Vec::with_capacity(m);
    let mut f1 = Vec::with_capacity(m);
    let mut precision_undefined = Vec::with_capacity(m);
    let mut recall_undefined = Vec::with_capacity(m);
    for c in 0..m {
        let tp = cm.get(c, c) as f64;
        let (col, row) = (cm.col_sum(c), cm.row_sum(c));
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        precision_undefined.push(col == 0);
        recall_undefined.push(row == 0);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    Ok(MetricReport {
        overall_accuracy: p_o,
        kappa,
        expected_agreement: p_e,
        avg_precision: mean(&precision),
        avg_recall: mean(&recall),
        avg_f1: mean(&f1),
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    })
}
