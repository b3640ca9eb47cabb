//! Scoring functions for model outputs and for predictor quality.

use crate::error::{invalid, Error, Result};

/// Row-normalization tolerance for [`ProbMatrix`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Per-sample class probabilities, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    k: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(invalid("probability matrix needs at least one row and one class"));
        }
        let mut data = Vec::with_capacity(rows.len() * k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(invalid(format!("row {i} has {} classes, expected {k}", r.len())));
            }
            if r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(format!("row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(invalid(format!("row {i} sums to {s}, not 1")));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { k, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(invalid("empty input"));
    }
    Ok(())
}

/// Exact-match accuracy.
pub fn accuracy<T: PartialEq>(predictions: &[T], golds: &[T]) -> Result<f64> {
    check_lengths(predictions.len(), golds.len())?;
    let hits = predictions.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Multiclass Brier score, in `[0, 2]`.
pub fn brier(probs: &ProbMatrix, golds: &[usize]) -> Result<f64> {
    check_lengths(probs.n_rows(), golds.len())?;
    let mut total = 0.0;
    for (i, &g) in golds.iter().enumerate() {
        if g >= probs.n_classes() {
            return Err(invalid(format!("gold index {g} out of range for {} classes", probs.n_classes())));
        }
        total += probs
            .row(i)
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let t = if k == g { 1.0 } else { 0.0 };
                (p - t) * (p - t)
            })
            .sum::<f64>();
    }
    Ok(total / golds.len() as f64)
}

pub fn mae(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), actuals.len())?;
    let s: f64 = predictions.iter().zip(actuals).map(|(p, a)| (p - a).abs()).sum();
    Ok(s / actuals.len() as f64)
}

pub fn r_squared(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), actuals.len())?;
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let ss_tot: f64 = actuals.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("actuals have zero variance".into()));
    }
    let ss_res: f64 = predictions.iter().zip(actuals).map(|(p, a)| (a - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
