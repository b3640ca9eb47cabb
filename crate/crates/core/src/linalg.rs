//! Weighted least squares through a thin QR factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Relative tolerance on `|R_ii|` below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Standard errors scaled by the residual variance estimate.
    pub std_errors: Vec<f64>,
    /// Unweighted residuals `y - X b`.
    pub residuals: Vec<f64>,
    /// Weighted residual variance `Σ w r² / df`.
    pub sigma2: f64,
    pub df: usize,
    /// `(X' W X)^{-1}`, unscaled.
    pub xtwx_inv: Vec<Vec<f64>>,
}

impl LeastSquares {
    pub fn predict(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    wls(x, y, &vec![1.0; y.len()])
}

pub fn wls(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Result<LeastSquares> {
    let n = y.len();
    let p = x.first().map_or(0, Vec::len);
    if x.len() != n || w.len() != n {
        return Err(invalid("design, response and weights must have equal lengths"));
    }
    if p == 0 || n < p {
        return Err(invalid(format!("need at least {p} rows for {p} columns, got {n}")));
    }
    if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(invalid("weights must be positive and finite"));
    }
    let a = DMatrix::from_fn(n, p, |i, j| x[i][j] * w[i].sqrt());
    let b = DVector::from_fn(n, |i, _| y[i] * w[i].sqrt());
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..p).filter(|&i| r[(i, i)].abs() > RANK_TOL * scale.max(f64::MIN_POSITIVE)).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, cols: p });
    }
    let qtb = qr.q().transpose() * &b;
    let coef = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, cols: p })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient { rank, cols: p })?;
    let cov = &r_inv * r_inv.transpose();

    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..p).map(|j| x[i][j] * coef[j]).sum::<f64>())
        .collect();
    let df = n - p;
    let rss: f64 = residuals.iter().zip(w).map(|(r, w)| w * r * r).sum();
    let sigma2 = if df > 0 { rss / df as f64 } else { 0.0 };
    Ok(LeastSquares {
        coefficients: coef.iter().copied().collect(),
        std_errors: (0..p).map(|j| (sigma2 * cov[(j, j)]).sqrt()).collect(),
        residuals,
        sigma2,
        df,
        xtwx_inv: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 + 3.0 * i as f64).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((f.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(f.sigma2 < 1e-24);
    }

    #[test]
    fn textbook_standard_errors() {
        // y = [1,3,2,5], x = [1,2,3,4]: slope 1.1, intercept 0, rss 2.7
        let x: Vec<Vec<f64>> = (1..=4).map(|i| vec![1.0, i as f64]).collect();
        let f = ols(&x, &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((f.coefficients[1] - 1.1).abs() < 1e-12);
        assert!(f.coefficients[0].abs() < 1e-12);
        assert!((f.sigma2 - 1.35).abs() < 1e-12);
        // se(slope) = sqrt(1.35 / 5)
        assert!((f.std_errors[1] - (1.35f64 / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weights_match_row_duplication() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let y = [0.0, 2.0, 3.0];
        let a = wls(&x, &y, &[1.0, 2.0, 1.0]).unwrap();
        let xd = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let b = ols(&xd, &[0.0, 2.0, 2.0, 3.0]).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_columns_rejected() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(ols(&x, &[0.0, 1.0, 2.0, 4.0]), Err(Error::RankDeficient { .. })));
    }
}
