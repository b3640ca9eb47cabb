//! Scale-only reference predictors: a Kaplan-style power law in parameters
//! and tokens, a log-linear regression, and the training median.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::metrics;
use crate::registry::{Dataset, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub nc: f64,
    pub dc: f64,
    pub alpha_n: f64,
    pub alpha_d: f64,
}

impl PowerLawParams {
    pub fn is_valid(&self) -> bool {
        [self.nc, self.dc, self.alpha_n, self.alpha_d]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }

    fn to_log(self) -> [f64; 4] {
        [self.nc.ln(), self.dc.ln(), self.alpha_n.ln(), self.alpha_d.ln()]
    }

    fn from_log(t: &[f64; 4]) -> Self {
        Self {
            nc: t[0].exp(),
            dc: t[1].exp(),
            alpha_n: t[2].exp(),
            alpha_d: t[3].exp(),
        }
    }
}

/// One model's scale and its observed target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    /// Parameter count.
    pub n: f64,
    /// Training tokens.
    pub d: f64,
    pub target: f64,
}

/// Scale points for a dataset: raw parameter and token counts with the score.
pub fn scale_points(dataset: &Dataset) -> Vec<ScalePoint> {
    dataset
        .rows
        .iter()
        .map(|r| ScalePoint {
            n: r.record.arch.total_params,
            d: r.record.total_tokens(),
            target: r.value,
        })
        .collect()
}

/// `((Nc/N)^(αN/αD) + Dc/D)^αD`
pub fn eval_power_law(p: &PowerLawParams, n: f64, d: f64) -> Result<f64> {
    if !(n > 0.0 && d > 0.0) {
        return Err(invalid(format!("N and D must be positive, got N={n}, D={d}")));
    }
    if !p.is_valid() {
        return Err(invalid("power-law parameters must be positive and finite"));
    }
    Ok(((p.nc / n).powf(p.alpha_n / p.alpha_d) + p.dc / d).powf(p.alpha_d))
}

/// Score → loss-like target that decreases with capability.
pub fn to_loss(score: f64, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::HigherBetter => 1.0 - score,
        Polarity::LowerBetter => score / 2.0,
    }
}

pub fn from_loss(loss: f64, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::HigherBetter => 1.0 - loss,
        Polarity::LowerBetter => 2.0 * loss,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub params: PowerLawParams,
    pub polarity: Polarity,
    /// Computed on the score scale.
    pub r_squared: f64,
    /// Sum of squared errors on the loss scale.
    pub sse: f64,
    /// Index into the start grid of the winning refinement.
    pub start_index: usize,
}

impl PowerLawFit {
    pub fn predict_score(&self, n: f64, d: f64) -> Result<f64> {
        Ok(from_loss(eval_power_law(&self.params, n, d)?, self.polarity))
    }
}

pub const MIN_POWER_LAW_POINTS: usize = 8;
/// Number of best grid starts that receive full refinement.
pub const REFINED_STARTS: usize = 16;
const SCALE_GRID: [f64; 10] = [1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15];
const ALPHA_GRID: [f64; 4] = [0.05, 0.1, 0.3, 0.5];
const MAX_ITER: usize = 500;

/// All multi-start points, in a fixed order: Nc outermost, then Dc, αN, αD.
pub fn start_grid() -> Vec<PowerLawParams> {
    let mut out = Vec::with_capacity(1600);
    for &nc in &SCALE_GRID {
        for &dc in &SCALE_GRID {
            for &alpha_n in &ALPHA_GRID {
                for &alpha_d in &ALPHA_GRID {
                    out.push(PowerLawParams { nc, dc, alpha_n, alpha_d });
                }
            }
        }
    }
    out
}

struct Problem {
    ln_n: Vec<f64>,
    inv_d: Vec<f64>,
    y: Vec<f64>,
}

impl Problem {
    /// Residuals and Jacobian rows in log-parameter space.
    fn eval(&self, t: &[f64; 4], jac: Option<&mut Vec<[f64; 4]>>) -> (Vec<f64>, f64) {
        let (ln_nc, dc, a, b) = (t[0], t[1].exp(), t[2].exp(), t[3].exp());
        let ratio = a / b;
        let mut res = Vec::with_capacity(self.y.len());
        let mut rows = Vec::new();
        for i in 0..self.y.len() {
            let u = ln_nc - self.ln_n[i];
            let t1 = (ratio * u).exp();
            let t2 = dc * self.inv_d[i];
            let s = t1 + t2;
            let ln_s = s.ln();
            let l = (b * ln_s).exp();
            res.push(l - self.y[i]);
            if jac.is_some() {
                rows.push([
                    l * a * t1 / s,
                    l * b * t2 / s,
                    l * ratio * b * t1 * u / s,
                    l * b * (ln_s - ratio * t1 * u / s),
                ]);
            }
        }
        if let Some(j) = jac {
            *j = rows;
        }
        let sse = res.iter().map(|r| r * r).sum::<f64>();
        (res, if sse.is_finite() { sse } else { f64::INFINITY })
    }

    fn sse(&self, t: &[f64; 4]) -> f64 {
        self.eval(t, None).1
    }

    /// Levenberg–Marquardt with diagonal scaling.
    fn refine(&self, start: [f64; 4]) -> ([f64; 4], f64) {
        let mut t = start;
        let mut jac = Vec::new();
        let (mut res, mut sse) = self.eval(&t, Some(&mut jac));
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITER {
            if !sse.is_finite() || sse == 0.0 {
                break;
            }
            let mut jtj = Matrix4::<f64>::zeros();
            let mut jtr = Vector4::<f64>::zeros();
            for (row, r) in jac.iter().zip(&res) {
                for p in 0..4 {
                    jtr[p] += row[p] * r;
                    for q in 0..4 {
                        jtj[(p, q)] += row[p] * row[q];
                    }
                }
            }
            let mut improved = false;
            while lambda < 1e12 {
                let mut m = jtj;
                for p in 0..4 {
                    m[(p, p)] += lambda * jtj[(p, p)].max(1e-12);
                }
                let Some(step) = m.lu().solve(&(-jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand = [t[0] + step[0], t[1] + step[1], t[2] + step[2], t[3] + step[3]];
                let mut cand_jac = Vec::new();
                let (cand_res, cand_sse) = self.eval(&cand, Some(&mut cand_jac));
                if cand_sse < sse {
                    let rel = (sse - cand_sse) / sse;
                    t = cand;
                    res = cand_res;
                    jac = cand_jac;
                    sse = cand_sse;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (t, sse)
    }
}

/// Fit the power law directly to loss-like targets.
pub fn fit_power_law_targets(points: &[ScalePoint]) -> Result<(PowerLawParams, f64, usize)> {
    if points.len() < MIN_POWER_LAW_POINTS {
        return Err(invalid(format!(
            "power-law fit needs at least {MIN_POWER_LAW_POINTS} points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.n > 0.0 && p.d > 0.0 && p.target.is_finite())) {
        return Err(invalid("every point needs positive N, D and a finite target"));
    }
    let first = points[0].target;
    if points.iter().all(|p| p.target == first) {
        return Err(Error::Degenerate("all targets are identical".into()));
    }
    let prob = Problem {
        ln_n: points.iter().map(|p| p.n.ln()).collect(),
        inv_d: points.iter().map(|p| 1.0 / p.d).collect(),
        y: points.iter().map(|p| p.target).collect(),
    };
    let grid = start_grid();
    let mut screened: Vec<(f64, usize)> = grid
        .iter()
        .enumerate()
        .map(|(i, p)| (prob.sse(&p.to_log()), i))
        .collect();
    screened.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let refined: Vec<(f64, usize, [f64; 4])> = screened[..REFINED_STARTS.min(screened.len())]
        .par_iter()
        .map(|&(_, i)| {
            let (t, sse) = prob.refine(grid[i].to_log());
            (sse, i, t)
        })
        .collect();
    let best = refined
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one start");
    if !best.0.is_finite() {
        return Err(Error::NotConverged("no start reached a finite objective".into()));
    }
    Ok((PowerLawParams::from_log(&best.2), best.0, best.1))
}

/// Fit to scores: targets become `1 - s` or `s / 2`, and R² is reported on
/// the score scale.
pub fn fit_power_law(points: &[ScalePoint], polarity: Polarity) -> Result<PowerLawFit> {
    let loss: Vec<ScalePoint> = points
        .iter()
        .map(|p| ScalePoint {
            target: to_loss(p.target, polarity),
            ..*p
        })
        .collect();
    let (params, sse, start_index) = fit_power_law_targets(&loss)?;
    let preds: Vec<f64> = points
        .iter()
        .map(|p| eval_power_law(&params, p.n, p.d).map(|l| from_loss(l, polarity)))
        .collect::<Result<_>>()?;
    let actual: Vec<f64> = points.iter().map(|p| p.target).collect();
    Ok(PowerLawFit {
        params,
        polarity,
        r_squared: metrics::r_squared(&preds, &actual)?,
        sse,
        start_index,
    })
}

/// Loss-scale values over a log-spaced (N, D) grid, for heatmaps.
pub fn power_law_grid(
    params: &PowerLawParams,
    n_range: (f64, f64),
    d_range: (f64, f64),
    steps: usize,
) -> Result<Vec<(f64, f64, f64)>> {
    if steps < 2 || !(n_range.0 > 0.0 && d_range.0 > 0.0) {
        return Err(invalid("grid needs at least 2 steps and positive ranges"));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let (a, b) = (lo.log10(), hi.log10());
        (0..steps)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (steps - 1) as f64))
            .collect()
    };
    let mut out = Vec::with_capacity(steps * steps);
    for &n in &axis(n_range) {
        for &d in &axis(d_range) {
            out.push((n, d, eval_power_law(params, n, d)?));
        }
    }
    Ok(out)
}

/// `ŝ = a + b·log10 N + c·log10 D`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinear {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LogLinear {
    pub fn predict(&self, n: f64, d: f64) -> f64 {
        self.a + self.b * n.log10() + self.c * d.log10()
    }
}

pub fn fit_log_linear(points: &[ScalePoint]) -> Result<LogLinear> {
    if points.len() < 3 {
        return Err(invalid(format!("log-linear fit needs at least 3 points, got {}", points.len())));
    }
    let x: Vec<Vec<f64>> = points.iter().map(|p| vec![1.0, p.n.log10(), p.d.log10()]).collect();
    let y: Vec<f64> = points.iter().map(|p| p.target).collect();
    let f = linalg::ols(&x, &y)?;
    Ok(LogLinear {
        a: f.coefficients[0],
        b: f.coefficients[1],
        c: f.coefficients[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPredictor {
    pub value: f64,
}

impl MedianPredictor {
    pub fn predict(&self) -> f64 {
        self.value
    }
}

pub fn median_predictor(train_targets: &[f64]) -> Result<MedianPredictor> {
    Ok(MedianPredictor {
        value: median(train_targets)?,
    })
}

/// Midpoint of the two middle values for even counts.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("median of empty input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}
