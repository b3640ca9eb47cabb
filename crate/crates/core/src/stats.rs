//! Significance tests, confidence intervals and agreement statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

use crate::error::{invalid, Error, Result};

/// Two-sided p-value of a Student t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Upper `1 - alpha/2` quantile of Student t.
pub fn t_critical(df: f64, alpha: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(1.0 - alpha / 2.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

/// Paired t-test on `a - b`. Zero spread gives p = 1 for a zero mean
/// difference and p = 0 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, s) = (mean(&d), sd(&d));
    let df = n - 1;
    if s == 0.0 {
        return Ok(if m == 0.0 {
            TTest { t: 0.0, df, p_two_sided: 1.0 }
        } else {
            TTest {
                t: m.signum() * f64::INFINITY,
                df,
                p_two_sided: 0.0,
            }
        });
    }
    let t = m / (s / (n as f64).sqrt());
    Ok(TTest {
        t,
        df,
        p_two_sided: t_two_sided_p(t, df as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Benjamini–Hochberg step-up at level `q`, in input order.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<BhResult> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));

    let cutoff = (0..m)
        .rev()
        .find(|&k| p_values[order[k]] <= (k + 1) as f64 * q / m as f64);
    let mut rejected = vec![false; m];
    if let Some(k) = cutoff {
        for &i in &order[..=k] {
            rejected[i] = true;
        }
    }

    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for k in (0..m).rev() {
        let i = order[k];
        running = running.min(m as f64 * p_values[i] / (k + 1) as f64);
        // m·p/rank can round an ulp below p when rank = m
        adjusted[i] = running.min(1.0).max(p_values[i]);
    }
    Ok(BhResult { rejected, adjusted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub halfwidth: f64,
}

/// Mean with a t-based 95% interval halfwidth.
pub fn mean_ci95(values: &[f64]) -> Result<MeanCi> {
    let n = values.len();
    if n < 2 {
        return Err(invalid("confidence interval needs at least 2 values"));
    }
    Ok(MeanCi {
        mean: mean(values),
        halfwidth: t_critical((n - 1) as f64, 0.05) * sd(values) / (n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_two_sided: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(invalid("correlation needs at least 3 points"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant input".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(Correlation { r, p_two_sided: p })
}

/// Average ranks, 1-based; ties share their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation> {
    pearson(&ranks(x), &ranks(y))
}

/// Cohen's kappa. When chance agreement is 1 (both raters constant on the
/// same label) kappa is 1.
pub fn cohen_kappa<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(invalid("labelings must be nonempty and of equal length"));
    }
    let n = a.len() as u64;
    let mut labels: Vec<&T> = Vec::new();
    for l in a.iter().chain(b) {
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    // counts kept integral so the single division is correctly rounded
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u64;
    let chance: u64 = labels
        .iter()
        .map(|l| {
            let ca = a.iter().filter(|x| x == l).count() as u64;
            let cb = b.iter().filter(|x| x == l).count() as u64;
            ca * cb
        })
        .sum();
    if chance == n * n {
        return Ok(1.0);
    }
    Ok(((n * agree) as f64 - chance as f64) / (n * n - chance) as f64)
}
