//! Shared statistical machinery: special functions, binomial intervals,
//! goodness-of-fit tests, and linear fits.
//!
//! Everything here is standard method material; values are unit-tested
//! against published table entries.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Lanczos approximation, |error| < 2e-10 over the positive reals.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(x >= 0.0 && a > 0.0, "gamma_p domain: a={a}, x={x}");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_contfrac(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(x >= 0.0 && a > 0.0, "gamma_q domain: a={a}, x={x}");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_contfrac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_contfrac(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 0.0 {
        gamma_p(0.5, x * x)
    } else {
        -gamma_p(0.5, x * x)
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of a chi-squared variable with `dof` degrees of freedom.
pub fn chi2_survival(x: f64, dof: u64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, x / 2.0)
}

// ---------------------------------------------------------------------------
// Intervals and critical values
// ---------------------------------------------------------------------------

/// Two-sided 99% normal quantile (z at 0.995).
pub const Z_99: f64 = 2.5758293035489004;
/// Two-sided 95% normal quantile (z at 0.975).
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided 95% Student-t critical value (0.975 quantile) for `dof` degrees
/// of freedom. Table for small dof, normal limit beyond.
pub fn t_critical_95(dof: u64) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match dof {
        0 => f64::INFINITY,
        d if d <= 30 => TABLE[(d - 1) as usize],
        d if d <= 60 => 2.000,
        _ => Z_95,
    }
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    // Stephens' finite-sample adjustment
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`.
pub fn ks_test_cdf<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult, StatsError> {
    if samples.len() < 8 {
        return Err(StatsError::TooFewSamples { need: 8, got: samples.len() });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n) })
}

/// Two-sample KS test.
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, StatsError> {
    if a.len() < 8 || b.len() < 8 {
        return Err(StatsError::TooFewSamples { need: 8, got: a.len().min(b.len()) });
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    ys.sort_by(|p, q| p.partial_cmp(q).expect("NaN in KS sample"));
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n_eff) })
}

// ---------------------------------------------------------------------------
// Chi-squared independence
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson chi-squared test of independence on an r x c contingency table.
pub fn chi2_independence(table: &[Vec<u64>]) -> Result<Chi2Result, StatsError> {
    let r = table.len();
    let c = table.first().map_or(0, |row| row.len());
    if r < 2 || c < 2 {
        return Err(StatsError::Degenerate("table needs at least 2x2 cells".into()));
    }
    let row_sums: Vec<f64> = table.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> =
        (0..c).map(|j| table.iter().map(|row| row[j]).sum::<u64>() as f64).collect();
    let total: f64 = row_sums.iter().sum();
    if total == 0.0 {
        return Err(StatsError::Degenerate("empty table".into()));
    }
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = row_sums[i] * col_sums[j] / total;
            if e > 0.0 {
                let o = table[i][j] as f64;
                stat += (o - e) * (o - e) / e;
            }
        }
    }
    let dof = ((r - 1) * (c - 1)) as u64;
    Ok(Chi2Result { statistic: stat, dof, p_value: chi2_survival(stat, dof) })
}

/// Edges that split `samples` into `k` equal-count bins (interior edges only).
pub fn quantile_edges(samples: &[f64], k: usize) -> Vec<f64> {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    (1..k).map(|i| xs[i * xs.len() / k]).collect()
}

// ---------------------------------------------------------------------------
// Linear fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r2: f64,
}

/// Ordinary least squares with residual-based slope standard error.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<LineFit, StatsError> {
    weighted_fit(x, y, None)
}

/// Weighted least squares; `w` are inverse-variance weights and the slope
/// standard error comes from the stated variances.
pub fn wls_fit(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit, StatsError> {
    weighted_fit(x, y, Some(w))
}

fn weighted_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<LineFit, StatsError> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(StatsError::TooFewSamples { need: 3, got: n });
    }
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let sw: f64 = (0..n).map(weight).sum();
    let xbar: f64 = (0..n).map(|i| weight(i) * x[i]).sum::<f64>() / sw;
    let ybar: f64 = (0..n).map(|i| weight(i) * y[i]).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| weight(i) * (x[i] - xbar) * (x[i] - xbar)).sum();
    if sxx <= 0.0 {
        return Err(StatsError::Degenerate("no spread in x".into()));
    }
    let sxy: f64 = (0..n).map(|i| weight(i) * (x[i] - xbar) * (y[i] - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - intercept - slope * x[i];
            weight(i) * r * r
        })
        .sum();
    let tss: f64 = (0..n).map(|i| weight(i) * (y[i] - ybar) * (y[i] - ybar)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let slope_se = match w {
        // stated variances: Var(slope) = 1 / sum w (x - xbar)^2
        Some(_) => (1.0 / sxx).sqrt(),
        None => ((rss / (n as f64 - 2.0)) / sxx).sqrt(),
    };
    Ok(LineFit { slope, intercept, slope_se, r2 })
}

/// Lag-k sample autocorrelation.
pub fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    assert!(lag < n);
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / denom
}
