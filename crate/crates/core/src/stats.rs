//! Means, extremes and Student-t confidence intervals over repeated runs.

use rust_decimal::prelude::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::{Money, PricingError};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Absolute tolerance on `t` when inverting the Student-t CDF.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("confidence {0} outside (0, 1)")]
    InvalidConfidence(f64),
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// Location, extremes and (for n ≥ 2) a two-sided t interval of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_high: Option<f64>,
    pub n: usize,
    pub confidence: f64,
}

impl SummaryStat {
    pub fn width(&self) -> Option<f64> {
        Some(self.ci_high? - self.ci_low?)
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        Some((self.ci_low?, self.ci_high?))
    }
}

/// `mean ± t_{(1+confidence)/2, n−1} · s/√n`, with `s` the n−1 sample deviation.
pub fn t_interval(values: &[f64], confidence: f64) -> Result<SummaryStat, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    describe(values, confidence)
}

/// Point summary of a non-empty sample; the t interval is attached when n ≥ 2.
pub fn describe(values: &[f64], confidence: f64) -> Result<SummaryStat, StatsError> {
    if values.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::InvalidConfidence(confidence));
    }
    let n = values.len();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Summation rounding can push the mean an ulp outside the observed range.
    let mean = (values.iter().sum::<f64>() / n as f64).clamp(min, max);
    let mut stat = SummaryStat {
        mean,
        min,
        max,
        ci_low: None,
        ci_high: None,
        n,
        confidence,
    };
    if n >= 2 {
        let nf = n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let half = t_quantile((1.0 + confidence) / 2.0, nf - 1.0) * var.sqrt() / nf.sqrt();
        stat.ci_low = Some(mean - half);
        stat.ci_high = Some(mean + half);
    }
    Ok(stat)
}

/// Cost side of a strategy summary: exact money extremes plus the f64 interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSummary {
    pub mean: Money,
    pub min: Money,
    pub max: Money,
    pub stat: SummaryStat,
}

/// Summaries of per-run `(accuracy, cost)` pairs.
pub fn summarize_strategy(
    per_run: &[(f64, Money)],
) -> Result<(SummaryStat, CostSummary), StatsError> {
    let first = per_run
        .first()
        .ok_or(StatsError::InsufficientData { needed: 1, got: 0 })?;
    let currency = first.1.currency().clone();
    let accuracies: Vec<f64> = per_run.iter().map(|r| r.0).collect();
    let accuracy = describe(&accuracies, DEFAULT_CONFIDENCE)?;

    let total = Money::sum(&currency, per_run.iter().map(|r| &r.1))?;
    let mean = total.div_count(per_run.len() as u64)?;
    let mut min = first.1.clone();
    let mut max = first.1.clone();
    for (_, c) in per_run {
        if c.try_cmp(&min)?.is_lt() {
            min = c.clone();
        }
        if c.try_cmp(&max)?.is_gt() {
            max = c.clone();
        }
    }
    let costs: Vec<f64> = per_run
        .iter()
        .map(|r| r.1.amount().to_f64().unwrap_or(f64::NAN))
        .collect();
    let mut stat = describe(&costs, DEFAULT_CONFIDENCE)?;
    stat.mean = mean.to_f64();
    Ok((
        accuracy,
        CostSummary {
            mean,
            min,
            max,
            stat,
        },
    ))
}

/// Quantile of Student's t distribution with `df` degrees of freedom.
///
/// Bisection on `t` over the CDF built from the regularized incomplete beta
/// function; iterates until the bracket is narrower than [`QUANTILE_TOLERANCE`].
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "quantile probability {p} outside (0, 1)"
    );
    assert!(df > 0.0, "degrees of freedom must be positive");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > QUANTILE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// CDF of Student's t distribution.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta function I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges quickly only on this side of the mean.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
