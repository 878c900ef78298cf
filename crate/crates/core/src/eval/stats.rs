use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Significance level used for the verdicts in reports.
pub const ALPHA: f64 = 0.05;

/// Relative spread below which paired differences count as constant.
pub const ZERO_VARIANCE_TOLERANCE: f64 = 1e-12;

/// Discordant counts smaller than this use the exact binomial test.
pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// Number of non-zero differences up to which the Wilcoxon p-value is exact.
pub const WILCOXON_EXACT_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquare,
    /// No discordant pairs; the test is undefined.
    NoDisagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A correct, B wrong.
    pub b: u64,
    /// A wrong, B correct.
    pub c: u64,
    /// Continuity-corrected chi-square statistic.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub method: McNemarMethod,
}

impl McNemarResult {
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < ALPHA)
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// Two-sided exact binomial p-value for `k` successes out of `n` at 1/2:
/// twice the smaller tail, capped at 1.
pub fn exact_binomial_two_sided(k: u64, n: u64) -> f64 {
    let m = k.min(n - k);
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    let tail: f64 = (0..=m).map(|i| (ln_choose(n, i) + ln_half).exp()).sum();
    (2.0 * tail).min(1.0)
}

/// Chi-square statistic with continuity correction.
pub fn mcnemar_from_counts(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult { b, c, statistic: None, p_value: None, method: McNemarMethod::NoDisagreement };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let stat = diff.max(0.0).powi(2) / n as f64;
    let (p, method) = if n < MCNEMAR_EXACT_BELOW {
        (exact_binomial_two_sided(b, n), McNemarMethod::ExactBinomial)
    } else {
        let chi = ChiSquared::new(1.0).expect("one degree of freedom");
        (chi.sf(stat), McNemarMethod::ChiSquare)
    };
    McNemarResult { b, c, statistic: Some(stat), p_value: Some(p), method }
}

/// Paired comparison of two classifiers' predicted classes.
pub fn mcnemar_test(preds_a: &[usize], preds_b: &[usize], labels: &[usize]) -> Result<McNemarResult> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(Error::invalid(format!(
            "sequence lengths differ: {}, {}, {}",
            preds_a.len(),
            preds_b.len(),
            labels.len()
        )));
    }
    let (mut b, mut c) = (0, 0);
    for ((&a, &bb), &y) in preds_a.iter().zip(preds_b).zip(labels) {
        match (a == y, bb == y) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// Outcome of a paired location test; `None` marks an undefined result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

impl PairedTest {
    fn undefined(n: usize) -> Self {
        Self { n, statistic: None, p_value: None }
    }

    /// Undefined results are never significant.
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < ALPHA)
    }
}

fn differences(xs: &[f64], ys: &[f64]) -> Option<Vec<f64>> {
    (xs.len() == ys.len()).then(|| xs.iter().zip(ys).map(|(x, y)| x - y).collect())
}

/// Two-sided paired t-test on `xs - ys`. Undefined for mismatched or short
/// inputs and for zero-variance differences.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> PairedTest {
    let Some(d) = differences(xs, ys) else {
        return PairedTest::undefined(0);
    };
    let n = d.len();
    if n < 2 {
        return PairedTest::undefined(n);
    }
    let (mean, sd) = mean_sd(&d);
    let sd = sd.unwrap_or(0.0);
    // differences that are constant up to rounding have no usable variance
    if !(sd > ZERO_VARIANCE_TOLERANCE * mean.abs().max(1.0)) || !mean.is_finite() {
        return PairedTest::undefined(n);
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    PairedTest { n, statistic: Some(t), p_value: Some((2.0 * dist.sf(t.abs())).min(1.0)) }
}

/// Mid-ranks (1-based) of `values`, ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Wilcoxon signed-rank test on `xs - ys`, zero differences dropped.
///
/// The statistic is `W = min(W+, W-)`. Up to [`WILCOXON_EXACT_MAX`] non-zero
/// differences the two-sided p-value is exact (the sign-flip distribution of
/// the doubled mid-ranks is enumerated by dynamic programming); beyond that
/// a tie-corrected normal approximation with continuity correction is used.
/// Fewer than five non-zero differences give an undefined result.
pub fn wilcoxon_signed_rank(xs: &[f64], ys: &[f64]) -> PairedTest {
    let Some(d) = differences(xs, ys) else {
        return PairedTest::undefined(0);
    };
    let d: Vec<f64> = d.into_iter().filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n < 5 || d.iter().any(|v| !v.is_finite()) {
        return PairedTest::undefined(n);
    }
    let ranks = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    let p = if n <= WILCOXON_EXACT_MAX {
        // doubled mid-ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; max + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let limit = (w * 2.0).round() as usize;
        let tail: f64 = counts[..=limit].iter().sum::<f64>() / 2f64.powi(n as i32);
        (2.0 * tail).min(1.0)
    } else {
        let mean = total / 2.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < sorted.len() {
            let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
            let t = j as f64;
            tie_term += t * t * t - t;
            i += j;
        }
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - tie_term / 48.0;
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };
    PairedTest { n, statistic: Some(w), p_value: Some(p) }
}

/// Mean and sample (n - 1) standard deviation; the deviation is `None`
/// for fewer than two values.
pub fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, sd)
}

/// Fixed four-decimal rendering used in reports; undefined values print as `nan`.
pub fn format_p(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.4}"),
        None => "nan".to_string(),
    }
}
