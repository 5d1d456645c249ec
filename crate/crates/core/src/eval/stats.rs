//! Significance tests and correlation coefficients for comparing runs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Minimum number of random reassignments accepted by [`shuffling_test`].
pub const MIN_SHUFFLES: usize = 100;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn check_paired(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    if a.len() < min {
        return Err(Error::invalid(format!("need at least {min} paired observations, got {}", a.len())));
    }
    Ok(())
}

/// Two-tailed p-value of the paired t statistic. All-zero differences give `p = 1`;
/// a nonzero constant difference gives `p = 0`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<f64> {
    check_paired(a, b, 2)?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let m = mean(&diffs);
    let var = diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if m == 0.0 { 1.0 } else { 0.0 });
    }
    let t = m / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::numerical("t-test", e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Bonferroni-corrected significance level `alpha / m`.
pub fn bonferroni(alpha: f64, comparisons: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if comparisons == 0 {
        return Err(Error::invalid("at least one comparison is required"));
    }
    Ok(alpha / comparisons as f64)
}

/// Approximate randomization test on paired per-item outcomes: each shuffle swaps the two
/// outcomes of every item with probability 1/2. Returns `(count + 1) / (iterations + 1)`
/// where `count` is the number of shuffles whose absolute mean difference reaches the
/// observed one.
pub fn shuffling_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64> {
    check_paired(a, b, 1)?;
    if iterations < MIN_SHUFFLES {
        return Err(Error::invalid(format!("shuffling test needs at least {MIN_SHUFFLES} iterations")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let observed = diffs.iter().sum::<f64>().abs() / n;
    // guards against rounding making an identical reshuffle look smaller
    let slack = 1e-12 * (1.0 + observed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..iterations {
        let total: f64 = diffs
            .iter()
            .map(|&d| if rng.random_bool(0.5) { -d } else { d })
            .sum();
        if total.abs() / n >= observed - slack {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (iterations + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

impl FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(Error::invalid(format!("unknown correlation {other:?}"))),
        }
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation is undefined for a constant sample"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn rank_correlation(xs: &[f64], ys: &[f64], kind: CorrelationKind) -> Result<f64> {
    check_paired(xs, ys, 3)?;
    match kind {
        CorrelationKind::Pearson => pearson(xs, ys),
        CorrelationKind::Spearman => pearson(&average_ranks(xs), &average_ranks(ys)),
    }
}

/// Which test produced a [`SignificanceReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Paired two-tailed t-test.
    Ttest,
    /// Approximate randomization (shuffling) test.
    Shuffle,
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ttest" | "t-test" => Ok(Self::Ttest),
            "shuffle" | "shuffling" => Ok(Self::Shuffle),
            other => Err(Error::invalid(format!("unknown significance test {other:?}"))),
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Ttest => "ttest",
            TestKind::Shuffle => "shuffle",
        })
    }
}

/// p-values of one or more comparisons judged against a Bonferroni-corrected level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub test: TestKind,
    pub p_values: Vec<f64>,
    pub alpha: f64,
    pub comparisons: usize,
    pub corrected_alpha: f64,
    pub significant: Vec<bool>,
}

impl SignificanceReport {
    pub fn new(test: TestKind, p_values: Vec<f64>, alpha: f64, comparisons: usize) -> Result<Self> {
        let corrected_alpha = bonferroni(alpha, comparisons)?;
        let significant = p_values.iter().map(|&p| p < corrected_alpha).collect();
        Ok(Self {
            test,
            p_values,
            alpha,
            comparisons,
            corrected_alpha,
            significant,
        })
    }
}
