//! Small statistics helpers: exact binomial intervals, chi-square goodness of fit, moments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

/// Two-sided Clopper–Pearson interval for `successes` out of `trials` at level `confidence`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Interval {
    assert!(trials > 0 && successes <= trials, "need 0 <= successes <= trials, trials > 0");
    let alpha = 1.0 - confidence;
    let (k, n) = (successes as f64, trials as f64);
    let lower = if successes == 0 {
        0.0
    } else if successes == trials {
        (alpha / 2.0).powf(1.0 / n)
    } else {
        Beta::new(k, n - k + 1.0).expect("positive shapes").inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else if successes == 0 {
        1.0 - (alpha / 2.0).powf(1.0 / n)
    } else {
        Beta::new(k + 1.0, n - k).expect("positive shapes").inverse_cdf(1.0 - alpha / 2.0)
    };
    Interval { lower, upper }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit of `observed` counts against `expected` probabilities.
///
/// Cells with zero expected probability must be empty and are dropped; cells with expected
/// count below 5 are pooled into one cell so the asymptotic distribution applies.
pub fn chi_square_test(observed: &[u64], expected: &[f64]) -> Option<ChiSquareTest> {
    assert_eq!(observed.len(), expected.len());
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected) {
        if p <= 0.0 {
            if o > 0 {
                return Some(ChiSquareTest {
                    statistic: f64::INFINITY,
                    dof: 0,
                    p_value: 0.0,
                });
            }
            continue;
        }
        let e = p * nf;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return None;
    }
    let statistic = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic);
    Some(ChiSquareTest {
        statistic,
        dof,
        p_value,
    })
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample standard deviation.
pub fn sample_std(xs: &[f64]) -> f64 {
    let (_, se) = mean_and_stderr(xs);
    se * (xs.len() as f64).sqrt()
}
