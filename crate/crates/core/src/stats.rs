//! Rank correlation and paired-difference testing, built on a self-contained
//! Student-t survival function (Lanczos log-gamma plus a modified Lentz
//! continued fraction for the regularized incomplete beta).

use crate::error::{Error, Result};

// The canonical g = 7 coefficients, kept at their published precision.
#[allow(clippy::excessive_precision)]
const LANCZOS_BASE: f64 = 0.99999999999980993;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFICIENTS: [f64; 8] = [
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

fn ln_gamma(z: f64) -> f64 {
    use std::f64::consts::PI;
    if z < 0.5 {
        // Reflection onto the well-behaved half of the axis.
        PI.ln() - (PI * z).sin().ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut series = LANCZOS_BASE;
        for (i, coefficient) in LANCZOS_COEFFICIENTS.iter().enumerate() {
            series += coefficient / (z + i as f64 + 1.0);
        }
        let t = z + 7.5;
        0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITERATIONS: usize = 300;
    const TOLERANCE: f64 = 1e-12;
    const TINY: f64 = 1e-300;

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
    for m in 1..=MAX_ITERATIONS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even_term = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even_term * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + even_term / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let odd_term = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd_term * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + odd_term / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOLERANCE {
            break;
        }
    }
    h
}

fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // Use the fraction directly where it converges fastest, otherwise
    // through the symmetry I_x(a, b) = 1 - I_{1-x}(b, a).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// P(T > t) for a Student-t variable with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: u64) -> Result<f64> {
    if df == 0 {
        return Err(Error::DegenerateInput(
            "degrees of freedom must be at least 1".to_string(),
        ));
    }
    if t.is_nan() {
        return Err(Error::DegenerateInput(
            "t statistic is not a number".to_string(),
        ));
    }
    if t == f64::INFINITY {
        return Ok(0.0);
    }
    if t == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    if t < 0.0 {
        return Ok(1.0 - student_t_sf(-t, df)?);
    }
    let df = df as f64;
    let x = df / (df + t * t);
    Ok(0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x))
}

/// 1-based ranks with ties replaced by the average of the tied positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let average = (start + end) as f64 / 2.0 + 1.0;
        for &index in &order[start..=end] {
            ranks[index] = average;
        }
        start = end + 1;
    }
    ranks
}

fn check_paired(x: &[f64], y: &[f64], minimum: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < minimum {
        return Err(Error::DegenerateInput(format!(
            "need at least {minimum} paired observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(
            "vectors contain a non-finite value".to_string(),
        ));
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Rank correlation of two paired vectors (at least 3 pairs, neither
/// constant), handling ties through average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y, 3)?;
    let rank_x = average_ranks(x);
    let rank_y = average_ranks(y);
    pearson(&rank_x, &rank_y).ok_or_else(|| {
        Error::DegenerateInput("rank correlation is undefined for a constant vector".to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanPValue {
    pub p_value: f64,
    /// True when |rho| = 1; the t approximation degenerates and the p-value
    /// is reported as exactly zero.
    pub exact_monotone: bool,
}

/// Two-sided p-value for a rank correlation via the t approximation
/// t = rho * sqrt((n-2) / (1 - rho^2)) with n-2 degrees of freedom.
pub fn spearman_pvalue(rho: f64, n: usize) -> Result<SpearmanPValue> {
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(Error::OutOfRange {
            context: "rank correlation".to_string(),
            value: rho,
            min: -1.0,
            max: 1.0,
        });
    }
    if n < 4 {
        return Err(Error::DegenerateInput(format!(
            "the t approximation needs at least 4 pairs, got {n}"
        )));
    }
    if rho.abs() >= 1.0 {
        return Ok(SpearmanPValue {
            p_value: 0.0,
            exact_monotone: true,
        });
    }
    let df = (n - 2) as u64;
    let t = rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt();
    Ok(SpearmanPValue {
        p_value: 2.0 * student_t_sf(t.abs(), df)?,
        exact_monotone: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatMethod {
    Spearman,
    PairedT,
}

impl StatMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatMethod::Spearman => "spearman",
            StatMethod::PairedT => "paired-t",
        }
    }
}

impl std::fmt::Display for StatMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub df: u64,
    pub method: StatMethod,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpearmanOutcome {
    pub result: StatResult,
    pub exact_monotone: bool,
}

/// Rank correlation plus its two-sided p-value in one call.
pub fn spearman_test(x: &[f64], y: &[f64]) -> Result<SpearmanOutcome> {
    let rho = spearman_rho(x, y)?;
    let p = spearman_pvalue(rho, x.len())?;
    Ok(SpearmanOutcome {
        result: StatResult {
            statistic: rho,
            p_value: p.p_value,
            df: (x.len() - 2) as u64,
            method: StatMethod::Spearman,
        },
        exact_monotone: p.exact_monotone,
    })
}

/// Two-sided paired t-test on the differences x - y, using the sample
/// standard deviation (n-1 denominator) and n-1 degrees of freedom.
/// Identical vectors yield t = 0, p = 1; zero variance with a nonzero mean
/// difference is rejected as degenerate.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<StatResult> {
    check_paired(x, y, 2)?;
    let n = x.len() as f64;
    let differences: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = differences.iter().sum::<f64>() / n;
    let df = (x.len() - 1) as u64;
    let variance = differences
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / (n - 1.0);
    let sd = variance.sqrt();
    if sd == 0.0 {
        if mean == 0.0 {
            return Ok(StatResult {
                statistic: 0.0,
                p_value: 1.0,
                df,
                method: StatMethod::PairedT,
            });
        }
        return Err(Error::DegenerateInput(
            "differences have zero variance but a nonzero mean".to_string(),
        ));
    }
    let t = mean / (sd / n.sqrt());
    Ok(StatResult {
        statistic: t,
        p_value: 2.0 * student_t_sf(t.abs(), df)?,
        df,
        method: StatMethod::PairedT,
    })
}

fn for_each_permutation(values: &mut [f64], n: usize, visit: &mut impl FnMut(&[f64])) {
    if n <= 1 {
        visit(values);
        return;
    }
    for i in 0..n {
        for_each_permutation(values, n - 1, visit);
        if n.is_multiple_of(2) {
            values.swap(i, n - 1);
        } else {
            values.swap(0, n - 1);
        }
    }
}

/// Exact two-sided permutation p-value for the rank correlation: the share
/// of all orderings of `y` whose |rho| is at least the observed |rho|.
/// Limited to 10 pairs (10! orderings).
pub fn spearman_exact_pvalue(x: &[f64], y: &[f64]) -> Result<f64> {
    const MAX_PAIRS: usize = 10;
    let observed = spearman_rho(x, y)?;
    if x.len() > MAX_PAIRS {
        return Err(Error::DegenerateInput(format!(
            "exact permutation p-value supports at most {MAX_PAIRS} pairs, got {}",
            x.len()
        )));
    }
    let rank_x = average_ranks(x);
    let mut rank_y = average_ranks(y);
    let threshold = observed.abs() - 1e-12;
    let mut matched: u64 = 0;
    let mut total: u64 = 0;
    let len = rank_y.len();
    for_each_permutation(&mut rank_y, len, &mut |permuted| {
        total += 1;
        if let Some(rho) = pearson(&rank_x, permuted) {
            if rho.abs() >= threshold {
                matched += 1;
            }
        }
    });
    Ok(matched as f64 / total as f64)
}
