//! Small statistics helpers for oracle-style checks: standard normal CDF,
//! one-sample Kolmogorov-Smirnov test, and a chi-square tail bound.

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// One-sample KS statistic against the standard normal.
pub fn ks_statistic_normal(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((cdf - lo).abs()).max((hi - cdf).abs());
    }
    d
}

/// Asymptotic KS p-value (Kolmogorov distribution tail series).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let n = n as f64;
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = if j as i64 % 2 == 1 { 1.0 } else { -1.0 };
        sum += term * (-2.0 * j * j * lambda * lambda).exp();
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Chi-square statistic for observed counts against uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper critical value of chi-square with 5 degrees of freedom at the 1%
/// significance level.
pub const CHI_SQ_5DF_99: f64 = 15.086;
