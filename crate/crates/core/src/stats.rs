//! Replicate summaries: moments with standard errors and a Kolmogorov–Smirnov
//! test against the standard normal.

use serde::{Deserialize, Serialize};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    covariance(x, x)
}

pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn mean_se(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Asymptotic standard error of the sample covariance of `(x, y)`: the
/// standard deviation of the centred products over `√n`. With `x = y` this
/// is `√((m₄ − s⁴)/n)`.
pub fn covariance_se(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    (variance(&prods) / x.len() as f64).sqrt()
}

pub fn variance_se(x: &[f64]) -> f64 {
    covariance_se(x, x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// `p_value < 0.05`; reported, never turned into a failure.
    pub flagged: bool,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `z` against `N(0, 1)`.
pub fn ks_normal(z: &[f64]) -> KsResult {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in s.iter().enumerate() {
        let f = normal_cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    KsResult { statistic: d, p_value: p, flagged: p < 0.05 }
}

/// Equal-width histogram over `[lo, hi]`; returns bin edges and counts.
pub fn histogram(x: &[f64], lo: f64, hi: f64, bins: usize) -> (Vec<f64>, Vec<u64>) {
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    for &v in x {
        if v < lo || v > hi || !v.is_finite() {
            continue;
        }
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert!((covariance(&x, &[2.0, 4.0, 6.0, 8.0]) - 10.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!(normal_cdf(-40.0) >= 0.0);
    }

    #[test]
    fn kolmogorov_tail() {
        // Classical critical value: Q(1.358) ≈ 0.05.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert!(kolmogorov_q(3.0) < 1e-6);
    }

    #[test]
    fn ks_on_quantiles() {
        let n = 1000;
        let z: Vec<f64> = (0..n)
            .map(|i| {
                // Normal quantiles by bisection on the CDF.
                let target = (i as f64 + 0.5) / n as f64;
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            })
            .collect();
        let r = ks_normal(&z);
        assert!(r.statistic < 1e-3 && !r.flagged);
        let shifted: Vec<f64> = z.iter().map(|v| v + 0.5).collect();
        assert!(ks_normal(&shifted).flagged);
    }

    #[test]
    fn histogram_counts() {
        let (edges, counts) = histogram(&[0.0, 0.1, 0.5, 0.99, 1.0, 2.0], 0.0, 1.0, 2);
        assert_eq!(edges, vec![0.0, 0.5, 1.0]);
        assert_eq!(counts, vec![2, 3]);
    }
}
