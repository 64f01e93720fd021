//! Small statistics helpers: log-domain sums, weighted moments and
//! quantiles, and the standard normal.

use std::f64::consts::PI;

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Weighted mean and standard deviation; weights must sum to one.
pub fn weighted_mean_std(values: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let mean: f64 = values.clone().map(|(v, w)| v * w).sum();
    let var: f64 = values.map(|(v, w)| w * (v - mean) * (v - mean)).sum();
    (mean, var.max(0.0).sqrt())
}

/// Weighted quantiles of `(value, weight)` pairs. The pairs are sorted in
/// place; weights need not be normalized.
pub fn weighted_quantiles(pairs: &mut [(f64, f64)], qs: &[f64]) -> Vec<f64> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let target = q * total;
        let mut acc = 0.0;
        let mut value = pairs.last().map(|p| p.0).unwrap_or(f64::NAN);
        for &(v, w) in pairs.iter() {
            acc += w;
            if acc >= target {
                value = v;
                break;
            }
        }
        out.push(value);
    }
    out
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn mse(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum::<f64>()
        / (2 * a.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [0.1, -2.0, 3.5];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn quantiles() {
        let mut pairs = vec![(3.0, 1.0), (1.0, 1.0), (2.0, 1.0), (4.0, 1.0)];
        assert_eq!(weighted_quantiles(&mut pairs, &[0.1, 0.5, 0.9]), vec![1.0, 2.0, 4.0]);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(quantile(&[0.0, 1.0], 0.25), 0.25);
    }

    #[test]
    fn normal_functions() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
        assert!((normal_pdf(0.0) - 0.398_942_280_4).abs() < 1e-9);
    }
}
