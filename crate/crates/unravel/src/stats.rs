//! Small statistics helpers: sample means with standard errors and a
//! one-sample Kolmogorov–Smirnov test against a reference CDF.

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1, "need at least one sample");
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Kolmogorov–Smirnov statistic D = sup |F_emp - F| for a sorted sample.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic two-sided p-value for the one-sample KS statistic, with the
/// finite-n effective-lambda correction.
pub fn ks_pvalue(n: usize, d: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    kolmogorov_tail(lambda)
}

fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn mean_and_se_of_constant_shifted() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, se) = mean_and_se(&xs);
        assert!((m - 2.5).abs() < 1e-14);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((se - (var / 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn ks_accepts_true_uniform() {
        let mut rng = crate::rng::trajectory_rng(11, 0);
        let mut xs: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        let p = ks_pvalue(xs.len(), d);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_rejects_wrong_cdf() {
        let mut rng = crate::rng::trajectory_rng(12, 0);
        let mut xs: Vec<f64> = (0..4000).map(|_| rng.random::<f64>().powi(2)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        let p = ks_pvalue(xs.len(), d);
        assert!(p < 1e-6, "p = {p}");
    }
}
