//! Small statistical toolbox shared by the Monte Carlo modules:
//! Kolmogorov-Smirnov tests, weighted least squares, exact binomial
//! confidence intervals, quantiles and exponential-rate estimates.

use statrs::distribution::{Beta, ContinuousCDF};

/// Survival function of the Kolmogorov distribution,
/// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} e^{-2 j^2 lambda^2}.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against a CDF. Returns (D, p).
pub fn ks1_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((((i + 1) as f64) / n - f).abs());
        d = d.max((f - (i as f64) / n).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Two-sample KS test. Returns (D, p).
pub fn ks2_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xi = xa[i];
        let xj = xb[j];
        if xi <= xj {
            i += 1;
        }
        if xj <= xi {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Weighted least squares fit y = intercept + slope x.
#[derive(Debug, Clone, Copy)]
pub struct WlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn weighted_least_squares(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<WlsFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || ws.len() != n {
        return None;
    }
    let sw: f64 = ws.iter().sum();
    let mx: f64 = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my: f64 = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let r = y - intercept - slope * x;
        ssr += w * r * r;
        sst += w * (y - my) * (y - my);
    }
    let dof = (n as f64 - 2.0).max(1.0);
    let sigma2 = ssr / dof;
    Some(WlsFit {
        slope,
        intercept,
        slope_stderr: (sigma2 / sxx).sqrt(),
        r_squared: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
        n,
    })
}

/// Exact (Clopper-Pearson) two-sided binomial interval at the given level.
pub fn clopper_pearson(successes: usize, n: usize, level: f64) -> (f64, f64) {
    assert!(successes <= n && n > 0);
    let alpha = 1.0 - level;
    let k = successes as f64;
    let nf = n as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0)
            .unwrap()
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k)
            .unwrap()
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    assert!(!samples.is_empty());
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= xs.len() {
        return xs[xs.len() - 1];
    }
    let frac = pos - i as f64;
    xs[i] * (1.0 - frac) + xs[i + 1] * frac
}

pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

/// Exponential-rate MLE with right censoring:
/// lambda = (#events) / (total observed time), stderr = lambda / sqrt(#events).
pub fn exponential_rate_mle(durations: &[f64], event_observed: &[bool]) -> Option<(f64, f64)> {
    let total: f64 = durations.iter().sum();
    let events = event_observed.iter().filter(|&&e| e).count();
    if events == 0 || total <= 0.0 {
        return None;
    }
    let lambda = events as f64 / total;
    Some((lambda, lambda / (events as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn kolmogorov_sf_reference_points() {
        // Q(0.8276) ~ 0.5 (median of the Kolmogorov law)
        assert_relative_eq!(kolmogorov_sf(0.8276), 0.5, epsilon = 1e-3);
        assert!(kolmogorov_sf(0.3) > 0.999);
        assert!(kolmogorov_sf(2.0) < 1e-3);
    }

    #[test]
    fn ks1_uniform_accepts_uniform() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks1_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        let (_, p_bad) = ks1_test(&shifted, |x| x.clamp(0.0, 1.0));
        assert!(p_bad < 1e-6);
    }

    #[test]
    fn ks2_same_distribution_accepts() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let (_, p) = ks2_test(&a, &b);
        assert!(p > 0.01);
        let c: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        let (_, p_bad) = ks2_test(&a, &c);
        assert!(p_bad < 1e-6);
    }

    #[test]
    fn wls_recovers_exact_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let ws = vec![1.0; 20];
        let fit = weighted_least_squares(&xs, &ys, &ws).unwrap();
        assert_relative_eq!(fit.slope, -2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clopper_pearson_brackets_truth() {
        let (lo, hi) = clopper_pearson(50, 100, 0.95);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.25);
        assert_eq!(clopper_pearson(0, 10, 0.95).0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.95).1, 1.0);
    }

    #[test]
    fn quantile_and_median() {
        let xs = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_relative_eq!(median(&xs), 3.0);
        assert_relative_eq!(quantile(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile(&xs, 1.0), 5.0);
        assert_relative_eq!(quantile(&xs, 0.25), 2.0);
    }

    #[test]
    fn exponential_mle_recovers_rate() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let lambda = 2.0;
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.random::<f64>()).ln() / lambda)
            .collect();
        let events = vec![true; n];
        let (lhat, se) = exponential_rate_mle(&xs, &events).unwrap();
        assert!((lhat - lambda).abs() < 4.0 * se);
        assert!((lhat - lambda).abs() < 0.05);
    }
}
