//! Small estimators shared by the Monte Carlo checks.

use serde::{Deserialize, Serialize};

/// Sample mean with its naive standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean and `sd / sqrt(n)` for independent draws.
pub fn mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let se = if xs.len() > 1 { (variance(xs) / n).sqrt() } else { f64::INFINITY };
    Estimate { value: mean(xs), std_error: se }
}

/// Mean and standard error corrected by the effective sample size of a
/// correlated chain.
pub fn chain_mean_se(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let ess = effective_sample_size(xs).max(1.0);
    let se = if xs.len() > 1 { (variance(xs) * (n - 1.0) / n / ess).sqrt() } else { f64::INFINITY };
    Estimate { value: mean(xs), std_error: se }
}

/// Effective sample size by Geyer's initial positive sequence: autocovariance
/// pair sums `Γ_k = γ_{2k} + γ_{2k+1}` are accumulated while positive.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let gamma = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = gamma(0);
    if g0 <= 0.0 {
        return n as f64;
    }
    let mut sum = -g0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        // Monotone version: pair sums may not increase.
        let pair = (gamma(2 * k) + gamma(2 * k + 1)).min(prev);
        if pair <= 0.0 {
            break;
        }
        sum += 2.0 * pair;
        prev = pair;
        k += 1;
    }
    (n as f64 * g0 / sum).min(n as f64)
}

/// Wilson score interval for `successes / n` at `z` standard deviations.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    // rounding can push an endpoint past `p` when `p` is 0 or 1
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Delete-one jackknife of a statistic over `groups` contiguous blocks.
pub fn jackknife<F: Fn(&[f64]) -> f64>(xs: &[f64], groups: usize, stat: F) -> Estimate {
    let n = xs.len();
    let g = groups.clamp(2, n.max(2));
    let full = stat(xs);
    let block = n / g;
    let mut leave_out = Vec::with_capacity(g);
    for i in 0..g {
        let lo = i * block;
        let hi = if i + 1 == g { n } else { lo + block };
        let rest: Vec<f64> = xs[..lo].iter().chain(&xs[hi..]).copied().collect();
        leave_out.push(stat(&rest));
    }
    let gf = g as f64;
    let m = mean(&leave_out);
    let var = leave_out.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (gf - 1.0) / gf;
    Estimate { value: gf * full - (gf - 1.0) * m, std_error: var.sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_ess_is_close_to_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..20000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 17000.0, "{ess}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho: f64 = 0.9;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..200000)
            .map(|_| {
                x = rho * x + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let expected = 200000.0 * (1.0 - rho) / (1.0 + rho);
        let ess = effective_sample_size(&xs);
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 3.0);
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson_interval(0, 100, 3.0).0, 0.0);
        assert!(wilson_interval(0, 100, 3.0).1 > 0.0);
        assert_eq!(wilson_interval(0, 5, 3.0).0, 0.0);
        assert_eq!(wilson_interval(5, 5, 3.0).1, 1.0);
    }

    #[test]
    fn jackknife_of_mean_is_mean() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let j = jackknife(&xs, 10, mean);
        assert!((j.value - 49.5).abs() < 1e-9);
        assert!(j.std_error > 0.0);
    }
}
