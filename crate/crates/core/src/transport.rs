//! Wasserstein distances between equally weighted empirical measures with
//! the `ℓ^p` ground cost `c(x, y) = Σ_k |x_k - y_k|^p`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::SampleBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Quantile,
    Matching,
    Sinkhorn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinResult {
    pub p: f64,
    /// `W_p`.
    pub value: f64,
    /// `W_p^p`.
    pub cost: f64,
    pub method: Method,
    /// Entropic regularization, 0 for exact methods.
    pub epsilon: f64,
    /// `|⟨P, C⟩ - (⟨a, f⟩ + ⟨b, g⟩)|` for Sinkhorn, 0 otherwise.
    pub dual_gap: f64,
    pub n_points: usize,
}

impl WassersteinResult {
    fn exact(p: f64, cost: f64, method: Method, n_points: usize) -> Self {
        let cost = cost.max(0.0);
        Self { p, value: cost.powf(1.0 / p), cost, method, epsilon: 0.0, dual_gap: 0.0, n_points }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("transport exponent p = {p} must be >= 1")));
    }
    Ok(())
}

/// Monotone (quantile) coupling of two 1D samples. Unequal sizes are coupled
/// on the common refinement of the two quantile grids.
pub fn wasserstein_1d(a: &[f64], b: &[f64], p: f64) -> Result<WassersteinResult> {
    check_p(p)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let cost = if n == m {
        a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / n as f64
    } else {
        // Walk the merged breakpoints k/n and l/m as exact fractions of n·m.
        let (mut i, mut j) = (0usize, 0usize);
        let mut t = 0u64;
        let total = (n * m) as u64;
        let mut acc = 0.0;
        while t < total {
            let next_a = (i as u64 + 1) * m as u64;
            let next_b = (j as u64 + 1) * n as u64;
            let next = next_a.min(next_b);
            acc += (next - t) as f64 * (a[i] - b[j]).abs().powf(p);
            t = next;
            if next == next_a {
                i += 1;
            }
            if next == next_b {
                j += 1;
            }
        }
        acc / total as f64
    };
    Ok(WassersteinResult::exact(p, cost, Method::Quantile, n.max(m)))
}

/// Largest problem size accepted by the exact assignment solver.
pub const MAX_MATCHING: usize = 4096;

fn cost_matrix(a: &[f64], b: &[f64], dim: usize, p: f64) -> Vec<f64> {
    let n = a.len() / dim;
    let mut c = vec![0.0; n * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = &a[i * dim..(i + 1) * dim];
        for (j, v) in row.iter_mut().enumerate() {
            let y = &b[j * dim..(j + 1) * dim];
            *v = x.iter().zip(y).map(|(s, t)| (s - t).abs().powf(p)).sum();
        }
    });
    c
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix by shortest
/// augmenting paths with potentials. Returns the column assigned to each row.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

fn check_batches(a: &[f64], b: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("rows of width {dim} do not divide the data")));
    }
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len() / dim, b.len() / dim));
    }
    let n = a.len() / dim;
    if n == 0 {
        return Err(Error::Empty);
    }
    Ok(n)
}

/// Exact `W_p` between two equal-size batches (row-major, `dim` columns).
pub fn wasserstein_matching(a: &[f64], b: &[f64], dim: usize, p: f64) -> Result<WassersteinResult> {
    check_p(p)?;
    let n = check_batches(a, b, dim)?;
    if n > MAX_MATCHING {
        return Err(Error::Shape(format!("matching supports at most {MAX_MATCHING} points, got {n}")));
    }
    let c = cost_matrix(a, b, dim, p);
    let col = assignment(&c, n);
    let total: f64 = col.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
    Ok(WassersteinResult::exact(p, total / n as f64, Method::Matching, n))
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Dual Newton polishing is used up to this many points.
const NEWTON_MAX_POINTS: usize = 1024;

fn row_col_sums(f: &[f64], g: &[f64], c: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = ((f[i] + g[j] - c[i * n + j]) / eps).exp();
            rows[i] += v;
            cols[j] += v;
        }
    }
    (rows, cols)
}

fn marginal_violation(f: &[f64], g: &[f64], c: &[f64], eps: f64) -> f64 {
    let w = 1.0 / f.len() as f64;
    let (rows, cols) = row_col_sums(f, g, c, eps);
    rows.iter().chain(&cols).map(|s| (s - w).abs()).sum::<f64>() / 2.0
}

fn sinkhorn_sweep(f: &mut [f64], g: &mut [f64], c: &[f64], eps: f64) {
    let n = f.len();
    let log_w = -(n as f64).ln();
    f.par_iter_mut().enumerate().for_each(|(i, fi)| {
        *fi = eps * log_w - eps * log_sum_exp((0..n).map(|j| (g[j] - c[i * n + j]) / eps));
    });
    let f: &[f64] = f;
    g.par_iter_mut().enumerate().for_each(|(j, gj)| {
        *gj = eps * log_w - eps * log_sum_exp((0..n).map(|i| (f[i] - c[i * n + j]) / eps));
    });
}

/// Entropic dual `⟨a, f⟩ + ⟨b, g⟩ - ε Σ exp((f_i + g_j - C_ij)/ε)`.
fn dual_objective(f: &[f64], g: &[f64], c: &[f64], eps: f64) -> f64 {
    let n = f.len();
    let w = 1.0 / n as f64;
    let mut mass = 0.0;
    for i in 0..n {
        for j in 0..n {
            mass += ((f[i] + g[j] - c[i * n + j]) / eps).exp();
        }
    }
    w * (f.iter().sum::<f64>() + g.iter().sum::<f64>()) - eps * mass
}

/// One damped Newton ascent step on the dual with `g_{n-1}` pinned.
/// Returns false if no step along the Newton direction increased the dual.
fn newton_step(f: &mut [f64], g: &mut [f64], c: &[f64], eps: f64) -> bool {
    use nalgebra::{DMatrix, DVector};
    let n = f.len();
    let w = 1.0 / n as f64;
    let m = 2 * n - 1;
    let mut h = DMatrix::<f64>::zeros(m, m);
    let mut r = DVector::<f64>::zeros(m);
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = ((f[i] + g[j] - c[i * n + j]) / eps).exp();
            rows[i] += v;
            cols[j] += v;
            if j + 1 < n {
                h[(i, n + j)] = v;
                h[(n + j, i)] = v;
            }
        }
    }
    let ridge = 1e-14 * w;
    for i in 0..n {
        h[(i, i)] = rows[i] + ridge;
        r[i] = w - rows[i];
    }
    for j in 0..n - 1 {
        h[(n + j, n + j)] = cols[j] + ridge;
        r[n + j] = w - cols[j];
    }
    let Some(chol) = h.cholesky() else {
        return false;
    };
    let step = chol.solve(&r) * eps;
    let slope = r.dot(&step);
    let (f0, g0) = (f.to_vec(), g.to_vec());
    let d0 = dual_objective(f, g, c, eps);
    let mut t = 1.0;
    for _ in 0..40 {
        for i in 0..n {
            f[i] = f0[i] + t * step[i];
        }
        for j in 0..n - 1 {
            g[j] = g0[j] + t * step[n + j];
        }
        let d = dual_objective(f, g, c, eps);
        if d >= d0 + 1e-4 * t * slope {
            return true;
        }
        t *= 0.5;
    }
    f.copy_from_slice(&f0);
    g.copy_from_slice(&g0);
    false
}

/// Entropic optimal transport in the log domain with ε-scaling, reporting the
/// transport cost `⟨P, C⟩` of the regularized plan.
///
/// Each scale runs Sinkhorn sweeps; at the target ε, problems of up to 1024
/// points are finished with damped Newton steps on the dual, which converge
/// where Sinkhorn stalls on nearly deterministic plans. `max_iter` bounds the
/// total number of sweeps and Newton steps.
pub fn wasserstein_sinkhorn(a: &[f64], b: &[f64], dim: usize, p: f64, epsilon: f64, max_iter: usize) -> Result<WassersteinResult> {
    check_p(p)?;
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
    }
    let n = check_batches(a, b, dim)?;
    let c = cost_matrix(a, b, dim, p);
    let cmax = c.iter().cloned().fold(0.0, f64::max);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut eps = cmax.max(epsilon);
    let mut iterations = 0;
    let mut viol;
    loop {
        let last = eps <= epsilon;
        let target = if last { 1e-9 } else { 1e-3 };
        let newton = last && n <= NEWTON_MAX_POINTS;
        loop {
            // Sinkhorn sweep first so Newton starts from exact column marginals
            sinkhorn_sweep(&mut f, &mut g, &c, eps);
            if newton && iterations % 4 == 3 {
                newton_step(&mut f, &mut g, &c, eps);
                sinkhorn_sweep(&mut f, &mut g, &c, eps);
            }
            iterations += 1;
            viol = marginal_violation(&f, &g, &c, eps);
            if viol <= target {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::Sinkhorn { violation: viol, iterations });
            }
        }
        if last {
            break;
        }
        eps = (eps * 0.5).max(epsilon);
    }
    let mut cost = 0.0;
    for i in 0..n {
        for j in 0..n {
            cost += ((f[i] + g[j] - c[i * n + j]) / epsilon).exp() * c[i * n + j];
        }
    }
    let dual = (f.iter().sum::<f64>() + g.iter().sum::<f64>()) / n as f64;
    log::debug!("sinkhorn converged after {iterations} iterations, violation {viol:.2e}");
    Ok(WassersteinResult {
        p,
        value: cost.max(0.0).powf(1.0 / p),
        cost,
        method: Method::Sinkhorn,
        epsilon,
        dual_gap: (cost - dual).abs(),
        n_points: n,
    })
}

/// Quantile coupling for one-dimensional batches, exact matching otherwise.
pub fn wasserstein_batches(a: &SampleBatch, b: &SampleBatch, p: f64) -> Result<WassersteinResult> {
    if a.dim != b.dim {
        return Err(Error::SizeMismatch(a.dim, b.dim));
    }
    if a.dim == 1 {
        wasserstein_1d(&a.data, &b.data, p)
    } else {
        wasserstein_matching(&a.data, &b.data, a.dim, p)
    }
}

/// Rows drawn with replacement.
pub fn resample<R: Rng>(batch: &SampleBatch, rng: &mut R) -> SampleBatch {
    let n = batch.n_samples;
    let mut data = Vec::with_capacity(batch.data.len());
    for _ in 0..n {
        data.extend_from_slice(batch.row(rng.random_range(0..n)));
    }
    SampleBatch::from_rows(batch.dim, data, batch.seed).expect("same shape")
}

/// Bootstrap standard error of `W_p^p` (rows resampled with replacement).
pub fn bootstrap_se<R: Rng>(a: &SampleBatch, b: &SampleBatch, p: f64, n_boot: usize, rng: &mut R) -> Result<f64> {
    if n_boot < 2 {
        return Err(Error::Input("bootstrap needs at least two replicates".into()));
    }
    let costs = (0..n_boot)
        .map(|_| wasserstein_batches(&resample(a, rng), &resample(b, rng), p).map(|w| w.cost))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::stats::variance(&costs).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(n: usize, shift: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| shift + rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn one_dimensional_examples() {
        let a = normal(100, 0.0, 1);
        assert_eq!(wasserstein_1d(&a, &a, 2.0).unwrap().value, 0.0);
        for p in [1.0, 2.0, 3.5] {
            assert!((wasserstein_1d(&[0.0; 7], &[1.0; 7], p).unwrap().value - 1.0).abs() < 1e-15);
        }
        assert!(matches!(wasserstein_1d(&[], &[1.0], 2.0), Err(Error::Empty)));
    }

    #[test]
    fn gaussian_shift() {
        let a = SampleBatch::from_rows(1, normal(5000, 0.0, 2), 2).unwrap();
        let b = SampleBatch::from_rows(1, normal(5000, 2.0, 3), 3).unwrap();
        let w = wasserstein_batches(&a, &b, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let se_cost = bootstrap_se(&a, &b, 2.0, 50, &mut rng).unwrap();
        let se = se_cost / (2.0 * w.value);
        assert!((w.value - 2.0).abs() <= 3.0 * se + 0.02, "{} ± {se}", w.value);
    }

    #[test]
    fn unequal_counts() {
        // {0, 1} vs {0, 0.5, 1}: quantile functions differ on (1/3, 2/3)
        let w = wasserstein_1d(&[0.0, 1.0], &[0.0, 0.5, 1.0], 1.0).unwrap();
        assert!((w.cost - (1.0 / 6.0) * 0.5 * 2.0).abs() < 1e-15);
        let dup = wasserstein_1d(&[0.3, 0.7], &[0.3, 0.3, 0.7, 0.7], 2.0).unwrap();
        assert_eq!(dup.cost, 0.0);
    }

    #[test]
    fn matching_examples() {
        let a = vec![0.0, 0.0, 1.0, 1.0];
        let b = vec![1.0, 0.0, 0.0, 1.0];
        assert!((wasserstein_matching(&a, &b, 2, 2.0).unwrap().cost - 1.0).abs() < 1e-15);
        let x = normal(60, 0.0, 5);
        let mut y = x.clone();
        y.reverse();
        assert_eq!(wasserstein_matching(&x, &y, 1, 2.0).unwrap().cost, 0.0);
        let z = normal(60, 0.5, 6);
        let m = wasserstein_matching(&x, &z, 1, 1.5).unwrap();
        let q = wasserstein_1d(&x, &z, 1.5).unwrap();
        assert!((m.cost - q.cost).abs() < 1e-12);
        assert!(matches!(wasserstein_matching(&x, &z[..58], 1, 2.0), Err(Error::SizeMismatch(..))));
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 5;
            let c: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let col = assignment(&c, n);
            let got: f64 = col.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..n).collect();
            permute(&mut perm, 0, &mut |p| best = best.min(p.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum()));
            assert!((got - best).abs() < 1e-12);
        }
    }

    fn permute(v: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            visit(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, visit);
            v.swap(k, i);
        }
    }

    #[test]
    fn sinkhorn_close_to_matching() {
        let a = normal(128, 0.0, 10);
        let b = normal(128, 0.7, 11);
        let exact = wasserstein_matching(&a, &b, 2, 2.0).unwrap();
        let c = cost_matrix(&a, &b, 2, 2.0);
        let mut sorted = c.clone();
        sorted.sort_by(f64::total_cmp);
        let eps = 1e-3 * sorted[sorted.len() / 2];
        let s = wasserstein_sinkhorn(&a, &b, 2, 2.0, eps, 200_000).unwrap();
        assert!(((s.cost - exact.cost) / exact.cost).abs() <= 0.01, "{} vs {}", s.cost, exact.cost);
    }

    #[test]
    fn sinkhorn_identical_and_monotone() {
        let a = normal(40, 0.0, 12);
        let eps = 1e-2;
        let s = wasserstein_sinkhorn(&a, &a, 1, 2.0, eps, 200_000).unwrap();
        assert!(s.cost >= 0.0 && s.cost <= eps * (40f64).ln());
        let b = normal(40, 1.0, 13);
        let big = wasserstein_sinkhorn(&a, &b, 1, 2.0, 0.5, 200_000).unwrap();
        let small = wasserstein_sinkhorn(&a, &b, 1, 2.0, 0.05, 200_000).unwrap();
        assert!(big.cost >= small.cost - 1e-9);
        assert!(matches!(wasserstein_sinkhorn(&a, &b, 1, 2.0, 1e-4, 20), Err(Error::Sinkhorn { .. })));
    }

    #[test]
    fn singleton_translation() {
        let x = [0.3, -1.0, 2.0];
        let v = [1.0, -2.0, 0.5];
        let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
        let p = 3.0;
        let w = wasserstein_matching(&x, &y, 3, p).unwrap();
        let norm = v.iter().map(|t: &f64| t.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        assert!((w.value - norm).abs() < 1e-12);
    }
}
