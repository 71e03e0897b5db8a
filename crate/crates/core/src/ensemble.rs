//! Canonical ensembles `μ_{N,m}(dx) ∝ exp(-Σψ(x_i))` on the hyperplane
//! `(1/N)Σx_i = m`, the coarse-graining map, the two-site conditional
//! measures and the coarse gradient identity.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::DiscretizedMeasure;
use crate::potential::SingleSite;
use crate::quad;
use crate::stats;

/// `μ_{N,m}` for the Hamiltonian `H(x) = Σψ(x_i)`.
#[derive(Debug, Clone)]
pub struct CanonicalEnsemble<V> {
    n: usize,
    m: f64,
    potential: V,
}

impl<V: SingleSite> CanonicalEnsemble<V> {
    pub fn new(n: usize, m: f64, potential: V) -> Result<Self> {
        if n < 2 {
            return Err(Error::Shape(format!("ensemble needs N >= 2, got {n}")));
        }
        if !m.is_finite() {
            return Err(Error::Input(format!("mean spin {m} is not finite")));
        }
        Ok(Self { n, m, potential })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn potential(&self) -> &V {
        &self.potential
    }

    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.potential.value(v)).sum()
    }

    /// `∇H = (ψ'(x_1), ..., ψ'(x_N))`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.potential.derivative(v)).collect()
    }
}

/// `P(x) = ((x_1 + x_2)/2, ..., (x_{N-1} + x_N)/2)`.
pub fn coarse_grain(x: &[f64]) -> Result<Vec<f64>> {
    if !x.len().is_multiple_of(2) || x.is_empty() {
        return Err(Error::Shape(format!("coarse-graining needs an even length, got {}", x.len())));
    }
    Ok(x.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

/// Rows of configurations with sampler metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n_samples: usize,
    pub dim: usize,
    /// Row-major `n_samples × dim`.
    pub data: Vec<f64>,
    pub seed: u64,
    pub ess: f64,
    pub thinning: usize,
    pub acceptance_rate: Option<f64>,
    /// Set when the acceptance rate left `[0.05, 0.95]`.
    pub tuning_warning: Option<f64>,
}

/// JSON sidecar next to the binary sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchMetadata {
    pub n_samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub ess: f64,
    pub thinning: usize,
    pub acceptance_rate: Option<f64>,
    pub tuning_warning: Option<f64>,
}

const BATCH_MAGIC: &[u8; 8] = b"MLSIBAT1";

impl SampleBatch {
    /// Independent draws: the ESS is the sample count.
    pub fn from_rows(dim: usize, data: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not fill rows of width {dim}", data.len())));
        }
        let n_samples = data.len() / dim;
        Ok(Self { n_samples, dim, data, seed, ess: n_samples as f64, thinning: 1, acceptance_rate: None, tuning_warning: None })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn metadata(&self) -> BatchMetadata {
        BatchMetadata {
            n_samples: self.n_samples,
            dim: self.dim,
            seed: self.seed,
            ess: self.ess,
            thinning: self.thinning,
            acceptance_rate: self.acceptance_rate,
            tuning_warning: self.tuning_warning,
        }
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BATCH_MAGIC)?;
        for v in [self.n_samples as u64, self.dim as u64, self.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Parse the binary layout; metadata other than shape and seed is reset.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BATCH_MAGIC {
            return Err(Error::Input("not a sample batch file".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 3];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [n, dim, seed] = header;
        let mut data = Vec::with_capacity((n * dim) as usize);
        for _ in 0..n * dim {
            r.read_exact(&mut word)?;
            data.push(f64::from_le_bytes(word));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Input(format!("{} trailing bytes after sample data", rest.len())));
        }
        Self::from_rows(dim as usize, data, seed)
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Write `path` (binary) and `path.json` (metadata).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.data.len());
        self.write_binary(&mut buf)?;
        fs::write(path, buf)?;
        fs::write(Self::sidecar(path), serde_json::to_string_pretty(&self.metadata())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut batch = Self::read_binary(fs::File::open(path)?)?;
        let meta: BatchMetadata = serde_json::from_str(&fs::read_to_string(Self::sidecar(path))?)?;
        if meta.n_samples != batch.n_samples || meta.dim != batch.dim || meta.seed != batch.seed {
            return Err(Error::Input("sidecar does not match sample file".into()));
        }
        batch.ess = meta.ess;
        batch.thinning = meta.thinning;
        batch.acceptance_rate = meta.acceptance_rate;
        batch.tuning_warning = meta.tuning_warning;
        Ok(batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_samples: usize,
    /// Standard deviation of the exchanged amount.
    pub step_scale: f64,
    /// Sweeps discarded before the first stored sample.
    pub burn_in: usize,
    /// Sweeps between stored samples.
    pub thinning: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_samples: 10_000, step_scale: 1.0, burn_in: 1_000, thinning: 1, seed: 0 }
    }
}

/// Metropolis chain with pair-exchange moves `x_i += δ, x_j -= δ`.
///
/// One sweep is `N` proposals; the configuration is re-projected onto the
/// constraint after every sweep to remove rounding drift.
pub fn sample_canonical<V: SingleSite>(ens: &CanonicalEnsemble<V>, cfg: &SamplerConfig) -> Result<SampleBatch> {
    if cfg.n_samples == 0 {
        return Err(Error::Input("n_samples must be >= 1".into()));
    }
    if !(cfg.step_scale > 0.0) || cfg.thinning == 0 {
        return Err(Error::Input("step_scale must be positive and thinning >= 1".into()));
    }
    let n = ens.n;
    let psi = &ens.potential;
    let (lo, hi) = psi.domain();
    let bounded = !psi.analytic();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = Normal::new(0.0, cfg.step_scale).map_err(|e| Error::Input(e.to_string()))?;
    let mut x = vec![ens.m; n];
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let mut data = Vec::with_capacity(cfg.n_samples * n);
    let mut energy = Vec::with_capacity(cfg.n_samples);
    let total_sweeps = cfg.burn_in + cfg.n_samples * cfg.thinning;
    for sweep in 0..total_sweeps {
        let counting = sweep >= cfg.burn_in;
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let d: f64 = step.sample(&mut rng);
            let (xi, xj) = (x[i] + d, x[j] - d);
            let u: f64 = rng.random();
            let ok = !(bounded && (xi < lo || xi > hi || xj < lo || xj > hi)) && {
                let delta = psi.value(xi) + psi.value(xj) - psi.value(x[i]) - psi.value(x[j]);
                delta <= 0.0 || u < (-delta).exp()
            };
            if ok {
                x[i] = xi;
                x[j] = xj;
            }
            if counting {
                proposed += 1;
                accepted += ok as usize;
            }
        }
        let drift = x.iter().sum::<f64>() / n as f64 - ens.m;
        x.iter_mut().for_each(|v| *v -= drift);
        if counting && (sweep - cfg.burn_in + 1).is_multiple_of(cfg.thinning) {
            data.extend_from_slice(&x);
            energy.push(ens.hamiltonian(&x));
        }
    }
    let rate = accepted as f64 / proposed as f64;
    let tuning_warning = if !(0.05..=0.95).contains(&rate) {
        log::warn!("pair-exchange acceptance rate {rate:.3} outside [0.05, 0.95]; adjust step_scale");
        Some(rate)
    } else {
        None
    };
    Ok(SampleBatch {
        n_samples: cfg.n_samples,
        dim: n,
        data,
        seed: cfg.seed,
        ess: stats::effective_sample_size(&energy),
        thinning: cfg.thinning,
        acceptance_rate: Some(rate),
        tuning_warning,
    })
}

/// Independent chains with seeds `seed, seed + 1, ...`, run in parallel.
pub fn sample_chains<V: SingleSite>(ens: &CanonicalEnsemble<V>, cfg: &SamplerConfig, chains: usize) -> Result<Vec<SampleBatch>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|c| sample_canonical(ens, &SamplerConfig { seed: cfg.seed.wrapping_add(c), ..*cfg }))
        .collect()
}

/// `μ_{2,y}` in the coordinate `u` with `(x_1, x_2) = (y + u, y - u)`:
/// density `∝ exp(-ψ(y + u) - ψ(y - u))`, tabulated on a symmetric grid.
/// Sampling treats the density as constant on each cell.
#[derive(Debug, Clone)]
pub struct TwoSiteConditional {
    pub y: f64,
    /// Symmetric nodes `-U..U`.
    pub nodes: Vec<f64>,
    /// Normalized trapezoid weights on the nodes.
    pub weights: Vec<f64>,
    cell_mass: Vec<f64>,
    cdf: Vec<f64>,
}

pub fn two_site_conditional<V: SingleSite + ?Sized>(psi: &V, y: f64, n_points: usize) -> Result<TwoSiteConditional> {
    if n_points < 3 {
        return Err(Error::InsufficientGrid { got: n_points, needed: 3 });
    }
    let g = |u: f64| -psi.value(y + u) - psi.value(y - u);
    let (a, b) = psi.domain();
    let mut half = (b - y).min(y - a);
    if !(half > 0.0) {
        return Err(Error::OutOfDomain { x: y, min: a, max: b });
    }
    let window = loop {
        match quad::mass_window(&g, 0.0, half, false) {
            Err(Error::TailNotNegligible { .. }) if psi.analytic() && half < 1e4 => half *= 1.5,
            other => break other.map_err(|e| e.at(y))?,
        }
    };
    let u_max = window.hi;
    // odd number of nodes keeps u = 0 on the grid
    let n = n_points | 1;
    let h = 2.0 * u_max / (n - 1) as f64;
    let mid = n / 2;
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 - mid as f64) * h).collect();
    let dens: Vec<f64> = nodes.iter().map(|&u| (g(u) - window.shift).exp()).collect();
    // enforce exact symmetry
    let dens: Vec<f64> = (0..n).map(|i| 0.5 * (dens[i] + dens[n - 1 - i])).collect();
    let cell: Vec<f64> = dens.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let total: f64 = cell.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Domain(format!("conditional density at y = {y} cannot be normalized")));
    }
    let cell_mass: Vec<f64> = cell.iter().map(|c| c / total).collect();
    let mut weights = vec![0.0; n];
    for (k, c) in cell_mass.iter().enumerate() {
        weights[k] += 0.5 * c;
        weights[k + 1] += 0.5 * c;
    }
    let mut cdf = Vec::with_capacity(n);
    cdf.push(0.0);
    let mut acc = 0.0;
    for c in &cell_mass {
        acc += c;
        cdf.push(acc);
    }
    Ok(TwoSiteConditional { y, nodes, weights, cell_mass, cdf })
}

impl TwoSiteConditional {
    /// Moment `E[u^r]` of the sampled (cellwise uniform) distribution.
    pub fn moment(&self, r: i32) -> f64 {
        self.cell_mass
            .iter()
            .zip(self.nodes.windows(2))
            .map(|(w, c)| {
                let (a, b) = (c[0], c[1]);
                w * (b.powi(r + 1) - a.powi(r + 1)) / ((r + 1) as f64 * (b - a))
            })
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Inverse CDF at `v ∈ [0, 1]`.
    pub fn quantile(&self, v: f64) -> f64 {
        let last = self.cdf.len() - 1;
        let v = v * self.cdf[last];
        let k = self.cdf.partition_point(|&c| c <= v).clamp(1, last) - 1;
        let mass = self.cell_mass[k];
        let frac = if mass > 0.0 { ((v - self.cdf[k]) / mass).clamp(0.0, 1.0) } else { 0.5 };
        self.nodes[k] + frac * (self.nodes[k + 1] - self.nodes[k])
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random())
    }

    /// The tabulated measure on the `u` nodes.
    pub fn to_measure(&self) -> DiscretizedMeasure {
        DiscretizedMeasure::new(1, self.nodes.clone(), self.weights.clone()).expect("normalized weights")
    }
}

/// A smooth test function on configurations.
pub trait TestFunction: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `f ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunction(pub f64);

impl TestFunction for ConstantFunction {
    fn value(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// `f(x) = c + a·x`.
#[derive(Debug, Clone)]
pub struct LinearFunction {
    pub offset: f64,
    pub coefficients: Vec<f64>,
}

impl TestFunction for LinearFunction {
    fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.coefficients.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        self.coefficients.clone()
    }
}

/// `f(x) = exp(ε Σ sin x_i)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpSineSum(pub f64);

impl TestFunction for ExpSineSum {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0 * x.iter().map(|v| v.sin()).sum::<f64>()).exp()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let f = self.value(x);
        x.iter().map(|v| self.0 * v.cos() * f).collect()
    }
}

/// Both sides of `∇_y f̄(y) = 2P E[∇f | y] - 2P cov(f, ∇H | y)` per coarse
/// component, where `f̄(y) = E[f | y]` under `μ(dx|y) = ⊗ μ_{2,y_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientIdentityReport {
    pub y: Vec<f64>,
    /// Centered finite differences of `f̄`.
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Scale `max(|lhs|, |rhs|)` per component used for the inconclusive flag.
    pub scale: Vec<f64>,
    pub inconclusive: bool,
    pub n_mc: usize,
    pub step: f64,
}

impl GradientIdentityReport {
    /// Largest `|residual| / std_error`.
    pub fn max_z(&self) -> f64 {
        self.residual
            .iter()
            .zip(&self.std_error)
            .map(|(r, s)| if *s > 0.0 { r.abs() / s } else if *r == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCheckConfig {
    pub n_mc: usize,
    /// Finite-difference step in `y`.
    pub step: f64,
    /// Grid size of each two-site conditional.
    pub n_points: usize,
    pub seed: u64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self { n_mc: 20_000, step: 1e-3, n_points: 4001, seed: 0 }
    }
}

fn assemble(y: &[f64], u: &[f64], x: &mut [f64]) {
    for (i, (&yi, &ui)) in y.iter().zip(u).enumerate() {
        x[2 * i] = yi + ui;
        x[2 * i + 1] = yi - ui;
    }
}

/// Monte Carlo check of the coarse gradient identity at `y ∈ R^{N/2}`.
///
/// All sides share the same uniforms (inverse-CDF sampling), so the
/// finite-difference side and the conditional expectation side are
/// strongly coupled and the residual has small variance.
pub fn check_gradient_identity<V: SingleSite, F: TestFunction + ?Sized>(
    ens: &CanonicalEnsemble<V>,
    f: &F,
    y: &[f64],
    cfg: &GradientCheckConfig,
) -> Result<GradientIdentityReport> {
    let n = ens.n;
    if !n.is_multiple_of(2) || y.len() * 2 != n {
        return Err(Error::Shape(format!("coarse configuration of length {} for N = {n}", y.len())));
    }
    if n > 64 {
        return Err(Error::Shape(format!("gradient check is desk scale, N = {n} too large")));
    }
    if cfg.n_mc < 2 || !(cfg.step > 0.0) {
        return Err(Error::Input("gradient check needs n_mc >= 2 and a positive step".into()));
    }
    let psi = &ens.potential;
    let half = y.len();
    let h = cfg.step;
    let conds: Vec<TwoSiteConditional> =
        y.iter().map(|&yi| two_site_conditional(psi, yi, cfg.n_points)).collect::<Result<_>>()?;
    let shifted: Vec<[TwoSiteConditional; 2]> = y
        .iter()
        .map(|&yi| Ok([two_site_conditional(psi, yi + h, cfg.n_points)?, two_site_conditional(psi, yi - h, cfg.n_points)?]))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let uniforms: Vec<f64> = (0..cfg.n_mc * half).map(|_| rng.random()).collect();

    let mut fx = Vec::with_capacity(cfg.n_mc);
    let mut grad2p = vec![Vec::with_capacity(cfg.n_mc); half];
    let mut hsum = vec![Vec::with_capacity(cfg.n_mc); half];
    let mut fd = vec![Vec::with_capacity(cfg.n_mc); half];
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; half];
    let mut yp = y.to_vec();
    for k in 0..cfg.n_mc {
        let v = &uniforms[k * half..(k + 1) * half];
        for i in 0..half {
            u[i] = conds[i].quantile(v[i]);
        }
        assemble(y, &u, &mut x);
        let fv = f.value(&x);
        let g = f.gradient(&x);
        fx.push(fv);
        for i in 0..half {
            grad2p[i].push(g[2 * i] + g[2 * i + 1]);
            hsum[i].push(psi.derivative(x[2 * i]) + psi.derivative(x[2 * i + 1]));
            let base = u[i];
            let mut side = [0.0; 2];
            for (s, sign) in [1.0, -1.0].iter().enumerate() {
                yp[i] = y[i] + sign * h;
                u[i] = shifted[i][s].quantile(v[i]);
                assemble(&yp, &u, &mut x);
                side[s] = f.value(&x);
            }
            yp[i] = y[i];
            u[i] = base;
            fd[i].push((side[0] - side[1]) / (2.0 * h));
        }
    }
    let fbar = stats::mean(&fx);
    let mut report = GradientIdentityReport {
        y: y.to_vec(),
        lhs: vec![],
        rhs: vec![],
        residual: vec![],
        std_error: vec![],
        scale: vec![],
        inconclusive: false,
        n_mc: cfg.n_mc,
        step: h,
    };
    for i in 0..half {
        let hbar = stats::mean(&hsum[i]);
        let lhs = stats::mean(&fd[i]);
        let cov: Vec<f64> = fx.iter().zip(&hsum[i]).map(|(a, b)| (a - fbar) * (b - hbar)).collect();
        let rhs = stats::mean(&grad2p[i]) - stats::mean(&cov);
        let z: Vec<f64> = (0..cfg.n_mc).map(|k| fd[i][k] - grad2p[i][k] + cov[k]).collect();
        let se = stats::mean_se(&z).std_error;
        let scale = lhs.abs().max(rhs.abs());
        report.inconclusive |= scale > 0.0 && se > 0.5 * scale;
        report.lhs.push(lhs);
        report.rhs.push(rhs);
        report.residual.push(lhs - rhs);
        report.std_error.push(se);
        report.scale.push(scale);
    }
    Ok(report)
}

/// One moment of the coarse-grained chain against the direct coarse chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub order: i32,
    pub coarse_grained: f64,
    pub direct: f64,
    pub combined_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub moments: Vec<MomentComparison>,
    pub pass: bool,
}

/// Compare the one-site marginal moments (orders 1, 2, 4 of `y_1 - m`) of
/// `P`-images of `fine` samples with samples of the coarse ensemble, pooling
/// over coarse sites and using chain-corrected standard errors.
pub fn pushforward_check(fine: &SampleBatch, coarse: &SampleBatch, m: f64) -> Result<PushforwardReport> {
    if coarse.dim * 2 != fine.dim {
        return Err(Error::Shape(format!("coarse dimension {} is not half of {}", coarse.dim, fine.dim)));
    }
    let images: Vec<Vec<f64>> = fine.rows().map(coarse_grain).collect::<Result<_>>()?;
    let mut moments = Vec::new();
    let mut pass = true;
    for order in [1, 2, 4] {
        // site averages per sample keep rows independent of the pooling
        let a: Vec<f64> = images.iter().map(|r| stats::mean(&r.iter().map(|v| (v - m).powi(order)).collect::<Vec<_>>())).collect();
        let b: Vec<f64> = coarse.rows().map(|r| stats::mean(&r.iter().map(|v| (v - m).powi(order)).collect::<Vec<_>>())).collect();
        let ea = stats::chain_mean_se(&a);
        let eb = stats::chain_mean_se(&b);
        let se = ea.std_error.hypot(eb.std_error);
        let z = (ea.value - eb.value) / se;
        pass &= z.abs() <= 3.0 || (order == 1 && (ea.value - eb.value).abs() < 1e-9);
        moments.push(MomentComparison { order, coarse_grained: ea.value, direct: eb.value, combined_se: se, z });
    }
    Ok(PushforwardReport { moments, pass })
}

/// `(|2Px|_q^q, |(id - 2PᵀP)x|_q^q, |x|_q^q)`.
pub fn coarse_norms(x: &[f64], q: f64) -> Result<(f64, f64, f64)> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::Shape(format!("odd length {}", x.len())));
    }
    let mut coarse = 0.0;
    let mut fluct = 0.0;
    for p in x.chunks_exact(2) {
        coarse += (p[0] + p[1]).abs().powf(q);
        fluct += 2.0 * (0.5 * (p[0] - p[1])).abs().powf(q);
    }
    let full = x.iter().map(|v| v.abs().powf(q)).sum();
    Ok((coarse, fluct, full))
}

/// `C(q) = 2^q`, the constant of the coarse norm inequalities.
pub fn norm_constant(q: f64) -> f64 {
    2f64.powf(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_double_well, PotentialSpec};

    #[test]
    fn coarse_grain_examples() {
        assert_eq!(coarse_grain(&[1.0, 3.0, 5.0, 7.0]).unwrap(), vec![2.0, 6.0]);
        assert_eq!(coarse_grain(&[0.4; 6]).unwrap(), vec![0.4; 3]);
        assert!(matches!(coarse_grain(&[1.0, 2.0, 3.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn sampler_conserves_mean() {
        let ens = CanonicalEnsemble::new(8, 0.3, make_double_well()).unwrap();
        let b = sample_canonical(&ens, &SamplerConfig { n_samples: 500, burn_in: 50, ..Default::default() }).unwrap();
        for r in b.rows() {
            assert!((stats::mean(r) - 0.3).abs() <= 1e-10);
        }
        assert!(b.ess <= b.n_samples as f64);
        assert!(b.tuning_warning.is_none());
    }

    #[test]
    fn gaussian_pair_variance() {
        let ens = CanonicalEnsemble::new(2, 0.0, PotentialSpec::gaussian()).unwrap();
        let b = sample_canonical(&ens, &SamplerConfig { n_samples: 40_000, step_scale: 1.5, seed: 3, ..Default::default() })
            .unwrap();
        let sq: Vec<f64> = b.column(0).iter().map(|v| v * v).collect();
        let e = stats::chain_mean_se(&sq);
        assert!((e.value - 0.5).abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn tiny_steps_raise_a_tuning_warning() {
        let ens = CanonicalEnsemble::new(4, 0.0, PotentialSpec::gaussian()).unwrap();
        let b = sample_canonical(&ens, &SamplerConfig { n_samples: 200, step_scale: 1e-4, burn_in: 10, ..Default::default() })
            .unwrap();
        assert!(b.tuning_warning.is_some());
    }

    #[test]
    fn batch_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let ens = CanonicalEnsemble::new(4, 1.0, PotentialSpec::gaussian()).unwrap();
        let b = sample_canonical(&ens, &SamplerConfig { n_samples: 20, burn_in: 5, seed: 11, ..Default::default() }).unwrap();
        b.save(&path).unwrap();
        let back = SampleBatch::load(&path).unwrap();
        assert_eq!(back, b);
        let raw = fs::read(&path).unwrap();
        assert_eq!(&raw[..8], BATCH_MAGIC);
        assert_eq!(raw.len(), 32 + 8 * 20 * 4);
    }

    #[test]
    fn gaussian_conditional() {
        for y in [-1.0, 0.0, 2.5] {
            let c = two_site_conditional(&PotentialSpec::gaussian(), y, 4001).unwrap();
            assert!((c.total_mass() - 1.0).abs() < 1e-12);
            assert!((c.moment(2) - 0.5).abs() < 1e-5, "{}", c.moment(2));
            assert!(c.moment(1).abs() < 1e-10 && c.moment(3).abs() < 1e-10);
        }
    }

    #[test]
    fn double_well_conditional_is_symmetric() {
        let c = two_site_conditional(&make_double_well(), 0.3, 2001).unwrap();
        assert!(c.moment(1).abs() < 1e-10 && c.moment(3).abs() < 1e-10);
        let m = c.to_measure();
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_identity() {
        let ens = CanonicalEnsemble::new(4, 0.0, make_double_well()).unwrap();
        let r = check_gradient_identity(&ens, &ConstantFunction(1.0), &[0.2, -0.2], &GradientCheckConfig { n_mc: 2000, ..Default::default() })
            .unwrap();
        for (l, rr) in r.lhs.iter().zip(&r.rhs) {
            assert!(l.abs() < 1e-12 && rr.abs() < 1e-12);
        }
    }

    #[test]
    fn linear_function_gaussian_identity() {
        let ens = CanonicalEnsemble::new(4, 0.0, PotentialSpec::gaussian()).unwrap();
        let f = LinearFunction { offset: 10.0, coefficients: vec![1.0, -0.5, 0.3, 2.0] };
        let r = check_gradient_identity(&ens, &f, &[0.4, -0.1], &GradientCheckConfig { n_mc: 5000, ..Default::default() }).unwrap();
        // f̄(y) = 10 + 0.5 y_1 + 2.3 y_2
        assert!((r.lhs[0] - 0.5).abs() < 1e-4 && (r.lhs[1] - 2.3).abs() < 1e-4, "{r:?}");
        assert!(r.max_z() <= 3.0 || r.residual.iter().all(|v| v.abs() < 1e-9), "{r:?}");
    }

    #[test]
    fn nonlinear_double_well_identity() {
        let ens = CanonicalEnsemble::new(4, 0.0, make_double_well()).unwrap();
        let r = check_gradient_identity(&ens, &ExpSineSum(0.1), &[0.3, -0.3], &GradientCheckConfig { n_mc: 20_000, seed: 5, ..Default::default() })
            .unwrap();
        assert!(!r.inconclusive);
        assert!(r.max_z() <= 3.0, "{r:?}");
    }

    #[test]
    fn norm_inequalities_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let q = rng.random_range(1.0..2.0);
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (a, b, full) = coarse_norms(&x, q).unwrap();
            let c = norm_constant(q);
            assert!(a <= c * full && b <= c / 2f64.powf(q) * full);
        }
    }
}
