//! Conservative Kawasaki dynamics `dX = -A∇H(X) dt + √(2A) dB` on the
//! periodic lattice, with `A` the discrete Laplacian, and its Wasserstein
//! decay to the canonical ensemble.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{CanonicalEnsemble, SampleBatch};
use crate::error::{Error, Result};
use crate::potential::SingleSite;
use crate::renorm::coarse_grained_direct;
use crate::grid::UniformGrid;
use crate::quad::QuadratureSpec;
use crate::stats;
use crate::transport::{self, WassersteinResult};

/// `A_ij = 2δ_ij - δ_{i,j+1} - δ_{i,j-1}` with periodic indices.
pub fn discrete_laplacian(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Shape(format!("lattice needs N >= 2, got {n}")));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] += 2.0;
        a[(i, (i + 1) % n)] -= 1.0;
        a[(i, (i + n - 1) % n)] -= 1.0;
    }
    Ok(a)
}

/// Eigenvalues `2 - 2cos(2πk/N)`, `k = 0..N`.
pub fn laplacian_eigenvalues(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect()
}

/// Symmetric square root of a positive semidefinite matrix; eigenvalues
/// within rounding of zero map to zero.
pub fn operator_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Input("square root of a non-square matrix".into()));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Input("matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(a.clone());
    let tol = 1e-12 * scale;
    if let Some(v) = eig.eigenvalues.iter().find(|&&v| v < -tol) {
        return Err(Error::Input(format!("matrix has negative eigenvalue {v}")));
    }
    let roots = eig.eigenvalues.map(|v| if v <= tol { 0.0 } else { v.sqrt() });
    let s = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialLaw {
    /// Every path starts at `m + amplitude · (1, -1, 1, -1, ...)`, projected
    /// onto the hyperplane (odd N).
    Shifted { amplitude: f64 },
    /// Every path starts at the given configuration, projected.
    Point { configuration: Vec<f64> },
    /// `(m, ..., m) + scale · Πξ`, `Π` the projection onto `{Σv = 0}`.
    Gaussian { scale: f64 },
    /// Rows of a supplied equilibrium batch.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KawasakiConfig {
    pub n: usize,
    pub h: f64,
    pub t_end: f64,
    pub n_paths: usize,
    /// Number of equally spaced checkpoints in `[0, t_end]`, both ends included.
    pub n_checkpoints: usize,
    pub initial_law: InitialLaw,
    pub seed: u64,
    /// Re-project onto the hyperplane after every step (rounding guard).
    #[serde(default = "yes")]
    pub reproject: bool,
}

fn yes() -> bool {
    true
}

impl KawasakiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Shape(format!("lattice needs N >= 2, got {}", self.n)));
        }
        let norm = laplacian_eigenvalues(self.n).into_iter().fold(0.0, f64::max);
        if !(self.h > 0.0) || self.h > 0.1 / norm {
            return Err(Error::Input(format!("time step {} must lie in (0, {}]", self.h, 0.1 / norm)));
        }
        if !(self.t_end >= 0.0) || self.n_paths == 0 || self.n_checkpoints < 2 {
            return Err(Error::Input("need t_end >= 0, n_paths >= 1 and at least two checkpoints".into()));
        }
        Ok(())
    }

    /// Step indices of the checkpoints (strictly increasing).
    pub fn checkpoint_steps(&self) -> Vec<usize> {
        let total = (self.t_end / self.h).round() as usize;
        let mut steps: Vec<usize> =
            (0..self.n_checkpoints).map(|k| (total as f64 * k as f64 / (self.n_checkpoints - 1) as f64).round() as usize).collect();
        steps.dedup();
        steps
    }
}

/// Configurations of all paths at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub batch: SampleBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub checkpoints: Vec<Checkpoint>,
    /// Largest `|mean(X) - m|` seen right after a step, before re-projection.
    pub max_step_drift: f64,
    /// `|mean(X_T) - m|` over all paths at the horizon.
    pub final_drift: f64,
}

/// Blow-up guard on `|x_i|`.
pub const BLOW_UP: f64 = 1e3;

fn initial_configurations<V: SingleSite>(
    ens: &CanonicalEnsemble<V>,
    cfg: &KawasakiConfig,
    equilibrium: Option<&SampleBatch>,
) -> Result<Vec<Vec<f64>>> {
    let n = cfg.n;
    let m = ens.m();
    let project = |mut x: Vec<f64>| {
        let d = stats::mean(&x) - m;
        x.iter_mut().for_each(|v| *v -= d);
        x
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    Ok(match &cfg.initial_law {
        InitialLaw::Shifted { amplitude } => {
            let x = (0..n).map(|i| m + if i % 2 == 0 { *amplitude } else { -amplitude }).collect();
            vec![project(x); cfg.n_paths]
        }
        InitialLaw::Point { configuration } => {
            if configuration.len() != n {
                return Err(Error::SizeMismatch(configuration.len(), n));
            }
            vec![project(configuration.clone()); cfg.n_paths]
        }
        InitialLaw::Gaussian { scale } => (0..cfg.n_paths)
            .map(|_| {
                let xi: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let mu = stats::mean(&xi);
                xi.iter().map(|v| m + scale * (v - mu)).collect()
            })
            .collect(),
        InitialLaw::Equilibrium => {
            let b = equilibrium.ok_or_else(|| Error::Input("equilibrium start needs a sample batch".into()))?;
            if b.dim != n || b.n_samples < cfg.n_paths {
                return Err(Error::Shape(format!("equilibrium batch {}×{} cannot start {} paths of size {n}", b.n_samples, b.dim, cfg.n_paths)));
            }
            b.rows().take(cfg.n_paths).map(|r| r.to_vec()).collect()
        }
    })
}

/// Euler–Maruyama paths `X ← X - h A∇H(X) + √(2h) S ξ`, stored only at the
/// checkpoints. Path `k` uses its own ChaCha stream, so results do not depend
/// on the thread count.
pub fn simulate<V: SingleSite>(
    ens: &CanonicalEnsemble<V>,
    cfg: &KawasakiConfig,
    equilibrium: Option<&SampleBatch>,
) -> Result<Trajectory> {
    cfg.validate()?;
    if ens.n() != cfg.n {
        return Err(Error::SizeMismatch(ens.n(), cfg.n));
    }
    let n = cfg.n;
    let m = ens.m();
    let a = discrete_laplacian(n)?;
    let s = operator_sqrt(&a)?;
    let s: Vec<f64> = (0..n * n).map(|k| s[(k / n, k % n)]).collect();
    let psi = ens.potential();
    let noise = (2.0 * cfg.h).sqrt();
    let steps = cfg.checkpoint_steps();
    let starts = initial_configurations(ens, cfg, equilibrium)?;

    let paths: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(k, mut x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let mut stored = Vec::with_capacity(steps.len() * n);
            let mut g = vec![0.0; n];
            let mut xi = vec![0.0; n];
            let mut max_drift: f64 = 0.0;
            let mut step = 0;
            for &target in &steps {
                while step < target {
                    for i in 0..n {
                        g[i] = psi.derivative(x[i]);
                        xi[i] = rng.sample(StandardNormal);
                    }
                    for i in 0..n {
                        let drift = if n == 2 {
                            2.0 * (g[i] - g[1 - i])
                        } else {
                            2.0 * g[i] - g[(i + 1) % n] - g[(i + n - 1) % n]
                        };
                        let row = &s[i * n..(i + 1) * n];
                        let kick: f64 = row.iter().zip(&xi).map(|(a, b)| a * b).sum();
                        x[i] += -cfg.h * drift + noise * kick;
                    }
                    let d = stats::mean(&x) - m;
                    max_drift = max_drift.max(d.abs());
                    if cfg.reproject {
                        x.iter_mut().for_each(|v| *v -= d);
                    }
                    if let Some(v) = x.iter().find(|v| !(v.abs() <= BLOW_UP)) {
                        return Err(Error::BlowUp { step, value: *v });
                    }
                    step += 1;
                }
                stored.extend_from_slice(&x);
            }
            Ok((stored, max_drift))
        })
        .collect::<Result<_>>()?;

    let max_step_drift = paths.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut checkpoints = Vec::with_capacity(steps.len());
    for (c, &st) in steps.iter().enumerate() {
        let mut data = Vec::with_capacity(cfg.n_paths * n);
        for (stored, _) in &paths {
            data.extend_from_slice(&stored[c * n..(c + 1) * n]);
        }
        checkpoints.push(Checkpoint { t: st as f64 * cfg.h, batch: SampleBatch::from_rows(n, data, cfg.seed)? });
    }
    let last = &checkpoints.last().expect("at least two checkpoints").batch;
    let final_drift = last.rows().map(|r| (stats::mean(r) - m).abs()).fold(0.0, f64::max);
    Ok(Trajectory { checkpoints, max_step_drift, final_drift })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMethod {
    /// `N = 2` only: configurations are `(m + u, m - u)`, so
    /// `W_p^p = 2 W_p^p(u-marginals)` and the 1D coupling is exact.
    Quantile,
    Matching,
    Sinkhorn { epsilon: f64 },
}

fn batch_cost(a: &SampleBatch, b: &SampleBatch, p: f64, method: TransportMethod) -> Result<WassersteinResult> {
    match method {
        TransportMethod::Quantile => {
            if a.dim != 2 || b.dim != 2 {
                return Err(Error::Shape("quantile transport of configurations needs N = 2".into()));
            }
            let mut w = transport::wasserstein_1d(&a.column(0), &b.column(0), p)?;
            w.cost *= 2.0;
            w.value = w.cost.powf(1.0 / p);
            Ok(w)
        }
        TransportMethod::Matching => transport::wasserstein_matching(&a.data, &b.data, a.dim, p),
        TransportMethod::Sinkhorn { epsilon } => transport::wasserstein_sinkhorn(&a.data, &b.data, a.dim, p, epsilon, 100_000),
    }
}

fn cost_with_se<R: Rng>(a: &SampleBatch, b: &SampleBatch, p: f64, method: TransportMethod, n_boot: usize, rng: &mut R) -> Result<(f64, f64)> {
    let c = batch_cost(a, b, p, method)?.cost;
    if n_boot < 2 {
        return Ok((c, 0.0));
    }
    let mut reps = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        reps.push(batch_cost(&transport::resample(a, rng), &transport::resample(b, rng), p, method)?.cost);
    }
    Ok((c, stats::variance(&reps).sqrt()))
}

/// `W_p` to equilibrium over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub n: usize,
    pub m: f64,
    pub p: f64,
    pub h: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    /// `W_p` per checkpoint.
    pub wp_values: Vec<f64>,
    /// Bootstrap SE of `W_p`.
    pub wp_se: Vec<f64>,
    /// `W_p^p` between two independent equilibrium batches.
    pub noise_floor: f64,
    /// Decay rate of `W_p^p`: minus the least-squares slope of `log W_p^p`
    /// against `t` over the checkpoints where `W_p^p > 3 × noise_floor`.
    pub fitted_rate: f64,
    pub fit_r2: f64,
    pub fit_points: usize,
    pub inconclusive: bool,
    /// `Ent_μ(f_0)` when the initial law has a closed-form density.
    pub initial_entropy: Option<f64>,
}

#[derive(Serialize)]
struct TraceHeader<'a> {
    #[serde(rename = "N")]
    n: usize,
    m: f64,
    p: f64,
    h: f64,
    seed: u64,
    fitted_rate: f64,
    fit_r2: f64,
    initial_entropy: Option<f64>,
    noise_floor: f64,
    inconclusive: bool,
    method: &'a str,
}

impl DecayTrace {
    /// JSON header line (prefixed by `#`) followed by `t,wp,wp_se` rows.
    pub fn write_csv<W: Write>(&self, mut out: W, method: &str) -> Result<()> {
        let header = TraceHeader {
            n: self.n,
            m: self.m,
            p: self.p,
            h: self.h,
            seed: self.seed,
            fitted_rate: self.fitted_rate,
            fit_r2: self.fit_r2,
            initial_entropy: self.initial_entropy,
            noise_floor: self.noise_floor,
            inconclusive: self.inconclusive,
            method,
        };
        writeln!(out, "# {}", serde_json::to_string(&header)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "wp", "wp_se"])?;
        for i in 0..self.times.len() {
            w.serialize((self.times[i], self.wp_values[i], self.wp_se[i]))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ordinary least squares `y = a + b t`: `(b, r²)`.
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let tm = stats::mean(t);
    let ym = stats::mean(y);
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Inputs of a decay experiment besides the dynamics.
#[derive(Debug, Clone, Copy)]
pub struct DecayReferences<'a> {
    /// Equilibrium batch the checkpoints are compared with (`n_paths` rows).
    pub reference: &'a SampleBatch,
    /// Independent equilibrium batch for the noise floor.
    pub second_reference: &'a SampleBatch,
    /// Start for [`InitialLaw::Equilibrium`].
    pub start: Option<&'a SampleBatch>,
}

/// Simulate and measure `W_p(law(X_t), μ_{N,m})` at each checkpoint.
pub fn decay_experiment<V: SingleSite>(
    ens: &CanonicalEnsemble<V>,
    cfg: &KawasakiConfig,
    p: f64,
    method: TransportMethod,
    refs: DecayReferences<'_>,
    n_boot: usize,
) -> Result<DecayTrace> {
    let traj = simulate(ens, cfg, refs.start)?;
    let reference: SampleBatch = truncate(refs.reference, cfg.n_paths)?;
    let second: SampleBatch = truncate(refs.second_reference, cfg.n_paths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let noise_floor = batch_cost(&reference, &second, p, method)?.cost;
    let costs: Vec<(f64, f64)> = traj
        .checkpoints
        .iter()
        .map(|c| cost_with_se(&c.batch, &reference, p, method, n_boot, &mut rng))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = traj.checkpoints.iter().map(|c| c.t).collect();
    let wp_values: Vec<f64> = costs.iter().map(|c| c.0.powf(1.0 / p)).collect();
    // delta method: se(W) = se(W^p) / (p W^{p-1})
    let wp_se: Vec<f64> = costs
        .iter()
        .zip(&wp_values)
        .map(|((_, se), w)| if *w > 0.0 { se / (p * w.powf(p - 1.0)) } else { 0.0 })
        .collect();
    let window: Vec<usize> = (0..costs.len()).take_while(|&i| costs[i].0 > 3.0 * noise_floor).collect();
    let (fitted_rate, fit_r2, inconclusive) = if window.len() >= 3 {
        let t: Vec<f64> = window.iter().map(|&i| times[i]).collect();
        let y: Vec<f64> = window.iter().map(|&i| costs[i].0.ln()).collect();
        let (slope, r2) = linear_fit(&t, &y);
        (-slope, r2, false)
    } else {
        (f64::NAN, f64::NAN, true)
    };
    let initial_entropy = match &cfg.initial_law {
        InitialLaw::Equilibrium => Some(0.0),
        InitialLaw::Gaussian { scale } => gaussian_start_entropy(ens, *scale, &traj.checkpoints[0].batch).ok(),
        _ => None,
    };
    Ok(DecayTrace {
        n: cfg.n,
        m: ens.m(),
        p,
        h: cfg.h,
        seed: cfg.seed,
        times,
        wp_values,
        wp_se,
        noise_floor,
        fitted_rate,
        fit_r2,
        fit_points: window.len(),
        inconclusive,
        initial_entropy,
    })
}

fn truncate(b: &SampleBatch, n: usize) -> Result<SampleBatch> {
    if b.n_samples < n {
        return Err(Error::Shape(format!("reference batch has {} rows, need {n}", b.n_samples)));
    }
    SampleBatch::from_rows(b.dim, b.data[..n * b.dim].to_vec(), b.seed)
}

/// `log Z_{N,m} = log ∫_{X_{N,m}} exp(-H)` (surface measure) for `N ∈ {2, 4}`.
pub fn log_partition<V: SingleSite + ?Sized>(psi: &V, n: usize, m: f64) -> Result<f64> {
    if n != 2 && n != 4 {
        return Err(Error::Input(format!("partition function by quadrature needs N = 2 or 4, got {n}")));
    }
    let grid = UniformGrid::new(m - 0.1, m + 0.1, 5)?;
    let t = coarse_grained_direct(psi, n, &grid, &QuadratureSpec::default().with_rel_tol(1e-12))?;
    Ok(-(n as f64) * (t.values()[2] + t.normalization_offset()))
}

/// `Ent_μ(f_0)` for the projected Gaussian start `(m, ..., m) + sΠξ`:
/// `E_ν[log ν] + E_ν[H] + log Z`, the energy averaged over the start batch.
pub fn gaussian_start_entropy<V: SingleSite>(ens: &CanonicalEnsemble<V>, scale: f64, start: &SampleBatch) -> Result<f64> {
    let n = ens.n();
    let d = (n - 1) as f64;
    let neg_entropy = -0.5 * d * ((2.0 * std::f64::consts::PI * scale * scale).ln() + 1.0);
    let energy = stats::mean(&start.rows().map(|r| ens.hamiltonian(r)).collect::<Vec<_>>());
    Ok(neg_entropy + energy + log_partition(ens.potential(), n, ens.m())?)
}

/// `N`, fitted rate and `N² × rate` for the scaling trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub fitted_rate: f64,
    pub scaled_rate: f64,
    pub fit_r2: f64,
}

pub fn scaling_report(traces: &[DecayTrace]) -> Vec<ScalingRow> {
    traces
        .iter()
        .map(|t| ScalingRow { n: t.n, fitted_rate: t.fitted_rate, scaled_rate: (t.n * t.n) as f64 * t.fitted_rate, fit_r2: t.fit_r2 })
        .collect()
}

/// Quadratic observable `φ(x) = ½ xᵀQx + bᵀx` with symmetric `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub q: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let mut v = 0.0;
        for i in 0..n {
            v += self.b[i] * x[i];
            for j in 0..n {
                v += 0.5 * x[i] * self.q[(i, j)] * x[j];
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len()).map(|i| self.b[i] + (0..x.len()).map(|j| self.q[(i, j)] * x[j]).sum::<f64>()).collect()
    }
}

/// `Lφ(x) = -⟨A∇H(x), ∇φ(x)⟩ + tr(A ∇²φ)`.
pub fn generator<V: SingleSite>(ens: &CanonicalEnsemble<V>, a: &DMatrix<f64>, phi: &Quadratic, x: &[f64]) -> f64 {
    let n = x.len();
    let g = ens.gradient(x);
    let dphi = phi.gradient(x);
    let mut drift = 0.0;
    for i in 0..n {
        let agi: f64 = (0..n).map(|j| a[(i, j)] * g[j]).sum();
        drift -= agi * dphi[i];
    }
    let trace: f64 = (0..n).map(|i| (0..n).map(|j| a[(i, j)] * phi.q[(j, i)]).sum::<f64>()).sum();
    drift + trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCheck {
    /// `(E φ(X_t) - E φ(X_0)) / t` from paths.
    pub slope: f64,
    pub slope_se: f64,
    /// `E[Lφ(X_0)]`.
    pub generator: f64,
    pub generator_se: f64,
    pub t: f64,
    pub z: f64,
    pub pass: bool,
}

/// Finite-time slope of `E φ(X_t)` against the generator at the start.
pub fn generator_consistency<V: SingleSite>(ens: &CanonicalEnsemble<V>, cfg: &KawasakiConfig, phi: &Quadratic, start: Option<&SampleBatch>) -> Result<GeneratorCheck> {
    let a = discrete_laplacian(cfg.n)?;
    let traj = simulate(ens, &KawasakiConfig { n_checkpoints: 2, ..cfg.clone() }, start)?;
    let x0 = &traj.checkpoints[0];
    let xt = &traj.checkpoints[1];
    let t = xt.t - x0.t;
    let increments: Vec<f64> = x0.batch.rows().zip(xt.batch.rows()).map(|(a, b)| (phi.value(b) - phi.value(a)) / t).collect();
    let gen: Vec<f64> = x0.batch.rows().map(|r| generator(ens, &a, phi, r)).collect();
    let s = stats::mean_se(&increments);
    let g = stats::mean_se(&gen);
    let diff: Vec<f64> = increments.iter().zip(&gen).map(|(a, b)| a - b).collect();
    let d = stats::mean_se(&diff);
    let z = d.value / d.std_error;
    Ok(GeneratorCheck { slope: s.value, slope_se: s.std_error, generator: g.value, generator_se: g.std_error, t, z, pass: z.abs() <= 3.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_canonical, SamplerConfig};
    use crate::potential::{make_double_well, PotentialSpec};

    #[test]
    fn laplacian_examples() {
        let a2 = discrete_laplacian(2).unwrap();
        assert_eq!(a2, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        let a4 = discrete_laplacian(4).unwrap();
        let mut eig: Vec<f64> = SymmetricEigen::new(a4.clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        for (e, x) in eig.iter().zip([0.0, 2.0, 2.0, 4.0]) {
            assert!((e - x).abs() < 1e-12);
        }
        let mut analytic = laplacian_eigenvalues(4);
        analytic.sort_by(f64::total_cmp);
        assert!(analytic.iter().zip([0.0, 2.0, 2.0, 4.0]).all(|(a, b)| (a - b).abs() < 1e-12));
        for n in [3, 5, 8] {
            let a = discrete_laplacian(n).unwrap();
            assert!((a * DMatrix::from_element(n, 1, 1.0)).amax() == 0.0);
        }
    }

    #[test]
    fn sqrt_reconstructs() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((operator_sqrt(&id).unwrap() - &id).amax() < 1e-14);
        for n in [2, 4, 8, 16] {
            let a = discrete_laplacian(n).unwrap();
            let s = operator_sqrt(&a).unwrap();
            assert!((&s * &s - &a).amax() <= 1e-10);
            assert!((&s * DMatrix::from_element(n, 1, 1.0)).amax() < 1e-12);
        }
        assert!(operator_sqrt(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
    }

    fn config(n: usize, h: f64, t_end: f64, n_paths: usize, law: InitialLaw) -> KawasakiConfig {
        KawasakiConfig { n, h, t_end, n_paths, n_checkpoints: 11, initial_law: law, seed: 7, reproject: true }
    }

    #[test]
    fn step_size_is_validated() {
        assert!(config(4, 0.05, 1.0, 1, InitialLaw::Shifted { amplitude: 0.0 }).validate().is_err());
        assert!(config(4, 0.025, 1.0, 1, InitialLaw::Shifted { amplitude: 0.0 }).validate().is_ok());
    }

    #[test]
    fn constants_are_stationary_without_noise_drift() {
        // Gaussian ψ: A∇H at a constant configuration is m·A·1 = 0.
        let ens = CanonicalEnsemble::new(4, 0.7, PotentialSpec::gaussian()).unwrap();
        let x = vec![0.7; 4];
        let g = ens.gradient(&x);
        let a = discrete_laplacian(4).unwrap();
        let drift = &a * DMatrix::from_column_slice(4, 1, &g);
        assert!(drift.amax() < 1e-15);
    }

    #[test]
    fn mean_is_conserved_without_projection() {
        let ens = CanonicalEnsemble::new(8, 0.2, make_double_well()).unwrap();
        let mut cfg = config(8, 1e-3, 10.0, 4, InitialLaw::Gaussian { scale: 0.5 });
        cfg.reproject = false;
        let t = simulate(&ens, &cfg, None).unwrap();
        assert!(t.final_drift <= 1e-8, "{}", t.final_drift);
        assert!(t.max_step_drift <= 1e-8);
    }

    #[test]
    fn blow_up_is_reported() {
        let ens = CanonicalEnsemble::new(2, 0.0, make_double_well()).unwrap();
        let cfg = config(2, 0.025, 1.0, 2, InitialLaw::Shifted { amplitude: 30.0 });
        assert!(matches!(simulate(&ens, &cfg, None), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let ens = CanonicalEnsemble::new(4, 0.0, make_double_well()).unwrap();
        let cfg = config(4, 1e-3, 0.2, 16, InitialLaw::Gaussian { scale: 0.3 });
        let a = simulate(&ens, &cfg, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate(&ens, &cfg, None).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_pair_decay_rate() {
        let ens = CanonicalEnsemble::new(2, 0.0, PotentialSpec::gaussian()).unwrap();
        let sampler = SamplerConfig { n_samples: 4000, step_scale: 1.5, burn_in: 500, thinning: 2, seed: 1 };
        let r1 = sample_canonical(&ens, &sampler).unwrap();
        let r2 = sample_canonical(&ens, &SamplerConfig { seed: 2, ..sampler }).unwrap();
        let cfg = KawasakiConfig { n_checkpoints: 9, ..config(2, 1e-3, 0.8, 4000, InitialLaw::Shifted { amplitude: 3.0 }) };
        let refs = DecayReferences { reference: &r1, second_reference: &r2, start: None };
        let trace = decay_experiment(&ens, &cfg, 2.0, TransportMethod::Quantile, refs, 0).unwrap();
        assert!(!trace.inconclusive);
        let lambda = trace.fitted_rate / 2.0;
        assert!((lambda - 4.0).abs() <= 0.8, "{trace:?}");
    }

    #[test]
    fn generator_matches_quadratic_slope() {
        let ens = CanonicalEnsemble::new(2, 0.0, make_double_well()).unwrap();
        let phi = Quadratic { q: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]), b: vec![0.5, -0.2] };
        let cfg = KawasakiConfig { n_checkpoints: 2, ..config(2, 1e-4, 2e-3, 200_000, InitialLaw::Gaussian { scale: 0.6 }) };
        let r = generator_consistency(&ens, &cfg, &phi, None).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn pair_partition_function() {
        // Gaussian on the line x1 + x2 = 0: ∫ exp(-u²) √2 du = √(2π)
        let z = log_partition(&PotentialSpec::gaussian(), 2, 0.0).unwrap();
        assert!((z - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-9);
        // N = 4: (2π)^{3/2} / 2 · exp(-2m²), the slice of N(0, I_4)
        let m = 0.3;
        let z4 = log_partition(&PotentialSpec::gaussian(), 4, m).unwrap();
        let expected = 1.5 * (2.0 * std::f64::consts::PI).ln() - 2.0 * m * m;
        assert!((z4 - expected).abs() < 1e-8, "{z4} vs {expected}");
    }
}
