//! Entropy and modified log-Sobolev functionals.
//!
//! A measure satisfies the p-modified log-Sobolev inequality with constant
//! `ρ` when `Ent_μ(f) <= (1/ρ) ∫ |∇f|_q^q / f^{q-1} dμ` for positive `f`,
//! with `1/p + 1/q = 1`. Larger `ρ` is the stronger statement.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::SampleBatch;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::potential::SingleSite;
use crate::stats::{self, Estimate};
use crate::transport;

/// `q = p / (p - 1)`, checked against `1/p + 1/q = 1`.
pub fn dual_exponent(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("exponent p = {p} must be in (1, ∞)")));
    }
    let q = p / (p - 1.0);
    assert!((1.0 / p + 1.0 / q - 1.0).abs() <= 1e-14, "dual exponent bookkeeping for p = {p}");
    Ok(q)
}

/// Finitely supported probability measure on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedMeasure {
    dim: usize,
    /// Row-major support points.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscretizedMeasure {
    /// Weights must be nonnegative and sum to 1 within 1e-12.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(Error::Shape(format!("{} coordinates for {} weights of dimension {dim}", points.len(), weights.len())));
        }
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("negative or NaN weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}")));
        }
        Ok(Self { dim, points, weights })
    }

    /// Normalize nonnegative masses.
    pub fn from_masses(dim: usize, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("total mass {total} cannot be normalized")));
        }
        let mut weights: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let residual = 1.0 - weights.iter().sum::<f64>();
        let k = weights.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        weights[k] += residual;
        Self::new(dim, points, weights)
    }

    /// `exp(-V)` on a uniform grid with trapezoid weights.
    pub fn from_potential<F: Fn(f64) -> f64>(grid: &UniformGrid, v: F) -> Result<Self> {
        let nodes = grid.nodes();
        let vals: Vec<f64> = nodes.iter().map(|&x| -v(x)).collect();
        let shift = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let last = nodes.len() - 1;
        let masses = vals
            .iter()
            .enumerate()
            .map(|(i, g)| (g - shift).exp() * if i == 0 || i == last { 0.5 } else { 1.0 })
            .collect();
        Self::from_masses(1, nodes, masses)
    }

    /// `exp(-ψ)` for a single-site potential on a uniform grid.
    pub fn from_single_site<V: SingleSite + ?Sized>(psi: &V, grid: &UniformGrid) -> Result<Self> {
        Self::from_potential(grid, |x| psi.value(x))
    }

    pub fn standard_gaussian(half_width: f64, n: usize) -> Result<Self> {
        Self::from_potential(&UniformGrid::new(-half_width, half_width, n)?, |x| 0.5 * x * x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expectation<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Product measure on `R^{dim + other.dim}`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let dim = self.dim + other.dim;
        let mut points = Vec::with_capacity(self.len() * other.len() * dim);
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for (x, wx) in self.points().zip(&self.weights) {
            for (y, wy) in other.points().zip(&other.weights) {
                points.extend_from_slice(x);
                points.extend_from_slice(y);
                weights.push(wx * wy);
            }
        }
        Self::from_masses(dim, points, weights)
    }
}

fn check_positive(f: &[f64]) -> Result<()> {
    match f.iter().find(|v| !(**v > 0.0)) {
        Some(v) => Err(Error::Domain(format!("function value {v} is not positive"))),
        None => Ok(()),
    }
}

fn ent_terms(f: &[f64], w: impl Iterator<Item = f64> + Clone) -> f64 {
    let mean: f64 = f.iter().zip(w.clone()).map(|(v, w)| w * v).sum();
    let flogf: f64 = f.iter().zip(w).map(|(v, w)| w * v * v.ln()).sum();
    flogf - mean * mean.ln()
}

/// `Ent_μ(f) = ∫ f log f dμ - (∫ f dμ) log ∫ f dμ`.
pub fn entropy(f: &[f64], measure: &DiscretizedMeasure) -> Result<f64> {
    if f.len() != measure.len() {
        return Err(Error::SizeMismatch(f.len(), measure.len()));
    }
    check_positive(f)?;
    // Scale-free evaluation: Ent(λf) = λ Ent(f).
    let s = f.iter().cloned().fold(0.0, f64::max);
    let g: Vec<f64> = f.iter().map(|v| v / s).collect();
    Ok(s * ent_terms(&g, measure.weights.iter().copied()).max(0.0))
}

/// Empirical entropy over equally weighted samples, with a jackknife SE.
pub fn entropy_empirical(f: &[f64]) -> Result<Estimate> {
    if f.is_empty() {
        return Err(Error::Empty);
    }
    check_positive(f)?;
    let stat = |xs: &[f64]| {
        let n = xs.len() as f64;
        ent_terms(xs, std::iter::repeat_n(1.0 / n, xs.len()))
    };
    Ok(stats::jackknife(f, 20.min(f.len()), stat))
}

fn norm_q(g: &[f64], q: f64) -> f64 {
    g.iter().map(|v| v.abs().powf(q)).sum()
}

/// `∫ |∇f|_q^q / f^{q-1} dμ`, gradients row-major `len × dim`.
pub fn mlsi_energy(f: &[f64], grad: &[f64], measure: &DiscretizedMeasure, q: f64) -> Result<f64> {
    if f.len() != measure.len() {
        return Err(Error::SizeMismatch(f.len(), measure.len()));
    }
    if grad.len() != f.len() * measure.dim {
        return Err(Error::Shape(format!("{} gradient entries for {} points of dimension {}", grad.len(), f.len(), measure.dim)));
    }
    if !(q > 1.0 && q <= 2.0) {
        return Err(Error::Domain(format!("q = {q} outside (1, 2]")));
    }
    check_positive(f)?;
    Ok(f.iter()
        .zip(grad.chunks_exact(measure.dim))
        .zip(&measure.weights)
        .map(|((v, g), w)| w * norm_q(g, q) / v.powf(q - 1.0))
        .sum())
}

/// Empirical version of [`mlsi_energy`] with the naive SE.
pub fn mlsi_energy_empirical(f: &[f64], grad: &[f64], dim: usize, q: f64) -> Result<Estimate> {
    if grad.len() != f.len() * dim || f.is_empty() {
        return Err(Error::Shape("gradient rows do not match samples".into()));
    }
    check_positive(f)?;
    let terms: Vec<f64> = f.iter().zip(grad.chunks_exact(dim)).map(|(v, g)| norm_q(g, q) / v.powf(q - 1.0)).collect();
    Ok(stats::mean_se(&terms))
}

/// Equivalent form: `(Ent(g^q), q^q ∫ |∇g|_q^q dμ)`.
pub fn second_form(g: &[f64], grad_g: &[f64], measure: &DiscretizedMeasure, q: f64) -> Result<(f64, f64)> {
    check_positive(g)?;
    let gq: Vec<f64> = g.iter().map(|v| v.powf(q)).collect();
    let ent = entropy(&gq, measure)?;
    let energy: f64 = grad_g.chunks_exact(measure.dim).zip(&measure.weights).map(|(d, w)| w * norm_q(d, q)).sum();
    Ok((ent, q.powf(q) * energy))
}

/// Scalar direction `g` of an exponential tilt `f = exp(λ g)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Coordinate(usize),
    Difference(usize, usize),
    /// `tanh((x_i - center) / width)`.
    SmoothedIndicator { coordinate: usize, center: f64, width: f64 },
}

impl Direction {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        match *self {
            Direction::Coordinate(i) => {
                grad[i] = 1.0;
                x[i]
            }
            Direction::Difference(i, j) => {
                grad[i] += 1.0;
                grad[j] -= 1.0;
                x[i] - x[j]
            }
            Direction::SmoothedIndicator { coordinate, center, width } => {
                let t = ((x[coordinate] - center) / width).tanh();
                grad[coordinate] = (1.0 - t * t) / width;
                t
            }
        }
    }

    fn id(&self) -> String {
        match self {
            Direction::Coordinate(i) => format!("x{i}"),
            Direction::Difference(i, j) => format!("x{i}-x{j}"),
            Direction::SmoothedIndicator { coordinate, center, width } => format!("tanh((x{coordinate}-{center})/{width})"),
        }
    }
}

/// Exponential tilts `exp(λ g)` over directions and a λ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltFamily {
    pub id: String,
    pub directions: Vec<Direction>,
    pub lambdas: Vec<f64>,
    /// Project gradients onto `{Σv_i = 0}` (tangent space of a canonical ensemble).
    pub tangent_projection: bool,
}

/// `±10^k` for `k` on a uniform grid in `[lo, hi]`.
pub fn log_lambda_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let e = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
        let l = 10f64.powf(e);
        out.push(l);
        out.push(-l);
    }
    out
}

impl TiltFamily {
    /// Coordinates, pairwise differences and smoothed indicators, with
    /// `|λ| ∈ [1e-2, 10]`.
    pub fn default_for(dim: usize) -> Self {
        let mut directions: Vec<Direction> = (0..dim).map(Direction::Coordinate).collect();
        for i in 0..dim {
            for j in i + 1..dim {
                directions.push(Direction::Difference(i, j));
            }
        }
        for i in 0..dim {
            for center in [-1.0, 0.0, 1.0] {
                directions.push(Direction::SmoothedIndicator { coordinate: i, center, width: 0.5 });
            }
        }
        Self { id: "default-tilts".into(), directions, lambdas: log_lambda_grid(-2.0, 1.0, 16), tangent_projection: false }
    }

    pub fn linear(dim: usize, lambdas: Vec<f64>) -> Self {
        Self { id: "linear-tilts".into(), directions: (0..dim).map(Direction::Coordinate).collect(), lambdas, tangent_projection: false }
    }

    /// Evaluated members on the support of `measure`.
    pub fn members(&self, measure: &DiscretizedMeasure) -> Vec<Member> {
        let dim = measure.dim;
        let mut out = Vec::with_capacity(self.directions.len() * self.lambdas.len());
        for d in &self.directions {
            let mut g = Vec::with_capacity(measure.len());
            let mut dg = vec![0.0; measure.len() * dim];
            for (k, x) in measure.points().enumerate() {
                g.push(d.eval(x, &mut dg[k * dim..(k + 1) * dim]));
            }
            if self.tangent_projection {
                for row in dg.chunks_exact_mut(dim) {
                    let mean = row.iter().sum::<f64>() / dim as f64;
                    row.iter_mut().for_each(|v| *v -= mean);
                }
            }
            let gmax = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gmin = g.iter().cloned().fold(f64::INFINITY, f64::min);
            for &l in &self.lambdas {
                // shift the exponent so max f = 1; both functionals are 1-homogeneous
                let top = if l >= 0.0 { l * gmax } else { l * gmin };
                let f: Vec<f64> = g.iter().map(|v| (l * v - top).exp()).collect();
                let grad = dg.iter().enumerate().map(|(i, v)| l * v * f[i / dim]).collect();
                out.push(Member { id: format!("exp({l:.4e}*{})", d.id()), f, grad });
            }
        }
        out
    }
}

/// A positive test function evaluated on a support.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    pub f: Vec<f64>,
    /// Row-major gradients.
    pub grad: Vec<f64>,
}

/// Restricted-family estimate of the best constant: an upper bound on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlsiEstimate {
    pub p: f64,
    pub q: f64,
    pub rho_hat: f64,
    pub family_id: String,
    pub n_functions: usize,
    pub n_skipped: usize,
    pub argmin_id: String,
}

/// Entropies below this are treated as degenerate and skipped.
pub const ENTROPY_FLOOR: f64 = 1e-12;

pub fn estimate_best_rho_members(measure: &DiscretizedMeasure, p: f64, family_id: &str, members: &[Member]) -> Result<MlsiEstimate> {
    let q = dual_exponent(p)?;
    let ratios: Vec<Option<(f64, usize)>> = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let ent = entropy(&m.f, measure)?;
            if ent < ENTROPY_FLOOR {
                return Ok(None);
            }
            Ok(Some((mlsi_energy(&m.f, &m.grad, measure, q)? / ent, i)))
        })
        .collect::<Result<_>>()?;
    let used: Vec<(f64, usize)> = ratios.iter().flatten().copied().collect();
    let (rho_hat, idx) = used
        .iter()
        .copied()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(Error::EmptyFamily)?;
    Ok(MlsiEstimate {
        p,
        q,
        rho_hat,
        family_id: family_id.to_string(),
        n_functions: used.len(),
        n_skipped: members.len() - used.len(),
        argmin_id: members[idx].id.clone(),
    })
}

/// `inf energy / entropy` over the tilt family.
pub fn estimate_best_rho(measure: &DiscretizedMeasure, p: f64, family: &TiltFamily) -> Result<MlsiEstimate> {
    estimate_best_rho_members(measure, p, &family.id, &family.members(measure))
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("constant {rho} must be positive")));
    }
    Ok(())
}

/// Constant `(ρ/q)^{q-1}` produced from uniform p-convexity with constant `ρ`.
pub fn bakry_emery(rho: f64, p: f64) -> Result<f64> {
    check_rho(rho)?;
    if p < 2.0 {
        return Err(Error::Domain(format!("p = {p} < 2")));
    }
    let q = dual_exponent(p)?;
    Ok((rho / q).powf(q - 1.0))
}

/// Product measures keep the smaller constant.
pub fn tensorize(rho1: f64, rho2: f64) -> Result<f64> {
    check_rho(rho1)?;
    check_rho(rho2)?;
    Ok(rho1.min(rho2))
}

/// Constant after a bounded perturbation with oscillation `osc`: `e^{-2 osc} ρ`.
pub fn holley_stroock(rho: f64, osc: f64) -> Result<f64> {
    Ok(holley_stroock_report(rho, osc)?.constant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolleyStroock {
    pub rho: f64,
    pub osc: f64,
    /// `e^{-2 osc} ρ`.
    pub constant: f64,
    /// `e^{2 osc} ρ`, which would strengthen the inequality.
    pub literal_formula: f64,
}

pub fn holley_stroock_report(rho: f64, osc: f64) -> Result<HolleyStroock> {
    check_rho(rho)?;
    if !(osc >= 0.0) {
        return Err(Error::Domain(format!("oscillation {osc} is negative")));
    }
    Ok(HolleyStroock { rho, osc, constant: (-2.0 * osc).exp() * rho, literal_formula: (2.0 * osc).exp() * rho })
}

/// Concentration constant `c = (ρ/q)^{p-1}` implied by the Laplace bound.
pub fn concentration_constant(rho: f64, p: f64) -> Result<f64> {
    check_rho(rho)?;
    let q = dual_exponent(p)?;
    Ok((rho / q).powf(p - 1.0))
}

/// Transport constant `((p-1)ρ)^{p-1}`.
pub fn talagrand_constant(rho: f64, p: f64) -> Result<f64> {
    check_rho(rho)?;
    dual_exponent(p)?;
    Ok(((p - 1.0) * rho).powf(p - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub lambda: f64,
    pub log_mgf: f64,
    pub log_bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub rho: f64,
    pub q: f64,
    pub lipschitz: f64,
    pub rows: Vec<LaplaceRow>,
    pub worst_margin: f64,
    pub pass: bool,
}

impl LaplaceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "log_mgf", "log_bound", "margin"])?;
        for r in &self.rows {
            w.serialize((r.lambda, r.log_mgf, r.log_bound, r.margin))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `log ∫ e^{λ(f - ∫f)} dμ <= λ^q / (ρ(q-1))` for a 1-Lipschitz `f` on a 1D measure.
pub fn laplace_bound_check<F: Fn(f64) -> f64>(measure: &DiscretizedMeasure, f: F, rho: f64, q: f64, lambdas: &[f64]) -> Result<LaplaceReport> {
    check_rho(rho)?;
    if measure.dim != 1 {
        return Err(Error::Shape(format!("Laplace check is one-dimensional, got dimension {}", measure.dim)));
    }
    if !(q > 1.0) {
        return Err(Error::Domain(format!("q = {q} must exceed 1")));
    }
    let mut pts: Vec<(f64, f64)> = measure.points.iter().map(|&x| (x, f(x))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lipschitz = pts
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| (w[1].1 - w[0].1).abs() / (w[1].0 - w[0].0))
        .fold(0.0, f64::max);
    if lipschitz > 1.0 + 1e-9 {
        return Err(Error::Lipschitz(lipschitz));
    }
    let vals: Vec<f64> = measure.points.iter().map(|&x| f(x)).collect();
    let mean: f64 = vals.iter().zip(&measure.weights).map(|(v, w)| v * w).sum();
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if l < 0.0 {
            return Err(Error::Domain(format!("λ = {l} is negative")));
        }
        let expo: Vec<f64> = vals.iter().map(|v| l * (v - mean)).collect();
        let shift = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = expo.iter().zip(&measure.weights).map(|(e, w)| w * (e - shift).exp()).sum();
        let log_mgf = s.ln() + shift;
        let log_bound = l.powf(q) / (rho * (q - 1.0));
        rows.push(LaplaceRow { lambda: l, log_mgf, log_bound, margin: log_bound - log_mgf });
    }
    let worst_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(LaplaceReport { rho, q, lipschitz, pass: worst_margin >= -1e-9, worst_margin, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub r: f64,
    pub exceedances: usize,
    pub frequency: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub c: f64,
    pub p: f64,
    pub n: usize,
    /// Sample size used for the confidence intervals.
    pub effective_n: f64,
    pub mean: f64,
    pub rows: Vec<TailRow>,
    pub pass: bool,
    /// Row with the smallest `bound - ci_low`.
    pub worst_r: f64,
}

impl ConcentrationReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "exceedances", "frequency", "ci_low", "ci_high", "bound", "pass"])?;
        for t in &self.rows {
            w.serialize((t.r, t.exceedances, t.frequency, t.ci_low, t.ci_high, t.bound, t.pass))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Wilson intervals use this many standard deviations.
pub const TAIL_CI_Z: f64 = 3.0;

/// Empirical `μ(f >= ∫f + r)` against `exp(-c r^p / (p (p-1)^{p-1}))`.
/// `values` are `f` at the samples; `effective_n` (≤ n) scales the intervals
/// for correlated samples. A row fails only if the whole interval lies above
/// the bound.
pub fn concentration_check(values: &[f64], effective_n: f64, c: f64, p: f64, r_grid: &[f64]) -> Result<ConcentrationReport> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    dual_exponent(p)?;
    let n = values.len();
    let eff = effective_n.clamp(1.0, n as f64);
    let mean = stats::mean(values);
    let mut rows = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let exceed = values.iter().filter(|&&v| v >= mean + r).count();
        let freq = exceed as f64 / n as f64;
        let scaled_n = eff.round().max(1.0) as usize;
        let (lo, hi) = stats::wilson_interval((freq * scaled_n as f64).round() as usize, scaled_n, TAIL_CI_Z);
        let bound = if r <= 0.0 { 1.0 } else { (-c * r.powf(p) / (p * (p - 1.0).powf(p - 1.0))).exp() };
        rows.push(TailRow { r, exceedances: exceed, frequency: freq, ci_low: lo, ci_high: hi, bound, pass: lo <= bound });
    }
    let pass = rows.iter().all(|t| t.pass);
    let worst_r = rows.iter().min_by(|a, b| (a.bound - a.ci_low).total_cmp(&(b.bound - b.ci_low))).map_or(0.0, |t| t.r);
    Ok(ConcentrationReport { c, p, n, effective_n: eff, mean, rows, pass, worst_r })
}

/// `Ent_μ(ν)` for `dν/dμ ∝ exp(λ g)` from `g` at μ-samples and ν-samples:
/// `λ E_ν[g] - log E_μ[e^{λ g}]`.
pub fn tilted_relative_entropy(g_mu: &[f64], g_nu: &[f64], lambda: f64) -> Result<Estimate> {
    if g_mu.is_empty() || g_nu.is_empty() {
        return Err(Error::Empty);
    }
    let a = stats::mean_se(&g_nu.iter().map(|v| lambda * v).collect::<Vec<_>>());
    let shift = g_mu.iter().map(|v| lambda * v).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = g_mu.iter().map(|v| (lambda * v - shift).exp()).collect();
    let b = stats::mean_se(&e);
    let log_z = b.value.ln() + shift;
    // delta method for the log
    let se_log = b.std_error / b.value;
    Ok(Estimate { value: a.value - log_z, std_error: a.std_error.hypot(se_log) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalagrandReport {
    pub p: f64,
    pub rho_tilde: f64,
    pub transport_cost: f64,
    pub transport_se: f64,
    pub relative_entropy: f64,
    pub entropy_se: f64,
    /// `(p/ρ̃) Ent`.
    pub bound: f64,
    /// `bound - W_p^p`.
    pub margin: f64,
    pub combined_se: f64,
    pub pass: bool,
}

/// `W_p^p(μ, ν) <= (p/ρ̃) Ent_μ(ν)` with `W_p` from the samples. Passes when
/// the margin is at least `-3` combined standard errors.
pub fn talagrand_check(
    mu: &SampleBatch,
    nu: &SampleBatch,
    relative_entropy: Estimate,
    p: f64,
    rho_tilde: f64,
    n_boot: usize,
    seed: u64,
) -> Result<TalagrandReport> {
    check_rho(rho_tilde)?;
    dual_exponent(p)?;
    if mu.dim != nu.dim {
        return Err(Error::SizeMismatch(mu.dim, nu.dim));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = transport::wasserstein_batches(mu, nu, p)?;
    let se = transport::bootstrap_se(mu, nu, p, n_boot, &mut rng)?;
    let bound = p / rho_tilde * relative_entropy.value;
    let combined = se.hypot(p / rho_tilde * relative_entropy.std_error);
    let margin = bound - w.cost;
    Ok(TalagrandReport {
        p,
        rho_tilde,
        transport_cost: w.cost,
        transport_se: se,
        relative_entropy: relative_entropy.value,
        entropy_se: relative_entropy.std_error,
        bound,
        margin,
        combined_se: combined,
        pass: margin >= -3.0 * combined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub total: f64,
    /// `Ent_μ̄(f̄)`.
    pub coarse: f64,
    /// `∫ Ent_{μ(·|y)}(f) μ̄(dy)`.
    pub fluctuation: f64,
    pub residual: f64,
    pub n_blocks: usize,
}

/// `Ent_μ(f) = Ent_μ̄(f̄) + ∫ Ent_{μ(·|y)}(f) μ̄(dy)` on a finite table, with
/// blocks `0..B` given per support point.
pub fn entropy_decomposition_check(joint: &DiscretizedMeasure, partition: &[usize], f: &[f64]) -> Result<DecompositionReport> {
    if partition.len() != joint.len() || f.len() != joint.len() {
        return Err(Error::SizeMismatch(partition.len().max(f.len()), joint.len()));
    }
    check_positive(f)?;
    let n_blocks = partition.iter().max().map_or(0, |m| m + 1);
    let mut mass = vec![0.0; n_blocks];
    let mut count = vec![0usize; n_blocks];
    let mut fmass = vec![0.0; n_blocks];
    for ((&b, w), v) in partition.iter().zip(&joint.weights).zip(f) {
        mass[b] += w;
        fmass[b] += w * v;
        count[b] += 1;
    }
    if let Some(b) = (0..n_blocks).find(|&b| count[b] == 0 || mass[b] <= 0.0) {
        return Err(Error::Partition(format!("block {b} is empty")));
    }
    let fbar: Vec<f64> = (0..n_blocks).map(|b| fmass[b] / mass[b]).collect();
    let coarse_measure = DiscretizedMeasure::from_masses(1, (0..n_blocks).map(|b| b as f64).collect(), mass.clone())?;
    let coarse = entropy(&fbar, &coarse_measure)?;
    let mut fluctuation = 0.0;
    for b in 0..n_blocks {
        let idx: Vec<usize> = (0..joint.len()).filter(|&i| partition[i] == b).collect();
        let cond = DiscretizedMeasure::from_masses(1, idx.iter().map(|&i| i as f64).collect(), idx.iter().map(|&i| joint.weights[i]).collect())?;
        let fb: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        fluctuation += mass[b] * entropy(&fb, &cond)?;
    }
    let total = entropy(f, joint)?;
    Ok(DecompositionReport { total, coarse, fluctuation, residual: total - coarse - fluctuation, n_blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn two_point() -> DiscretizedMeasure {
        DiscretizedMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let m = two_point();
        assert_eq!(entropy(&[3.0, 3.0], &m).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let expected = 0.5 * e - (0.5 + 0.5 * e) * (0.5 + 0.5 * e).ln();
        assert!((entropy(&[1.0, e], &m).unwrap() - expected).abs() < 1e-14);
        assert!(matches!(entropy(&[1.0, 0.0], &m), Err(Error::Domain(_))));
    }

    #[test]
    fn measure_validation() {
        assert!(DiscretizedMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscretizedMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(DiscretizedMeasure::new(2, vec![0.0, 1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn energy_of_exponential() {
        let m = DiscretizedMeasure::standard_gaussian(8.0, 401).unwrap();
        let g: Vec<f64> = m.points().map(|x| (x[0]).sin()).collect();
        let f: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let grad: Vec<f64> = m.points().zip(&f).map(|(x, fv)| x[0].cos() * fv).collect();
        let direct: f64 = m.points().zip(m.weights()).map(|(x, w)| w * x[0].cos().powi(2) * x[0].sin().exp()).sum();
        assert!((mlsi_energy(&f, &grad, &m, 2.0).unwrap() - direct).abs() < 1e-13);
        assert_eq!(mlsi_energy(&[2.0; 401], &vec![0.0; 401], &m, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_rho_is_two() {
        let m = DiscretizedMeasure::standard_gaussian(12.0, 2401).unwrap();
        let est = estimate_best_rho(&m, 2.0, &TiltFamily::linear(1, log_lambda_grid(-2.0, 0.3, 12))).unwrap();
        assert!((est.rho_hat - 2.0).abs() < 1e-6, "{}", est.rho_hat);
        assert_eq!(est.q, 2.0);
    }

    #[test]
    fn constant_family_is_empty() {
        let m = two_point();
        let members = vec![Member { id: "one".into(), f: vec![1.0, 1.0], grad: vec![0.0, 0.0] }];
        assert!(matches!(estimate_best_rho_members(&m, 2.0, "const", &members), Err(Error::EmptyFamily)));
    }

    #[test]
    fn criteria_constants() {
        assert_eq!(bakry_emery(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(bakry_emery(3.0, 2.0).unwrap(), 1.5);
        assert_eq!(tensorize(1.0, 2.0).unwrap(), 1.0);
        assert_eq!(holley_stroock(1.7, 0.0).unwrap(), 1.7);
        let r = holley_stroock_report(1.0, 0.5).unwrap();
        assert!(r.constant < 1.0 && r.literal_formula > 1.0);
        assert!(bakry_emery(0.0, 2.0).is_err() && holley_stroock(-1.0, 0.0).is_err());
        assert!((concentration_constant(2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((talagrand_constant(2.0, 2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_herbst_equality() {
        let m = DiscretizedMeasure::standard_gaussian(12.0, 2401).unwrap();
        let lambdas: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25).collect();
        let r = laplace_bound_check(&m, |x| x, 2.0, 2.0, &lambdas).unwrap();
        assert!(r.pass);
        for row in &r.rows {
            assert!(row.margin.abs() < 1e-9, "{row:?}");
        }
    }

    #[test]
    fn herbst_detects_a_false_constant() {
        let g = UniformGrid::new(-1.0, 1.0, 2001).unwrap();
        let m = DiscretizedMeasure::from_potential(&g, |_| 0.0).unwrap();
        let r = laplace_bound_check(&m, |x| x, 100.0, 2.0, &[0.5, 1.0, 2.0, 4.0]).unwrap();
        assert!(!r.pass && r.worst_margin < 0.0);
        assert!(matches!(laplace_bound_check(&m, |x| 2.0 * x, 1.0, 2.0, &[1.0]), Err(Error::Lipschitz(_))));
    }

    #[test]
    fn gaussian_tails_are_dominated() {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..20000).map(|_| rng.sample(StandardNormal)).collect();
        let r = concentration_check(&xs, xs.len() as f64, 1.0, 2.0, &[0.0, 0.5, 1.0, 2.0, 3.0]).unwrap();
        assert!(r.pass);
        assert_eq!(r.rows[0].bound, 1.0);
    }

    #[test]
    fn decomposition_on_a_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let masses: Vec<f64> = (0..36).map(|_| rng.random_range(0.01..1.0)).collect();
        let points: Vec<f64> = (0..36).map(|i| i as f64).collect();
        let joint = DiscretizedMeasure::from_masses(1, points, masses).unwrap();
        let f: Vec<f64> = (0..36).map(|_| rng.random_range(0.1..5.0)).collect();
        let part: Vec<usize> = (0..36).map(|i| i / 6).collect();
        let r = entropy_decomposition_check(&joint, &part, &f).unwrap();
        assert!(r.residual.abs() <= 1e-12, "{r:?}");
        let one = entropy_decomposition_check(&joint, &vec![0; 36], &f).unwrap();
        assert!(one.coarse.abs() < 1e-15);
        assert!(entropy_decomposition_check(&joint, &(0..36).map(|i| if i < 6 { 0 } else { 2 }).collect::<Vec<_>>(), &f).is_err());
    }

    #[test]
    fn two_forms_agree() {
        let m = DiscretizedMeasure::from_potential(&UniformGrid::new(-4.0, 4.0, 801).unwrap(), |x| x.powi(4)).unwrap();
        let q = dual_exponent(4.0).unwrap();
        for member in TiltFamily::default_for(1).members(&m) {
            let g: Vec<f64> = member.f.iter().map(|v| v.powf(1.0 / q)).collect();
            let dg: Vec<f64> = member.grad.iter().zip(&member.f).map(|(d, v)| d / q * v.powf(1.0 / q - 1.0)).collect();
            let (ent, energy) = second_form(&g, &dg, &m, q).unwrap();
            let e1 = entropy(&member.f, &m).unwrap();
            let en1 = mlsi_energy(&member.f, &member.grad, &m, q).unwrap();
            assert!((ent - e1).abs() <= 1e-10 * (1.0 + e1));
            assert!((energy - en1).abs() <= 1e-10 * (1.0 + en1));
        }
    }

    #[test]
    fn power_measure_has_positive_constant() {
        let m = DiscretizedMeasure::from_potential(&UniformGrid::new(-4.0, 4.0, 801).unwrap(), |x| x.powi(4)).unwrap();
        let est = estimate_best_rho(&m, 4.0, &TiltFamily::default_for(1)).unwrap();
        assert!(est.rho_hat > 0.0);
    }
}
