//! Legendre-transform objects of a single-site potential.
//!
//! `φ*(σ) = log ∫ exp(σx - ψ(x)) dx`, the tilted measures
//! `μ^σ(dx) = exp(σx - ψ(x) - φ*(σ)) dx`, and `φ(m) = sup_σ (σm - φ*(σ))`
//! with `φ'(m) = σ_m`, `φ''(m) = 1 / Var(μ^{σ_m})`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::potential::{SingleSite, TabulatedPotential};
use crate::quad::{self, MassWindow, QuadratureSpec};

/// Moments of `μ^σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedMeasure {
    pub sigma: f64,
    /// `φ*(σ)`.
    pub log_norm: f64,
    pub mean: f64,
    pub variance: f64,
    pub third_central_moment: f64,
}

/// Window carrying the mass of `exp(σx - ψ(x))`. Analytic potentials are
/// re-centered on the tilted mode and widened until both tails are
/// negligible; tabulated ones must fit inside their grid.
pub fn tilted_window<V: SingleSite + ?Sized>(psi: &V, sigma: f64) -> Result<MassWindow> {
    let g = |x: f64| sigma * x - psi.value(x);
    let (mut a, mut b) = psi.domain();
    for _ in 0..60 {
        match quad::mass_window(&g, a, b, true) {
            Err(Error::TailNotNegligible { .. }) if psi.analytic() => {
                let (center, _) = quad::locate_max(&g, a, b, 256);
                let half = 0.75 * (b - a);
                a = center - half;
                b = center + half;
            }
            other => return other,
        }
    }
    Err(Error::TailNotNegligible { at: sigma, window: b - a })
}

/// `μ^σ` with its normalizer and first three central moments.
pub fn tilted_measure<V: SingleSite + ?Sized>(psi: &V, sigma: f64, quad: &QuadratureSpec) -> Result<TiltedMeasure> {
    if !sigma.is_finite() {
        return Err(Error::Input(format!("tilt {sigma} is not finite")));
    }
    let w = tilted_window(psi, sigma)?;
    let c = w.argmax;
    let r = quad::integrate_vec(
        |x| {
            let e = (sigma * x - psi.value(x) - w.shift).exp();
            let d = x - c;
            [e, e * d, e * d * d, e * d * d * d]
        },
        &w.breakpoints(),
        quad,
    )
    .map_err(|e| e.at(sigma))?;
    let [m0, m1, m2, m3] = r.value;
    let mu = m1 / m0;
    let variance = m2 / m0 - mu * mu;
    let third = m3 / m0 - 3.0 * mu * m2 / m0 + 2.0 * mu * mu * mu;
    if !(variance > 0.0) {
        return Err(Error::Solver(format!("non-positive variance {variance} at tilt {sigma}")));
    }
    Ok(TiltedMeasure { sigma, log_norm: m0.ln() + w.shift, mean: c + mu, variance, third_central_moment: third })
}

/// `φ*(σ) = log ∫ exp(σx - ψ(x)) dx`.
pub fn log_mgf<V: SingleSite + ?Sized>(psi: &V, sigma: f64, quad: &QuadratureSpec) -> Result<f64> {
    let w = tilted_window(psi, sigma)?;
    let v = quad::integrate(|x| (sigma * x - psi.value(x) - w.shift).exp(), &w.breakpoints(), quad)
        .map_err(|e| e.at(sigma))?;
    Ok(v.ln() + w.shift)
}

const NEWTON_ITERATIONS: usize = 100;
const MEAN_TOL: f64 = 1e-10;

/// The tilt `σ` with `∫ x μ^σ(dx) = m`.
///
/// Newton on `σ ↦ mean(μ^σ) - m` (derivative `Var(μ^σ)`), safeguarded by a
/// bracket once one is known; falls back to bisection on a geometrically
/// grown bracket.
pub fn tilt_solve<V: SingleSite + ?Sized>(psi: &V, m: f64, quad: &QuadratureSpec) -> Result<TiltedMeasure> {
    if !m.is_finite() {
        return Err(Error::Input(format!("mean {m} is not finite")));
    }
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut sigma = 0.0;
    for _ in 0..NEWTON_ITERATIONS {
        let t = match tilted_measure(psi, sigma, quad) {
            Ok(t) => t,
            Err(_) => break,
        };
        let g = t.mean - m;
        if g.abs() <= MEAN_TOL {
            return Ok(t);
        }
        if g < 0.0 {
            lo = Some(lo.map_or(sigma, |l: f64| l.max(sigma)));
        } else {
            hi = Some(hi.map_or(sigma, |h: f64| h.min(sigma)));
        }
        let step = g / t.variance;
        let cap = 4.0 * (1.0 + sigma.abs());
        let mut next = sigma - step.clamp(-cap, cap);
        if let (Some(l), Some(h)) = (lo, hi) {
            if !(next > l && next < h) {
                next = 0.5 * (l + h);
            }
            if h - l <= 1e-15 * (1.0 + sigma.abs()) {
                return Ok(t);
            }
        }
        if (next - sigma).abs() <= 1e-15 * (1.0 + sigma.abs()) {
            return Ok(t);
        }
        sigma = next;
    }
    bisect_tilt(psi, m, quad)
}

fn bisect_tilt<V: SingleSite + ?Sized>(psi: &V, m: f64, quad: &QuadratureSpec) -> Result<TiltedMeasure> {
    let mean = |s: f64| tilted_measure(psi, s, quad).map(|t| t.mean - m);
    let mut width = 1.0;
    let (mut a, mut b) = (-width, width);
    loop {
        let (ga, gb) = (mean(a)?, mean(b)?);
        if ga <= 0.0 && gb >= 0.0 {
            break;
        }
        width *= 2.0;
        if width > 1e6 {
            return Err(Error::Solver(format!("no tilt bracket for mean {m}")));
        }
        a = -width;
        b = width;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let t = tilted_measure(psi, mid, quad)?;
        let g = t.mean - m;
        if g.abs() <= MEAN_TOL || b - a <= 1e-15 * (1.0 + mid.abs()) {
            return Ok(t);
        }
        if g < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Err(Error::Solver(format!("tilt bisection for mean {m} did not converge")))
}

/// `φ(m) = σ_m m - φ*(σ_m)`.
pub fn phi<V: SingleSite + ?Sized>(psi: &V, m: f64, quad: &QuadratureSpec) -> Result<f64> {
    let t = tilt_solve(psi, m, quad)?;
    Ok(t.sigma * m - t.log_norm)
}

/// `φ''(m) = 1 / Var(μ^{σ_m})`.
pub fn phi_dd<V: SingleSite + ?Sized>(psi: &V, m: f64, quad: &QuadratureSpec) -> Result<f64> {
    Ok(1.0 / tilt_solve(psi, m, quad)?.variance)
}

/// `φ'''(m) = -κ₃ / Var³` at the tilt `σ_m`.
pub fn phi_ddd<V: SingleSite + ?Sized>(psi: &V, m: f64, quad: &QuadratureSpec) -> Result<f64> {
    let t = tilt_solve(psi, m, quad)?;
    Ok(-t.third_central_moment / t.variance.powi(3))
}

/// `(σ, Var(μ^σ))` over the given tilts.
pub fn variance_profile<V: SingleSite + ?Sized>(psi: &V, sigmas: &[f64], quad: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    sigmas.par_iter().map(|&s| tilted_measure(psi, s, quad).map(|t| (s, t.variance))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitRow {
    pub m: f64,
    pub phi: f64,
    pub phi_dd: f64,
    pub psi_k_dd: f64,
    pub deficit: f64,
}

/// Relative local Cramér deficit `|ψ_K'' - φ''| / φ''` over an m-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitTable {
    pub k: usize,
    pub rows: Vec<DeficitRow>,
    pub max_deficit: f64,
}

impl DeficitTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "phi", "phi_dd", "psi_K_dd", "deficit"])?;
        for r in &self.rows {
            w.serialize((r.m, r.phi, r.phi_dd, r.psi_k_dd, r.deficit))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimum number of m-points with an interior second difference.
pub const MIN_DEFICIT_POINTS: usize = 8;

/// Compare the block potential `ψ_K` (with `K = 2^iterations`) to `φ` on `m_grid`.
/// Points where the centered second difference of `ψ_K` would leave its grid
/// are skipped.
pub fn cramer_deficit<V: SingleSite + ?Sized>(
    psi: &V,
    psi_k: &TabulatedPotential,
    m_grid: &UniformGrid,
    quad: &QuadratureSpec,
) -> Result<DeficitTable> {
    let k = 1usize << psi_k.iteration_count();
    let usable: Vec<(f64, f64)> =
        m_grid.nodes().into_iter().filter_map(|m| psi_k.eval(m, 2).ok().map(|d| (m, d))).collect();
    if usable.len() < MIN_DEFICIT_POINTS {
        return Err(Error::InsufficientGrid { got: usable.len(), needed: MIN_DEFICIT_POINTS });
    }
    let rows = usable
        .par_iter()
        .map(|&(m, psi_k_dd)| {
            let t = tilt_solve(psi, m, quad)?;
            let phi_dd = 1.0 / t.variance;
            Ok(DeficitRow {
                m,
                phi: t.sigma * m - t.log_norm,
                phi_dd,
                psi_k_dd,
                deficit: (psi_k_dd - phi_dd).abs() / phi_dd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deficit = rows.iter().map(|r| r.deficit).fold(0.0, f64::max);
    Ok(DeficitTable { k, rows, max_deficit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub m: f64,
    pub phi: f64,
    pub phi_d: f64,
    pub phi_dd: f64,
}

/// Growth of `φ` away from `m₀ = mean(μ⁰)`:
/// `φ(m) - φ(m₀) >= (c/p)|m - m₀|^p`, `|φ'(m)| >= c'|m - m₀|^{p-1}`,
/// `φ''(m) >= C|m - m₀|^{p-2}`, each constant the pointwise minimum over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub p: f64,
    pub m0: f64,
    pub c_phi_growth: f64,
    pub c_phid_growth: f64,
    pub c_phidd_growth: f64,
    pub pass: bool,
    pub rows: Vec<GrowthRow>,
}

impl GrowthReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["m", "phi", "phi_d", "phi_dd"])?;
        for r in &self.rows {
            w.serialize((r.m, r.phi, r.phi_d, r.phi_dd))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn check_p_growth<V: SingleSite + ?Sized>(psi: &V, p: f64, m_grid: &UniformGrid, quad: &QuadratureSpec) -> Result<GrowthReport> {
    if !(p >= 2.0) {
        return Err(Error::Input(format!("p = {p} must be >= 2")));
    }
    let base = tilted_measure(psi, 0.0, quad)?;
    let m0 = base.mean;
    let phi0 = -base.log_norm;
    let rows = m_grid
        .nodes()
        .par_iter()
        .map(|&m| {
            let t = tilt_solve(psi, m, quad)?;
            Ok(GrowthRow { m, phi: t.sigma * m - t.log_norm, phi_d: t.sigma, phi_dd: 1.0 / t.variance })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut c, mut c1, mut c2) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for r in &rows {
        let d = (r.m - m0).abs();
        if d < 1e-12 {
            continue;
        }
        c = c.min(p * (r.phi - phi0) / d.powf(p));
        c1 = c1.min(r.phi_d.abs() / d.powf(p - 1.0));
        c2 = c2.min(r.phi_dd / d.powf(p - 2.0));
    }
    if !c.is_finite() {
        return Err(Error::InsufficientGrid { got: 0, needed: 1 });
    }
    Ok(GrowthReport { p, m0, c_phi_growth: c, c_phid_growth: c1, c_phidd_growth: c2, pass: c > 0.0 && c2 > 0.0, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_double_well, PotentialSpec};
    use std::f64::consts::PI;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default().with_rel_tol(1e-12)
    }

    #[test]
    fn gaussian_log_mgf() {
        let g = PotentialSpec::gaussian();
        assert!((log_mgf(&g, 0.0, &quad()).unwrap() - 0.5 * (2.0 * PI).ln()).abs() < 1e-10);
        assert!((log_mgf(&g, 3.0, &quad()).unwrap() - 4.5 - 0.5 * (2.0 * PI).ln()).abs() < 1e-10);
        // far beyond the default truncation window
        assert!((log_mgf(&g, 25.0, &quad()).unwrap() - 312.5 - 0.5 * (2.0 * PI).ln()).abs() < 1e-9);
    }

    #[test]
    fn log_mgf_is_convex() {
        let psi = make_double_well();
        let h = 0.25;
        let v: Vec<f64> = (-12..=12).map(|i| log_mgf(&psi, i as f64 * h, &quad()).unwrap()).collect();
        for w in v.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= 0.0);
        }
    }

    #[test]
    fn gaussian_tilt() {
        let t = tilt_solve(&PotentialSpec::gaussian(), 1.5, &quad()).unwrap();
        assert!((t.sigma - 1.5).abs() < 1e-9);
        assert!((t.variance - 1.0).abs() < 1e-9);
        let t0 = tilt_solve(&make_double_well(), 0.0, &quad()).unwrap();
        assert!(t0.sigma.abs() < 1e-9);
    }

    #[test]
    fn double_well_tilt_reproduces_mean() {
        let psi = make_double_well();
        let t = tilt_solve(&psi, 0.8, &quad()).unwrap();
        let w = tilted_window(&psi, t.sigma).unwrap();
        let f = |x: f64| (t.sigma * x - psi.value(x) - w.shift).exp();
        let z = quad::integrate(f, &w.breakpoints(), &quad()).unwrap();
        let m1 = quad::integrate(|x| x * f(x), &w.breakpoints(), &quad()).unwrap();
        assert!((m1 / z - 0.8).abs() <= 1e-10);
    }

    #[test]
    fn gaussian_phi() {
        let g = PotentialSpec::gaussian();
        for m in [-2.0, -0.3, 0.0, 1.1] {
            assert!((phi(&g, m, &quad()).unwrap() - (0.5 * m * m - 0.5 * (2.0 * PI).ln())).abs() < 1e-9);
            assert!((phi_dd(&g, m, &quad()).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn legendre_duality() {
        let psi = make_double_well();
        let q = quad();
        let h = 1e-4;
        for m in [-1.2, -0.4, 0.3, 0.8, 1.7] {
            let t = tilt_solve(&psi, m, &q).unwrap();
            let f = t.sigma * m - t.log_norm;
            assert!((f + t.log_norm - m * t.sigma).abs() < 1e-8);
            let d = (phi(&psi, m + h, &q).unwrap() - phi(&psi, m - h, &q).unwrap()) / (2.0 * h);
            assert!((d - t.sigma).abs() < 1e-6, "{m}: {d} vs {}", t.sigma);
        }
    }

    #[test]
    fn second_and_third_derivatives_match_differences() {
        let psi = PotentialSpec::quadratic_cosine(0.5).unwrap();
        let q = quad();
        let h = 1e-3;
        for m in [-1.0, -0.2, 0.5, 1.3] {
            let f = |x: f64| phi(&psi, x, &q).unwrap();
            let d2 = (f(m + h) - 2.0 * f(m) + f(m - h)) / (h * h);
            let exact = phi_dd(&psi, m, &q).unwrap();
            assert!(((d2 - exact) / exact).abs() < 1e-4, "{m}: {d2} vs {exact}");
            let h3 = 1e-2;
            let d3 = (f(m + 2.0 * h3) - 2.0 * f(m + h3) + 2.0 * f(m - h3) - f(m - 2.0 * h3)) / (2.0 * h3.powi(3));
            let e3 = phi_ddd(&psi, m, &q).unwrap();
            assert!((d3 - e3).abs() <= 1e-3 * e3.abs().max(1e-2), "{m}: {d3} vs {e3}");
        }
    }

    #[test]
    fn third_derivative_changes_sign_once() {
        let psi = make_double_well();
        let q = quad();
        let signs: Vec<f64> = (-10..=10)
            .filter(|&i| i != 0)
            .map(|i| phi_ddd(&psi, i as f64 * 0.2, &q).unwrap().signum())
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(changes <= 1);
    }

    #[test]
    fn tilted_variance_is_bounded() {
        // ψ_c'' >= 1 and osc(δψ) = 225/132 bound every tilted variance.
        let psi = make_double_well();
        let sigmas: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        let bound = (225.0f64 / 132.0).exp();
        for (s, v) in variance_profile(&psi, &sigmas, &quad()).unwrap() {
            assert!(v > 0.0 && v <= bound, "{s}: {v}");
        }
    }

    #[test]
    fn gaussian_deficit_vanishes() {
        use crate::renorm::iterate_renormalize;
        let psi = PotentialSpec::gaussian().with_halfwidth(16.0).unwrap();
        let grid = UniformGrid::with_step(-16.0, 16.0, 0.02).unwrap();
        let its = iterate_renormalize(&psi, 2, &grid, &QuadratureSpec::default(), None).unwrap();
        let m = UniformGrid::with_step(-1.5, 1.5, 0.1).unwrap();
        for t in &its {
            let d = cramer_deficit(&psi, t, &m, &quad()).unwrap();
            assert!(d.max_deficit <= 1e-5, "{}", d.max_deficit);
        }
        let mut buf = Vec::new();
        cramer_deficit(&psi, &its[0], &m, &quad()).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("m,phi,phi_dd,psi_K_dd,deficit\n"));
    }

    #[test]
    fn deficit_needs_interior_points() {
        let g = UniformGrid::with_step(-1.0, 1.0, 0.1).unwrap();
        let t = TabulatedPotential::from_fn(g, 2.0, 0.5, |x| 0.5 * x * x).unwrap();
        let far = UniformGrid::with_step(0.85, 1.5, 0.05).unwrap();
        assert!(matches!(
            cramer_deficit(&PotentialSpec::gaussian(), &t, &far, &quad()),
            Err(Error::InsufficientGrid { .. })
        ));
    }

    #[test]
    fn gaussian_growth_constants() {
        let m = UniformGrid::with_step(-2.0, 2.0, 0.1).unwrap();
        let r = check_p_growth(&PotentialSpec::gaussian(), 2.0, &m, &quad()).unwrap();
        assert!(r.m0.abs() < 1e-12);
        assert!((r.c_phi_growth - 1.0).abs() < 1e-6);
        assert!((r.c_phidd_growth - 1.0).abs() < 1e-6);
        assert!((r.c_phid_growth - 1.0).abs() < 1e-6);
        assert!(r.pass);
    }

    #[test]
    fn quartic_growth_passes() {
        let psi = PotentialSpec::quadratic_plus_power(1.0, 1.0, 4.0).unwrap();
        let m = UniformGrid::with_step(-2.0, 2.0, 0.1).unwrap();
        let r = check_p_growth(&psi, 4.0, &m, &quad()).unwrap();
        assert!(r.pass && r.c_phidd_growth > 0.0);
    }
}
