//! Coarse-graining renormalization of single-site potentials.
//!
//! `Rψ(y) = -½ log ∫ exp(-ψ(y + x) - ψ(y - x)) dx` is the single-site potential
//! of the coarse measure (up to the factor 2 carried by the measure). Iterating
//! the coarse-graining on the block of `K` sites gives the per-site block
//! potential
//!
//! ```text
//! ψ_{2K}(y) = (1/K) · R(K ψ_K)(y) = -(1/2K) log ∫ exp(-K[ψ_K(y + x) + ψ_K(y - x)]) dx
//! ```
//!
//! which coincides with `Rψ` for `K = 1` and with the direct block potential
//! `ψ_K(m) = -(1/K) log ∫_{X_{K,m}} exp(-Σψ)` up to an additive constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::lowdisc::Kronecker;
use crate::potential::{PotentialSpec, SingleSite, TabulatedPotential};
use crate::quad::{self, QuadratureSpec, TAIL_DROP};

/// Minimum number of interior nodes an iterate may keep.
pub const MIN_INTERIOR_NODES: usize = 32;

/// `log ∫_R exp(-k[ψ(y + x) + ψ(y - x)]) dx` using the x ↦ -x symmetry.
fn pair_log_integral<V: SingleSite + ?Sized>(psi: &V, k: f64, y: f64, quad: &QuadratureSpec) -> Result<f64> {
    let (a, b) = psi.domain();
    let window = (b - y).min(y - a);
    if !(window > 0.0) {
        return Err(Error::OutOfDomain { x: y, min: a, max: b });
    }
    let g = |x: f64| -k * (psi.value(y + x) + psi.value(y - x));
    let r = quad::log_integrate_exp_half(g, 0.0, window, quad).map_err(|e| e.at(y))?;
    Ok(std::f64::consts::LN_2 + r.log_value)
}

fn block_step<V: SingleSite + ?Sized>(
    psi: &V,
    k: f64,
    nodes: &[f64],
    quad: &QuadratureSpec,
) -> Vec<Result<f64>> {
    nodes
        .par_iter()
        .map(|&y| pair_log_integral(psi, k, y, quad).map(|l| -l / (2.0 * k)))
        .collect()
}

/// Tabulated `Rψ` on `grid`, shifted to minimum 0 (shift kept as the offset).
pub fn renormalize<V: SingleSite + ?Sized>(
    psi: &V,
    grid: &UniformGrid,
    quad: &QuadratureSpec,
) -> Result<TabulatedPotential> {
    quad.validate()?;
    let values = block_step(psi, 1.0, &grid.nodes(), quad).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TabulatedPotential::new(*grid, values, psi.exponent(), psi.convexity(), psi.iteration_count() + 1, 0.0)?.normalized())
}

/// Keep the nodes where the step succeeded: the contiguous run around the
/// middle of the candidate lattice, trimmed by an optional extra margin.
fn trim_valid(grid: &UniformGrid, results: Vec<Result<f64>>, margin: Option<f64>) -> Result<(UniformGrid, Vec<f64>)> {
    let mid = grid.n / 2;
    let ok = |i: usize| results[i].is_ok();
    if !ok(mid) {
        // A hard failure in the middle is not a grid-width problem.
        return match results.into_iter().nth(mid) {
            Some(Err(e)) => Err(e),
            _ => unreachable!(),
        };
    }
    let mut lo = mid;
    while lo > 0 && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = mid;
    while hi + 1 < grid.n && ok(hi + 1) {
        hi += 1;
    }
    // Non-tail failures inside the admissible window are real errors.
    for r in results.iter() {
        if let Err(e) = r {
            if !matches!(e, Error::TailNotNegligible { .. } | Error::OutOfDomain { .. }) {
                return Err(clone_err(e));
            }
        }
    }
    if let Some(m) = margin {
        let drop = (m / grid.step()).round() as usize;
        lo += drop;
        hi = hi.saturating_sub(drop);
    }
    let remaining = if hi > lo + 1 { hi - lo - 1 } else { 0 };
    if remaining < MIN_INTERIOR_NODES {
        return Err(Error::GridExhausted { remaining, needed: MIN_INTERIOR_NODES });
    }
    let values = results[lo..=hi].iter().map(|r| *r.as_ref().expect("inside valid run")).collect();
    Ok((grid.slice(lo, hi)?, values))
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::Quadrature { at, error, subdivisions } => Error::Quadrature { at: *at, error: *error, subdivisions: *subdivisions },
        other => Error::Solver(other.to_string()),
    }
}

/// `[ψ_2, ψ_4, ..., ψ_{2^M}]`, each tabulated and normalized.
///
/// `grid` is the candidate lattice for the first iterate (it must lie inside
/// the domain of `psi`). Each iterate keeps the nodes of the previous lattice
/// where the pair integrand has decayed by `e^-40` inside the available
/// window, minus the optional `margin`.
pub fn iterate_renormalize<V: SingleSite + ?Sized>(
    psi: &V,
    iterations: usize,
    grid: &UniformGrid,
    quad: &QuadratureSpec,
    margin: Option<f64>,
) -> Result<Vec<TabulatedPotential>> {
    quad.validate()?;
    if iterations == 0 {
        return Err(Error::Input("iterations must be >= 1".into()));
    }
    let mut out: Vec<TabulatedPotential> = Vec::with_capacity(iterations);
    let mut candidate = *grid;
    for it in 0..iterations {
        let k = (1u64 << it) as f64;
        let nodes = candidate.nodes();
        let results = match out.last() {
            None => block_step(psi, k, &nodes, quad),
            Some(prev) => block_step(prev, k, &nodes, quad),
        };
        let (g, values) = trim_valid(&candidate, results, margin)?;
        let t = TabulatedPotential::new(g, values, psi.exponent(), psi.convexity(), psi.iteration_count() + it + 1, 0.0)?
            .normalized();
        log::debug!("iterate {} on [{:.3}, {:.3}] ({} nodes)", it + 1, g.min, g.max, g.n);
        candidate = g;
        out.push(t);
    }
    Ok(out)
}

/// `log ∫ exp(g)` over the real line, growing a window around `center` until
/// both ends are negligible.
fn log_integral_line<F: Fn(f64) -> f64>(g: F, center: f64, quad: &QuadratureSpec) -> Result<f64> {
    let mut half = 1.0;
    loop {
        let (a, b) = (center - half, center + half);
        let (_, gmax) = quad::locate_max(&g, a, b, 64);
        if g(a) < gmax - TAIL_DROP - 5.0 && g(b) < gmax - TAIL_DROP - 5.0 {
            return quad::log_integrate_exp(&g, a, b, quad).map(|r| r.log_value);
        }
        half *= 1.5;
        if half > 1e4 {
            return Err(Error::TailNotNegligible { at: center, window: half });
        }
    }
}

/// Block potential `ψ_K` computed directly on the constraint slice, for
/// `K ∈ {2, 4}`.
///
/// `K = 2` parametrizes `x = (m + u, m - u)` (slice Jacobian `√2`); `K = 4`
/// uses `x = m + (a + b, a - b, -a + c, -a - c)` (Jacobian 4) and nests the
/// `b`/`c` integrals inside the `a` integral, each with its own log-sum-exp
/// shift. `ψ` is evaluated on the whole line, so it must be analytic.
pub fn coarse_grained_direct<V: SingleSite + ?Sized>(
    psi: &V,
    k: usize,
    m_grid: &UniformGrid,
    quad: &QuadratureSpec,
) -> Result<TabulatedPotential> {
    quad.validate()?;
    if !psi.analytic() {
        return Err(Error::Input("direct block potential needs a potential defined on the whole line".into()));
    }
    let inner = |z: f64| log_integral_line(|u| -psi.value(z + u) - psi.value(z - u), 0.0, quad);
    let values: Vec<f64> = match k {
        2 => m_grid
            .nodes()
            .par_iter()
            .map(|&m| inner(m).map(|l| -0.5 * (0.5 * 2f64.ln() + l)).map_err(|e| e.at(m)))
            .collect::<Result<_>>()?,
        4 => m_grid
            .nodes()
            .par_iter()
            .map(|&m| {
                let failure = std::sync::Mutex::new(None);
                let g = |a: f64| match (inner(m + a), inner(m - a)) {
                    (Ok(l), Ok(r)) => l + r,
                    (Err(e), _) | (_, Err(e)) => {
                        failure.lock().unwrap().get_or_insert(e);
                        f64::NEG_INFINITY
                    }
                };
                let outer = log_integral_line(g, 0.0, quad);
                if let Some(e) = failure.into_inner().unwrap() {
                    return Err(e.at(m));
                }
                outer.map(|l| -0.25 * (4f64.ln() + l)).map_err(|e| e.at(m))
            })
            .collect::<Result<_>>()?,
        other => return Err(Error::Input(format!("direct block potential supports K = 2 or 4, got {other}"))),
    };
    let iterations = if k == 2 { 1 } else { 2 };
    Ok(TabulatedPotential::new(*m_grid, values, psi.exponent(), psi.convexity(), iterations, 0.0)?.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificationMethod {
    SecantInequality,
    SecondDerivative,
}

/// Witnesses for p-convexity and uniform convexity of a tabulated potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    /// Largest constant ρ with `V(tx+(1-t)y) <= tV(x)+(1-t)V(y) - ρ t(1-t)|x-y|^p / p`
    /// on every sampled triple (clamped at 0).
    pub rho_p: f64,
    /// Same with `p = 2`.
    pub c_uniform: f64,
    pub n_triples: usize,
    /// `(x, y, t)` attaining `rho_p`.
    pub worst_witness: [f64; 3],
    /// `(x, y, t)` attaining `c_uniform`.
    pub uniform_witness: [f64; 3],
    pub method: CertificationMethod,
    pub p: f64,
    /// `min V''(x) / ((p-1)|x|^{p-2})` over interior nodes (second differences).
    pub derivative_constant: f64,
    pub derivative_worst_x: f64,
    /// Whether the derivative criterion reaches the secant constant.
    pub derivative_confirms: bool,
    pub min_second_difference: f64,
}

/// Secant defect ratio `p [tV(x)+(1-t)V(y)-V(tx+(1-t)y)] / (t(1-t)|x-y|^p)`.
pub fn secant_ratio<V: SingleSite + ?Sized>(v: &V, p: f64, x: f64, y: f64, t: f64) -> f64 {
    let defect = t * v.value(x) + (1.0 - t) * v.value(y) - v.value(t * x + (1.0 - t) * y);
    p * defect / (t * (1.0 - t) * (x - y).abs().powf(p))
}

/// Certify p-convexity of `v` on its grid by low-discrepancy sampling of
/// triples (node, node, t ∈ [0.1, 0.9]); the second-derivative criterion is
/// reported alongside.
pub fn certify_p_convexity(v: &TabulatedPotential, p: f64, n_triples: usize, seed: u64) -> Result<CertificationReport> {
    if !(p >= 2.0) {
        return Err(Error::Input(format!("p = {p} must be >= 2")));
    }
    let grid = *v.grid();
    if grid.n < 5 {
        return Err(Error::InsufficientGrid { got: grid.n.saturating_sub(2), needed: 3 });
    }
    let mut rho = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    let mut worst = [0.0; 3];
    let mut worst2 = [0.0; 3];
    let mut used = 0;
    for [u1, u2, u3] in Kronecker::<3>::new(seed) {
        if used == n_triples {
            break;
        }
        let i = ((u1 * grid.n as f64) as usize).min(grid.n - 1);
        let j = ((u2 * grid.n as f64) as usize).min(grid.n - 1);
        if i == j {
            continue;
        }
        used += 1;
        let (x, y, t) = (grid.node(i), grid.node(j), 0.1 + 0.8 * u3);
        let r = secant_ratio(v, p, x, y, t);
        if r < rho {
            rho = r;
            worst = [x, y, t];
        }
        let r2 = secant_ratio(v, 2.0, x, y, t);
        if r2 < c2 {
            c2 = r2;
            worst2 = [x, y, t];
        }
    }
    let h = grid.step();
    let mut dconst = f64::INFINITY;
    let mut dworst = 0.0;
    let mut min_d2 = f64::INFINITY;
    for (x, d2) in v.second_differences() {
        min_d2 = min_d2.min(d2);
        let weight = (p - 1.0) * x.abs().powf(p - 2.0);
        let ratio = if weight > 0.0 && x.abs() > 0.5 * h {
            d2 / weight
        } else if d2 < 0.0 {
            f64::NEG_INFINITY
        } else {
            continue;
        };
        if ratio < dconst {
            dconst = ratio;
            dworst = x;
        }
    }
    let rho_p = rho.max(0.0);
    let dconst = dconst.max(0.0);
    Ok(CertificationReport {
        rho_p,
        c_uniform: c2.max(0.0),
        n_triples: used,
        worst_witness: worst,
        uniform_witness: worst2,
        method: CertificationMethod::SecantInequality,
        p,
        derivative_constant: dconst,
        derivative_worst_x: dworst,
        derivative_confirms: dconst >= (1.0 - 1e-3) * rho_p,
        min_second_difference: min_d2,
    })
}

/// Structure of `Rψ` for a decomposed potential: `Rψ = R ψ_c + (Rψ - Rψ_c)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityTransfer {
    /// Certification of the renormalized core.
    pub core: CertificationReport,
    /// `sup |Rψ - Rψ_c|` over the grid (unnormalized potentials).
    pub perturbation_sup: f64,
    /// `sup |δψ|`, which bounds the renormalized perturbation.
    pub perturbation_bound: f64,
    pub pass: bool,
}

/// Renormalize the core and the full potential separately and check that the
/// core stays p-convex and uniformly convex while the difference stays bounded.
pub fn convexity_transfer(
    psi: &PotentialSpec,
    grid: &UniformGrid,
    quad: &QuadratureSpec,
    n_triples: usize,
    seed: u64,
) -> Result<ConvexityTransfer> {
    let full = renormalize(psi, grid, quad)?;
    let core_spec = psi.core_only();
    let core = renormalize(&core_spec, grid, quad)?;
    let perturbation_sup = full
        .values()
        .iter()
        .zip(core.values())
        .map(|(f, c)| ((f + full.normalization_offset()) - (c + core.normalization_offset())).abs())
        .fold(0.0, f64::max);
    let report = certify_p_convexity(&core, psi.exponent(), n_triples, seed)?;
    let bound = psi.bounds().sup_abs;
    let pass = report.c_uniform > 0.0 && report.rho_p > 0.0 && perturbation_sup <= bound + 1e-9;
    Ok(ConvexityTransfer { core: report, perturbation_sup, perturbation_bound: bound, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::make_double_well;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn gaussian_closure() {
        let psi = PotentialSpec::gaussian().with_halfwidth(12.0).unwrap();
        let grid = UniformGrid::with_step(-4.0, 4.0, 0.05).unwrap();
        let r = renormalize(&psi, &grid, &quad()).unwrap();
        let dev = grid.nodes().iter().zip(r.values()).map(|(y, v)| (v - 0.5 * y * y).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-8, "{dev}");
        // offset: -½ log √π for the unit gaussian pair integral ∫exp(-x²-y²)dx
        assert!((r.normalization_offset() + 0.25 * std::f64::consts::PI.ln()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_potential_gives_symmetric_rpsi() {
        let psi = make_double_well().with_halfwidth(6.0).unwrap();
        let grid = UniformGrid::with_step(-2.0, 2.0, 0.02).unwrap();
        let r = renormalize(&psi, &grid, &quad()).unwrap();
        let v = r.values();
        for i in 0..grid.n {
            assert!((v[i] - v[grid.n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_shift_passes_through() {
        use crate::potential::CustomPotential;
        use std::sync::Arc;
        let a = 0.73;
        let shifted = PotentialSpec::custom(
            CustomPotential {
                name: "shifted gaussian".into(),
                core: Arc::new(move |x| [0.5 * x * x + a, x, 1.0]),
                perturbation: Arc::new(|_| [0.0, 0.0]),
                perturbation_dd: None,
            },
            2.0,
            0.5,
        )
        .unwrap()
        .with_halfwidth(12.0)
        .unwrap();
        let base = PotentialSpec::gaussian().with_halfwidth(12.0).unwrap();
        let grid = UniformGrid::with_step(-2.0, 2.0, 0.1).unwrap();
        let r0 = renormalize(&base, &grid, &quad()).unwrap();
        let r1 = renormalize(&shifted, &grid, &quad()).unwrap();
        assert!((r1.normalization_offset() - r0.normalization_offset() - a).abs() < 1e-10);
        for (x, y) in r0.values().iter().zip(r1.values()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn refinement_is_stable() {
        let psi = make_double_well().with_halfwidth(6.0).unwrap();
        let coarse = UniformGrid::with_step(-2.0, 2.0, 0.1).unwrap();
        let fine = UniformGrid::with_step(-2.0, 2.0, 0.05).unwrap();
        let q = quad();
        let rc = renormalize(&psi, &coarse, &q).unwrap();
        let rf = renormalize(&psi, &fine, &q).unwrap();
        for i in 0..coarse.n {
            let a = rc.values()[i] + rc.normalization_offset();
            let b = rf.values()[2 * i] + rf.normalization_offset();
            assert!((a - b).abs() <= 10.0 * q.rel_tol, "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn narrow_domain_is_an_error() {
        let psi = PotentialSpec::gaussian().with_halfwidth(5.0).unwrap();
        let grid = UniformGrid::with_step(-4.0, 4.0, 0.1).unwrap();
        assert!(matches!(renormalize(&psi, &grid, &quad()), Err(Error::TailNotNegligible { .. })));
    }

    #[test]
    fn first_iterate_is_renormalize() {
        let psi = make_double_well().with_halfwidth(6.0).unwrap();
        let grid = UniformGrid::with_step(-6.0, 6.0, 0.05).unwrap();
        let it = iterate_renormalize(&psi, 1, &grid, &quad(), None).unwrap();
        let direct = renormalize(&psi, it[0].grid(), &quad()).unwrap();
        for (a, b) in it[0].values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} {b}");
        }
        assert_eq!(it[0].iteration_count(), 1);
    }

    #[test]
    fn gaussian_is_a_fixed_point() {
        let psi = PotentialSpec::gaussian().with_halfwidth(22.0).unwrap();
        let grid = UniformGrid::with_step(-22.0, 22.0, 0.02).unwrap();
        let its = iterate_renormalize(&psi, 5, &grid, &quad(), None).unwrap();
        for t in &its {
            let w = t.restrict(-3.0, 3.0).unwrap();
            let dev = w.grid().nodes().iter().zip(w.values()).map(|(y, v)| (v - 0.5 * y * y).abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-6, "iterate {}: {dev}", t.iteration_count());
        }
    }

    #[test]
    fn exhausted_grid() {
        let psi = PotentialSpec::gaussian().with_halfwidth(8.0).unwrap();
        let grid = UniformGrid::with_step(-8.0, 8.0, 0.1).unwrap();
        assert!(matches!(
            iterate_renormalize(&psi, 4, &grid, &quad(), None),
            Err(Error::GridExhausted { .. })
        ));
    }

    #[test]
    fn direct_k2_matches_renormalize() {
        let psi = make_double_well().with_halfwidth(6.0).unwrap();
        let grid = UniformGrid::with_step(-1.5, 1.5, 0.05).unwrap();
        let r = renormalize(&psi, &grid, &quad()).unwrap();
        let d = coarse_grained_direct(&psi, 2, &grid, &quad()).unwrap();
        let diffs: Vec<f64> = r.values().iter().zip(d.values()).map(|(a, b)| a - b).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let resid = diffs.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
        assert!(resid <= 1e-8, "{resid}");
    }

    #[test]
    fn direct_k4_gaussian() {
        let psi = PotentialSpec::gaussian();
        let grid = UniformGrid::with_step(-1.0, 1.0, 0.1).unwrap();
        let d = coarse_grained_direct(&psi, 4, &grid, &quad()).unwrap();
        for (m, v) in grid.nodes().iter().zip(d.values()) {
            assert!((v - 0.5 * m * m).abs() < 1e-6);
        }
        assert!(coarse_grained_direct(&psi, 3, &grid, &quad()).is_err());
    }

    fn tab<F: Fn(f64) -> f64>(f: F, l: f64) -> TabulatedPotential {
        TabulatedPotential::from_fn(UniformGrid::with_step(-l, l, 0.01).unwrap(), 2.0, 0.5, f).unwrap()
    }

    #[test]
    fn certify_quadratic() {
        let r = certify_p_convexity(&tab(|x| 0.5 * x * x, 3.0), 2.0, 4000, 1).unwrap();
        assert!(r.rho_p >= 1.0 - 1e-3 && r.rho_p <= 1.0 + 1e-6, "{}", r.rho_p);
        assert!(r.derivative_confirms);
    }

    #[test]
    fn certify_affine_is_zero() {
        let r = certify_p_convexity(&tab(|x| 2.0 * x - 1.0, 3.0), 3.0, 2000, 1).unwrap();
        assert!(r.rho_p.abs() < 1e-9 && r.c_uniform.abs() < 1e-9);
    }

    #[test]
    fn quartic_secant_certifies() {
        let r = certify_p_convexity(&tab(|x| x.powi(4), 2.0), 4.0, 4000, 3).unwrap();
        assert!(r.rho_p > 0.0);
        assert!(r.derivative_constant > 3.9);
    }

    #[test]
    fn shifted_quartic_derivative_criterion_is_not_necessary() {
        // (x-1)^4 is 4-convex by the secant inequality, but V'' = 12(x-1)^2
        // cannot dominate 12x^2 near x = 1.
        let r = certify_p_convexity(&tab(|x| (x - 1.0).powi(4), 2.0), 4.0, 4000, 3).unwrap();
        assert!(r.rho_p > 0.0);
        assert!(!r.derivative_confirms);
        assert!((r.derivative_worst_x - 1.0).abs() < 0.05, "{}", r.derivative_worst_x);
    }

    #[test]
    fn witness_reevaluates_to_rho() {
        let v = tab(|x| x.powi(4) - x * x, 2.0);
        let r = certify_p_convexity(&v, 4.0, 3000, 9).unwrap();
        let [x, y, t] = r.worst_witness;
        assert!(r.rho_p <= secant_ratio(&v, 4.0, x, y, t).max(0.0) + 1e-15);
    }

    #[test]
    fn insufficient_grid() {
        let g = UniformGrid::new(0.0, 1.0, 4).unwrap();
        let v = TabulatedPotential::from_fn(g, 2.0, 0.5, |x| x * x).unwrap();
        assert!(matches!(certify_p_convexity(&v, 2.0, 10, 0), Err(Error::InsufficientGrid { .. })));
    }

    #[test]
    fn convexity_transfers_for_shipped_families() {
        let grid = UniformGrid::with_step(-2.0, 2.0, 0.02).unwrap();
        for psi in [
            make_double_well().with_halfwidth(6.0).unwrap(),
            PotentialSpec::quadratic_cosine(0.5).unwrap().with_halfwidth(14.0).unwrap(),
            PotentialSpec::quadratic_plus_power(1.0, 1.0, 4.0).unwrap().with_halfwidth(6.0).unwrap(),
            PotentialSpec::gaussian().with_halfwidth(12.0).unwrap(),
        ] {
            let t = convexity_transfer(&psi, &grid, &quad(), 3000, 5).unwrap();
            assert!(t.pass, "{}: {:?}", psi.kind(), t);
        }
    }
}
