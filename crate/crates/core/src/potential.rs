//! Single-site potentials `ψ = ψ_c + δψ` with a uniformly p-convex core and a
//! bounded perturbation, plus grid-tabulated potentials produced by
//! renormalization.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::spline::CubicSpline;

/// `exp(-ψ_c)` at the default truncation edge is below this.
pub const EDGE_WEIGHT: f64 = 1e-18;

/// Anything that can serve as a single-site potential in quadrature or sampling.
pub trait SingleSite: Send + Sync {
    /// Closed interval on which the potential may be evaluated.
    fn domain(&self) -> (f64, f64);
    /// Unchecked value (callers stay inside [`SingleSite::domain`]).
    fn value(&self, x: f64) -> f64;
    /// Unchecked first derivative.
    fn derivative(&self, x: f64) -> f64;
    /// Checked evaluation of derivative `order` ∈ {0, 1, 2}.
    fn eval(&self, x: f64, order: u8) -> Result<f64>;
    /// Growth exponent `p`.
    fn exponent(&self) -> f64;
    /// Core convexity constant `c`.
    fn convexity(&self) -> f64;
    /// Number of renormalizations already applied.
    fn iteration_count(&self) -> usize {
        0
    }
    /// Whether [`SingleSite::value`] is exact outside the domain, so that
    /// integration windows may be moved and widened freely.
    fn analytic(&self) -> bool {
        false
    }
}

fn check_domain(x: f64, (min, max): (f64, f64)) -> Result<()> {
    if x.is_finite() && x >= min && x <= max {
        Ok(())
    } else {
        Err(Error::OutOfDomain { x, min, max })
    }
}

/// User-supplied decomposition: `core(x) = [ψ_c, ψ_c', ψ_c'']`,
/// `perturbation(x) = [δψ, δψ']`.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub core: Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>,
    pub perturbation: Arc<dyn Fn(f64) -> [f64; 2] + Send + Sync>,
    /// Second derivative of δψ, if known; otherwise ψ'' falls back to a finite
    /// difference of δψ'.
    pub perturbation_dd: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `ψ(x) = a x²/2`.
    Gaussian { curvature: f64 },
    /// `ψ(x) = a x²/2 + b |x|^p`.
    QuadraticPlusPower { a: f64, b: f64, p: f64 },
    /// `ψ(x) = (x² - 1)²` with the matched-ODE core.
    DoubleWell,
    /// `ψ(x) = x²/2 + A cos x`.
    QuadraticCosine { amplitude: f64 },
    Custom(CustomPotential),
}

impl Family {
    pub fn kind(&self) -> &'static str {
        match self {
            Family::Gaussian { .. } => "gaussian",
            Family::QuadraticPlusPower { .. } => "quadratic-plus-power",
            Family::DoubleWell => "double-well",
            Family::QuadraticCosine { .. } => "quadratic-cosine",
            Family::Custom(_) => "custom",
        }
    }
}

/// Computed bounds of the perturbation on the truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub sup_abs: f64,
    pub sup_abs_derivative: f64,
    pub osc: f64,
    pub resolution: f64,
}

/// Split point of the double-well decomposition: inside `|x| < x*` the core
/// solves `ψ_c'' = 1 + x²`, matched in value and slope to `(x² - 1)²`.
pub fn double_well_split() -> f64 {
    (15.0f64 / 11.0).sqrt()
}

fn double_well_offset() -> f64 {
    let s = 15.0 / 11.0;
    (s - 1.0) * (s - 1.0) - s / 2.0 - s * s / 12.0
}

/// An analytic single-site potential together with its decomposition.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    family: Family,
    p: f64,
    c: f64,
    domain_halfwidth: f64,
    bounds: PerturbationBounds,
}

impl PotentialSpec {
    fn build(family: Family, p: f64, c: f64) -> Result<Self> {
        if !(p >= 2.0) {
            return Err(Error::Input(format!("growth exponent p = {p} must be >= 2")));
        }
        if !(c > 0.0) {
            return Err(Error::Input(format!("convexity constant c = {c} must be positive")));
        }
        let mut spec = Self {
            family,
            p,
            c,
            domain_halfwidth: 1.0,
            bounds: PerturbationBounds { sup_abs: 0.0, sup_abs_derivative: 0.0, osc: 0.0, resolution: 0.0 },
        };
        spec.domain_halfwidth = spec.default_halfwidth();
        spec.bounds = spec.compute_bounds()?;
        Ok(spec)
    }

    pub fn gaussian() -> Self {
        Self::gaussian_with(1.0).expect("unit gaussian is valid")
    }

    pub fn gaussian_with(curvature: f64) -> Result<Self> {
        Self::build(Family::Gaussian { curvature }, 2.0, curvature / 2.0)
    }

    pub fn quadratic_plus_power(a: f64, b: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && b >= 0.0) {
            return Err(Error::Input(format!("quadratic-plus-power needs a > 0, b >= 0 (got {a}, {b})")));
        }
        let c = if p == 2.0 { (a + 2.0 * b) / 2.0 } else { a.min(b * p * (p - 1.0)) };
        if b == 0.0 && p > 2.0 {
            return Err(Error::Input("b = 0 gives no p-growth; use the gaussian family".into()));
        }
        Self::build(Family::QuadraticPlusPower { a, b, p }, p, c)
    }

    pub fn quadratic_cosine(amplitude: f64) -> Result<Self> {
        Self::build(Family::QuadraticCosine { amplitude }, 2.0, 0.5)
    }

    pub fn custom(custom: CustomPotential, p: f64, c: f64) -> Result<Self> {
        Self::build(Family::Custom(custom), p, c)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn kind(&self) -> &'static str {
        self.family.kind()
    }

    pub fn domain_halfwidth(&self) -> f64 {
        self.domain_halfwidth
    }

    pub fn bounds(&self) -> &PerturbationBounds {
        &self.bounds
    }

    /// Widen (or narrow) the truncation window and recompute the bounds.
    pub fn with_halfwidth(mut self, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(Error::Input(format!("half-width {half_width} must be positive")));
        }
        self.domain_halfwidth = half_width;
        self.bounds = self.compute_bounds()?;
        Ok(self)
    }

    /// The same potential with the perturbation dropped.
    pub fn core_only(&self) -> Self {
        let this = self.clone();
        let core = Arc::new(move |x: f64| this.core(x));
        let custom = CustomPotential {
            name: format!("core of {}", self.kind()),
            core,
            perturbation: Arc::new(|_| [0.0, 0.0]),
            perturbation_dd: Some(Arc::new(|_| 0.0)),
        };
        Self {
            family: Family::Custom(custom),
            p: self.p,
            c: self.c,
            domain_halfwidth: self.domain_halfwidth,
            bounds: PerturbationBounds { sup_abs: 0.0, sup_abs_derivative: 0.0, osc: 0.0, resolution: self.bounds.resolution },
        }
    }

    /// `[ψ_c, ψ_c', ψ_c'']`.
    pub fn core(&self, x: f64) -> [f64; 3] {
        match &self.family {
            Family::Gaussian { curvature } => [0.5 * curvature * x * x, curvature * x, *curvature],
            Family::QuadraticPlusPower { a, b, p } => {
                let ax = x.abs();
                [
                    0.5 * a * x * x + b * ax.powf(*p),
                    a * x + b * p * ax.powf(p - 1.0) * x.signum(),
                    a + b * p * (p - 1.0) * ax.powf(p - 2.0),
                ]
            }
            Family::DoubleWell => {
                let s = double_well_split();
                if x.abs() >= s {
                    let u = x * x - 1.0;
                    [u * u, 4.0 * x * u, 12.0 * x * x - 4.0]
                } else {
                    let x2 = x * x;
                    [0.5 * x2 + x2 * x2 / 12.0 + double_well_offset(), x + x2 * x / 3.0, 1.0 + x2]
                }
            }
            Family::QuadraticCosine { .. } => [0.5 * x * x, x, 1.0],
            Family::Custom(c) => (c.core)(x),
        }
    }

    /// `[δψ, δψ']`.
    pub fn perturbation(&self, x: f64) -> [f64; 2] {
        match &self.family {
            Family::Gaussian { .. } | Family::QuadraticPlusPower { .. } => [0.0, 0.0],
            Family::DoubleWell => {
                if x.abs() >= double_well_split() {
                    [0.0, 0.0]
                } else {
                    let x2 = x * x;
                    [
                        11.0 / 12.0 * x2 * x2 - 2.5 * x2 + 1.0 - double_well_offset(),
                        11.0 / 3.0 * x2 * x - 5.0 * x,
                    ]
                }
            }
            Family::QuadraticCosine { amplitude } => [amplitude * x.cos(), -amplitude * x.sin()],
            Family::Custom(c) => (c.perturbation)(x),
        }
    }

    fn perturbation_dd(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { .. } | Family::QuadraticPlusPower { .. } => 0.0,
            Family::DoubleWell => {
                if x.abs() >= double_well_split() {
                    0.0
                } else {
                    11.0 * x * x - 5.0
                }
            }
            Family::QuadraticCosine { amplitude } => -amplitude * x.cos(),
            Family::Custom(c) => match &c.perturbation_dd {
                Some(f) => f(x),
                None => {
                    let h = 1e-5 * (1.0 + x.abs());
                    ((c.perturbation)(x + h)[1] - (c.perturbation)(x - h)[1]) / (2.0 * h)
                }
            },
        }
    }

    /// Second derivative of ψ (exact for the shipped families).
    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.family {
            Family::DoubleWell => 12.0 * x * x - 4.0,
            _ => self.core(x)[2] + self.perturbation_dd(x),
        }
    }

    /// ψ evaluated from its closed form rather than from the decomposition.
    pub fn direct_value(&self, x: f64) -> f64 {
        match &self.family {
            Family::DoubleWell => {
                let u = x * x - 1.0;
                u * u
            }
            _ => self.core(x)[0] + self.perturbation(x)[0],
        }
    }

    fn default_halfwidth(&self) -> f64 {
        let target = -EDGE_WEIGHT.ln();
        let base = self.core(0.0)[0];
        let mut l = 0.5;
        while l < 1e4 {
            if self.core(l)[0] - base >= target && self.core(-l)[0] - base >= target {
                return l;
            }
            l += 0.01;
        }
        l
    }

    fn compute_bounds(&self) -> Result<PerturbationBounds> {
        let l = self.domain_halfwidth;
        let n = 20_001;
        let osc = oscillation(|x| self.perturbation(x)[0], l, n)?;
        let h = 2.0 * l / (n - 1) as f64;
        let mut sup_abs: f64 = 0.0;
        let mut sup_d: f64 = 0.0;
        for i in 0..n {
            let x = -l + i as f64 * h;
            let [v, d] = self.perturbation(x);
            sup_abs = sup_abs.max(v.abs());
            sup_d = sup_d.max(d.abs());
        }
        Ok(PerturbationBounds { sup_abs, sup_abs_derivative: sup_d, osc: osc.value, resolution: osc.resolution })
    }
}

impl SingleSite for PotentialSpec {
    fn domain(&self) -> (f64, f64) {
        (-self.domain_halfwidth, self.domain_halfwidth)
    }

    fn value(&self, x: f64) -> f64 {
        match &self.family {
            Family::DoubleWell => self.direct_value(x),
            _ => self.core(x)[0] + self.perturbation(x)[0],
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match &self.family {
            Family::DoubleWell => 4.0 * x * (x * x - 1.0),
            _ => self.core(x)[1] + self.perturbation(x)[1],
        }
    }

    fn eval(&self, x: f64, order: u8) -> Result<f64> {
        check_domain(x, self.domain())?;
        match order {
            0 => Ok(self.value(x)),
            1 => Ok(self.derivative(x)),
            2 => Ok(self.second_derivative(x)),
            o => Err(Error::Order(o)),
        }
    }

    fn exponent(&self) -> f64 {
        self.p
    }

    fn convexity(&self) -> f64 {
        self.c
    }

    fn analytic(&self) -> bool {
        true
    }
}

/// The quartic double well `(x² - 1)²` with a constructive decomposition:
/// `ψ_c = ψ` for `|x| >= sqrt(15/11)`, and `ψ_c = x²/2 + x⁴/12 + const` inside
/// (so `ψ_c'' = 1 + x²`), glued with matching value and slope. `p = 4`, `c = 1`.
pub fn make_double_well() -> PotentialSpec {
    PotentialSpec::build(Family::DoubleWell, 4.0, 1.0).expect("double well is valid")
}

/// Oscillation `sup - inf` of a function on a grid over `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub value: f64,
    /// Grid spacing used for the scan.
    pub resolution: f64,
}

/// `sup f - inf f` by a dense scan. Growth concentrated at the domain edges is
/// reported as unboundedness.
pub fn oscillation<F: Fn(f64) -> f64>(f: F, half_width: f64, n: usize) -> Result<Oscillation> {
    if n < 3 || !(half_width > 0.0) {
        return Err(Error::Input("oscillation scan needs n >= 3 and a positive half-width".into()));
    }
    let h = 2.0 * half_width / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|i| f(-half_width + i as f64 * h)).collect();
    if let Some(bad) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::Unbounded { x: f64::NAN, value: *bad });
    }
    let edge = (n / 20).max(1);
    let inner = &vals[edge..n - edge];
    let inner_max = inner.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, v) in [(-half_width, vals[0]), (half_width, vals[n - 1])] {
        // An edge value that beats everything in the interior, and keeps growing
        // towards the edge, is taken as unbounded growth.
        let (outer, next) = if x < 0.0 { (&vals[..edge], vals[1]) } else { (&vals[n - edge..], vals[n - 2]) };
        let outer_max = outer.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if v.abs() >= outer_max && v.abs() > inner_max * (1.0 + 1e-6) + 1e-12 && v.abs() > next.abs() {
            return Err(Error::Unbounded { x, value: v });
        }
    }
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Oscillation { value: max - min, resolution: h })
}

/// Grid-sampled potential (output of renormalization), interpolated by a
/// not-a-knot cubic spline.
#[derive(Debug, Clone)]
pub struct TabulatedPotential {
    spline: CubicSpline,
    p: f64,
    c: f64,
    iteration_count: usize,
    normalization_offset: f64,
}

impl TabulatedPotential {
    pub fn new(grid: UniformGrid, values: Vec<f64>, p: f64, c: f64, iteration_count: usize, normalization_offset: f64) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::SizeMismatch(values.len(), grid.n));
        }
        if grid.n < 4 {
            return Err(Error::InsufficientGrid { got: grid.n, needed: 4 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite tabulated value at node {i}")));
        }
        Ok(Self { spline: CubicSpline::new(grid, values), p, c, iteration_count, normalization_offset })
    }

    /// Tabulate `f` on `grid` without normalization.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: UniformGrid, p: f64, c: f64, f: F) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect(), p, c, 0, 0.0)
    }

    pub fn grid(&self) -> &UniformGrid {
        self.spline.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.spline.values()
    }

    pub fn iteration_count(&self) -> usize {
        self.iteration_count
    }

    pub fn normalization_offset(&self) -> f64 {
        self.normalization_offset
    }

    /// Shift so the minimum node value is 0; the shift is added to the offset.
    pub fn normalized(self) -> Self {
        let min = self.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let values = self.values().iter().map(|v| v - min).collect();
        Self {
            spline: CubicSpline::new(*self.grid(), values),
            normalization_offset: self.normalization_offset + min,
            ..self
        }
    }

    /// Nodes inside `[min, max]`, on the same lattice.
    pub fn restrict(&self, min: f64, max: f64) -> Result<Self> {
        let g = self.grid();
        let h = g.step();
        let lo = ((min - g.min) / h - 1e-9).ceil().max(0.0) as usize;
        let hi = (((max - g.min) / h + 1e-9).floor() as usize).min(g.n - 1);
        if hi < lo + 3 {
            return Err(Error::InsufficientGrid { got: hi.saturating_sub(lo) + 1, needed: 4 });
        }
        let sub = g.slice(lo, hi)?;
        Self::new(sub, self.values()[lo..=hi].to_vec(), self.p, self.c, self.iteration_count, self.normalization_offset)
    }

    /// Centered second differences at interior nodes, `(x_i, d2_i)`.
    pub fn second_differences(&self) -> Vec<(f64, f64)> {
        let g = self.grid();
        let h = g.step();
        let v = self.values();
        (1..g.n - 1).map(|i| (g.node(i), (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h))).collect()
    }

    pub fn to_file(&self) -> TabulatedPotentialFile {
        TabulatedPotentialFile {
            grid_min: self.grid().min,
            grid_max: self.grid().max,
            n_nodes: self.grid().n,
            values: self.values().to_vec(),
            p: self.p,
            c: self.c,
            iteration_count: self.iteration_count,
            normalization_offset: self.normalization_offset,
        }
    }

    pub fn from_file(file: TabulatedPotentialFile) -> Result<Self> {
        let grid = UniformGrid::new(file.grid_min, file.grid_max, file.n_nodes)?;
        Self::new(grid, file.values, file.p, file.c, file.iteration_count, file.normalization_offset)
    }

    /// JSON with every number printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let f = self.to_file();
        let values: Vec<String> = f.values.iter().map(|v| format!("{v:.16e}")).collect();
        format!(
            "{{\"grid_min\":{:.16e},\"grid_max\":{:.16e},\"n_nodes\":{},\"values\":[{}],\"p\":{:.16e},\"c\":{:.16e},\"iteration_count\":{},\"normalization_offset\":{:.16e}}}",
            f.grid_min,
            f.grid_max,
            f.n_nodes,
            values.join(","),
            f.p,
            f.c,
            f.iteration_count,
            f.normalization_offset
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// On-disk form of a [`TabulatedPotential`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedPotentialFile {
    pub grid_min: f64,
    pub grid_max: f64,
    pub n_nodes: usize,
    pub values: Vec<f64>,
    pub p: f64,
    pub c: f64,
    pub iteration_count: usize,
    pub normalization_offset: f64,
}

impl SingleSite for TabulatedPotential {
    fn domain(&self) -> (f64, f64) {
        (self.grid().min, self.grid().max)
    }

    fn value(&self, x: f64) -> f64 {
        self.spline.value(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.spline.eval(x).1
    }

    fn eval(&self, x: f64, order: u8) -> Result<f64> {
        let (min, max) = self.domain();
        check_domain(x, (min, max))?;
        match order {
            0 => Ok(self.value(x)),
            1 => Ok(self.derivative(x)),
            2 => {
                let h = self.grid().step();
                let slack = 1e-9 * h;
                if x - h < min - slack || x + h > max + slack {
                    return Err(Error::Boundary { x, min, max });
                }
                Ok((self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h))
            }
            o => Err(Error::Order(o)),
        }
    }

    fn exponent(&self) -> f64 {
        self.p
    }

    fn convexity(&self) -> f64 {
        self.c
    }

    fn iteration_count(&self) -> usize {
        self.iteration_count
    }
}

/// `factor · V`, e.g. the coarse measure's single-site potential `2Rψ`.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a, V: ?Sized> {
    pub inner: &'a V,
    pub factor: f64,
}

impl<V: SingleSite + ?Sized> SingleSite for Scaled<'_, V> {
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }
    fn value(&self, x: f64) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.factor * self.inner.derivative(x)
    }
    fn eval(&self, x: f64, order: u8) -> Result<f64> {
        self.inner.eval(x, order).map(|v| self.factor * v)
    }
    fn exponent(&self) -> f64 {
        self.inner.exponent()
    }
    fn convexity(&self) -> f64 {
        self.factor * self.inner.convexity()
    }
    fn iteration_count(&self) -> usize {
        self.inner.iteration_count()
    }
    fn analytic(&self) -> bool {
        self.inner.analytic()
    }
}

/// Evaluate any single-site potential: `order` 0, 1 or 2.
pub fn eval<V: SingleSite + ?Sized>(potential: &V, x: f64, order: u8) -> Result<f64> {
    potential.eval(x, order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(l: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| -l + 2.0 * l * i as f64 / (n - 1) as f64)
    }

    #[test]
    fn closed_form_examples() {
        let g = PotentialSpec::gaussian();
        assert_eq!(g.eval(2.0, 2).unwrap(), 1.0);
        let q = PotentialSpec::quadratic_plus_power(1.0, 1.0, 4.0).unwrap();
        assert_eq!(q.eval(1.0, 1).unwrap(), 5.0);
        assert_eq!(q.eval(1.0, 0).unwrap(), 1.5);
    }

    #[test]
    fn out_of_domain_and_bad_order() {
        let g = PotentialSpec::gaussian();
        let l = g.domain_halfwidth();
        assert!(matches!(g.eval(l + 1.0, 0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(g.eval(0.0, 3), Err(Error::Order(3))));
    }

    #[test]
    fn default_halfwidth_tail() {
        for spec in [PotentialSpec::gaussian(), make_double_well(), PotentialSpec::quadratic_cosine(0.5).unwrap()] {
            let l = spec.domain_halfwidth();
            let base = spec.core(0.0)[0];
            assert!((-(spec.core(l)[0] - base)).exp() < EDGE_WEIGHT * 1.0001, "{}", spec.kind());
            assert!((-(spec.core(l - 0.02)[0] - base)).exp() > EDGE_WEIGHT, "{} not minimal", spec.kind());
        }
    }

    #[test]
    fn double_well_decomposition_residual() {
        let dw = make_double_well();
        let l = dw.domain_halfwidth();
        for x in grid_points(l, 100) {
            let direct = dw.direct_value(x);
            let split = dw.core(x)[0] + dw.perturbation(x)[0];
            assert!((direct - split).abs() <= 1e-12 * direct.abs().max(1.0), "x={x}");
        }
    }

    #[test]
    fn double_well_core_convexity() {
        let dw = make_double_well();
        let l = dw.domain_halfwidth();
        for x in grid_points(l, 10_001) {
            let excess = dw.core(x)[2] - (1.0 + x * x);
            assert!(excess >= -1e-12, "x={x}: {excess}");
        }
    }

    #[test]
    fn double_well_glue_is_c1() {
        let s = double_well_split();
        let dw = make_double_well();
        for x in [s, -s] {
            let inside = x * (1.0 - 1e-12);
            let [v0, d0] = dw.perturbation(inside);
            assert!(v0.abs() < 1e-10 && d0.abs() < 1e-10, "{v0} {d0}");
        }
    }

    #[test]
    fn double_well_oscillation() {
        let dw = make_double_well();
        let osc = dw.bounds().osc;
        // Brute-force sup - inf of δψ on a fine scan of [-x*, x*].
        let s = double_well_split();
        let vals: Vec<f64> = grid_points(s, 200_001).map(|x| dw.perturbation(x)[0]).collect();
        let brute = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        assert!((osc - brute).abs() < 1e-6, "{osc} vs {brute}");
        assert!(osc <= 2.0);
        assert!((osc - 225.0 / 132.0).abs() < 1e-6);
    }

    #[test]
    fn oscillation_examples() {
        assert_eq!(oscillation(|_| 0.0, 5.0, 1001).unwrap().value, 0.0);
        let o = oscillation(|x| 0.5 * x.cos(), 10.0, 200_001).unwrap();
        assert!((o.value - 1.0).abs() < 1e-6);
        assert!(matches!(oscillation(|x| x * x, 10.0, 1001), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn stored_derivative_bound_dominates() {
        for spec in [make_double_well(), PotentialSpec::quadratic_cosine(0.5).unwrap()] {
            let l = spec.domain_halfwidth();
            let bound = spec.bounds().sup_abs_derivative;
            for x in grid_points(l, 3001) {
                assert!(spec.perturbation(x)[1].abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        let fams = [
            PotentialSpec::gaussian(),
            PotentialSpec::quadratic_plus_power(1.0, 1.0, 4.0).unwrap(),
            PotentialSpec::quadratic_plus_power(0.5, 0.3, 3.0).unwrap(),
            make_double_well(),
            PotentialSpec::quadratic_cosine(0.5).unwrap(),
        ];
        for spec in &fams {
            for x in [-2.1, -0.77, 0.3, 0.9, 1.7] {
                let fd1 = (spec.value(x + h) - spec.value(x - h)) / (2.0 * h);
                let d1 = spec.eval(x, 1).unwrap();
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "{} d1 at {x}", spec.kind());
                let fd2 = (spec.derivative(x + h) - spec.derivative(x - h)) / (2.0 * h);
                let d2 = spec.eval(x, 2).unwrap();
                assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "{} d2 at {x}", spec.kind());
            }
        }
    }

    #[test]
    fn tabulated_boundary_and_json() {
        let grid = UniformGrid::with_step(-3.0, 3.0, 0.01).unwrap();
        let t = TabulatedPotential::from_fn(grid, 2.0, 0.5, |x| 0.5 * x * x).unwrap();
        assert!((t.eval(0.7, 2).unwrap() - 1.0).abs() < 1e-8);
        assert!(matches!(t.eval(3.0, 2), Err(Error::Boundary { .. })));
        assert!(matches!(t.eval(3.5, 0), Err(Error::OutOfDomain { .. })));
        let back = TabulatedPotential::from_json(&t.to_json()).unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.grid(), t.grid());
        let raw: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert!(raw.get("n_nodes").is_some() && raw.get("normalization_offset").is_some());
    }

    #[test]
    fn restrict_keeps_lattice() {
        let grid = UniformGrid::with_step(-3.0, 3.0, 0.01).unwrap();
        let t = TabulatedPotential::from_fn(grid, 2.0, 0.5, |x| x * x).unwrap();
        let r = t.restrict(-1.0, 1.0).unwrap();
        assert_eq!(r.grid().n, 201);
        assert!((r.grid().min + 1.0).abs() < 1e-12);
    }
}
