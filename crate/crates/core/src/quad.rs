//! Adaptive one-dimensional quadrature.
//!
//! The workhorse is a globally adaptive 21-point Gauss–Kronrod scheme (QUADPACK
//! `qag` style): the interval with the largest error estimate is bisected until
//! the summed estimate meets the tolerance. A vector-valued form integrates
//! several functions on the same adaptive partition, driven by the first
//! component; this is how tilted-measure moments are computed.
//!
//! Integrals of `exp(g)` are always taken with a log-sum-exp shift: the caller
//! supplies (or we locate) `max g`, integrate `exp(g - max)` and add the shift
//! back in log space.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];

// 10-point Gauss weights paired with XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    GaussKronrod,
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub rule: Rule,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Always true; kept so the spec round-trips through config files.
    pub logsumexp_shift: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rule: Rule::GaussKronrod, rel_tol: 1e-10, max_subdivisions: 2000, logsumexp_shift: true }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Input(format!("rel_tol {} must be positive", self.rel_tol)));
        }
        if self.max_subdivisions < 64 {
            return Err(Error::Input(format!("max_subdivisions {} < 64", self.max_subdivisions)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral<const K: usize> {
    pub value: [f64; K],
    pub error: f64,
    pub subdivisions: usize,
}

struct Piece<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Piece<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl<const K: usize> Eq for Piece<K> {}
impl<const K: usize> PartialOrd for Piece<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Piece<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk21<const K: usize, F: Fn(f64) -> [f64; K]>(f: &F, a: f64, b: f64) -> Piece<K> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc.map(|v| v * WGK[10]);
    let mut gauss0 = 0.0;
    let mut res_abs = fc[0].abs() * WGK[10];
    let mut f1 = [0.0; 10];
    let mut f2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let lo = f(center - dx);
        let hi = f(center + dx);
        for k in 0..K {
            kron[k] += WGK[j] * (lo[k] + hi[k]);
        }
        if j % 2 == 1 {
            gauss0 += WG[j / 2] * (lo[0] + hi[0]);
        }
        f1[j] = lo[0];
        f2[j] = hi[0];
        res_abs += WGK[j] * (lo[0].abs() + hi[0].abs());
    }
    let mean = kron[0] * 0.5;
    let mut res_asc = WGK[10] * (fc[0] - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((f1[j] - mean).abs() + (f2[j] - mean).abs());
    }
    let err = (kron[0] - gauss0) * half;
    let error = rescale_error(err, res_abs * half.abs(), res_asc * half.abs());
    Piece { a, b, value: kron.map(|v| v * half), error }
}

/// Adaptive integration of a vector-valued integrand over the union of the
/// consecutive intervals given by `breakpoints` (sorted, at least two).
/// Error control is on the first component.
pub fn integrate_vec<const K: usize, F>(f: F, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<Integral<K>>
where
    F: Fn(f64) -> [f64; K],
{
    if breakpoints.len() < 2 {
        return Err(Error::Input("integration needs at least two breakpoints".into()));
    }
    match spec.rule {
        Rule::GaussKronrod => gauss_kronrod(&f, breakpoints, spec),
        Rule::Simpson => simpson(&f, breakpoints, spec),
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<f64> {
    integrate_vec(|x| [f(x)], breakpoints, spec).map(|r| r.value[0])
}

fn gauss_kronrod<const K: usize, F: Fn(f64) -> [f64; K]>(
    f: &F,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral<K>> {
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(gk21(f, w[0], w[1]));
        }
    }
    let mut subdivisions = heap.len();
    loop {
        let mut total = [0.0; K];
        let mut err = 0.0;
        for p in heap.iter() {
            for k in 0..K {
                total[k] += p.value[k];
            }
            err += p.error;
        }
        if err <= spec.rel_tol * total[0].abs() || err == 0.0 {
            return Ok(Integral { value: total, error: err, subdivisions });
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::Quadrature { at: f64::NAN, error: err, subdivisions });
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => return Ok(Integral { value: total, error: err, subdivisions }),
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval at machine resolution; accept what we have.
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        heap.push(gk21(f, worst.a, mid));
        heap.push(gk21(f, mid, worst.b));
        subdivisions += 1;
    }
}

fn simpson_panels<const K: usize, F: Fn(f64) -> [f64; K]>(f: &F, a: f64, b: f64, panels: usize) -> [f64; K] {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut acc = [0.0; K];
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = f(a + i as f64 * h);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    acc.map(|v| v * h / 3.0)
}

fn simpson<const K: usize, F: Fn(f64) -> [f64; K]>(
    f: &F,
    breakpoints: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral<K>> {
    let mut total = [0.0; K];
    let mut err_total = 0.0;
    let mut subdivisions = 0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mut panels = 8;
        let mut coarse = simpson_panels(f, a, b, panels);
        loop {
            panels *= 2;
            let fine = simpson_panels(f, a, b, panels);
            let err = (fine[0] - coarse[0]).abs() / 15.0;
            if err <= spec.rel_tol * fine[0].abs() || err == 0.0 {
                for k in 0..K {
                    total[k] += fine[k];
                }
                err_total += err;
                subdivisions += panels;
                break;
            }
            if panels > spec.max_subdivisions * 64 {
                return Err(Error::Quadrature { at: f64::NAN, error: err, subdivisions: panels });
            }
            coarse = fine;
        }
    }
    Ok(Integral { value: total, error: err_total, subdivisions })
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    (x, fx)
}

/// Location and value of the maximum of `g` on `[a, b]`: a uniform scan picks
/// the best cell, golden-section refines inside it.
pub fn locate_max<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, scan: usize) -> (f64, f64) {
    let h = (b - a) / scan as f64;
    let mut best = (a, g(a));
    let mut best_i = 0;
    for i in 1..=scan {
        let x = if i == scan { b } else { a + i as f64 * h };
        let v = g(x);
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let lo = if best_i == 0 { a } else { a + (best_i - 1) as f64 * h };
    let hi = if best_i == scan { b } else { a + (best_i + 1) as f64 * h };
    let refined = golden_max(g, lo, hi, 1e-10 * (1.0 + best.0.abs()));
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

/// Result of a shifted log-integral.
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral {
    /// `log ∫ exp(g)`.
    pub log_value: f64,
    /// Location of the integrand maximum.
    pub argmax: f64,
    /// `max g` used as the shift.
    pub shift: f64,
}

/// Drop (in log units) below the maximum at which the integrand is treated as
/// zero: e^-40 ≈ 4e-18.
pub const TAIL_DROP: f64 = 40.0;

/// `log ∫_a^b exp(g(x)) dx` for an integrand that must be negligible at both
/// ends. The window is trimmed to where `g >= max g - TAIL_DROP - 6`, the
/// remaining part is split at the maximum and integrated adaptively.
pub fn log_integrate_exp<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<LogIntegral> {
    log_integrate_exp_tails(g, a, b, true, spec)
}

/// As [`log_integrate_exp`], but the left end is an interior point (a symmetry
/// axis) and only the right end must carry a negligible tail.
pub fn log_integrate_exp_half<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<LogIntegral> {
    log_integrate_exp_tails(g, a, b, false, spec)
}

/// Window `[lo, hi]` carrying the mass of `exp(g)` inside `[a, b]`.
#[derive(Debug, Clone, Copy)]
pub struct MassWindow {
    pub lo: f64,
    pub hi: f64,
    pub argmax: f64,
    pub shift: f64,
}

impl MassWindow {
    /// Sixteen equal pieces plus the maximum, as quadrature breakpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let pieces = 16;
        let step = (self.hi - self.lo) / pieces as f64;
        let mut bps: Vec<f64> = (0..=pieces).map(|i| if i == pieces { self.hi } else { self.lo + i as f64 * step }).collect();
        if self.argmax > self.lo && self.argmax < self.hi {
            bps.push(self.argmax);
            bps.sort_by(f64::total_cmp);
            bps.dedup();
        }
        bps
    }
}

/// Locate the maximum of `g` on `[a, b]` and trim the interval to the scan
/// cells where `g >= max g - TAIL_DROP - 6`. Fails if a checked end still
/// carries mass above `e^-TAIL_DROP` relative to the maximum.
pub fn mass_window<F: Fn(f64) -> f64>(g: &F, a: f64, b: f64, check_left: bool) -> Result<MassWindow> {
    const SCAN: usize = 256;
    let (argmax, shift) = locate_max(g, a, b, SCAN);
    if !shift.is_finite() {
        return Err(Error::Domain(format!("integrand maximum is not finite on [{a}, {b}]")));
    }
    let floor = shift - TAIL_DROP;
    let h = (b - a) / SCAN as f64;
    let mut lo = a;
    let mut hi = b;
    let mut first = None;
    let mut last = None;
    for i in 0..=SCAN {
        let x = if i == SCAN { b } else { a + i as f64 * h };
        if g(x) >= floor - 6.0 {
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    if let (Some(f), Some(l)) = (first, last) {
        lo = if f == 0 { a } else { a + (f - 1) as f64 * h };
        hi = if l == SCAN { b } else { a + (l + 1) as f64 * h };
    }
    if !check_left {
        lo = a;
    }
    let left_edge = check_left && lo == a && g(a) > floor;
    let right_edge = hi == b && g(b) > floor;
    if left_edge || right_edge {
        return Err(Error::TailNotNegligible { at: if left_edge { a } else { b }, window: b - a });
    }
    Ok(MassWindow { lo, hi, argmax, shift })
}

fn log_integrate_exp_tails<F: Fn(f64) -> f64>(
    g: F,
    a: f64,
    b: f64,
    check_left: bool,
    spec: &QuadratureSpec,
) -> Result<LogIntegral> {
    let w = mass_window(&g, a, b, check_left)?;
    let value = integrate(|x| (g(x) - w.shift).exp(), &w.breakpoints(), spec)?;
    Ok(LogIntegral { log_value: value.ln() + w.shift, argmax: w.argmax, shift: w.shift })
}

impl Error {
    /// Attach the evaluation point to a quadrature failure.
    pub fn at(self, y: f64) -> Error {
        match self {
            Error::Quadrature { error, subdivisions, .. } => Error::Quadrature { at: y, error, subdivisions },
            Error::TailNotNegligible { window, .. } => Error::TailNotNegligible { at: y, window },
            other => other,
        }
    }
}
