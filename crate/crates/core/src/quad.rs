//! Deterministic quadrature used by every analytic route in the crate.
//!
//! The workhorse is a globally adaptive 21-point Gauss–Kronrod rule that
//! bisects the interval with the largest error estimate. Endpoint power
//! singularities and slowly decaying tails are not handled here directly;
//! callers regularize them with the substitutions in [`power_map`] and
//! [`algebraic_tail`] before handing a smooth integrand to [`integrate`].

use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Kronrod abscissae on [0, 1]; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_729_972_453_050,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("adaptive quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error {error:e} after {intervals} intervals")]
    NotConverged {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
}

/// Values that can be integrated: real or complex scalars.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Absolute/relative tolerance pair; an integral converges once the summed
/// error estimate is below `max(abs, rel * |I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_intervals: 4000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-12, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub intervals: usize,
}

/// One application of the 21-point Kronrod rule with its embedded 10-point
/// Gauss rule; returns (kronrod estimate, |kronrod - gauss|).
pub fn gk21<T, F>(f: &F, a: f64, b: f64) -> Result<(T, f64), QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    check_finite(fc, center)?;
    let mut kronrod = fc * WGK[10];
    let mut gauss = T::default();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        check_finite(f1, center - dx)?;
        check_finite(f2, center + dx)?;
        let sum = f1 + f2;
        kronrod = kronrod + sum * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + sum * WG[j / 2];
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    let err = (kronrod - gauss).magnitude();
    Ok((kronrod, err))
}

fn check_finite<T: QuadValue>(v: T, at: f64) -> Result<(), QuadError> {
    if v.magnitude().is_finite() {
        Ok(())
    } else {
        Err(QuadError::NonFinite { at })
    }
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over `[a, b]`.
pub fn integrate<T, F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    integrate_with_breaks(f, &[a, b], tol)
}

/// Adaptive integration over consecutive intervals `points[i]..points[i+1]`;
/// the initial partition is seeded with every break point so kinks and
/// discontinuities never sit inside a rule.
pub fn integrate_with_breaks<T, F>(
    f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let mut heap = BinaryHeap::new();
    let mut total = T::default();
    let mut total_err = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let (value, error) = gk21(&f, a, b)?;
        total = total + value;
        total_err += error;
        heap.push(Segment { a, b, value, error });
    }
    let lo = points.first().copied().unwrap_or(0.0);
    let hi = points.last().copied().unwrap_or(0.0);
    loop {
        let target = tol.abs.max(tol.rel * total.magnitude());
        if total_err <= target || heap.is_empty() {
            return Ok(Estimate {
                value: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(QuadError::NotConverged {
                a: lo,
                b: hi,
                estimate: total.magnitude(),
                error: total_err,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(QuadError::NotConverged {
                a: lo,
                b: hi,
                estimate: total.magnitude(),
                error: total_err,
                intervals: heap.len() + 1,
            });
        }
        let (v1, e1) = gk21(&f, worst.a, mid)?;
        let (v2, e2) = gk21(&f, mid, worst.b)?;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
}

/// `∫_origin^{origin + dir·len} g(x) dx` for an integrand with a power-law
/// factor `|x - origin|^{alpha - 1}` hidden inside `g`. Substituting
/// `u = |x - origin|^alpha` turns the factor into the constant `1/alpha`.
///
/// `g_times_power` must return the full integrand `g(x)` (including the
/// singular factor); the map multiplies by the Jacobian itself, so the
/// product evaluated on the u-scale is bounded. `breaks` are x-locations
/// (on the integration side) where `g` has kinks.
pub fn power_map<T, F>(
    g_times_power: F,
    origin: f64,
    dir: f64,
    len: f64,
    alpha: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let inv = 1.0 / alpha;
    let integrand = |u: f64| {
        if u <= 0.0 {
            return T::default();
        }
        let r = u.powf(inv);
        let jac = inv * u.powf(inv - 1.0);
        g_times_power(origin + dir * r) * jac
    };
    let mut pts = vec![0.0, len.powf(alpha)];
    for &b in breaks {
        let r = dir * (b - origin);
        if r > 0.0 && r < len {
            pts.push(r.powf(alpha));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    integrate_with_breaks(integrand, &pts, tol)
}

/// Same regularization as [`power_map`] but for integrands whose singular
/// factor is already divided out: computes
/// `∫ g(x) |x - origin|^{alpha-1} dx = (1/alpha) ∫ g(origin + dir u^{1/alpha}) du`.
pub fn weighted_power_map<T, F>(
    g: F,
    origin: f64,
    dir: f64,
    len: f64,
    alpha: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    let inv = 1.0 / alpha;
    let integrand = |u: f64| g(origin + dir * u.max(0.0).powf(inv)) * inv;
    let mut pts = vec![0.0, len.powf(alpha)];
    for &b in breaks {
        let r = dir * (b - origin);
        if r > 0.0 && r < len {
            pts.push(r.powf(alpha));
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    integrate_with_breaks(integrand, &pts, tol)
}

/// `∫ f` over the ray starting at `start` and running to `dir·∞`, for an
/// integrand decaying like `|x|^{-decay}` with `decay > 1`. The substitution
/// `x = start + dir·scale·(v^{-q} - 1)`, `q = 1/(decay-1)`, makes the
/// transformed integrand bounded at `v = 0`.
pub fn algebraic_tail<T, F>(
    f: F,
    start: f64,
    dir: f64,
    scale: f64,
    decay: f64,
    tol: Tolerance,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: Fn(f64) -> T,
{
    debug_assert!(decay > 1.0);
    let q = 1.0 / (decay - 1.0);
    let integrand = |v: f64| {
        if v <= 0.0 {
            return T::default();
        }
        let x = start + dir * scale * (v.powf(-q) - 1.0);
        let jac = scale * q * v.powf(-q - 1.0);
        let val = f(x);
        if jac.is_finite() {
            val * jac
        } else {
            T::default()
        }
    };
    integrate(integrand, 0.0, 1.0, tol)
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre rule applied on each of `panels` equal pieces of
/// every interval in `points`.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        CompositeRule { nodes, weights }
    }

    /// Physical nodes and weights on `[a, b]` split into `panels` pieces.
    pub fn points(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let c = lo + 0.5 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((c + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(&self, f: F, a: f64, b: f64, panels: usize) -> T {
        let h = (b - a) / panels as f64;
        let mut acc = T::default();
        for p in 0..panels {
            let c = a + (p as f64 + 0.5) * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc = acc + f(c + 0.5 * h * x) * (0.5 * h * w);
            }
        }
        acc
    }
}
