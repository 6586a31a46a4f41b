//! Both change-of-variable formulas for `G(M(T))`, checked through their
//! S-transforms. Every Skorokhod or compensator term is computed by
//! deterministic quadrature over the characteristic function of `M(t)` under
//! the shifted measure; pathwise pieces are estimated by Monte Carlo.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use statrs::function::gamma::gamma;

use crate::conv::{conv_left_limit, conv_value};
use crate::error::{Error, QuadContext, Result};
use crate::kernels::VolterraKernel;
use crate::levy::{levy_khintchine_integrand, JumpMeasure, JumpPath};
use crate::quad::{gauss_legendre, integrate, CompositeRule, Tolerance};
use crate::report::Residual;
use crate::stransform::{ddt_s_of_m, s_charfn_analytic, s_of_m_analytic, stransform_many, EtaTest, McSetup, Route};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FourierFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Fourier coefficients below this are dropped.
const FOURIER_CUTOFF: f64 = 1e-12;

/// A test function `G ∈ C¹` with `G, G'` in the Wiener algebra, carried with
/// its derivative and its unitary Fourier transform
/// `(𝔉G)(u) = (2π)^{-1/2} ∫ G(y) e^{-iuy} dy`.
#[derive(Clone)]
pub struct TestFunctionG {
    name: String,
    g: RealFn,
    dg: RealFn,
    fourier: FourierFn,
    /// `|𝔉G(u)|` and `|u 𝔉G(u)|` stay below the cutoff for `|u|` beyond this.
    radius: f64,
    wiener_algebra: bool,
}

impl fmt::Debug for TestFunctionG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunctionG")
            .field("name", &self.name)
            .field("radius", &self.radius)
            .field("wiener_algebra", &self.wiener_algebra)
            .finish()
    }
}

impl TestFunctionG {
    /// `G(y) = e^{-y²/2}`, its own Fourier transform.
    pub fn gaussian() -> Self {
        Self::gaussian_scaled(1.0).expect("unit scale is valid")
    }

    /// `G(y) = e^{-y²/(2a²)}` with `𝔉G(u) = a e^{-a²u²/2}`.
    pub fn gaussian_scaled(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("Gaussian scale must be positive, got {a}")));
        }
        // a·(1+u)·e^{-a²u²/2} < cutoff
        let mut radius = (2.0 * (a.max(1.0) / FOURIER_CUTOFF).ln()).sqrt() / a;
        while a * (1.0 + radius) * (-0.5 * a * a * radius * radius).exp() >= FOURIER_CUTOFF {
            radius *= 1.05;
        }
        let inv = 1.0 / (a * a);
        Ok(TestFunctionG {
            name: if a == 1.0 { "gauss".into() } else { format!("gauss(a={a})") },
            g: Arc::new(move |y| (-0.5 * y * y * inv).exp()),
            dg: Arc::new(move |y| -y * inv * (-0.5 * y * y * inv).exp()),
            fourier: Arc::new(move |u| Complex64::new(a * (-0.5 * a * a * u * u).exp(), 0.0)),
            radius,
            wiener_algebra: true,
        })
    }

    /// A user-supplied `G`; `radius` bounds the support of `𝔉G` that is
    /// integrated and `G` must be real so that `𝔉G(-u) = conj 𝔉G(u)`.
    pub fn custom<G, D, F>(name: impl Into<String>, g: G, dg: D, fourier: F, radius: f64) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> Complex64 + Send + Sync + 'static,
    {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("Fourier radius must be positive, got {radius}")));
        }
        Ok(TestFunctionG {
            name: name.into(),
            g: Arc::new(g),
            dg: Arc::new(dg),
            fourier: Arc::new(fourier),
            radius,
            wiener_algebra: true,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn in_wiener_algebra(&self) -> bool {
        self.wiener_algebra
    }

    pub fn eval(&self, y: f64) -> f64 {
        (self.g)(y)
    }

    pub fn deriv(&self, y: f64) -> f64 {
        (self.dg)(y)
    }

    pub fn fourier(&self, u: f64) -> Complex64 {
        (self.fourier)(u)
    }

    /// `𝔉(G')(u) = iu 𝔉G(u)`.
    pub fn fourier_deriv(&self, u: f64) -> Complex64 {
        Complex64::new(0.0, u) * self.fourier(u)
    }
}

/// Which of `G`, `G'` is composed with `M(t) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    G,
    Deriv,
}

/// `E^{Q_η}[e^{iuM(t)}]` tabulated on a Gauss–Legendre grid of `[0, U]`
/// with the Fourier weights of `G` and `G'` folded in, so that
/// `S(H(M(t) + c))(η) = (2π)^{-1/2} 2 Re Σ w 𝔉H(u) e^{iuc} φ(u)`.
#[derive(Debug, Clone)]
pub struct CharCache {
    pub t: f64,
    u: Vec<f64>,
    g_weighted: Vec<Complex64>,
    dg_weighted: Vec<Complex64>,
}

const U_PANELS: usize = 8;
const U_ORDER: usize = 8;

impl CharCache {
    pub fn new(k: &VolterraKernel, measure: &JumpMeasure, t: f64, eta: &EtaTest, g: &TestFunctionG) -> Result<Self> {
        let rule = CompositeRule::new(U_ORDER);
        let pts = rule.points(0.0, g.radius(), U_PANELS);
        let norm = 2.0 / (2.0 * PI).sqrt();
        let mut u = Vec::with_capacity(pts.len());
        let mut g_weighted = Vec::with_capacity(pts.len());
        let mut dg_weighted = Vec::with_capacity(pts.len());
        let mean = s_of_m_analytic(k, measure, t, eta)?;
        for (x, w) in pts {
            let phi = tilted_charfn(k, measure, t, x, eta, mean)?;
            u.push(x);
            g_weighted.push(g.fourier(x) * phi * (w * norm));
            dg_weighted.push(g.fourier_deriv(x) * phi * (w * norm));
        }
        Ok(CharCache { t, u, g_weighted, dg_weighted })
    }

    /// `S(H(M(t) + c))(η)` for `H = G` or `G'`.
    pub fn s_shift(&self, order: Order, c: f64) -> f64 {
        let w = match order {
            Order::G => &self.g_weighted,
            Order::Deriv => &self.dg_weighted,
        };
        if c == 0.0 {
            return w.iter().map(|z| z.re).sum();
        }
        self.u
            .iter()
            .zip(w)
            .map(|(&u, z)| {
                let (s, co) = (u * c).sin_cos();
                z.re * co - z.im * s
            })
            .sum()
    }
}

/// `E^{Q_η}[e^{iuM(t)}]` given `S(M(t))(η)`, with the Lévy–Khintchine
/// part under the tilted measure as a single s-integral.
fn tilted_charfn(k: &VolterraKernel, measure: &JumpMeasure, t: f64, u: f64, eta: &EtaTest, mean: f64) -> Result<Complex64> {
    if u == 0.0 || t <= k.s_lower() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let lk = k.try_integrate_s(t, |s| {
        let f = k.eval(t, s);
        if f == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        measure.integrate_x(|x| levy_khintchine_integrand(u * x * f) * (1.0 + eta.eval(x, s)), 2.0)
    })?;
    Ok((Complex64::new(0.0, u * mean) + lk).exp())
}

/// `S(G(M(t)))(η)` through the inverse Fourier representation over the
/// full line, with the imaginary part checked to vanish.
pub fn s_of_g_of_m(k: &VolterraKernel, measure: &JumpMeasure, t: f64, eta: &EtaTest, g: &TestFunctionG) -> Result<f64> {
    let rule = CompositeRule::new(U_ORDER);
    let r = g.radius();
    let mut acc = Complex64::new(0.0, 0.0);
    for (u, w) in rule.points(-r, r, 2 * U_PANELS) {
        acc += g.fourier(u) * s_charfn_analytic(k, measure, t, u, eta)? * w;
    }
    acc /= (2.0 * PI).sqrt();
    if acc.im.abs() > 1e-8 {
        return Err(Error::Contract(format!(
            "S(G(M({t})))({}) has imaginary part {:e}; G must be real",
            eta.id(),
            acc.im
        )));
    }
    Ok(acc.re)
}

/// Integrands of both arrangements at one time `t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TermsAt {
    pub t: f64,
    /// `∫ S(G(M+xf(t,t)) - G(M) - xf(t,t)G'(M))(η) (1+η(x,t)) ν(dx)`
    pub jump: f64,
    /// `∫∫ x ∂_t f(t,s) S(G'(M+xf(t,s)) - G'(M))(η) (1+η(x,s)) ν(dx) ds`
    pub memory: f64,
    /// `S(G'(M(t)))(η) d/dt S(M(t))(η)`
    pub skorokhod: f64,
    /// `∫ S(G(M+xf(t,t)) - G(M))(η) (1+η(x,t)) ν(dx)`
    pub jump_raw: f64,
    /// `∫∫ x ∂_t f(t,s) S(G'(M+xf(t,s)))(η) (1+η(x,s)) ν(dx) ds`
    pub memory_raw: f64,
    /// `-(∫xν) S(G'(M(t)))(η) (f(t,t) + ∫ ∂_t f(t,s) ds)`
    pub drift: f64,
}

impl TermsAt {
    /// `d/dt S(G(M(t)))(η)` as the sum of the three pieces.
    pub fn derivative(&self) -> f64 {
        self.jump + self.memory + self.skorokhod
    }
}

/// Evaluates all term integrands at `t`. The first-formula pieces
/// (`jump_raw`, `memory_raw`, `drift`) need `∫|x|ν < ∞` and a kernel with a
/// bounded t-derivative; they are left at zero when `rearranged` is false.
pub fn terms_at(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    g: &TestFunctionG,
    eta: &EtaTest,
    t: f64,
    rearranged: bool,
) -> Result<TermsAt> {
    let cache = CharCache::new(k, measure, t, eta, g)?;
    let g0 = cache.s_shift(Order::G, 0.0);
    let dg0 = cache.s_shift(Order::Deriv, 0.0);
    let ftt = k.diag(t);
    let tilt = |x: f64, s: f64| 1.0 + eta.eval(x, s);
    // the memory integrands cost a Fourier sum per point; 1e-9 suffices
    let tol = Tolerance::new(1e-11, 1e-9);

    let jump = if ftt == 0.0 {
        0.0
    } else {
        measure.integrate_x(
            |x| (cache.s_shift(Order::G, x * ftt) - g0 - x * ftt * dg0) * tilt(x, t),
            2.0,
        )?
    };
    let memory = memory_integral(k, tol, t, |f, s| {
        measure.integrate_x(|x| x * (cache.s_shift(Order::Deriv, x * f) - dg0) * tilt(x, s), 2.0)
    })?;
    let skorokhod = if eta.is_zero() { 0.0 } else { dg0 * ddt_s_of_m(k, measure, t, eta)? };

    let mut out = TermsAt {
        t,
        jump,
        memory,
        skorokhod,
        ..TermsAt::default()
    };
    if rearranged {
        out.jump_raw = if ftt == 0.0 {
            0.0
        } else {
            measure.integrate_x(|x| (cache.s_shift(Order::G, x * ftt) - g0) * tilt(x, t), 1.0)?
        };
        out.memory_raw = memory_integral(k, tol, t, |f, s| {
            measure.integrate_x(|x| x * cache.s_shift(Order::Deriv, x * f) * tilt(x, s), 1.0)
        })?;
        let m1 = measure.first_moment()?;
        out.drift = if m1 == 0.0 { 0.0 } else { -m1 * dg0 * k.drift_derivative(t)? };
    }
    Ok(out)
}

/// `∫ ∂_t f(t,s) F(f(t,s), s) ds`. For fractional kernels the stretch
/// `0 < s < t` is integrated in `v = (t-s)^d`, where `∂_t f ds = dv/Γ(1+d)`
/// exactly; recovering `t - s` from a rounded `s` loses all precision near
/// the diagonal once `d` is small.
fn memory_integral<F>(k: &VolterraKernel, tol: Tolerance, t: f64, inner: F) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    let km = k.clone().with_tolerance(tol);
    let Some(d) = k.fractional_order() else {
        return km.try_integrate_s(t, |s| {
            if s >= t {
                return Ok(0.0);
            }
            let dt = k.ddt(t, s)?;
            if dt == 0.0 {
                return Ok(0.0);
            }
            Ok(dt * inner(k.eval(t, s), s)?)
        });
    };
    let far = km.try_integrate_s(t, |s| {
        if s >= 0.0 {
            return Ok(0.0);
        }
        let dt = k.ddt(t, s)?;
        if dt == 0.0 {
            return Ok(0.0);
        }
        Ok(dt * inner(k.eval(t, s), s)?)
    })?;
    if t <= 0.0 {
        return Ok(far);
    }
    let g1 = gamma(1.0 + d);
    let err = RefCell::new(None);
    let near = integrate(
        |v: f64| match inner(v / g1, t - v.powf(1.0 / d)) {
            Ok(y) => y / g1,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        0.0,
        t.powf(d),
        tol,
    )
    .context("memory integral near the diagonal")?
    .value;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(far + near),
    }
}

/// Quadrature nodes on `[0, T]`; geometrically graded towards 0 for the
/// fractional kernel, whose S-transforms behave like powers of `t` there.
fn time_nodes(k: &VolterraKernel, horizon: f64) -> Vec<(f64, f64)> {
    let mut breaks = vec![0.0];
    if k.fractional_order().is_some() {
        breaks.extend((0..=12).rev().map(|e| horizon * 0.5f64.powi(e)));
    } else {
        breaks.extend((1..=4).map(|i| horizon * i as f64 / 4.0));
    }
    let (nodes, weights) = gauss_legendre(12);
    let mut out = Vec::new();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (x, wt) in nodes.iter().zip(&weights) {
            out.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * wt));
        }
    }
    out
}

/// S-transforms of every member of both formulas at one test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoTerms {
    pub kernel: String,
    pub g: String,
    pub eta: String,
    pub horizon: f64,
    /// `S(G(M(T)))(η) - G(0)`
    pub lhs: f64,
    /// (i): the jump sum `Σ G(M(t)) - G(M(t-)) - G'(M(t-))ΔM(t)`
    pub jump_sum_term: f64,
    /// (ii): the `N°`-integral carrying the memory of the kernel
    pub n_diamond_term: f64,
    /// (iii): `∫ G'(M(t-)) M°(dt)`
    pub skorokhod_m_term: f64,
    /// First formula: `Σ G(M(t)) - G(M(t-))`.
    pub jump_raw: Option<f64>,
    /// First formula: `∫∫∫ x ∂_t f G'(M(t-)+xf) N°(dx,ds) dt`.
    pub n_diamond_raw: Option<f64>,
    /// First formula: `-(∫xν) ∫ G'(M(t)) (f(t,t) + ∫∂_t f ds) dt`.
    pub drift: Option<f64>,
}

impl ItoTerms {
    pub fn rhs(&self) -> f64 {
        self.jump_sum_term + self.n_diamond_term + self.skorokhod_m_term
    }

    pub fn rhs_first(&self) -> Option<f64> {
        Some(self.jump_raw? + self.n_diamond_raw? + self.drift?)
    }
}

/// Whether the first formula's preconditions hold.
pub fn first_formula_applies(k: &VolterraKernel, measure: &JumpMeasure) -> bool {
    k.flags().all() && measure.abs_moment(1.0).is_finite()
}

/// Evaluates (i), (ii), (iii) and the left side of the second formula at
/// `η`, plus the first formula's arrangement where it applies.
pub fn ito2_terms(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    g: &TestFunctionG,
    horizon: f64,
    eta: &EtaTest,
) -> Result<ItoTerms> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if !k.flags().all() && k.fractional_order().is_none() {
        return Err(Error::Contract(format!(
            "{} satisfies neither (H1)-(H4) nor the fractional representation",
            k.name()
        )));
    }
    let rearranged = first_formula_applies(k, measure);
    let nodes = time_nodes(k, horizon);
    let rows: Vec<(f64, TermsAt)> = nodes
        .par_iter()
        .map(|&(t, w)| terms_at(k, measure, g, eta, t, rearranged).map(|r| (w, r)))
        .collect::<Result<_>>()?;
    let sum = |f: fn(&TermsAt) -> f64| rows.iter().map(|(w, r)| w * f(r)).sum::<f64>();
    let end = CharCache::new(k, measure, horizon, eta, g)?;
    Ok(ItoTerms {
        kernel: k.name(),
        g: g.name().into(),
        eta: eta.id().into(),
        horizon,
        lhs: end.s_shift(Order::G, 0.0) - g.eval(0.0),
        jump_sum_term: sum(|r| r.jump),
        n_diamond_term: sum(|r| r.memory),
        skorokhod_m_term: sum(|r| r.skorokhod),
        jump_raw: rearranged.then(|| sum(|r| r.jump_raw)),
        n_diamond_raw: rearranged.then(|| sum(|r| r.memory_raw)),
        drift: rearranged.then(|| sum(|r| r.drift)),
    })
}

/// `Σ_{0 < s_j ≤ T} G(M(s_j)) - G(M(s_j-)) - G'(M(s_j-)) ΔM(s_j)`.
pub fn pathwise_jump_sum(k: &VolterraKernel, g: &TestFunctionG, path: &JumpPath, horizon: f64) -> Result<f64> {
    let mut acc = 0.0;
    for j in path.jumps_in(0.0, horizon) {
        let before = conv_left_limit(k, path, j.time)?;
        let dm = k.diag(j.time) * j.size;
        acc += g.eval(before + dm) - g.eval(before) - g.deriv(before) * dm;
    }
    Ok(acc)
}

/// `Σ_{0 < s_j ≤ T} G(M(s_j)) - G(M(s_j-))`.
pub fn pathwise_jump_increments(k: &VolterraKernel, g: &TestFunctionG, path: &JumpPath, horizon: f64) -> Result<f64> {
    let mut acc = 0.0;
    for j in path.jumps_in(0.0, horizon) {
        let before = conv_left_limit(k, path, j.time)?;
        acc += g.eval(conv_value(k, path, j.time)?) - g.eval(before);
    }
    Ok(acc)
}

/// `∫₀ᵀ h(t) dt` for `h` smooth between the path's jump times.
fn integrate_between_jumps<F>(path: &JumpPath, horizon: f64, h: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (nodes, weights) = gauss_legendre(10);
    let mut pts = vec![0.0];
    pts.extend(path.jumps_in(0.0, horizon).map(|j| j.time).filter(|&s| s < horizon));
    pts.push(horizon);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let pieces = ((b - a) / 0.25).ceil().max(1.0) as usize;
        let step = (b - a) / pieces as f64;
        for p in 0..pieces {
            let c = a + (p as f64 + 0.5) * step;
            for (x, wt) in nodes.iter().zip(&weights) {
                // nodes are interior, so the value equals the left limit
                acc += 0.5 * step * wt * h(c + 0.5 * step * x)?;
            }
        }
    }
    Ok(acc)
}

/// `(f(t,t) + ∫ ∂_t f(t,s) ds)` tabulated on a uniform grid and linearly
/// interpolated; it is smooth for the kernels the first formula accepts.
struct DriftTable {
    horizon: f64,
    values: Vec<f64>,
}

impl DriftTable {
    const CELLS: usize = 1024;

    fn new(k: &VolterraKernel, horizon: f64) -> Result<Self> {
        let values = (0..=Self::CELLS)
            .into_par_iter()
            .map(|i| {
                // the end points are approached from inside (0, T)
                let t = (horizon * i as f64 / Self::CELLS as f64).clamp(1e-12 * horizon, horizon * (1.0 - 1e-12));
                k.drift_derivative(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DriftTable { horizon, values })
    }

    fn eval(&self, t: f64) -> f64 {
        let x = (t / self.horizon * Self::CELLS as f64).clamp(0.0, Self::CELLS as f64);
        let i = (x.floor() as usize).min(Self::CELLS - 1);
        let r = x - i as f64;
        self.values[i] * (1.0 - r) + self.values[i + 1] * r
    }
}

/// The pathwise part of the first formula,
/// `G(M(T)) - G(0) + (∫xν) ∫₀ᵀ G'(M(t)) D(t) dt - Σ (G(M(t)) - G(M(t-)))`,
/// whose S-transform must equal that of the `N°` term.
fn first_formula_pathwise(
    k: &VolterraKernel,
    g: &TestFunctionG,
    m1: f64,
    drift: Option<&DriftTable>,
    path: &JumpPath,
    horizon: f64,
) -> Result<f64> {
    let mut y = g.eval(conv_value(k, path, horizon)?) - g.eval(0.0) - pathwise_jump_increments(k, g, path, horizon)?;
    if let (true, Some(table)) = (m1 != 0.0, drift) {
        y += m1 * integrate_between_jumps(path, horizon, |t| Ok(g.deriv(conv_value(k, path, t)?) * table.eval(t)))?;
    }
    Ok(y)
}

/// First formula in expectation form, per η: the Monte Carlo S-transform of
/// the pathwise part against the quadrature of the `N°` compensator
/// `∫₀ᵀ∫∫ x ∂_t f S(G'(M(t)+xf))(η) (1+η(x,s)) ν(dx) ds dt`.
pub fn ito1_residual(
    k: &VolterraKernel,
    g: &TestFunctionG,
    horizon: f64,
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let measure = &setup.measure;
    if !measure.abs_moment(1.0).is_finite() {
        return Err(Error::Precondition("the first formula needs ∫|x| ν(dx) < ∞".into()));
    }
    k.require_regular("the first change-of-variable formula")?;
    let m1 = measure.first_moment()?;
    let table = if m1 != 0.0 { Some(DriftTable::new(k, horizon)?) } else { None };
    let mut rows = Vec::new();
    for eta in etas {
        let nodes = time_nodes(k, horizon);
        let compensator: f64 = nodes
            .par_iter()
            .map(|&(t, w)| terms_at(k, measure, g, eta, t, true).map(|r| w * r.memory_raw))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        let est = stransform_many(setup, eta, Route::Reweight, 1, |p, out| {
            out[0] = first_formula_pathwise(k, g, m1, table.as_ref(), p, horizon)?;
            Ok(())
        })?;
        rows.push(Residual::statistical(
            format!("ito1[{}|{}]", k.name(), g.name()),
            eta.id(),
            est[0],
            compensator,
            0.0,
            sigmas,
            1e-9,
        ));
    }
    Ok(rows)
}

/// `G(L(T)) - G(0) - ∫₀ᵀ G'(L(t-)) dL(t) - Σ [G(L) - G(L-) - G'(L-)ΔL]`,
/// which telescopes to zero path by path.
pub fn classical_reduction(g: &TestFunctionG, path: &JumpPath, horizon: f64) -> Result<f64> {
    let mut ito = 0.0;
    let mut jumps = 0.0;
    for j in path.jumps_in(0.0, horizon) {
        let before = path.levy_left_limit(j.time);
        ito += g.deriv(before) * j.size;
        jumps += g.eval(before + j.size) - g.eval(before) - g.deriv(before) * j.size;
    }
    if path.drift_rate != 0.0 {
        ito += path.drift_rate * integrate_between_jumps(path, horizon, |t| Ok(g.deriv(path.levy_value(t))))?;
    }
    Ok(g.eval(path.levy_value(horizon)) - g.eval(0.0) - ito - jumps)
}

/// The first formula for `f = χ_(0,t]`, where it holds path by path:
/// `G(L(T)) - G(0) + (∫xν) ∫₀ᵀ G'(L(t)) dt - Σ (G(L) - G(L-))`.
pub fn ito1_indicator_pathwise(g: &TestFunctionG, measure: &JumpMeasure, path: &JumpPath, horizon: f64) -> Result<f64> {
    let m1 = measure.first_moment()?;
    let mut y = g.eval(path.levy_value(horizon)) - g.eval(0.0);
    for j in path.jumps_in(0.0, horizon) {
        let before = path.levy_left_limit(j.time);
        y -= g.eval(before + j.size) - g.eval(before);
    }
    if m1 != 0.0 {
        y += m1 * integrate_between_jumps(path, horizon, |t| Ok(g.deriv(path.levy_value(t))))?;
    }
    Ok(y)
}

/// Acceptance bands for [`ito2_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ito2Tolerance {
    /// Relative band on `|lhs - (i) - (ii) - (iii)|`.
    pub rel: f64,
    /// Absolute floor of the same band.
    pub floor: f64,
    /// Band on the difference of the two arrangements.
    pub rearrangement: f64,
    /// Standard errors allowed for the Monte Carlo cross-checks.
    pub sigmas: f64,
}

impl Default for Ito2Tolerance {
    fn default() -> Self {
        Ito2Tolerance {
            rel: 1e-3,
            floor: 1e-9,
            rearrangement: 1e-8,
            sigmas: 4.0,
        }
    }
}

/// Second formula per η: `|lhs - (i) - (ii) - (iii)| ≤ max(rel·|lhs|, floor)`.
/// With a Monte Carlo setup, the left side and term (i) are also compared
/// with their pathwise counterparts under the shifted measure, and the
/// first-formula arrangement is compared with the second where it applies.
pub fn ito2_residual(
    k: &VolterraKernel,
    g: &TestFunctionG,
    horizon: f64,
    etas: &[EtaTest],
    measure: &JumpMeasure,
    mc: Option<&McSetup>,
    tol: Ito2Tolerance,
) -> Result<(Vec<ItoTerms>, Vec<Residual>)> {
    let mut terms = Vec::new();
    let mut rows = Vec::new();
    let tag = format!("{}|{}", k.name(), g.name());
    for eta in etas {
        let t = ito2_terms(k, measure, g, horizon, eta)?;
        let band = (tol.rel * t.lhs.abs()).max(tol.floor);
        rows.push(Residual::exact(format!("ito2[{tag}]"), eta.id(), t.lhs, t.rhs(), band));
        if let Some(first) = t.rhs_first() {
            rows.push(Residual::exact(format!("ito1_vs_ito2[{tag}]"), eta.id(), first, t.rhs(), tol.rearrangement));
        }
        if let Some(setup) = mc {
            let sigmas = tol.sigmas;
            let est = stransform_many(setup, eta, Route::Shifted, 2, |p, out| {
                out[0] = g.eval(conv_value(k, p, horizon)?) - g.eval(0.0);
                out[1] = pathwise_jump_sum(k, g, p, horizon)?;
                Ok(())
            })?;
            rows.push(Residual::statistical(format!("ito2_lhs_mc[{tag}]"), eta.id(), est[0], t.lhs, 0.0, sigmas, 1e-9));
            rows.push(Residual::statistical(
                format!("ito2_jump_term_mc[{tag}]"),
                eta.id(),
                est[1],
                t.jump_sum_term,
                0.0,
                sigmas,
                1e-9,
            ));
        }
        terms.push(t);
    }
    Ok((terms, rows))
}

/// Rearranging the second formula into the first, from the same cached
/// quadratures; the residual is rounding error only.
pub fn ito1_from_ito2_rearrangement_check(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    g: &TestFunctionG,
    horizon: f64,
    eta: &EtaTest,
    tolerance: f64,
) -> Result<Residual> {
    if !first_formula_applies(k, measure) {
        return Err(Error::Precondition(format!(
            "the first formula does not apply to {} with this jump measure",
            k.name()
        )));
    }
    let t = ito2_terms(k, measure, g, horizon, eta)?;
    let first = t.rhs_first().expect("first formula applies");
    Ok(Residual::exact(
        format!("ito1_vs_ito2[{}|{}]", k.name(), g.name()),
        eta.id(),
        first,
        t.rhs(),
        tolerance,
    ))
}

/// `d/dt S(G(M(t)))(η)` by central differences against the sum of the three
/// derivative pieces, at each `t`.
pub fn derivative_consistency(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    g: &TestFunctionG,
    eta: &EtaTest,
    times: &[f64],
    tolerance: f64,
) -> Result<Vec<Residual>> {
    times
        .par_iter()
        .map(|&t| {
            let h = 1e-3 * t.max(1.0);
            let plus = CharCache::new(k, measure, t + h, eta, g)?.s_shift(Order::G, 0.0);
            let minus = CharCache::new(k, measure, t - h, eta, g)?.s_shift(Order::G, 0.0);
            let fd = (plus - minus) / (2.0 * h);
            let pieces = terms_at(k, measure, g, eta, t, false)?.derivative();
            Ok(Residual::exact(
                format!("ito_derivative[{}|{}|t={t}]", k.name(), g.name()),
                eta.id(),
                fd,
                pieces,
                tolerance,
            ))
        })
        .collect()
}

/// Size of term (ii) for fractional kernels of decreasing order; it does not
/// fade as `d → 0` even though the limit process has independent increments.
pub fn memory_term_vs_order(
    orders: &[f64],
    s_min: f64,
    measure: &JumpMeasure,
    g: &TestFunctionG,
    horizon: f64,
    eta: &EtaTest,
) -> Result<Vec<(f64, f64)>> {
    orders
        .iter()
        .map(|&d| {
            let k = VolterraKernel::fractional_truncated(d, s_min)?;
            Ok((d, ito2_terms(&k, measure, g, horizon, eta)?.n_diamond_term))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{simulate_path, Jump};
    use crate::mc::StreamKey;
    use crate::stransform::default_family;

    fn sym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()
    }

    fn asym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap()
    }

    #[test]
    fn gaussian_transform_pair() {
        let g = TestFunctionG::gaussian();
        assert_eq!(g.eval(0.0), 1.0);
        assert!((g.deriv(1.0) + (-0.5f64).exp()).abs() < 1e-15);
        // |𝔉G| at the radius is below the cutoff
        assert!(g.fourier(g.radius()).norm() * (1.0 + g.radius()) < FOURIER_CUTOFF);
        let s = TestFunctionG::gaussian_scaled(2.0).unwrap();
        assert!((s.fourier(0.5).re - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(TestFunctionG::gaussian_scaled(0.0).is_err());
    }

    #[test]
    fn fourier_route_at_origin_and_shift() {
        let k = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
        let g = TestFunctionG::gaussian();
        let eta = EtaTest::zero();
        // M(0) = 0 almost surely
        let v = s_of_g_of_m(&k, &sym(), 0.0, &eta, &g).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
        let c = CharCache::new(&k, &sym(), 0.0, &eta, &g).unwrap();
        for shift in [-1.5, 0.3, 2.0] {
            assert!((c.s_shift(Order::G, shift) - g.eval(shift)).abs() < 1e-11);
            assert!((c.s_shift(Order::Deriv, shift) - g.deriv(shift)).abs() < 1e-11);
        }
    }

    #[test]
    fn fourier_route_indicator_exact() {
        // L(1) for ±1 jumps at total rate 1: Σ_n P(N=n) E[G(S_n)],
        // E e^{-S²/2} over the symmetric walk S_n
        let k = VolterraKernel::indicator(2.0).unwrap();
        let g = TestFunctionG::gaussian();
        let mut exact = 0.0;
        let mut pn = (-1.0f64).exp();
        for n in 0..60u32 {
            let mut binom = 1.0f64;
            let mut acc = 0.0;
            for j in 0..=n {
                let s = 2.0 * j as f64 - n as f64;
                acc += binom * (-0.5 * s * s).exp();
                binom *= (n - j) as f64 / (j + 1) as f64;
            }
            exact += pn * acc * 0.5f64.powi(n as i32);
            pn /= (n + 1) as f64;
        }
        let v = s_of_g_of_m(&k, &sym(), 1.0, &EtaTest::zero(), &g).unwrap();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        let c = CharCache::new(&k, &sym(), 1.0, &EtaTest::zero(), &g).unwrap();
        assert!((c.s_shift(Order::G, 0.0) - exact).abs() < 1e-10);
    }

    #[test]
    fn indicator_has_no_memory_term() {
        let k = VolterraKernel::indicator(2.0).unwrap();
        let g = TestFunctionG::gaussian();
        for eta in default_family().iter().take(2) {
            let t = ito2_terms(&k, &sym(), &g, 1.0, eta).unwrap();
            assert_eq!(t.n_diamond_term, 0.0);
            assert!((t.lhs - t.rhs()).abs() < 1e-9, "{t:?}");
        }
    }

    #[test]
    fn second_formula_smooth_kernels() {
        let g = TestFunctionG::gaussian();
        let fam = default_family();
        for k in [
            VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap(),
            VolterraKernel::shot_noise(2.0, vec![1.0, -0.5]).unwrap(),
        ] {
            for eta in [&EtaTest::zero(), &fam[0], &fam[4]] {
                let t = ito2_terms(&k, &asym(), &g, 2.0, eta).unwrap();
                assert!((t.lhs - t.rhs()).abs() < 1e-7, "{} {}: {t:?}", k.name(), eta.id());
                let first = t.rhs_first().unwrap();
                assert!((first - t.rhs()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_eta_has_no_skorokhod_term() {
        let k = VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap();
        let t = ito2_terms(&k, &sym(), &TestFunctionG::gaussian(), 1.5, &EtaTest::zero()).unwrap();
        assert_eq!(t.skorokhod_m_term, 0.0);
        // continuous paths: no jump term either
        assert_eq!(t.jump_sum_term, 0.0);
    }

    #[test]
    fn telescoping_path_by_path() {
        let g = TestFunctionG::gaussian();
        let key = StreamKey::new(3, 9);
        for i in 0..40 {
            let p = simulate_path(&sym(), (0.0, 2.0), key, i).unwrap();
            assert!(classical_reduction(&g, &p, 2.0).unwrap().abs() < 1e-12);
            assert!(ito1_indicator_pathwise(&g, &sym(), &p, 2.0).unwrap().abs() < 1e-12);
            let q = simulate_path(&asym(), (0.0, 2.0), key, i).unwrap();
            assert!(classical_reduction(&g, &q, 2.0).unwrap().abs() < 1e-10);
            assert!(ito1_indicator_pathwise(&g, &asym(), &q, 2.0).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn jump_sums_on_a_fixed_path() {
        let k = VolterraKernel::ornstein_uhlenbeck(1.0, 2.0).unwrap();
        let g = TestFunctionG::gaussian();
        let p = JumpPath::from_jumps((0.0, 2.0), vec![Jump { time: 0.5, size: 1.0 }], 0.0).unwrap();
        // M jumps from 0 to 1 at 0.5
        let inc = pathwise_jump_increments(&k, &g, &p, 2.0).unwrap();
        assert!((inc - ((-0.5f64).exp() - 1.0)).abs() < 1e-15);
        let sum = pathwise_jump_sum(&k, &g, &p, 2.0).unwrap();
        assert!((sum - inc).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_pieces() {
        let k = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
        let eta = default_family().remove(1);
        let rows = derivative_consistency(&k, &asym(), &TestFunctionG::gaussian(), &eta, &[0.5, 1.0, 1.5], 1e-4).unwrap();
        for r in rows {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn rearrangement_needs_regular_kernel() {
        let k = VolterraKernel::fractional_truncated(0.25, -10.0).unwrap();
        assert!(ito1_from_ito2_rearrangement_check(&k, &sym(), &TestFunctionG::gaussian(), 1.0, &EtaTest::zero(), 1e-8).is_err());
        let setup = McSetup {
            measure: sym(),
            window: (-10.0, 2.0),
            key: StreamKey::new(1, 1),
            n: 10,
        };
        assert!(ito1_residual(&k, &TestFunctionG::gaussian(), 1.0, &setup, &[], 4.0).is_err());
    }
}
