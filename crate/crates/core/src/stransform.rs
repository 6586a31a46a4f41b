//! The S-transform `S(X)(η) = E[exp°(I₁(η)) X]` as a change of measure.
//!
//! Three evaluation routes:
//!
//! * reweight: simulate under `P` and average `exp°(I₁(η)) X`;
//! * shifted: simulate directly under `Q_η`, whose jump compensator is
//!   `(1 + η(x,t)) ν(dx) dt`, by thinning;
//! * analytic: closed forms for linear and exponential functionals of `M`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::conv::{conv_char_exponent, conv_value, simulation_window};
use crate::error::{Error, QuadContext, Result};
use crate::kernels::VolterraKernel;
use crate::levy::{levy_khintchine_integrand, simulate_path, simulate_tilted_path, JumpMeasure, JumpPath};
use crate::mc::{ensemble, MeanEstimate, StreamKey};
use crate::quad::{integrate, weighted_power_map, QuadValue, Tolerance};
use crate::report::Residual;

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `max_x x² e^{-x²}`, attained at `|x| = 1`.
const EVEN_PROFILE_MAX: f64 = 0.367_879_441_171_442_3;
/// `max_x x³ e^{-x²}`, attained at `x = √1.5`.
const ODD_PROFILE_MAX: f64 = 0.409_916_278_941_860_04;
/// `|η|` below this level is treated as zero outside the time support.
const SUPPORT_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Even,
    Odd,
}

/// A test function `η(x, t)`. Built-in members of the admissible class are
/// `c x² e^{-x²} e^{-t²/w}` (even) and `c x³ e^{-x²} e^{-t²/w}` (odd).
/// [`EtaTest::field`] admits arbitrary signed fields for Wick exponentials
/// that are not densities.
#[derive(Clone)]
pub struct EtaTest {
    id: String,
    f: Field,
    /// `None` for `η ≡ 0`.
    support: Option<(f64, f64)>,
    inf: f64,
    sup: f64,
}

impl fmt::Debug for EtaTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EtaTest")
            .field("id", &self.id)
            .field("support", &self.support)
            .field("inf", &self.inf)
            .field("sup", &self.sup)
            .finish()
    }
}

impl EtaTest {
    pub fn zero() -> Self {
        EtaTest {
            id: "zero".into(),
            f: Arc::new(|_, _| 0.0),
            support: None,
            inf: 0.0,
            sup: 0.0,
        }
    }

    pub fn builtin(c: f64, width: f64, flavor: Flavor) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() || !c.is_finite() {
            return Err(Error::Config(format!("invalid test function parameters c={c}, w={width}")));
        }
        if c == 0.0 {
            return Ok(EtaTest::zero());
        }
        let (peak, inf, sup, f): (f64, f64, f64, Field) = match flavor {
            Flavor::Even => {
                if c <= -1.0 {
                    return Err(Error::Config(format!("even test function needs c > -1, got {c}")));
                }
                let p = c * EVEN_PROFILE_MAX;
                (
                    c.abs() * EVEN_PROFILE_MAX,
                    p.min(0.0),
                    p.max(0.0),
                    Arc::new(move |x: f64, t: f64| c * x * x * (-x * x).exp() * (-t * t / width).exp()),
                )
            }
            Flavor::Odd => {
                let p = c.abs() * ODD_PROFILE_MAX;
                if p >= 1.0 {
                    return Err(Error::Config(format!("odd test function needs |c|·0.41 < 1, got c={c}")));
                }
                (
                    p,
                    -p,
                    p,
                    Arc::new(move |x: f64, t: f64| c * x * x * x * (-x * x).exp() * (-t * t / width).exp()),
                )
            }
        };
        let half = (width * (peak / SUPPORT_CUTOFF).ln()).sqrt();
        let tag = match flavor {
            Flavor::Even => "even",
            Flavor::Odd => "odd",
        };
        Ok(EtaTest {
            id: format!("{tag}-c{c}-w{width}"),
            f,
            support: Some((-half, half)),
            inf,
            sup,
        })
    }

    /// A general field with declared time support and bounds; it need not
    /// satisfy `η > -1`.
    pub fn field<F>(id: impl Into<String>, f: F, support: (f64, f64), inf: f64, sup: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(support.0 < support.1) || !support.0.is_finite() || !support.1.is_finite() || !(inf <= sup) {
            return Err(Error::Config("field needs a finite time support and inf ≤ sup".into()));
        }
        Ok(EtaTest {
            id: id.into(),
            f: Arc::new(f),
            support: Some(support),
            inf,
            sup,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_none()
    }

    /// Declared effective time support; `None` when `η ≡ 0`.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self.support {
            None => 0.0,
            Some(_) => (self.f)(x, t),
        }
    }

    /// Upper bound of `η`, used as the thinning envelope `1 + sup η`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    pub fn is_density(&self) -> bool {
        self.inf > -1.0
    }

    /// Numerical audit of `η > -1`, `η(0,t) = 0`, `∂η/∂x(0,t) = 0` and decay
    /// outside the declared support, on the points of `xs`.
    pub fn check_admissible(&self, xs: &[f64]) -> Result<()> {
        let Some((lo, hi)) = self.support else {
            return Ok(());
        };
        let h = 1e-4;
        for i in 0..=40 {
            let t = lo + (hi - lo) * i as f64 / 40.0;
            if self.eval(0.0, t) != 0.0 {
                return Err(Error::Config(format!("{}: η(0, {t}) ≠ 0", self.id)));
            }
            let slope = (self.eval(h, t) - self.eval(-h, t)) / (2.0 * h);
            if slope.abs() > 1e-6 {
                return Err(Error::Config(format!("{}: ∂η/∂x(0, {t}) = {slope}", self.id)));
            }
            for &x in xs {
                if self.eval(x, t) <= -1.0 {
                    return Err(Error::Config(format!("{}: η({x}, {t}) ≤ -1", self.id)));
                }
            }
        }
        for &x in xs {
            for t in [lo - 1e-9, hi + 1e-9, lo - 1.0, hi + 1.0] {
                if self.eval(x, t).abs() >= SUPPORT_CUTOFF {
                    return Err(Error::Config(format!("{}: no decay at ({x}, {t})", self.id)));
                }
            }
        }
        Ok(())
    }
}

/// The default family: `{even, odd} × c ∈ {0.5, 1, 2}`, widths `1` (even)
/// and `0.5` (odd).
pub fn default_family() -> Vec<EtaTest> {
    let mut out = Vec::new();
    for (flavor, width) in [(Flavor::Even, 1.0), (Flavor::Odd, 0.5)] {
        for c in [0.5, 1.0, 2.0] {
            out.push(EtaTest::builtin(c, width, flavor).expect("shipped parameters are admissible"));
        }
    }
    out
}

fn time_tol() -> Tolerance {
    Tolerance::new(1e-13, 1e-11)
}

/// `∫ g(t) dt` over `[lo, hi]` for a fallible integrand.
fn integrate_t<T, G>(g: G, lo: f64, hi: f64) -> Result<T>
where
    T: QuadValue,
    G: Fn(f64) -> Result<T>,
{
    if hi <= lo {
        return Ok(T::default());
    }
    let err = std::cell::RefCell::new(None);
    let v = integrate(
        |t| match g(t) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                T::default()
            }
        },
        lo,
        hi,
        time_tol(),
    )
    .context("time integral")?
    .value;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `∫∫ η(x,t) ν(dx) dt`.
pub fn eta_mass(eta: &EtaTest, measure: &JumpMeasure) -> Result<f64> {
    let Some((lo, hi)) = eta.support() else {
        return Ok(0.0);
    };
    integrate_t(|t| measure.integrate_x(|x| eta.eval(x, t), 2.0), lo, hi)
}

/// `(η, η̃) = ∫∫ η η̃ ν(dx) dt`.
pub fn pairing(a: &EtaTest, b: &EtaTest, measure: &JumpMeasure) -> Result<f64> {
    let (Some((a0, a1)), Some((b0, b1))) = (a.support(), b.support()) else {
        return Ok(0.0);
    };
    integrate_t(
        |t| measure.integrate_x(|x| a.eval(x, t) * b.eval(x, t), 4.0),
        a0.max(b0),
        a1.min(b1),
    )
}

/// `g(s) = ∫ y η(y, s) ν(dy)`, the density of `S(L(ds))(η)`.
pub fn eta_drift(eta: &EtaTest, measure: &JumpMeasure, s: f64) -> Result<f64> {
    if eta.is_zero() {
        return Ok(0.0);
    }
    measure.integrate_x(|y| y * eta.eval(y, s), 3.0)
}

/// `exp°(I₁(η))` for a fixed field with its path-independent compensator
/// `∫∫ η ν dt` computed once.
#[derive(Debug, Clone)]
pub struct WickWeight {
    eta: EtaTest,
    compensator: f64,
}

impl WickWeight {
    pub fn new(eta: &EtaTest, measure: &JumpMeasure) -> Result<Self> {
        Ok(WickWeight {
            eta: eta.clone(),
            compensator: eta_mass(eta, measure)?,
        })
    }

    pub fn eta(&self) -> &EtaTest {
        &self.eta
    }

    pub fn compensator(&self) -> f64 {
        self.compensator
    }

    /// `exp{Σ log(1 + η(x_j,s_j)) - ∫∫ην dt}`; for signed fields the
    /// equivalent product form `exp{-∫∫ην dt} Π(1 + η(x_j,s_j))`.
    pub fn eval(&self, path: &JumpPath) -> Result<f64> {
        let Some((lo, hi)) = self.eta.support() else {
            return Ok(1.0);
        };
        if !path.covers(lo, hi) {
            return Err(Error::Contract(format!(
                "path window {:?} does not cover the support [{lo}, {hi}] of {}",
                path.window,
                self.eta.id()
            )));
        }
        if self.eta.is_density() {
            let logs: f64 = path.jumps.iter().map(|j| self.eta.eval(j.size, j.time).ln_1p()).sum();
            Ok((logs - self.compensator).exp())
        } else {
            let prod: f64 = path.jumps.iter().map(|j| 1.0 + self.eta.eval(j.size, j.time)).product();
            Ok(prod * (-self.compensator).exp())
        }
    }
}

/// `wick_weight` for a single path.
pub fn wick_weight(path: &JumpPath, eta: &EtaTest, measure: &JumpMeasure) -> Result<f64> {
    WickWeight::new(eta, measure)?.eval(path)
}

/// The functional `path ↦ f(y,s) exp°(I(f))(path)`, i.e. the Malliavin
/// derivative `D_{y,s}` of a Wick exponential.
pub fn malliavin_wick(weight: &WickWeight, y: f64, s: f64) -> impl Fn(&JumpPath) -> Result<f64> + Sync + '_ {
    let fys = weight.eta().eval(y, s);
    move |path| Ok(fys * weight.eval(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Reweight,
    Shifted,
    Analytic,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Reweight => "reweight",
            Method::Shifted => "shifted",
            Method::Analytic => "analytic",
        }
    }
}

/// `S(X)(η)` with its standard errors; complex values keep separate errors
/// for real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct STransformEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub method: Method,
    pub n: u64,
}

impl STransformEstimate {
    pub fn analytic(value: Complex64) -> Self {
        STransformEstimate {
            re: value.re,
            im: value.im,
            stderr_re: 0.0,
            stderr_im: 0.0,
            method: Method::Analytic,
            n: 0,
        }
    }

    fn from_parts(re: MeanEstimate, im: Option<MeanEstimate>, method: Method) -> Self {
        STransformEstimate {
            re: re.mean,
            im: im.map_or(0.0, |e| e.mean),
            stderr_re: re.stderr,
            stderr_im: im.map_or(0.0, |e| e.stderr),
            method,
            n: re.n,
        }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn real(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.re,
            stderr: self.stderr_re,
            n: self.n,
        }
    }

    pub fn imag(&self) -> MeanEstimate {
        MeanEstimate {
            mean: self.im,
            stderr: self.stderr_im,
            n: self.n,
        }
    }

    /// Both components within `sigmas` combined standard errors plus `floor`.
    pub fn agrees_with(&self, other: &STransformEstimate, sigmas: f64, floor: f64) -> bool {
        let ok = |a: f64, b: f64, sa: f64, sb: f64| (a - b).abs() <= sigmas * sa.hypot(sb) + floor;
        ok(self.re, other.re, self.stderr_re, other.stderr_re) && ok(self.im, other.im, self.stderr_im, other.stderr_im)
    }
}

/// Everything a Monte Carlo S-transform estimate needs besides `η` and `X`.
#[derive(Debug, Clone)]
pub struct McSetup {
    pub measure: JumpMeasure,
    pub window: (f64, f64),
    pub key: StreamKey,
    pub n: u64,
}

impl McSetup {
    /// Window covering the kernel's s-range up to `t_hi` and every test
    /// function support in `etas`.
    pub fn for_kernel(
        measure: &JumpMeasure,
        k: &VolterraKernel,
        t_hi: f64,
        etas: &[EtaTest],
        key: StreamKey,
        n: u64,
    ) -> Result<Self> {
        let (mut lo, mut hi) = simulation_window(k, t_hi)?;
        for e in etas {
            if let Some((a, b)) = e.support() {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        Ok(McSetup {
            measure: measure.clone(),
            window: (lo, hi),
            key,
            n,
        })
    }

    pub fn with_key(&self, key: StreamKey) -> Self {
        McSetup { key, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Reweight,
    Shifted,
}

/// Means of `width` path functionals under `Q_η` by the chosen route.
/// `x` fills its output slice; an error on any path poisons the estimate.
pub fn stransform_many<F>(setup: &McSetup, eta: &EtaTest, route: Route, width: usize, x: F) -> Result<Vec<MeanEstimate>>
where
    F: Fn(&JumpPath, &mut [f64]) -> Result<()> + Sync,
{
    if let Some((lo, hi)) = eta.support() {
        if !(setup.window.0 <= lo && hi <= setup.window.1) {
            return Err(Error::Contract(format!(
                "simulation window {:?} does not cover the support of {}",
                setup.window,
                eta.id()
            )));
        }
    }
    let measure = &setup.measure;
    match route {
        Route::Reweight => {
            let key = setup.key.child(1);
            let weight = WickWeight::new(eta, measure)?;
            ensemble(key, setup.n, width, |i, out| {
                let res = simulate_path(measure, setup.window, key, i).and_then(|p| {
                    let w = weight.eval(&p)?;
                    x(&p, out)?;
                    out.iter_mut().for_each(|v| *v *= w);
                    Ok(())
                });
                if res.is_err() {
                    out.fill(f64::NAN);
                }
            })
        }
        Route::Shifted => {
            if !eta.is_density() {
                return Err(Error::Config(format!("{} is not a density; no shifted measure", eta.id())));
            }
            let key = setup.key.child(2);
            let bound = 1.0 + eta.sup().max(0.0);
            if !bound.is_finite() {
                return Err(Error::Config(format!("{} is unbounded above", eta.id())));
            }
            ensemble(key, setup.n, width, |i, out| {
                let res = simulate_tilted_path(measure, setup.window, key, i, |x, t| 1.0 + eta.eval(x, t), bound)
                    .and_then(|p| x(&p, out));
                if res.is_err() {
                    out.fill(f64::NAN);
                }
            })
        }
    }
}

fn method_of(route: Route) -> Method {
    match route {
        Route::Reweight => Method::Reweight,
        Route::Shifted => Method::Shifted,
    }
}

/// `S(X)(η)` for a real functional.
pub fn stransform<F>(setup: &McSetup, eta: &EtaTest, route: Route, x: F) -> Result<STransformEstimate>
where
    F: Fn(&JumpPath) -> Result<f64> + Sync,
{
    let est = stransform_many(setup, eta, route, 1, |p, out| {
        out[0] = x(p)?;
        Ok(())
    })?;
    Ok(STransformEstimate::from_parts(est[0], None, method_of(route)))
}

/// `S(X)(η)` for a complex functional.
pub fn stransform_complex<F>(setup: &McSetup, eta: &EtaTest, route: Route, x: F) -> Result<STransformEstimate>
where
    F: Fn(&JumpPath) -> Result<Complex64> + Sync,
{
    let est = stransform_many(setup, eta, route, 2, |p, out| {
        let z = x(p)?;
        out[0] = z.re;
        out[1] = z.im;
        Ok(())
    })?;
    Ok(STransformEstimate::from_parts(est[0], Some(est[1]), method_of(route)))
}

pub fn stransform_reweight<F>(setup: &McSetup, eta: &EtaTest, x: F) -> Result<STransformEstimate>
where
    F: Fn(&JumpPath) -> Result<f64> + Sync,
{
    stransform(setup, eta, Route::Reweight, x)
}

pub fn stransform_shifted<F>(setup: &McSetup, eta: &EtaTest, x: F) -> Result<STransformEstimate>
where
    F: Fn(&JumpPath) -> Result<f64> + Sync,
{
    stransform(setup, eta, Route::Shifted, x)
}

/// Lower end of the s-range where `η` can contribute.
fn eta_clip(eta: &EtaTest) -> f64 {
    eta.support().map_or(f64::INFINITY, |s| s.0)
}

/// `S(M(t))(η) = ∫ f(t,s) ∫ y η(y,s) ν(dy) ds`.
pub fn s_of_m_analytic(k: &VolterraKernel, measure: &JumpMeasure, t: f64, eta: &EtaTest) -> Result<f64> {
    if eta.is_zero() || t <= 0.0 {
        return Ok(0.0);
    }
    k.try_integrate_s_from(t, eta_clip(eta), |s| {
        let f = k.eval(t, s);
        if f == 0.0 {
            return Ok(0.0);
        }
        Ok(f * eta_drift(eta, measure, s)?)
    })
}

/// `log E^{Q_η}[e^{iuM(t)}]`.
pub fn s_char_exponent(k: &VolterraKernel, measure: &JumpMeasure, t: f64, u: f64, eta: &EtaTest) -> Result<Complex64> {
    let base = conv_char_exponent(k, measure, t, u)?;
    if eta.is_zero() || u == 0.0 || t <= 0.0 {
        return Ok(base);
    }
    let tilt = k.try_integrate_s_from(t, eta_clip(eta), |s| {
        let f = k.eval(t, s);
        if f == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        measure.integrate_x(|x| levy_khintchine_integrand(u * x * f) * eta.eval(x, s), 4.0)
    })?;
    let mean = s_of_m_analytic(k, measure, t, eta)?;
    Ok(Complex64::new(0.0, u * mean) + base + tilt)
}

/// `E^{Q_η}[e^{iuM(t)}]`.
pub fn s_charfn_analytic(k: &VolterraKernel, measure: &JumpMeasure, t: f64, u: f64, eta: &EtaTest) -> Result<Complex64> {
    Ok(s_char_exponent(k, measure, t, u, eta)?.exp())
}

/// `d/dt S(M(t))(η)`.
///
/// For (H4) kernels: `∫ ∂_t f(t,s) g(s) ds + f(t,t) g(t)` with
/// `g(s) = ∫ y η(y,s) ν(dy)`. For the fractional kernel the derivative is
/// the fractional integral `(I₊^d g)(t)`, evaluated with the `(t-s)^{d-1}`
/// factor absorbed by the substitution `u = (t-s)^d`.
pub fn ddt_s_of_m(k: &VolterraKernel, measure: &JumpMeasure, t: f64, eta: &EtaTest) -> Result<f64> {
    if eta.is_zero() {
        return Ok(0.0);
    }
    let g = |s: f64| eta_drift(eta, measure, s);
    if let Some(d) = k.fractional_order() {
        let lower = k.s_lower().max(eta_clip(eta));
        if t <= lower {
            return Ok(0.0);
        }
        let err = std::cell::RefCell::new(None);
        let v = weighted_power_map(
            |s| match g(s) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            t,
            -1.0,
            t - lower,
            d,
            &[],
            time_tol(),
        )
        .context("fractional derivative of the S-transform")?
        .value;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        return Ok(v / gamma(d));
    }
    if !k.flags().h4 {
        return Err(Error::Unsupported(format!(
            "{} has neither a bounded t-derivative nor a fractional representation",
            k.name()
        )));
    }
    let memory = k.try_integrate_s_from(t, eta_clip(eta), |s| {
        let v = k.ddt(t, s)?;
        if v == 0.0 {
            return Ok(0.0);
        }
        Ok(v * g(s)?)
    })?;
    Ok(memory + k.diag(t) * g(t)?)
}

/// Predictable integrands with analytic S-transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShippedIntegrand {
    /// `X(y, t) = y`
    Jump,
    /// `X(y, t) = y L(t-)`
    JumpTimesLevy,
}

impl ShippedIntegrand {
    pub fn name(&self) -> &'static str {
        match self {
            ShippedIntegrand::Jump => "y",
            ShippedIntegrand::JumpTimesLevy => "y*L(t-)",
        }
    }

    /// `∫₀ᵀ ∫ X(y,t) Ñ(dy,dt)` along one path.
    pub fn integral(&self, path: &JumpPath, horizon: f64) -> f64 {
        match self {
            ShippedIntegrand::Jump => path.levy_value(horizon),
            ShippedIntegrand::JumpTimesLevy => {
                // Σ x_j L(s_j-) plus the compensator m ∫₀ᵀ L(t) dt
                let m = path.drift_rate;
                let mut jump_level = 0.0;
                let mut last = 0.0;
                let mut steps = 0.0;
                let mut sum = 0.0;
                for j in path.jumps_in(0.0, horizon) {
                    sum += j.size * (jump_level + m * j.time);
                    steps += jump_level * (j.time - last);
                    jump_level += j.size;
                    last = j.time;
                }
                steps += jump_level * (horizon - last);
                sum + m * (steps + 0.5 * m * horizon * horizon)
            }
        }
    }
}

/// `S(L(t))(η) = ∫₀ᵗ g(s) ds` for `t ≥ 0`.
fn s_of_levy(eta: &EtaTest, measure: &JumpMeasure, t: f64) -> Result<f64> {
    if eta.is_zero() || t <= 0.0 {
        return Ok(0.0);
    }
    integrate_t(|s| eta_drift(eta, measure, s), 0.0, t)
}

/// Right-hand side `∫₀ᵀ ∫ S(X(y,t))(η) η(y,t) ν(dy) dt`.
pub fn ito_integral_rhs(integrand: ShippedIntegrand, eta: &EtaTest, measure: &JumpMeasure, horizon: f64) -> Result<f64> {
    if eta.is_zero() {
        return Ok(0.0);
    }
    match integrand {
        ShippedIntegrand::Jump => integrate_t(|t| eta_drift(eta, measure, t), 0.0, horizon),
        ShippedIntegrand::JumpTimesLevy => integrate_t(
            |t| Ok(s_of_levy(eta, measure, t)? * eta_drift(eta, measure, t)?),
            0.0,
            horizon,
        ),
    }
}

/// Residuals `|S_MC(∫∫X Ñ)(η) - ∫∫ S(X)(η) η ν dt|` over a family.
pub fn verify_ito_integral_stransform(
    integrand: ShippedIntegrand,
    setup: &McSetup,
    etas: &[EtaTest],
    horizon: f64,
    sigmas: f64,
) -> Result<Vec<Residual>> {
    if !setup.covers_horizon(horizon) {
        return Err(Error::Contract("simulation window must contain [0, T]".into()));
    }
    let mut out = Vec::new();
    for eta in etas {
        let lhs = stransform_reweight(setup, eta, |p| Ok(integrand.integral(p, horizon)))?;
        let rhs = ito_integral_rhs(integrand, eta, &setup.measure, horizon)?;
        out.push(Residual::statistical(
            format!("ito_integral[{}]", integrand.name()),
            eta.id(),
            lhs.real(),
            rhs,
            0.0,
            sigmas,
            1e-9,
        ));
    }
    Ok(out)
}

impl McSetup {
    fn covers_horizon(&self, horizon: f64) -> bool {
        self.window.0 <= 0.0 && horizon <= self.window.1
    }
}

/// `Ñ(A, (a, b])` along a path: jumps with size in `atoms` minus the
/// compensator `(b - a) ν(A)`.
pub fn compensated_count(path: &JumpPath, atoms: &[f64], rate: f64, a: f64, b: f64) -> f64 {
    let count = path.jumps_in(a, b).filter(|j| atoms.contains(&j.size)).count() as f64;
    count - (b - a) * rate
}

/// Simple-field identity for `F = exp°(I(f))`:
/// `S(F Ñ(A,(a,b]))(η) = exp{(f,η)} ∫_a^b ∫_A (η + f + ηf) ν(dx) dt`.
/// The left side is estimated by reweighting the ordinary product.
pub fn simple_field_check(
    f: &EtaTest,
    atoms: &[f64],
    interval: (f64, f64),
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let measure = &setup.measure;
    if !measure.is_discrete() {
        return Err(Error::Precondition("simple-field identity needs a discrete jump measure".into()));
    }
    let (a, b) = interval;
    if !(setup.window.0 <= a && b <= setup.window.1) {
        return Err(Error::Contract("simulation window must contain (a, b]".into()));
    }
    let chosen: Vec<_> = measure.atoms().iter().filter(|at| atoms.contains(&at.size)).copied().collect();
    let rate_a: f64 = chosen.iter().map(|at| at.rate).sum();
    let wick_f = WickWeight::new(f, measure)?;
    let mut out = Vec::new();
    for eta in etas {
        let lhs = stransform_reweight(setup, eta, |p| {
            Ok(wick_f.eval(p)? * compensated_count(p, atoms, rate_a, a, b))
        })?;
        let inner = integrate_t(
            |t| {
                Ok(chosen
                    .iter()
                    .map(|at| {
                        let e = eta.eval(at.size, t);
                        let g = f.eval(at.size, t);
                        at.rate * (e + g + e * g)
                    })
                    .sum::<f64>())
            },
            a,
            b,
        )?;
        let rhs = pairing(f, eta, measure)?.exp() * inner;
        out.push(Residual::statistical("simple_field_identity", eta.id(), lhs.real(), rhs, 0.0, sigmas, 1e-9));
    }
    Ok(out)
}

/// Wick-exponential mean-one and pairing checks over a family: one row
/// `E[exp°(I₁(η))] = 1` per member and one row
/// `E[exp°(I₁(η)) exp°(I₁(η̃))] = exp{(η,η̃)}` per unordered pair.
pub fn wick_checks(setup: &McSetup, etas: &[EtaTest], sigmas: f64) -> Result<Vec<Residual>> {
    let weights = etas
        .iter()
        .map(|e| WickWeight::new(e, &setup.measure))
        .collect::<Result<Vec<_>>>()?;
    let width = etas.len();
    let est = ensemble(setup.key.child(3), setup.n, width + width * (width - 1) / 2, |i, out| {
        let res = simulate_path(&setup.measure, setup.window, setup.key.child(3), i).and_then(|p| {
            let w = weights.iter().map(|w| w.eval(&p)).collect::<Result<Vec<_>>>()?;
            out[..width].copy_from_slice(&w);
            let mut c = width;
            for a in 0..width {
                for b in a + 1..width {
                    out[c] = w[a] * w[b];
                    c += 1;
                }
            }
            Ok(())
        });
        if res.is_err() {
            out.fill(f64::NAN);
        }
    })?;
    let mut rows = Vec::new();
    for (e, m) in etas.iter().zip(&est) {
        rows.push(Residual::statistical("wick_mean_one", e.id(), *m, 1.0, 0.0, sigmas, 1e-12));
    }
    let mut c = width;
    for a in 0..width {
        for b in a + 1..width {
            let target = pairing(&etas[a], &etas[b], &setup.measure)?.exp();
            rows.push(Residual::statistical(
                "wick_pairing",
                format!("{}|{}", etas[a].id(), etas[b].id()),
                est[c],
                target,
                0.0,
                sigmas,
                1e-9,
            ));
            c += 1;
        }
    }
    Ok(rows)
}

/// Cross-route rows for `X ∈ {M(t), M(t)², cos uM(t), sin uM(t)}`:
/// reweight against shifted, and both against the analytic forms where
/// they exist.
pub fn route_agreement(
    k: &VolterraKernel,
    setup: &McSetup,
    etas: &[EtaTest],
    t: f64,
    u: f64,
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let functional = |p: &JumpPath, out: &mut [f64]| -> Result<()> {
        let m = conv_value(k, p, t)?;
        out[0] = m;
        out[1] = m * m;
        out[2] = (u * m).cos();
        out[3] = (u * m).sin();
        Ok(())
    };
    let names = ["M", "M^2", "Re exp(iuM)", "Im exp(iuM)"];
    let mut rows = Vec::new();
    for eta in etas {
        let rw = stransform_many(setup, eta, Route::Reweight, 4, functional)?;
        let sh = stransform_many(setup, eta, Route::Shifted, 4, functional)?;
        let mean = s_of_m_analytic(k, &setup.measure, t, eta)?;
        let cf = s_charfn_analytic(k, &setup.measure, t, u, eta)?;
        let analytic = [Some(mean), None, Some(cf.re), Some(cf.im)];
        for i in 0..4 {
            rows.push(Residual::statistical(
                format!("route[{}|{}]: reweight vs shifted", k.name(), names[i]),
                eta.id(),
                rw[i],
                sh[i].mean,
                sh[i].stderr,
                sigmas,
                0.0,
            ));
            if let Some(a) = analytic[i] {
                for (tag, e) in [("reweight", rw[i]), ("shifted", sh[i])] {
                    rows.push(Residual::statistical(
                        format!("route[{}|{}]: {tag} vs analytic", k.name(), names[i]),
                        eta.id(),
                        e,
                        a,
                        0.0,
                        sigmas,
                        1e-9,
                    ));
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::Jump;

    fn sym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()
    }

    #[test]
    fn builtin_values() {
        let e = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
        let inv_e = (-1f64).exp();
        assert!((e.eval(1.0, 0.0) - inv_e).abs() < 1e-16);
        assert!((e.eval(-1.0, 0.0) - inv_e).abs() < 1e-16);
        let o = EtaTest::builtin(1.0, 1.0, Flavor::Odd).unwrap();
        assert!((o.eval(1.0, 0.0) - inv_e).abs() < 1e-16);
        assert!((o.eval(-1.0, 0.0) + inv_e).abs() < 1e-16);
        assert!(EtaTest::builtin(0.0, 1.0, Flavor::Odd).unwrap().is_zero());
        assert!(EtaTest::builtin(-1.0, 1.0, Flavor::Even).is_err());
        assert!(EtaTest::builtin(2.5, 1.0, Flavor::Odd).is_err());
    }

    #[test]
    fn profile_maxima() {
        let even = |x: f64| x * x * (-x * x).exp();
        let odd = |x: f64| x * x * x * (-x * x).exp();
        assert!((even(1.0) - EVEN_PROFILE_MAX).abs() < 1e-16);
        assert!((odd(1.5f64.sqrt()) - ODD_PROFILE_MAX).abs() < 1e-15);
        for i in 0..2000 {
            let x = i as f64 * 0.002;
            assert!(even(x) <= EVEN_PROFILE_MAX + 1e-16 && odd(x) <= ODD_PROFILE_MAX + 1e-16);
        }
    }

    #[test]
    fn shipped_family_is_admissible() {
        let fam = default_family();
        assert_eq!(fam.len(), 6);
        let xs: Vec<f64> = (-40..=40).map(|i| 0.1 * i as f64).collect();
        for e in &fam {
            e.check_admissible(&xs).unwrap();
            assert!(e.is_density());
        }
        let ids: std::collections::BTreeSet<_> = fam.iter().map(|e| e.id().to_string()).collect();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn weight_of_trivial_cases() {
        let m = sym();
        let empty = JumpPath::from_jumps((-10.0, 10.0), vec![], 0.0).unwrap();
        assert_eq!(wick_weight(&empty, &EtaTest::zero(), &m).unwrap(), 1.0);
        let e = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
        // ∫∫ η ν dt = e^{-1} √π for the even member with c = w = 1
        let mass = eta_mass(&e, &m).unwrap();
        assert!((mass - (-1f64).exp() * std::f64::consts::PI.sqrt()).abs() < 1e-11);
        assert!((wick_weight(&empty, &e, &m).unwrap() - (-mass).exp()).abs() < 1e-14);
        let short = JumpPath::from_jumps((0.0, 1.0), vec![], 0.0).unwrap();
        assert!(matches!(wick_weight(&short, &e, &m), Err(Error::Contract(_))));
    }

    #[test]
    fn signed_field_product_form() {
        let m = sym();
        let f = EtaTest::field("neg", |x: f64, t: f64| -2.0 * x * x * (-t * t).exp(), (-7.0, 7.0), -2.0, 0.0).unwrap();
        assert!(!f.is_density());
        let p = JumpPath::from_jumps((-8.0, 8.0), vec![Jump { time: 0.0, size: 1.0 }], 0.0).unwrap();
        let w = WickWeight::new(&f, &m).unwrap();
        let mass = -2.0 * std::f64::consts::PI.sqrt();
        assert!((w.compensator() - mass).abs() < 1e-11);
        assert!((w.eval(&p).unwrap() - (-1.0) * (-mass).exp()).abs() < 1e-10);
        let d = malliavin_wick(&w, 1.0, 0.0);
        assert!((d(&p).unwrap() - 2.0 * (-mass).exp()).abs() < 1e-10);
    }

    #[test]
    fn pairing_closed_form() {
        // even c=1,w=1 with odd c=1,w=0.5 on symmetric atoms: odd·even integrand is odd in x
        let m = sym();
        let a = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
        let b = EtaTest::builtin(1.0, 0.5, Flavor::Odd).unwrap();
        assert!(pairing(&a, &b, &m).unwrap().abs() < 1e-15);
        // (a, a) = e^{-2} ∫ e^{-2t²} dt = e^{-2} √(π/2)
        let aa = pairing(&a, &a, &m).unwrap();
        assert!((aa - (-2f64).exp() * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn analytic_s_transform_examples() {
        let m = sym();
        let ind = VolterraKernel::indicator(2.0).unwrap();
        let ou = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
        let even = EtaTest::builtin(1.0, 1.0, Flavor::Even).unwrap();
        let odd = EtaTest::builtin(1.0, 1.0, Flavor::Odd).unwrap();
        assert_eq!(s_of_m_analytic(&ou, &m, 1.0, &EtaTest::zero()).unwrap(), 0.0);
        assert!(s_of_m_analytic(&ou, &m, 1.0, &even).unwrap().abs() < 1e-15);
        // indicator, odd, c = w = 1, t = 1: e^{-1} ∫₀¹ e^{-s²} ds = e^{-1} (√π/2) erf(1),
        // value from 30-digit arithmetic
        let v = s_of_m_analytic(&ind, &m, 1.0, &odd).unwrap();
        let exact = 0.274_741_244_632_382_675_1;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn charfn_reductions() {
        let m = JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap();
        let ind = VolterraKernel::indicator(2.0).unwrap();
        let odd = EtaTest::builtin(1.0, 0.5, Flavor::Odd).unwrap();
        assert!((s_charfn_analytic(&ind, &m, 1.0, 0.0, &odd).unwrap() - 1.0).norm() < 1e-15);
        let z = s_charfn_analytic(&ind, &m, 1.5, 0.7, &EtaTest::zero()).unwrap();
        assert!((z - (m.char_exponent(0.7).unwrap() * 1.5).exp()).norm() < 1e-12);
        // indicator kernel under Q_η: jumps of size x arrive at rate λ_x(1+η(x,s))
        let direct: Complex64 = m
            .atoms()
            .iter()
            .map(|a| {
                let lam = integrate(|s| a.rate * (1.0 + odd.eval(a.size, s)), 0.0, 1.5, time_tol()).unwrap().value;
                Complex64::new(0.0, 0.7 * a.size).exp() * lam - lam - Complex64::new(0.0, 0.7 * a.size * a.rate * 1.5)
            })
            .sum();
        let z = s_char_exponent(&ind, &m, 1.5, 0.7, &odd).unwrap();
        assert!((z - direct).norm() < 1e-11);
    }

    #[test]
    fn derivative_routes() {
        let m = sym();
        let odd = EtaTest::builtin(1.0, 1.0, Flavor::Odd).unwrap();
        let ind = VolterraKernel::indicator(2.0).unwrap();
        assert_eq!(ddt_s_of_m(&ind, &m, 0.7, &EtaTest::zero()).unwrap(), 0.0);
        let v = ddt_s_of_m(&ind, &m, 0.7, &odd).unwrap();
        assert!((v - eta_drift(&odd, &m, 0.7).unwrap()).abs() < 1e-15);
        let h = 1e-4;
        for k in [
            VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap(),
            VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap(),
            VolterraKernel::fractional(0.25).unwrap(),
            VolterraKernel::fractional_truncated(0.4, -50.0).unwrap(),
        ] {
            for t in [0.3, 1.0, 1.6] {
                let fd = (s_of_m_analytic(&k, &m, t + h, &odd).unwrap() - s_of_m_analytic(&k, &m, t - h, &odd).unwrap())
                    / (2.0 * h);
                let an = ddt_s_of_m(&k, &m, t, &odd).unwrap();
                assert!((fd - an).abs() < 1e-6, "{} t={t}: {fd} vs {an}", k.name());
            }
        }
    }

    #[test]
    fn shipped_integrands_pathwise() {
        let p = JumpPath::from_jumps(
            (0.0, 3.0),
            vec![Jump { time: 0.5, size: 1.0 }, Jump { time: 1.5, size: -2.0 }],
            0.4,
        )
        .unwrap();
        assert!((ShippedIntegrand::Jump.integral(&p, 2.0) - p.levy_value(2.0)).abs() < 1e-15);
        // Σ x L(s-) = 0.2 - 2·1.6; the step part of ∫₀² L is 1 - 0.5
        let steps = 1.0 * 1.0 + (-1.0) * 0.5;
        let expected = 0.2 - 2.0 * 1.6 + 0.4 * (steps + 0.2 * 4.0);
        assert!((ShippedIntegrand::JumpTimesLevy.integral(&p, 2.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn ito_rhs_closed_form() {
        // for X = y L(t-) the right side is S(L(T))(η)²/2
        let m = JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap();
        let odd = EtaTest::builtin(2.0, 0.5, Flavor::Odd).unwrap();
        let lin = ito_integral_rhs(ShippedIntegrand::Jump, &odd, &m, 1.0).unwrap();
        let quad = ito_integral_rhs(ShippedIntegrand::JumpTimesLevy, &odd, &m, 1.0).unwrap();
        assert!((quad - 0.5 * lin * lin).abs() < 1e-12);
    }
}
