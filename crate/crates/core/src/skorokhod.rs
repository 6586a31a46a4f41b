//! Skorokhod integrals with respect to `M` that have closed forms, checked
//! through their S-transforms: a random variable `Φ` is `∫ X M°(dt)` iff
//! `S(Φ)(η) = ∫ S(X(t))(η) (d/dt) S(M(t))(η) dt` for every test function.

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::conv::{conv_value, simulation_window};
use crate::error::{Error, QuadContext, Result};
use crate::frac::{frac_int_minus, SampledFunction};
use crate::kernels::VolterraKernel;
use crate::levy::{JumpMeasure, JumpPath};
use crate::mc::ensemble;
use crate::quad::{gauss_legendre, integrate, integrate_with_breaks, Tolerance};
use crate::report::Residual;
use crate::stransform::{ddt_s_of_m, s_of_m_analytic, stransform_many, EtaTest, McSetup, Route};

type PathFn = Arc<dyn Fn(&JumpPath) -> Result<f64> + Send + Sync>;
type SModel = Arc<dyn Fn(&EtaTest) -> Result<f64> + Send + Sync>;

/// A closed-form candidate `Φ` for a Skorokhod integral, with an analytic
/// model of `η ↦ S(Φ)(η)` when one is known.
#[derive(Clone)]
pub struct SkorokhodCandidate {
    pub description: String,
    pub eval: PathFn,
    pub s_model: Option<SModel>,
}

impl fmt::Debug for SkorokhodCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SkorokhodCandidate")
            .field("description", &self.description)
            .field("s_model", &self.s_model.is_some())
            .finish()
    }
}

impl SkorokhodCandidate {
    pub fn new<F>(description: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&JumpPath) -> Result<f64> + Send + Sync + 'static,
    {
        SkorokhodCandidate {
            description: description.into(),
            eval: Arc::new(eval),
            s_model: None,
        }
    }

    pub fn with_model<G>(mut self, model: G) -> Self
    where
        G: Fn(&EtaTest) -> Result<f64> + Send + Sync + 'static,
    {
        self.s_model = Some(Arc::new(model));
        self
    }
}

/// `Σ_{s_j ≤ T} f(T,s_j)² x_j²`.
fn squared_jump_sum(k: &VolterraKernel, path: &JumpPath, horizon: f64) -> f64 {
    path.jumps
        .iter()
        .take_while(|j| j.time <= horizon)
        .map(|j| {
            let f = if j.time == horizon { k.diag(horizon) } else { k.eval(horizon, j.time) };
            f * f * j.size * j.size
        })
        .sum()
}

/// `∫₀ᵀ M(t) M°(dt) = (M(T)² - Σ_{s ≤ T} f(T,s)² ΔL(s)²) / 2`.
pub fn skorokhod_quadratic(k: &VolterraKernel, path: &JumpPath, horizon: f64) -> Result<f64> {
    let m = conv_value(k, path, horizon)?;
    Ok(0.5 * (m * m - squared_jump_sum(k, path, horizon)))
}

/// Classical `∫₀ᵀ L(t-) dL(t) = Σ L(s_j-) x_j + m ∫₀ᵀ L(t) dt`.
pub fn ito_levy_integral(path: &JumpPath, horizon: f64) -> f64 {
    crate::stransform::ShippedIntegrand::JumpTimesLevy.integral(path, horizon)
}

/// `S(M(b) - M(a))(η)` by Monte Carlo against `∫_a^b (d/dt) S(M(t))(η) dt`.
pub fn increment_check(
    k: &VolterraKernel,
    a: f64,
    b: f64,
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let mut rows = Vec::new();
    for eta in etas {
        let est = stransform_many(setup, eta, Route::Reweight, 1, |p, out| {
            out[0] = conv_value(k, p, b)? - conv_value(k, p, a)?;
            Ok(())
        })?;
        let rhs = integrate_derivative(k, &setup.measure, a, b, eta)?;
        rows.push(Residual::statistical(
            format!("increment[{}|({a},{b}]]", k.name()),
            eta.id(),
            est[0],
            rhs,
            0.0,
            sigmas,
            1e-9,
        ));
    }
    Ok(rows)
}

/// `∫_a^b (d/dt) S(M(t))(η) dt` by quadrature of the analytic derivative.
pub fn integrate_derivative(k: &VolterraKernel, measure: &JumpMeasure, a: f64, b: f64, eta: &EtaTest) -> Result<f64> {
    if b <= a || eta.is_zero() {
        return Ok(0.0);
    }
    let err = std::cell::RefCell::new(None);
    // kernels with a jump in t ↦ f(t,t) or a (t-s)^{d-1} factor are smooth
    // on (a, b); split at 0 where the fractional drift density has a kink
    let mut pts = vec![a];
    if a < 0.0 && 0.0 < b {
        pts.push(0.0);
    }
    pts.push(b);
    let v = integrate_with_breaks(
        |t| match ddt_s_of_m(k, measure, t, eta) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &pts,
        Tolerance::new(1e-11, 1e-9),
    )
    .context("integrated S-transform derivative")?
    .value;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Per-η check of `S(2∫₀ᵀ M M°)(η) = S(M(T))(η)²`, the left side from the
/// pathwise closed form.
pub fn quadratic_identity_check(
    k: &VolterraKernel,
    horizon: f64,
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let mut rows = Vec::new();
    for eta in etas {
        let est = stransform_many(setup, eta, Route::Reweight, 1, |p, out| {
            out[0] = 2.0 * skorokhod_quadratic(k, p, horizon)?;
            Ok(())
        })?;
        let s = s_of_m_analytic(k, &setup.measure, horizon, eta)?;
        rows.push(Residual::statistical(
            format!("quadratic[{}]", k.name()),
            eta.id(),
            est[0],
            s * s,
            0.0,
            sigmas,
            1e-9,
        ));
    }
    Ok(rows)
}

/// `Σ_{s_j ≤ a} f(a,s_j) (f(b,s_j) - f(a,s_j)) x_j²`, the pathwise
/// correction that appears when `M(a)` is moved under the integral sign.
pub fn product_correction_correction(k: &VolterraKernel, path: &JumpPath, a: f64, b: f64) -> f64 {
    path.jumps
        .iter()
        .take_while(|j| j.time <= a)
        .map(|j| {
            let fa = if j.time == a { k.diag(a) } else { k.eval(a, j.time) };
            fa * (k.eval(b, j.time) - fa) * j.size * j.size
        })
        .sum()
}

/// `∫ f(a,s)(f(b,s) - f(a,s)) (1 + η(y,s)) y² ν(dy) ds`, the S-transform
/// of the correction term.
pub fn product_correction_correction_analytic(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    a: f64,
    b: f64,
    eta: &EtaTest,
) -> Result<f64> {
    k.try_integrate_s(a, |s| {
        let fa = k.eval(a, s);
        let w = fa * (k.eval(b, s) - fa);
        if w == 0.0 {
            return Ok(0.0);
        }
        Ok(w * measure.integrate_x(|y| y * y * (1.0 + eta.eval(y, s)), 2.0)?)
    })
}

/// Moving `M(a)` under the Skorokhod integral over `(a, b]`: per η,
///
/// * `S(M(a)(M(b)-M(a)) - C)(η)` (Monte Carlo, `C` the pathwise
///   correction) against `S(M(a))(η) [S(M(b))(η) - S(M(a))(η)]`;
/// * `S(M(a)(M(b)-M(a)))(η)` against the fully analytic right side;
/// * `S(C)(η)` against its quadrature.
pub fn product_correction_check(
    k: &VolterraKernel,
    a: f64,
    b: f64,
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let mut rows = Vec::new();
    let name = k.name();
    for eta in etas {
        let est = stransform_many(setup, eta, Route::Reweight, 3, |p, out| {
            let ma = conv_value(k, p, a)?;
            let mb = conv_value(k, p, b)?;
            let c = product_correction_correction(k, p, a, b);
            out[0] = ma * (mb - ma) - c;
            out[1] = ma * (mb - ma);
            out[2] = c;
            Ok(())
        })?;
        let sa = s_of_m_analytic(k, &setup.measure, a, eta)?;
        let sb = s_of_m_analytic(k, &setup.measure, b, eta)?;
        let skorokhod = sa * (sb - sa);
        let corr = product_correction_correction_analytic(k, &setup.measure, a, b, eta)?;
        let id = eta.id();
        rows.push(Residual::statistical(format!("product_correction[{name}]: lhs - correction"), id, est[0], skorokhod, 0.0, sigmas, 1e-9));
        rows.push(Residual::statistical(format!("product_correction[{name}]: lhs"), id, est[1], skorokhod + corr, 0.0, sigmas, 1e-9));
        rows.push(Residual::statistical(format!("product_correction[{name}]: correction"), id, est[2], corr, 0.0, sigmas, 1e-9));
    }
    Ok(rows)
}

/// `|mean Φ| ≤ sigmas · stderr` under `P` for each candidate, plus per-η
/// rows for candidates that carry an analytic S-model.
pub fn zero_expectation_suite(
    candidates: &[SkorokhodCandidate],
    setup: &McSetup,
    etas: &[EtaTest],
    sigmas: f64,
) -> Result<Vec<Residual>> {
    let mut rows = Vec::new();
    let evals: Vec<&PathFn> = candidates.iter().map(|c| &c.eval).collect();
    let key = setup.key.child(11);
    let est = ensemble(key, setup.n, candidates.len(), |i, out| {
        let res = crate::levy::simulate_path(&setup.measure, setup.window, key, i).and_then(|p| {
            for (o, f) in out.iter_mut().zip(&evals) {
                *o = f(&p)?;
            }
            Ok(())
        });
        if res.is_err() {
            out.fill(f64::NAN);
        }
    })?;
    for (c, e) in candidates.iter().zip(&est) {
        rows.push(Residual::statistical(format!("zero_mean[{}]", c.description), "zero", *e, 0.0, 0.0, sigmas, 1e-12));
    }
    for c in candidates.iter().filter(|c| c.s_model.is_some()) {
        let model = c.s_model.as_ref().expect("filtered");
        for eta in etas {
            let est = stransform_many(setup, eta, Route::Reweight, 1, |p, out| {
                out[0] = (c.eval)(p)?;
                Ok(())
            })?;
            rows.push(Residual::statistical(
                format!("s_model[{}]", c.description),
                eta.id(),
                est[0],
                model(eta)?,
                0.0,
                sigmas,
                1e-9,
            ));
        }
    }
    Ok(rows)
}

/// The quadratic candidate `∫₀ᵀ M M°(dt)` with its model `S(M(T))²/2`.
pub fn quadratic_candidate(k: &VolterraKernel, measure: &JumpMeasure, horizon: f64) -> SkorokhodCandidate {
    let (k1, k2, m) = (k.clone(), k.clone(), measure.clone());
    SkorokhodCandidate::new(format!("quadratic[{}]", k.name()), move |p| skorokhod_quadratic(&k1, p, horizon))
        .with_model(move |eta| {
            let s = s_of_m_analytic(&k2, &m, horizon, eta)?;
            Ok(0.5 * s * s)
        })
}

/// Both sides of `∫ g M_d°(dt) = ∫ (I₋^d g) L°(dt)` for a deterministic `g`
/// along one path of the cut-off fractional process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerPair {
    /// `Σ (I₋^d g)(s_j) x_j + m ∫_{a}^∞ (I₋^d g)(s) ds`
    pub lhs: f64,
    /// `Σ x_j ∫ g(t) (t-s_j)_+^{d-1}/Γ(d) dt + m ∫ g(t) (t-a)_+^d/Γ(d+1) dt`
    pub rhs: f64,
}

/// `a` is the lower end of the fractional kernel's s-range (its cut-off).
pub fn wiener_type_equiv(g: &SampledFunction, k: &VolterraKernel, path: &JumpPath) -> Result<WienerPair> {
    let Some(d) = k.fractional_order() else {
        return Err(Error::Precondition(format!("{} is not fractional", k.name())));
    };
    let a = k.s_lower();
    let (glo, ghi) = g.support();
    if !ghi.is_finite() || !glo.is_finite() {
        return Err(Error::Unsupported("Wiener-type check needs a compactly supported g".into()));
    }
    let (wlo, _) = simulation_window(k, ghi.max(0.0))?;
    if !path.covers(wlo, ghi) {
        return Err(Error::Contract(format!("path window {:?} does not cover [{wlo}, {ghi}]", path.window)));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for j in path.jumps.iter().filter(|j| j.time >= a && j.time < ghi) {
        lhs += frac_int_minus(g, d, j.time)? * j.size;
        rhs += j.size * graded_kernel_integral(g, d, j.time);
    }
    let m = path.drift_rate;
    if m != 0.0 {
        let tol = Tolerance::new(1e-12, 1e-10);
        let err = std::cell::RefCell::new(None);
        let mut pts = vec![a];
        pts.extend(g.breaks().into_iter().filter(|&b| b > a && b < ghi));
        pts.push(ghi);
        let inner = integrate_with_breaks(
            |s| match frac_int_minus(g, d, s) {
                Ok(v) => v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
            tol,
        )
        .context("Wiener drift term")?
        .value;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        lhs += m * inner;
        let mut pts = vec![glo.max(a)];
        pts.extend(g.breaks().into_iter().filter(|&b| b > glo.max(a) && b < ghi));
        pts.push(ghi);
        let outer = integrate_with_breaks(|t| g.eval(t) * (t - a).max(0.0).powf(d), &pts, tol)
            .context("Wiener drift term")?
            .value;
        rhs += m * outer / gamma(d + 1.0);
    }
    Ok(WienerPair { lhs, rhs })
}

/// `∫_s^∞ g(t) (t-s)^{d-1} dt / Γ(d)` on a geometrically graded mesh
/// towards `t = s` with a Gauss–Legendre rule per panel; the innermost
/// panel of width `h` is taken as `g(s+) h^d / d`.
fn graded_kernel_integral(g: &SampledFunction, d: f64, s: f64) -> f64 {
    let (glo, ghi) = g.support();
    if ghi <= s {
        return 0.0;
    }
    // mesh in offsets u = t - s so that tiny panels keep full precision
    let len = ghi - s;
    let levels = 48;
    let mut pts: Vec<f64> = (0..=levels).map(|k| len * 0.5f64.powi(k)).collect();
    pts.extend(g.breaks().into_iter().filter(|&b| b > s && b < ghi).map(|b| b - s));
    if glo > s {
        pts.push(glo - s);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let (nodes, weights) = gauss_legendre(16);
    let innermost = pts[0];
    let mut acc = g.eval(s + 0.5 * innermost) * innermost.powf(d) / d;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // panels wider than their distance to s, or than 0.05, are split further
        let pieces = ((hi - lo) / lo).max((hi - lo) / 0.05).ceil().clamp(1.0, 4096.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let c = lo + (p as f64 + 0.5) * h;
            for (x, wt) in nodes.iter().zip(&weights) {
                let u = c + 0.5 * h * x;
                acc += 0.5 * h * wt * g.eval(s + u) * u.powf(d - 1.0);
            }
        }
    }
    acc / gamma(d)
}

/// `E[M(a)(M(b) - M(a))] = ∫ f(a,s)(f(b,s) - f(a,s)) ds · ∫ y² ν(dy)`.
pub fn product_correction_mean(k: &VolterraKernel, measure: &JumpMeasure, a: f64, b: f64) -> Result<f64> {
    product_correction_correction_analytic(k, measure, a, b, &EtaTest::zero())
}

/// `∫_lo^hi g` helper used by tests of the graded rule.
#[allow(dead_code)]
fn reference_integral<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    integrate(f, lo, hi, Tolerance::new(1e-14, 1e-12)).map(|e| e.value).unwrap_or(f64::NAN)
}
