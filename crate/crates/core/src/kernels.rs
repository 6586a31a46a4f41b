//! Volterra kernels `f(t, s)` and the regularity hypotheses that decide
//! which identities may be applied to them.
//!
//! Built-in kinds:
//!
//! * indicator `f(t,s) = 1_{0 < s ≤ t ≤ T*}` (then `M = L` on `[0, T*]`);
//! * shot noise `f(t,s) = k(t - s) 1_{0 ≤ s ≤ t ≤ T*}` with polynomial `k`;
//! * Ornstein–Uhlenbeck `f(t,s) = e^{-κ(t-s)} 1_{0 ≤ s ≤ t ≤ T*}`;
//! * fractional `f(t,s) = [(t-s)_+^d - (-s)_+^d] / Γ(1+d)`, optionally cut
//!   off below `s_min` so that paths can be simulated on a finite window.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, QuadContext, Result};
use crate::quad::{algebraic_tail, integrate, integrate_with_breaks, power_map, QuadValue, Tolerance};

type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied kernel. `support` is the box `[a, b]` that contains the
/// support in both variables; `flags` are the hypotheses the caller claims.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    pub eval: Fn2,
    pub ddt: Option<Fn2>,
    pub dds: Option<Fn2>,
    pub diag: Fn1,
    pub support: (f64, f64),
    pub flags: Hypotheses,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("flags", &self.flags)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    Indicator { t_max: f64 },
    /// `k(u) = Σ coeffs[i] u^i`.
    ShotNoise { t_max: f64, coeffs: Vec<f64> },
    OrnsteinUhlenbeck { kappa: f64, t_max: f64 },
    Fractional { d: f64, s_min: Option<f64> },
    Custom(CustomKernel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Hypotheses {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub h4: bool,
}

impl Hypotheses {
    pub const ALL: Hypotheses = Hypotheses {
        h1: true,
        h2: true,
        h3: true,
        h4: true,
    };

    pub fn all(&self) -> bool {
        self.h1 && self.h2 && self.h3 && self.h4
    }
}

#[derive(Debug, Clone)]
pub struct VolterraKernel {
    kind: KernelKind,
    tol: Tolerance,
}

fn poly(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn poly_deriv(coeffs: &[f64], u: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, c)| acc * u + i as f64 * c)
}

impl VolterraKernel {
    pub fn indicator(t_max: f64) -> Result<Self> {
        positive("T*", t_max)?;
        Ok(Self::from_kind(KernelKind::Indicator { t_max }))
    }

    pub fn shot_noise(t_max: f64, coeffs: Vec<f64>) -> Result<Self> {
        positive("T*", t_max)?;
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("shot-noise k needs finite polynomial coefficients".into()));
        }
        Ok(Self::from_kind(KernelKind::ShotNoise { t_max, coeffs }))
    }

    pub fn ornstein_uhlenbeck(kappa: f64, t_max: f64) -> Result<Self> {
        positive("T*", t_max)?;
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Config(format!("OU rate must be ≥ 0, got {kappa}")));
        }
        Ok(Self::from_kind(KernelKind::OrnsteinUhlenbeck { kappa, t_max }))
    }

    pub fn fractional(d: f64) -> Result<Self> {
        if !(d > 0.0 && d < 0.5) {
            return Err(Error::Config(format!("fractional order must lie in (0, 1/2), got {d}")));
        }
        Ok(Self::from_kind(KernelKind::Fractional { d, s_min: None }))
    }

    /// Fractional kernel multiplied by `1_{s ≥ s_min}`.
    pub fn fractional_truncated(d: f64, s_min: f64) -> Result<Self> {
        Self::fractional(d)?;
        if !(s_min < 0.0) || !s_min.is_finite() {
            return Err(Error::Config(format!("fractional cut-off must be finite and negative, got {s_min}")));
        }
        Ok(Self::from_kind(KernelKind::Fractional { d, s_min: Some(s_min) }))
    }

    pub fn custom(kernel: CustomKernel) -> Result<Self> {
        if !(kernel.support.0 <= 0.0 && kernel.support.1 > 0.0) {
            return Err(Error::Config("custom kernel support must satisfy a ≤ 0 < b".into()));
        }
        Ok(Self::from_kind(KernelKind::Custom(kernel)))
    }

    fn from_kind(kind: KernelKind) -> Self {
        VolterraKernel {
            kind,
            tol: Tolerance::new(1e-13, 1e-11),
        }
    }

    pub fn with_tolerance(mut self, tol: Tolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Fractional order `d`, if this is a fractional kernel.
    pub fn fractional_order(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Fractional { d, .. } => Some(d),
            _ => None,
        }
    }

    pub fn is_truncated_fractional(&self) -> bool {
        matches!(self.kind, KernelKind::Fractional { s_min: Some(_), .. })
    }

    pub fn name(&self) -> String {
        match &self.kind {
            KernelKind::Indicator { t_max } => format!("indicator(T*={t_max})"),
            KernelKind::ShotNoise { t_max, coeffs } => {
                let c: Vec<String> = coeffs.iter().map(|c| c.to_string()).collect();
                format!("shot_noise(k=[{}];T*={t_max})", c.join(";"))
            }
            KernelKind::OrnsteinUhlenbeck { kappa, t_max } => format!("ou(kappa={kappa};T*={t_max})"),
            KernelKind::Fractional { d, s_min: None } => format!("fractional(d={d})"),
            KernelKind::Fractional { d, s_min: Some(s) } => format!("fractional(d={d};s_min={s})"),
            KernelKind::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// Hypotheses (H1)–(H4) as declared by the kernel family.
    pub fn flags(&self) -> Hypotheses {
        match &self.kind {
            KernelKind::Indicator { .. } | KernelKind::ShotNoise { .. } | KernelKind::OrnsteinUhlenbeck { .. } => {
                Hypotheses::ALL
            }
            // the diagonal limit exists (it is 0); boundedness holds off the diagonal
            KernelKind::Fractional { .. } => Hypotheses {
                h1: false,
                h2: true,
                h3: true,
                h4: false,
            },
            KernelKind::Custom(c) => c.flags,
        }
    }

    /// Box `[a, b]` containing the support in both variables. The fractional
    /// kernel has unbounded support in `t` (and in `s` unless cut off).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            KernelKind::Indicator { t_max }
            | KernelKind::ShotNoise { t_max, .. }
            | KernelKind::OrnsteinUhlenbeck { t_max, .. } => (0.0, *t_max),
            KernelKind::Fractional { s_min, .. } => (s_min.unwrap_or(f64::NEG_INFINITY), f64::INFINITY),
            KernelKind::Custom(c) => c.support,
        }
    }

    /// Lower end of the s-range that contributes to `M(t)`.
    pub fn s_lower(&self) -> f64 {
        self.support().0
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match &self.kind {
            KernelKind::Indicator { t_max } => {
                if 0.0 < s && s <= t && t <= *t_max {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::ShotNoise { t_max, coeffs } => {
                if 0.0 <= s && s <= t && t <= *t_max {
                    poly(coeffs, t - s)
                } else {
                    0.0
                }
            }
            KernelKind::OrnsteinUhlenbeck { kappa, t_max } => {
                if 0.0 <= s && s <= t && t <= *t_max {
                    (-kappa * (t - s)).exp()
                } else {
                    0.0
                }
            }
            KernelKind::Fractional { d, s_min } => {
                if s_min.is_some_and(|m| s < m) {
                    return 0.0;
                }
                if s >= 0.0 && s >= t {
                    return 0.0;
                }
                let v = if s >= 0.0 {
                    (t - s).powf(*d)
                } else if t <= s {
                    -(-s).powf(*d)
                } else {
                    // (t-s)^d - (-s)^d without cancellation for |s| ≫ t
                    (-s).powf(*d) * (d * (t / -s).ln_1p()).exp_m1()
                };
                v / gamma(1.0 + d)
            }
            KernelKind::Custom(c) => (c.eval)(t, s),
        }
    }

    /// `∂f/∂t (t, s)`. On the diagonal the one-sided limit `s ↑ t` is
    /// returned where it exists; the fractional kernel is singular there.
    pub fn ddt(&self, t: f64, s: f64) -> Result<f64> {
        match &self.kind {
            KernelKind::Indicator { .. } => Ok(0.0),
            KernelKind::ShotNoise { t_max, coeffs } => Ok(if 0.0 <= s && s <= t && t <= *t_max {
                poly_deriv(coeffs, t - s)
            } else {
                0.0
            }),
            KernelKind::OrnsteinUhlenbeck { kappa, t_max } => Ok(if 0.0 <= s && s <= t && t <= *t_max {
                -kappa * (-kappa * (t - s)).exp()
            } else {
                0.0
            }),
            KernelKind::Fractional { d, s_min } => {
                if s == t {
                    return Err(Error::Singular { t, s });
                }
                if s > t || s_min.is_some_and(|m| s < m) {
                    return Ok(0.0);
                }
                Ok((t - s).powf(d - 1.0) / gamma(*d))
            }
            KernelKind::Custom(c) => match &c.ddt {
                Some(f) => Ok(f(t, s)),
                None => Err(Error::Unsupported(format!("kernel {} has no t-derivative", c.name))),
            },
        }
    }

    /// `∂f/∂s (t, s)`, used by the integration-by-parts path route.
    pub fn dds(&self, t: f64, s: f64) -> Result<f64> {
        match &self.kind {
            KernelKind::Indicator { .. } => Ok(0.0),
            KernelKind::ShotNoise { .. } | KernelKind::OrnsteinUhlenbeck { .. } => self.ddt(t, s).map(|v| -v),
            KernelKind::Fractional { d, s_min } => {
                if s == t || s == 0.0 {
                    return Err(Error::Singular { t, s });
                }
                if s_min.is_some_and(|m| s < m) {
                    return Ok(0.0);
                }
                let a = if t > s { -(t - s).powf(d - 1.0) } else { 0.0 };
                let b = if s < 0.0 { (-s).powf(d - 1.0) } else { 0.0 };
                Ok(d * (a + b) / gamma(1.0 + d))
            }
            KernelKind::Custom(c) => match &c.dds {
                Some(f) => Ok(f(t, s)),
                None => Err(Error::Unsupported(format!("kernel {} has no s-derivative", c.name))),
            },
        }
    }

    /// `f(t, t) = lim_{s↑t} f(t, s)`; jumps of `M` are `f(t,t) ΔL(t)`.
    pub fn diag(&self, t: f64) -> f64 {
        match &self.kind {
            KernelKind::Indicator { t_max } => {
                if 0.0 < t && t <= *t_max {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::ShotNoise { t_max, coeffs } => {
                if 0.0 <= t && t <= *t_max {
                    coeffs[0]
                } else {
                    0.0
                }
            }
            KernelKind::OrnsteinUhlenbeck { t_max, .. } => {
                if 0.0 <= t && t <= *t_max {
                    1.0
                } else {
                    0.0
                }
            }
            // continuous across the diagonal; the limit vanishes for t ≥ 0
            KernelKind::Fractional { d, s_min } => {
                if t < 0.0 && !s_min.is_some_and(|m| t < m) {
                    -(-t).powf(*d) / gamma(1.0 + d)
                } else {
                    0.0
                }
            }
            KernelKind::Custom(c) => (c.diag)(t),
        }
    }

    /// `∫ F(s) ds` over the s-range that contributes at time `t ≥ 0`.
    ///
    /// For the fractional kernel the range is split at `0` and `-1`: both
    /// near pieces are mapped with `u = |·|^d`, which absorbs both a
    /// `(t-s)^{d-1}` factor and the `(-s)^d` kink. An uncut tail is mapped to a bounded
    /// integrand assuming decay like `|s|^{2d-2}`.
    pub fn integrate_s<T, F>(&self, t: f64, f: F) -> Result<T>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        self.integrate_s_from(t, f64::NEG_INFINITY, f)
    }

    /// As [`integrate_s`](Self::integrate_s) with the range further cut
    /// to `s ≥ clip`, for integrands known to vanish below `clip`.
    pub fn integrate_s_from<T, F>(&self, t: f64, clip: f64, f: F) -> Result<T>
    where
        T: QuadValue,
        F: Fn(f64) -> T,
    {
        let tol = self.tol;
        match &self.kind {
            KernelKind::Fractional { d, s_min } => {
                if t <= 0.0 {
                    if t == 0.0 {
                        return Ok(T::default());
                    }
                    return Err(Error::Unsupported("fractional s-integrals for t < 0".into()));
                }
                let d = *d;
                let lo = s_min.unwrap_or(f64::NEG_INFINITY).max(clip);
                let mut acc = T::default();
                let near_lo = lo.max(0.0);
                if t > near_lo && near_lo >= 0.0 {
                    acc = acc
                        + power_map(&f, t, -1.0, t - near_lo, d, &[], tol)
                            .context("kernel s-integral near the diagonal")?
                            .value;
                }
                if lo < 0.0 {
                    let mid_lo = lo.max(-1.0);
                    acc = acc
                        + power_map(&f, 0.0, -1.0, -mid_lo, d, &[], tol)
                            .context("kernel s-integral near the origin")?
                            .value;
                    if lo < -1.0 {
                        let tail = if lo.is_finite() {
                            integrate(&f, lo, -1.0, tol)
                        } else {
                            algebraic_tail(&f, -1.0, -1.0, 1.0, 2.0 - 2.0 * d, tol)
                        };
                        acc = acc + tail.context("kernel s-integral tail")?.value;
                    }
                }
                Ok(acc)
            }
            _ => {
                let (a, b) = self.support();
                let a = a.max(clip);
                let hi = t.min(b);
                if t > b || hi <= a {
                    return Ok(T::default());
                }
                let mut pts = vec![a];
                if a < 0.0 && 0.0 < hi {
                    pts.push(0.0);
                }
                pts.push(hi);
                Ok(integrate_with_breaks(&f, &pts, tol).context("kernel s-integral")?.value)
            }
        }
    }

    /// [`integrate_s`](Self::integrate_s) for a fallible integrand; the
    /// first error raised inside the integrand is returned.
    pub fn try_integrate_s<T, F>(&self, t: f64, f: F) -> Result<T>
    where
        T: QuadValue,
        F: Fn(f64) -> Result<T>,
    {
        self.try_integrate_s_from(t, f64::NEG_INFINITY, f)
    }

    pub fn try_integrate_s_from<T, F>(&self, t: f64, clip: f64, f: F) -> Result<T>
    where
        T: QuadValue,
        F: Fn(f64) -> Result<T>,
    {
        let err = std::cell::RefCell::new(None);
        let v = self.integrate_s_from(t, clip, |s| match f(s) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                T::default()
            }
        });
        match err.into_inner() {
            Some(e) => Err(e),
            None => v,
        }
    }

    /// `‖f(t, ·)‖²`.
    pub fn l2norm_sq(&self, t: f64) -> Result<f64> {
        self.integrate_s(t, |s| {
            let v = self.eval(t, s);
            v * v
        })
    }

    /// `∫ f(t, s) ds`; diverges for the uncut fractional kernel.
    pub fn integral_ds(&self, t: f64) -> Result<f64> {
        if let KernelKind::Fractional { d, s_min } = self.kind {
            return match s_min {
                None => Err(Error::Unsupported(
                    "∫ f(t,s) ds diverges for the fractional kernel without a cut-off".into(),
                )),
                Some(m) => {
                    let sm = -m;
                    Ok((((t + sm).powf(d + 1.0) - sm.powf(d + 1.0)) / gamma(d + 2.0)).max(0.0))
                }
            };
        }
        self.integrate_s(t, |s| self.eval(t, s))
    }

    /// `f(t,t) + ∫ ∂f/∂t(t, s) ds`, i.e. `d/dt ∫ f(t,s) ds`, for H4 kernels.
    pub fn drift_derivative(&self, t: f64) -> Result<f64> {
        if !self.flags().h4 {
            return Err(Error::Precondition(format!("{} does not satisfy (H4)", self.name())));
        }
        let v = self.try_integrate_s(t, |s| self.ddt(t, s))?;
        Ok(self.diag(t) + v)
    }

    /// Error unless (H1)–(H4) are all declared.
    pub fn require_regular(&self, what: &str) -> Result<()> {
        if self.flags().all() {
            Ok(())
        } else {
            Err(Error::Contract(format!("{what} requires (H1)-(H4); {} does not satisfy them", self.name())))
        }
    }

    /// Numerical audit of the declared hypotheses.
    pub fn check_hypotheses(&self) -> HypothesisReport {
        check_hypotheses(self)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

/// One hypothesis verdict; `witness` is a `(t, s)` point where it fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<(f64, f64)>,
    pub note: String,
}

impl Verdict {
    fn ok() -> Self {
        Verdict {
            holds: true,
            witness: None,
            note: String::new(),
        }
    }

    fn fail(t: f64, s: f64, note: impl Into<String>) -> Self {
        Verdict {
            holds: false,
            witness: Some((t, s)),
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1: Verdict,
    pub h2: Verdict,
    pub h3: Verdict,
    pub h4: Verdict,
}

impl HypothesisReport {
    pub fn flags(&self) -> Hypotheses {
        Hypotheses {
            h1: self.h1.holds,
            h2: self.h2.holds,
            h3: self.h3.holds,
            h4: self.h4.holds,
        }
    }
}

fn check_hypotheses(k: &VolterraKernel) -> HypothesisReport {
    let (a, b) = k.support();
    let finite_box = a.is_finite() && b.is_finite();
    // box used for sampling; unbounded kernels are probed on [-4, 4]
    let (lo, hi) = if finite_box { (a, b) } else { (a.max(-4.0), 4.0) };
    let n = 24;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.37) / n as f64).collect();

    let h1 = if !finite_box {
        // look for mass far outside any bounded box
        let probes = [(1.0, -1e6), (1e6, 0.5), (1.0, a.max(-1e6))];
        match probes.iter().find(|&&(t, s)| k.eval(t, s) != 0.0) {
            Some(&(t, s)) => Verdict::fail(t, s, "kernel does not vanish outside every bounded box"),
            None => Verdict::fail(1e6, 0.5, "support is declared unbounded"),
        }
    } else {
        let outside = [(b + 0.5, 0.5 * b), (0.5 * b, a - 0.5), (b + 1.0, b + 0.5), (a - 0.5, a - 1.0)];
        match outside.iter().find(|&&(t, s)| k.eval(t, s) != 0.0) {
            Some(&(t, s)) => Verdict::fail(t, s, "non-zero outside declared support"),
            None => Verdict::ok(),
        }
    };

    let mut h2 = Verdict::ok();
    'outer: for &t in &grid {
        for &s in &grid {
            if s == t {
                continue;
            }
            let v = k.eval(t, s);
            if !v.is_finite() || v.abs() > 1e8 {
                h2 = Verdict::fail(t, s, "kernel unbounded off the diagonal");
                break 'outer;
            }
        }
    }

    let mut h3 = Verdict::ok();
    for &t in grid.iter().filter(|&&t| t > lo + 1e-3) {
        // the gap to the diagonal value must shrink steadily as s ↑ t
        let diag = k.diag(t);
        let gaps: Vec<f64> = (2..=14).map(|e| (k.eval(t, t - 10f64.powi(-e)) - diag).abs()).collect();
        let last = gaps[gaps.len() - 1];
        let shrinking = gaps.windows(2).all(|w| w[1] <= 0.95 * w[0]) && last < 0.1 * gaps[0];
        if !(last <= 1e-6 * (1.0 + diag.abs()) || shrinking) {
            h3 = Verdict::fail(t, t, "diagonal value differs from the limit s ↑ t");
            break;
        }
        if (k.diag(t + 1e-9) - k.diag(t)).abs() > 1e-6 && t + 1e-9 < hi {
            h3 = Verdict::fail(t, t, "t ↦ f(t,t) is discontinuous");
            break;
        }
    }

    let h4 = check_h4(k, &grid, lo, hi);
    HypothesisReport { h1, h2, h3, h4 }
}

fn check_h4(k: &VolterraKernel, grid: &[f64], lo: f64, hi: f64) -> Verdict {
    // growth of the derivative approaching the diagonal
    for &t in grid.iter().filter(|&&t| t > lo + 0.1) {
        let reference = match k.ddt(t, t - 1e-2) {
            Ok(v) => v.abs(),
            Err(_) => return Verdict::fail(t, t - 1e-2, "t-derivative unavailable"),
        };
        for e in 3..=12 {
            let s = t - 10f64.powi(-e);
            match k.ddt(t, s) {
                Ok(v) if v.is_finite() && v.abs() <= 1e3 * (1.0 + reference) => {}
                Ok(_) => return Verdict::fail(t, s, "∂f/∂t unbounded near the diagonal"),
                Err(_) => return Verdict::fail(t, s, "∂f/∂t unavailable near the diagonal"),
            }
        }
    }
    // agreement with central differences away from the diagonal and the box edges
    let h = 1e-5;
    for &t in grid {
        for &s in grid {
            if (t - s).abs() < 0.05 || t - lo < 0.05 || hi - t < 0.05 || (s - lo).abs() < 0.05 || s.abs() < 0.05 {
                continue;
            }
            let Ok(exact) = k.ddt(t, s) else {
                return Verdict::fail(t, s, "t-derivative unavailable");
            };
            let fd = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
            if (exact - fd).abs() > 1e-6 * (1.0 + exact.abs()) {
                return Verdict::fail(t, s, "∂f/∂t disagrees with finite differences");
            }
        }
    }
    Verdict::ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ou(kappa: f64) -> VolterraKernel {
        VolterraKernel::ornstein_uhlenbeck(kappa, 2.0).unwrap()
    }

    fn shot() -> VolterraKernel {
        VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap()
    }

    fn frac(d: f64) -> VolterraKernel {
        VolterraKernel::fractional(d).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ou(0.0).eval(1.0, 0.3), 1.0);
        assert_eq!(ou(0.0).eval(2.0, 0.0), 1.0);
        assert_eq!(shot().eval(1.0, 0.25), 0.75);
        assert_eq!(frac(0.25).eval(0.5, 0.7), 0.0);
        assert_eq!(frac(0.25).eval(0.0, -3.0), 0.0);
    }

    #[test]
    fn ddt_examples() {
        let k = ou(0.7);
        for (t, s) in [(1.0, 0.2), (1.5, 1.1)] {
            let exact = k.ddt(t, s).unwrap();
            let h = 1e-5;
            let fd = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
            assert!((exact - fd).abs() < 1e-9);
            assert!((exact + 0.7 * (-0.7 * (t - s)).exp()).abs() < 1e-15);
        }
        assert_eq!(shot().ddt(1.0, 0.4).unwrap(), 1.0);
        let d = 0.25;
        let v = frac(d).ddt(1.0, 0.2).unwrap();
        assert!((v - 0.8f64.powf(d - 1.0) / gamma(d)).abs() < 1e-15);
        assert!(matches!(frac(d).ddt(1.0, 1.0), Err(Error::Singular { .. })));
    }

    #[test]
    fn diag_examples() {
        assert_eq!(ou(0.3).diag(1.0), 1.0);
        assert_eq!(shot().diag(1.0), 0.0);
        assert_eq!(frac(0.25).diag(1.0), 0.0);
        assert!(frac(0.25).eval(1.0, 1.0 - 1e-12).abs() < 1e-2);
    }

    #[test]
    fn l2_norms() {
        assert!((ou(0.0).l2norm_sq(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((shot().l2norm_sq(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let kappa = 0.8;
        let exact = (1.0 - (-2.0 * kappa * 1.3f64).exp()) / (2.0 * kappa);
        assert!((ou(kappa).l2norm_sq(1.3).unwrap() - exact).abs() < 1e-13);
        assert!((VolterraKernel::indicator(2.0).unwrap().l2norm_sq(1.5).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn fractional_l2norm_matches_closed_form() {
        // ‖f_t‖² = t^{2d+1} / (Γ(2d+2) sin(π(d + 1/2)))
        for d in [0.1, 0.25, 0.4] {
            for t in [0.5, 1.0, 2.0] {
                let q = frac(d).l2norm_sq(t).unwrap();
                let exact = t.powf(2.0 * d + 1.0) / (gamma(2.0 * d + 2.0) * (std::f64::consts::PI * (d + 0.5)).sin());
                assert!((q - exact).abs() < 1e-8 * exact, "d={d} t={t}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn truncated_fractional_integrals() {
        let k = VolterraKernel::fractional_truncated(0.25, -30.0).unwrap();
        let closed = k.integral_ds(1.0).unwrap();
        let quad = k.integrate_s(1.0, |s| k.eval(1.0, s)).unwrap();
        assert!((closed - quad).abs() < 1e-10 * closed);
        assert!(frac(0.25).integral_ds(1.0).is_err());
        assert!(k.l2norm_sq(1.0).unwrap() < frac(0.25).l2norm_sq(1.0).unwrap());
    }

    #[test]
    fn drift_derivative_examples() {
        let kappa = 0.5;
        let t = 0.8;
        assert!((ou(kappa).drift_derivative(t).unwrap() - (-kappa * t).exp()).abs() < 1e-13);
        assert!((shot().drift_derivative(t).unwrap() - t).abs() < 1e-13);
        assert!(frac(0.25).drift_derivative(t).is_err());
    }

    #[test]
    fn hypotheses_of_builtin_kernels() {
        for k in [ou(0.5), shot(), VolterraKernel::indicator(2.0).unwrap()] {
            let r = k.check_hypotheses();
            assert!(r.flags().all(), "{}: {r:?}", k.name());
            assert_eq!(k.flags(), Hypotheses::ALL);
        }
        let r = frac(0.25).check_hypotheses();
        assert!(!r.h1.holds && r.h1.witness.is_some());
        assert!(!r.h4.holds);
        let (t, s) = r.h4.witness.unwrap();
        assert!(t - s < 1e-2);
        assert!(r.h3.holds);
    }

    #[test]
    fn custom_kernel_without_derivative_fails_h4() {
        let k = VolterraKernel::custom(CustomKernel {
            name: "step".into(),
            eval: Arc::new(|t, s| if 0.0 <= s && s <= t && t <= 1.0 { 1.0 + t } else { 0.0 }),
            ddt: None,
            dds: None,
            diag: Arc::new(|t| if (0.0..=1.0).contains(&t) { 1.0 + t } else { 0.0 }),
            support: (0.0, 1.0),
            flags: Hypotheses::ALL,
        })
        .unwrap();
        let r = k.check_hypotheses();
        assert!(r.h1.holds && r.h2.holds && r.h3.holds);
        assert!(!r.h4.holds);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn volterra_and_zero_at_origin(t in 0.0f64..3.0, s in -5.0f64..5.0) {
            for k in [ou(0.5), shot(), frac(0.1), frac(0.4), VolterraKernel::indicator(2.0).unwrap()] {
                if s > t {
                    prop_assert_eq!(k.eval(t, s), 0.0);
                }
                if s != 0.0 {
                    prop_assert_eq!(k.eval(0.0, s), 0.0);
                }
            }
        }

        #[test]
        fn ddt_matches_finite_differences(t in 0.1f64..1.9, s in 0.05f64..1.9) {
            prop_assume!(t - s > 0.02);
            for k in [ou(0.5), ou(2.0), shot(), VolterraKernel::shot_noise(2.0, vec![0.5, -1.0, 2.0]).unwrap()] {
                let h = 1e-5;
                let exact = k.ddt(t, s).unwrap();
                let fd = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
                prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()));
            }
        }
    }
}
