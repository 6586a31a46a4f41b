//! Riemann–Liouville fractional integrals
//!
//! `(I₋^α g)(x) = Γ(α)⁻¹ ∫_x^∞ g(t) (t-x)^{α-1} dt`,
//! `(I₊^α g)(x) = Γ(α)⁻¹ ∫_{-∞}^x g(t) (x-t)^{α-1} dt`,
//!
//! computed with the substitution `u = |t - x|^α`, which turns the
//! endpoint singularity into a constant factor `1/α`.

use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::gamma;

use crate::error::{Error, QuadContext, Result};
use crate::quad::{algebraic_tail, integrate_with_breaks, weighted_power_map, Tolerance};

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function of time with known support, either in closed form or
/// given by uniformly spaced samples (linearly interpolated, zero outside).
#[derive(Clone)]
pub enum SampledFunction {
    Closed {
        f: Fn1,
        support: (f64, f64),
        /// Points where `f` has kinks or jumps.
        breaks: Vec<f64>,
    },
    Grid {
        x0: f64,
        h: f64,
        values: Vec<f64>,
    },
}

impl fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampledFunction::Closed { support, breaks, .. } => f
                .debug_struct("Closed")
                .field("support", support)
                .field("breaks", breaks)
                .finish(),
            SampledFunction::Grid { x0, h, values } => f
                .debug_struct("Grid")
                .field("x0", x0)
                .field("h", h)
                .field("len", &values.len())
                .finish(),
        }
    }
}

impl SampledFunction {
    pub fn closed<F>(f: F, support: (f64, f64), breaks: Vec<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(support.0 < support.1) || support.0.is_nan() || support.1.is_nan() {
            return Err(Error::Config(format!("empty support {support:?}")));
        }
        Ok(SampledFunction::Closed {
            f: Arc::new(f),
            support,
            breaks,
        })
    }

    pub fn grid(x0: f64, h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() || !x0.is_finite() || values.len() < 2 {
            return Err(Error::Config("grid needs h > 0 and at least two samples".into()));
        }
        Ok(SampledFunction::Grid { x0, h, values })
    }

    pub fn zero() -> Self {
        SampledFunction::Closed {
            f: Arc::new(|_| 0.0),
            support: (0.0, 1.0),
            breaks: vec![],
        }
    }

    /// `χ_{[a,b]}`.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Self::closed(move |t| if a <= t && t <= b { 1.0 } else { 0.0 }, (a, b), vec![])
    }

    /// `e^{-(t-center)²/(2σ²)}`, support cut where it drops below `1e-16`.
    pub fn gaussian(center: f64, sigma: f64) -> Result<Self> {
        let r = sigma * (2.0 * 16.0 * std::f64::consts::LN_10).sqrt();
        Self::closed(
            move |t| (-(t - center).powi(2) / (2.0 * sigma * sigma)).exp(),
            (center - r, center + r),
            vec![],
        )
    }

    /// Hat function rising from `a` to `1` at the midpoint and back to `0` at `b`.
    pub fn triangle(a: f64, b: f64) -> Result<Self> {
        let m = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        Self::closed(
            move |t| (1.0 - (t - m).abs() / half).max(0.0),
            (a, b),
            vec![m],
        )
    }

    /// Smooth compact bump `exp(-1/(1-z²))`, `z = (t-c)/r`.
    pub fn bump(c: f64, r: f64) -> Result<Self> {
        Self::closed(
            move |t| {
                let z = (t - c) / r;
                if z.abs() < 1.0 {
                    (-1.0 / (1.0 - z * z)).exp()
                } else {
                    0.0
                }
            },
            (c - r, c + r),
            vec![],
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SampledFunction::Closed { f, support, .. } => {
                if x < support.0 || x > support.1 {
                    0.0
                } else {
                    f(x)
                }
            }
            SampledFunction::Grid { x0, h, values } => {
                let p = (x - x0) / h;
                let n = values.len();
                if p < 0.0 || p > (n - 1) as f64 {
                    return 0.0;
                }
                let i = (p.floor() as usize).min(n - 2);
                let w = p - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            SampledFunction::Closed { support, .. } => *support,
            SampledFunction::Grid { x0, h, values } => (*x0, x0 + h * (values.len() - 1) as f64),
        }
    }

    /// Kinks and jumps inside the support, including its finite endpoints.
    pub fn breaks(&self) -> Vec<f64> {
        let (lo, hi) = self.support();
        let mut out: Vec<f64> = match self {
            SampledFunction::Closed { breaks, .. } => breaks.clone(),
            SampledFunction::Grid { x0, h, values } => (0..values.len()).map(|i| x0 + h * i as f64).collect(),
        };
        out.extend([lo, hi].into_iter().filter(|v| v.is_finite()));
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Reflection `t ↦ g(-t)`.
    pub fn reflect(&self) -> SampledFunction {
        let (lo, hi) = self.support();
        let me = self.clone();
        let breaks = self.breaks().iter().map(|b| -b).collect();
        SampledFunction::Closed {
            f: Arc::new(move |t| me.eval(-t)),
            support: (-hi, -lo),
            breaks,
        }
    }

    fn tolerance(&self) -> Tolerance {
        let mut tol = Tolerance::new(1e-12, 1e-10);
        tol.max_intervals += 4 * self.breaks().len();
        tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// integrate over `t > x`
    Right,
    /// integrate over `t < x`
    Left,
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("fractional order must lie in (0, 1), got {alpha}")))
    }
}

fn riemann_liouville(g: &SampledFunction, alpha: f64, x: f64, side: Side) -> Result<f64> {
    check_order(alpha)?;
    let (lo, hi) = g.support();
    let dir = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    // distance from x to the near and far ends of supp g on the chosen side
    let (near, far) = match side {
        Side::Right => (lo - x, hi - x),
        Side::Left => (x - hi, x - lo),
    };
    if far <= 0.0 {
        return Ok(0.0);
    }
    let near = near.max(0.0);
    let tol = g.tolerance();
    let breaks: Vec<f64> = g.breaks();
    let value = if far.is_finite() {
        weighted_power_map(|t| g.eval(t), x, dir, far, alpha, &breaks, tol)
            .context("fractional integral")?
            .value
    } else {
        let cut = near + 1.0;
        let head = weighted_power_map(|t| g.eval(t), x, dir, cut, alpha, &breaks, tol)
            .context("fractional integral")?
            .value;
        let tail = algebraic_tail(
            |t: f64| g.eval(t) * (dir * (t - x)).powf(alpha - 1.0),
            x + dir * cut,
            dir,
            1.0,
            2.0,
            tol,
        )
        .context("fractional integral tail")?
        .value;
        head + tail
    };
    Ok(value / gamma(alpha))
}

/// `(I₋^α g)(x)`.
pub fn frac_int_minus(g: &SampledFunction, alpha: f64, x: f64) -> Result<f64> {
    riemann_liouville(g, alpha, x, Side::Right)
}

/// `(I₊^α g)(x)`.
pub fn frac_int_plus(g: &SampledFunction, alpha: f64, x: f64) -> Result<f64> {
    riemann_liouville(g, alpha, x, Side::Left)
}

/// Residual of the fractional integration-by-parts identity
/// `∫ (I₋^α g) h dλ = ∫ g (I₊^α h) dλ`, each side by its own nested
/// quadrature.
pub fn frac_parts_check(g: &SampledFunction, h: &SampledFunction, alpha: f64) -> Result<FracPartsResidual> {
    check_order(alpha)?;
    let tol = Tolerance::new(1e-11, 1e-9);
    let outer = |weight: &SampledFunction, inner: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let (lo, hi) = weight.support();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Unsupported("duality check needs compactly supported test functions".into()));
        }
        let err = std::cell::RefCell::new(None);
        let v = integrate_with_breaks(
            |t| {
                let w = weight.eval(t);
                if w == 0.0 {
                    return 0.0;
                }
                match inner(t) {
                    Ok(v) => w * v,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        0.0
                    }
                }
            },
            &weight.breaks(),
            tol,
        )
        .context("duality outer integral")?
        .value;
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let lhs = outer(h, &|t| frac_int_minus(g, alpha, t))?;
    let rhs = outer(g, &|t| frac_int_plus(h, alpha, t))?;
    Ok(FracPartsResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `sup |(I₋^d χ_[0,t])(s) - f(t,s)|` over `grid`, with `f` the
/// Riemann–Liouville kernel `((t-s)₊^d - (-s)₊^d) / Γ(1+d)`.
pub fn kernel_identity_sup_error(d: f64, t: f64, grid: &[f64]) -> Result<f64> {
    let k = crate::kernels::VolterraKernel::fractional(d)?;
    let chi = SampledFunction::indicator(t.min(0.0), t.max(0.0))?;
    let sign = if t >= 0.0 { 1.0 } else { -1.0 };
    let mut worst = 0.0f64;
    for &s in grid {
        let v = sign * frac_int_minus(&chi, d, s)?;
        worst = worst.max((v - k.eval(t, s)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracPartsResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::VolterraKernel;
    use proptest::prelude::*;

    #[test]
    fn zero_function() {
        let z = SampledFunction::zero();
        assert_eq!(frac_int_minus(&z, 0.3, 0.2).unwrap(), 0.0);
        assert_eq!(frac_int_plus(&z, 0.3, 0.2).unwrap(), 0.0);
        let g = SampledFunction::bump(0.0, 1.0).unwrap();
        assert_eq!(frac_parts_check(&z, &g, 0.3).unwrap().residual, 0.0);
    }

    #[test]
    fn indicator_matches_fractional_kernel() {
        for d in [0.1, 0.25, 0.4] {
            for t in [0.5, 1.0, 2.0] {
                let chi = SampledFunction::indicator(0.0, t).unwrap();
                let k = VolterraKernel::fractional(d).unwrap();
                for i in 0..=40 {
                    let s = -3.0 + 0.1 * i as f64 + 0.013;
                    let v = frac_int_minus(&chi, d, s).unwrap();
                    assert!((v - k.eval(t, s)).abs() < 1e-9, "d={d} t={t} s={s}");
                }
            }
        }
    }

    #[test]
    fn exponential_gamma_oracle() {
        // Γ(1/2)⁻¹ ∫₀^∞ e^{-t} t^{-1/2} dt = 1
        let g = SampledFunction::closed(|t: f64| (-t).exp(), (0.0, f64::INFINITY), vec![]).unwrap();
        assert!((frac_int_minus(&g, 0.5, 0.0).unwrap() - 1.0).abs() < 1e-9);
        // at x = -1: e^{1} Γ(α, 1) / Γ(α) with α = 1/2 equals e·erfc(1)
        let v = frac_int_minus(&g, 0.5, -1.0).unwrap();
        let exact = 0.427_583_576_155_807_004;
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn plus_operator_antiderivative() {
        let chi = SampledFunction::indicator(0.0, 1.0).unwrap();
        let v = frac_int_plus(&chi, 0.5, 2.0).unwrap();
        let exact = (2f64.sqrt() - 1.0) / gamma(1.5);
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn grid_input_interpolates() {
        // samples of a straight line reproduce the line exactly
        let values: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
        let g = SampledFunction::grid(0.0, 0.05, values).unwrap();
        assert!((g.eval(0.512) - 0.512).abs() < 1e-14);
        let line = SampledFunction::closed(|t| t, (0.0, 1.0), vec![]).unwrap();
        let a = frac_int_minus(&g, 0.3, 0.25).unwrap();
        let b = frac_int_minus(&line, 0.3, 0.25).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn duality_examples() {
        let chi = SampledFunction::indicator(0.0, 1.0).unwrap();
        let bump = SampledFunction::gaussian(0.5, 0.3).unwrap();
        assert!(frac_parts_check(&chi, &bump, 0.25).unwrap().residual < 1e-5);
        let tri = SampledFunction::triangle(-0.5, 1.5).unwrap();
        assert!(frac_parts_check(&tri, &tri, 0.4).unwrap().residual < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn reflection_symmetry(c in -1.0f64..1.0, r in 0.2f64..1.5, x in -2.0f64..2.0, alpha in 0.05f64..0.95) {
            let g = SampledFunction::bump(c, r).unwrap();
            let lhs = frac_int_plus(&g.reflect(), alpha, x).unwrap();
            let rhs = frac_int_minus(&g, alpha, -x).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn linearity(c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, x in -1.5f64..1.5, alpha in 0.05f64..0.95) {
            let g1 = SampledFunction::bump(0.1, 0.7).unwrap();
            let g2 = SampledFunction::triangle(-0.4, 0.9).unwrap();
            let (a, b) = (g1.clone(), g2.clone());
            let combo = SampledFunction::closed(move |t| c1 * a.eval(t) + c2 * b.eval(t), (-0.6, 0.9), vec![-0.4, 0.25]).unwrap();
            let lhs = frac_int_minus(&combo, alpha, x).unwrap();
            let rhs = c1 * frac_int_minus(&g1, alpha, x).unwrap() + c2 * frac_int_minus(&g2, alpha, x).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
