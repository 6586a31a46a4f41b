//! Convoluted paths `M(t) = ∫ f(t,s) L(ds)` and their closed-form laws.
//!
//! Two independent path routes are provided: the direct jump sum and the
//! integration-by-parts representation
//! `M(t) = f(t,t)L(t) - f(t,a)L(a) - ∫_a^t L(s) ∂_s f(t,s) ds`.

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, QuadContext, Result};
use crate::kernels::VolterraKernel;
use crate::levy::{levy_khintchine_integrand, simulate_path, JumpMeasure, JumpPath};
use crate::mc::{ensemble, StreamKey};
use crate::quad::{integrate_with_breaks, Tolerance};
use crate::report::Residual;

/// Values of `M` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvPath {
    pub kernel: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl ConvPath {
    /// CSV dump with columns `t,M`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,M\n");
        for (t, m) in self.grid.iter().zip(&self.values) {
            out.push_str(&format!("{t:.12e},{m:.12e}\n"));
        }
        out
    }

    pub fn sup_distance(&self, other: &ConvPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Window `[lo, t_hi]` a path must cover so that `M` can be evaluated on
/// `[0, t_hi]`. The uncut fractional kernel has no finite window.
pub fn simulation_window(k: &VolterraKernel, t_hi: f64) -> Result<(f64, f64)> {
    let lo = k.s_lower();
    if !lo.is_finite() {
        return Err(Error::Contract(format!(
            "{} integrates over (-∞, t]; use a cut-off fractional kernel for path simulation",
            k.name()
        )));
    }
    Ok((lo.min(0.0), t_hi.max(0.0)))
}

fn check_coverage(k: &VolterraKernel, path: &JumpPath, t: f64) -> Result<()> {
    if t < 0.0 {
        return Err(Error::Contract(format!("paths of M are evaluated for t ≥ 0, got {t}")));
    }
    let (lo, hi) = simulation_window(k, t)?;
    if !path.covers(lo, hi) {
        return Err(Error::Contract(format!(
            "path window {:?} does not cover [{lo}, {hi}] needed for {}",
            path.window,
            k.name()
        )));
    }
    Ok(())
}

/// `∫ f(t, s) ds`, zero when there is nothing to compensate.
fn compensator(k: &VolterraKernel, drift: f64, t: f64) -> Result<f64> {
    if drift == 0.0 || t == 0.0 {
        Ok(0.0)
    } else {
        Ok(drift * k.integral_ds(t)?)
    }
}

/// `M(t)` by the direct jump sum `Σ f(t,s_j) x_j + m ∫ f(t,s) ds`; a jump
/// exactly at `t` contributes through the diagonal value `f(t,t)`.
pub fn conv_value(k: &VolterraKernel, path: &JumpPath, t: f64) -> Result<f64> {
    check_coverage(k, path, t)?;
    let mut sum = 0.0;
    for j in path.jumps.iter().take_while(|j| j.time <= t) {
        sum += if j.time == t { k.diag(t) } else { k.eval(t, j.time) } * j.size;
    }
    Ok(sum + compensator(k, path.drift_rate, t)?)
}

/// `M(t-)`: the jump sum over `s_j < t`.
pub fn conv_left_limit(k: &VolterraKernel, path: &JumpPath, t: f64) -> Result<f64> {
    check_coverage(k, path, t)?;
    let sum: f64 = path
        .jumps
        .iter()
        .take_while(|j| j.time < t)
        .map(|j| k.eval(t, j.time) * j.size)
        .sum();
    Ok(sum + compensator(k, path.drift_rate, t)?)
}

pub fn conv_path_direct(k: &VolterraKernel, path: &JumpPath, grid: &[f64]) -> Result<ConvPath> {
    let values = grid.iter().map(|&t| conv_value(k, path, t)).collect::<Result<_>>()?;
    Ok(ConvPath {
        kernel: k.name(),
        grid: grid.to_vec(),
        values,
    })
}

/// `M` by integration by parts against the reconstructed step path `L`.
/// Requires (H1)–(H4) and an s-derivative of the kernel.
pub fn conv_path_by_parts(k: &VolterraKernel, path: &JumpPath, grid: &[f64]) -> Result<ConvPath> {
    k.require_regular("integration-by-parts path construction")?;
    let (a, _) = k.support();
    let tol = Tolerance::new(1e-13, 1e-12);
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        check_coverage(k, path, t)?;
        if t <= a {
            values.push(0.0);
            continue;
        }
        let mut pts = vec![a];
        pts.extend(path.jumps_in(a, t).map(|j| j.time).filter(|&s| s < t));
        pts.push(t);
        pts.dedup();
        let err = std::cell::RefCell::new(None);
        let integral = integrate_with_breaks(
            |s| match k.dds(t, s) {
                Ok(v) => path.levy_value(s) * v,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
            tol,
        )
        .context("integration-by-parts path")?
        .value;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        let boundary = k.diag(t) * path.levy_value(t) - k.eval(t, a) * path.levy_value(a);
        values.push(boundary - integral);
    }
    Ok(ConvPath {
        kernel: k.name(),
        grid: grid.to_vec(),
        values,
    })
}

/// Jump of `M` at `t` measured as `M(t) - M(t - δ)`, next to the jump of `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRelation {
    pub time: f64,
    pub delta_m: f64,
    pub expected: f64,
}

/// Compare `ΔM(τ)` with `f(τ,τ)ΔL(τ)` at every jump time `τ ∈ (0, t_hi]`.
/// The left value is taken at `τ - δ` with `δ` a few ulps above round-off,
/// so the comparison is meaningful to about `‖∂_t f‖ δ`.
pub fn jump_relations(k: &VolterraKernel, path: &JumpPath, t_hi: f64) -> Result<Vec<JumpRelation>> {
    let mut out = Vec::new();
    for j in path.jumps_in(0.0, t_hi) {
        let tau = j.time;
        let delta = 1e-13 * tau.abs().max(1.0);
        let right = conv_value(k, path, tau)?;
        let left = conv_value(k, path, (tau - delta).max(0.0))?;
        out.push(JumpRelation {
            time: tau,
            delta_m: right - left,
            expected: k.diag(tau) * (path.levy_value(tau) - path.levy_left_limit(tau)),
        });
    }
    Ok(out)
}

/// `log E[e^{iuM(t)}] = ∫∫ (e^{iuxf(t,s)} - 1 - iuxf(t,s)) ν(dx) ds`.
pub fn conv_char_exponent(k: &VolterraKernel, measure: &JumpMeasure, t: f64, u: f64) -> Result<Complex64> {
    if u == 0.0 || t == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    k.try_integrate_s(t, |s| {
        let f = k.eval(t, s);
        if f == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        measure.integrate_x(|x| levy_khintchine_integrand(u * x * f), 2.0)
    })
}

/// `E[e^{iuM(t)}]`.
pub fn conv_charfn_analytic(k: &VolterraKernel, measure: &JumpMeasure, t: f64, u: f64) -> Result<Complex64> {
    Ok(conv_char_exponent(k, measure, t, u)?.exp())
}

/// `E[M(t)²] = ∫x²ν(dx) · ‖f(t,·)‖²`.
pub fn conv_variance_analytic(k: &VolterraKernel, measure: &JumpMeasure, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(measure.levy_variance() * k.l2norm_sq(t)?)
}

/// The fractional variance next to the constant-free expression
/// `t^{2d+1} E[L(1)²]`; their ratio is `1/(Γ(2d+2) sin(π(d+½)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalVarianceComparison {
    pub quadrature: f64,
    pub constant_free: f64,
    pub ratio: f64,
    pub closed_form_ratio: f64,
}

pub fn fractional_variance_comparison(
    d: f64,
    measure: &JumpMeasure,
    t: f64,
) -> Result<FractionalVarianceComparison> {
    let k = VolterraKernel::fractional(d)?;
    let quadrature = conv_variance_analytic(&k, measure, t)?;
    let constant_free = t.powf(2.0 * d + 1.0) * measure.levy_variance();
    Ok(FractionalVarianceComparison {
        quadrature,
        constant_free,
        ratio: quadrature / constant_free,
        closed_form_ratio: 1.0 / (gamma(2.0 * d + 2.0) * (std::f64::consts::PI * (d + 0.5)).sin()),
    })
}

/// Cut-off `s_min < 0` for the fractional kernel, reported with the
/// squared L² distance between cut and uncut kernels at time `t`
/// relative to the full norm.
pub fn fractional_cutoff_bias(d: f64, s_min: f64, t: f64) -> Result<f64> {
    let full = VolterraKernel::fractional(d)?;
    let cut = VolterraKernel::fractional_truncated(d, s_min)?;
    Ok((full.l2norm_sq(t)? - cut.l2norm_sq(t)?) / full.l2norm_sq(t)?)
}

/// Monte Carlo `E[M(t)²]` against `Var(L(1)) ‖f(t,·)‖²`.
pub fn isometry_check(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    t: f64,
    key: StreamKey,
    n: u64,
    sigmas: f64,
) -> Result<Residual> {
    let window = simulation_window(k, t)?;
    let est = ensemble(key, n, 1, |i, out| {
        out[0] = simulate_path(measure, window, key, i)
            .and_then(|p| conv_value(k, &p, t))
            .map_or(f64::NAN, |m| m * m);
    })?;
    let rhs = measure.levy_variance() * k.l2norm_sq(t)?;
    Ok(Residual::statistical(format!("isometry[{}|t={t}]", k.name()), "zero", est[0], rhs, 0.0, sigmas, 1e-10))
}

/// Worst pathwise disagreement between the direct and the by-parts route
/// over `paths` simulated paths, and the worst `|ΔM - f(τ,τ)ΔL|` over their
/// jumps, as two rows against zero.
pub fn path_route_check(
    k: &VolterraKernel,
    measure: &JumpMeasure,
    grid: &[f64],
    key: StreamKey,
    paths: u64,
    route_tol: f64,
    jump_tol: f64,
) -> Result<Vec<Residual>> {
    let t_hi = grid.iter().copied().fold(0.0, f64::max);
    let window = simulation_window(k, t_hi)?;
    let mut route = 0.0f64;
    let mut jump = 0.0f64;
    for i in 0..paths {
        let p = simulate_path(measure, window, key, i)?;
        let a = conv_path_direct(k, &p, grid)?;
        let b = conv_path_by_parts(k, &p, grid)?;
        route = route.max(a.sup_distance(&b));
        for r in jump_relations(k, &p, t_hi)? {
            jump = jump.max((r.delta_m - r.expected).abs());
        }
    }
    Ok(vec![
        Residual::exact(format!("path_routes[{}]", k.name()), "zero", route, 0.0, route_tol),
        Residual::exact(format!("jump_relation[{}]", k.name()), "zero", jump, 0.0, jump_tol),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{simulate_path, Jump};
    use crate::mc::StreamKey;

    fn sym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()
    }

    fn one_jump(s: f64, x: f64) -> JumpPath {
        JumpPath::from_jumps((0.0, 2.0), vec![Jump { time: s, size: x }], 0.0).unwrap()
    }

    #[test]
    fn empty_path_gives_zero() {
        let p = JumpPath::from_jumps((0.0, 2.0), vec![], 0.0).unwrap();
        let k = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
        let m = conv_path_direct(&k, &p, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_jump_shot_noise() {
        let k = VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap();
        let p = one_jump(0.5, 1.0);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0, 1.7];
        let direct = conv_path_direct(&k, &p, &grid).unwrap();
        let parts = conv_path_by_parts(&k, &p, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let exact = (t - 0.5f64).max(0.0);
            assert!((direct.values[i] - exact).abs() < 1e-15);
            assert!((parts.values[i] - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_reproduces_levy_path() {
        let m = JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap();
        let k = VolterraKernel::indicator(2.0).unwrap();
        let ou0 = VolterraKernel::ornstein_uhlenbeck(0.0, 2.0).unwrap();
        let key = StreamKey::new(3, 1);
        for i in 0..20 {
            let p = simulate_path(&m, (0.0, 2.0), key, i).unwrap();
            for t in [0.0, 0.3, 1.0, 1.99] {
                assert!((conv_value(&k, &p, t).unwrap() - p.levy_value(t)).abs() < 1e-12);
                let by_parts = conv_path_by_parts(&ou0, &p, &[t]).unwrap().values[0];
                assert!((by_parts - p.levy_value(t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn by_parts_rejects_fractional() {
        let k = VolterraKernel::fractional_truncated(0.25, -10.0).unwrap();
        let p = JumpPath::from_jumps((-10.0, 2.0), vec![], 0.0).unwrap();
        assert!(matches!(conv_path_by_parts(&k, &p, &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn uncovered_window_is_an_error() {
        let k = VolterraKernel::fractional_truncated(0.25, -10.0).unwrap();
        let p = JumpPath::from_jumps((-5.0, 2.0), vec![], 0.0).unwrap();
        assert!(matches!(conv_value(&k, &p, 1.0), Err(Error::Contract(_))));
        assert!(simulation_window(&VolterraKernel::fractional(0.25).unwrap(), 1.0).is_err());
    }

    #[test]
    fn charfn_reductions() {
        let m = sym();
        let ind = VolterraKernel::indicator(2.0).unwrap();
        assert_eq!(conv_charfn_analytic(&ind, &m, 1.0, 0.0).unwrap(), Complex64::new(1.0, 0.0));
        for t in [0.5, 1.0, 2.0] {
            let v = conv_charfn_analytic(&ind, &m, t, 1.3).unwrap();
            let exact = (m.char_exponent(1.3).unwrap() * t).exp();
            assert!((v - exact).norm() < 1e-12);
        }
        // shot noise k(u) = u: exp{∫₀¹ (cos(1-s) - 1) ds} = exp{sin 1 - 1}
        let k = VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap();
        let v = conv_charfn_analytic(&k, &m, 1.0, 1.0).unwrap();
        assert!((v - Complex64::new((1f64.sin() - 1.0).exp(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let m = sym();
        let k = VolterraKernel::shot_noise(2.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(conv_variance_analytic(&k, &m, 0.0).unwrap(), 0.0);
        assert!((conv_variance_analytic(&k, &m, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn fractional_ratio_is_the_gamma_constant() {
        for d in [0.1, 0.25, 0.4] {
            let c = fractional_variance_comparison(d, &sym(), 1.3).unwrap();
            assert!((c.ratio - c.closed_form_ratio).abs() < 1e-8);
            assert!((c.ratio - 1.0).abs() > 1e-3);
        }
    }

    #[test]
    fn drift_enters_by_both_routes() {
        let m = JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap();
        // ∫xν = 0 here, so use a skewed measure for a nonzero drift
        let skew = JumpMeasure::discrete(&[(1.0, 1.5), (-0.5, 1.0)]).unwrap();
        assert_eq!(m.drift_rate().unwrap(), 0.0);
        let key = StreamKey::new(5, 9);
        for k in [
            VolterraKernel::ornstein_uhlenbeck(0.7, 2.0).unwrap(),
            VolterraKernel::shot_noise(2.0, vec![1.0, -0.5, 0.25]).unwrap(),
        ] {
            for i in 0..10 {
                let p = simulate_path(&skew, (0.0, 2.0), key, i).unwrap();
                let grid: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
                let a = conv_path_direct(&k, &p, &grid).unwrap();
                let b = conv_path_by_parts(&k, &p, &grid).unwrap();
                assert!(a.sup_distance(&b) < 1e-10, "{}", k.name());
            }
        }
    }

    #[test]
    fn jump_relation_on_ou() {
        let k = VolterraKernel::ornstein_uhlenbeck(0.5, 2.0).unwrap();
        let p = JumpPath::from_jumps(
            (0.0, 2.0),
            vec![Jump { time: 0.3, size: 1.0 }, Jump { time: 1.1, size: -2.0 }],
            0.0,
        )
        .unwrap();
        for r in jump_relations(&k, &p, 2.0).unwrap() {
            assert!((r.delta_m - r.expected).abs() < 1e-10);
        }
        let csv = conv_path_direct(&k, &p, &[0.0, 1.0]).unwrap().to_csv();
        assert!(csv.starts_with("t,M\n0.000000000000e0,"));
    }
}
