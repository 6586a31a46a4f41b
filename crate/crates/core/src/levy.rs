//! Zero-mean pure-jump Lévy models and two-sided path simulation.
//!
//! A [`JumpMeasure`] is a finite sum of atoms, optionally plus a tempered
//! stable density restricted to `|x| > ε`. Paths are simulated exactly as
//! marked Poisson point sets on a finite window; the compensating drift
//! `-∫x ν(dx)` makes `L` a martingale with `L(0) = 0`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ui};

use crate::error::{Error, QuadContext, Result};
use crate::mc::StreamKey;
use crate::quad::{integrate, QuadValue, Tolerance};

/// Jump size `size` occurring at rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub size: f64,
    pub rate: f64,
}

/// Two-sided tempered stable density
/// `c± e^{-λ±|x|} |x|^{-1-α}` on `x ≷ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperedStable {
    pub c_pos: f64,
    pub c_neg: f64,
    pub lambda_pos: f64,
    pub lambda_neg: f64,
    pub alpha: f64,
}

impl TemperedStable {
    pub fn symmetric(c: f64, lambda: f64, alpha: f64) -> Self {
        TemperedStable {
            c_pos: c,
            c_neg: c,
            lambda_pos: lambda,
            lambda_neg: lambda,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.c_pos >= 0.0
            && self.c_neg >= 0.0
            && self.lambda_pos > 0.0
            && self.lambda_neg > 0.0
            && self.alpha > -1.0
            && self.alpha < 2.0
            && [self.c_pos, self.c_neg, self.lambda_pos, self.lambda_neg, self.alpha]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tempered stable parameters {self:?}")))
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.c_pos * (-self.lambda_pos * x).exp() * x.powf(-1.0 - self.alpha)
        } else if x < 0.0 {
            let y = -x;
            self.c_neg * (-self.lambda_neg * y).exp() * y.powf(-1.0 - self.alpha)
        } else {
            0.0
        }
    }

    /// `∫_{x>eps} x^m k(x) dx` on one side via the incomplete gamma function.
    fn side_moment(c: f64, lambda: f64, alpha: f64, m: f64, eps: f64) -> f64 {
        if c == 0.0 {
            return 0.0;
        }
        let a = m - alpha;
        if eps == 0.0 {
            if a <= 0.0 {
                return f64::INFINITY;
            }
            return c * lambda.powf(-a) * gamma(a);
        }
        if a > 0.0 {
            c * lambda.powf(-a) * gamma_ui(a, lambda * eps)
        } else {
            // statrs' incomplete gamma needs a > 0; fall back to quadrature
            let f = |x: f64| x.powf(m - 1.0 - alpha) * (-lambda * x).exp();
            let near = integrate(f, eps, eps.max(1.0), Tolerance::new(0.0, 1e-12))
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
            let far = crate::quad::algebraic_tail(
                |x: f64| x.powf(m - 1.0 - alpha) * (-lambda * x).exp(),
                eps.max(1.0),
                1.0,
                1.0,
                2.0,
                Tolerance::new(0.0, 1e-12),
            )
            .map(|e| e.value)
            .unwrap_or(f64::NAN);
            c * (near + far)
        }
    }
}

/// Tabulated exact sampler for the density restricted to `|x| > eps`:
/// cells on a geometric + linear grid, cell masses by quadrature, rejection
/// inside each cell against the (monotone) density at the inner edge.
#[derive(Debug)]
struct DensitySampler {
    cells: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl DensitySampler {
    fn build(ts: &TemperedStable, eps: f64) -> Result<(Self, f64)> {
        let mut cells = Vec::new();
        let mut masses = Vec::new();
        for (sign, c, lambda) in [(1.0, ts.c_pos, ts.lambda_pos), (-1.0, ts.c_neg, ts.lambda_neg)] {
            if c == 0.0 {
                continue;
            }
            let x_max = eps.max(1.0) + 45.0 / lambda;
            let mut edges = Vec::new();
            if eps < 1.0 {
                let n = 200;
                let r = (1.0 / eps).ln() / n as f64;
                for i in 0..=n {
                    edges.push(eps * (r * i as f64).exp());
                }
            } else {
                edges.push(eps);
            }
            let start = *edges.last().expect("non-empty");
            let n = 200;
            for i in 1..=n {
                edges.push(start + (x_max - start) * i as f64 / n as f64);
            }
            for w in edges.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let m = integrate(|x: f64| ts.density(sign * x), lo, hi, Tolerance::new(0.0, 1e-11))
                    .context("jump density cell mass")?
                    .value;
                if sign > 0.0 {
                    cells.push((lo, hi));
                } else {
                    cells.push((-lo, -hi));
                }
                masses.push(m);
            }
        }
        let total: f64 = masses.iter().sum();
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in masses {
            acc += m / total;
            cumulative.push(acc);
        }
        Ok((DensitySampler { cells, cumulative }, total))
    }

    fn sample<R: Rng>(&self, ts: &TemperedStable, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c < u).min(self.cells.len() - 1);
        let (inner, outer) = self.cells[i];
        let envelope = ts.density(inner);
        loop {
            let x = inner + (outer - inner) * rng.random::<f64>();
            if rng.random::<f64>() * envelope <= ts.density(x) {
                return x;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct DensityPart {
    family: TemperedStable,
    /// Only jumps with `|x| > eps` are kept; `eps = 0` is the full measure.
    eps: f64,
    sampler: Option<Arc<DensitySampler>>,
    rate: f64,
}

/// A Lévy measure ν together with the zero-mean normalization of the model.
#[derive(Debug, Clone)]
pub struct JumpMeasure {
    atoms: Vec<Atom>,
    density: Option<DensityPart>,
}

/// Result of [`JumpMeasure::truncate_small_jumps`].
#[derive(Debug, Clone)]
pub struct Truncation {
    pub measure: JumpMeasure,
    /// `∫_{|x| ≤ ε} x² ν(dx)`, the variance removed by truncation.
    pub discarded_variance: f64,
    pub warning: Option<String>,
}

impl JumpMeasure {
    pub fn empty() -> Self {
        JumpMeasure {
            atoms: Vec::new(),
            density: None,
        }
    }

    /// Discrete measure `Σ rate_k δ_{size_k}` from `(size, rate)` pairs.
    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self> {
        let mut out = Vec::with_capacity(atoms.len());
        for &(size, rate) in atoms {
            if !size.is_finite() || !rate.is_finite() {
                return Err(Error::Config(format!("non-finite atom ({size}, {rate})")));
            }
            if size == 0.0 {
                return Err(Error::Config("jump measure may not charge 0".into()));
            }
            if rate < 0.0 {
                return Err(Error::Config(format!("negative rate {rate} for atom at {size}")));
            }
            if rate > 0.0 {
                out.push(Atom { size, rate });
            }
        }
        Ok(JumpMeasure {
            atoms: out,
            density: None,
        })
    }

    /// Tempered stable density, untruncated (infinite activity for α ≥ 0).
    pub fn tempered_stable(family: TemperedStable) -> Result<Self> {
        family.validate()?;
        let mut m = JumpMeasure {
            atoms: Vec::new(),
            density: Some(DensityPart {
                family,
                eps: 0.0,
                sampler: None,
                rate: f64::INFINITY,
            }),
        };
        if family.alpha < 0.0 {
            m = m.with_density_cut(0.0)?;
        }
        Ok(m)
    }

    /// Adds atoms to an existing measure.
    pub fn with_atoms(mut self, atoms: &[(f64, f64)]) -> Result<Self> {
        let extra = JumpMeasure::discrete(atoms)?;
        self.atoms.extend(extra.atoms);
        Ok(self)
    }

    fn with_density_cut(mut self, eps: f64) -> Result<Self> {
        if let Some(d) = self.density.as_mut() {
            d.eps = eps;
            let finite = eps > 0.0 || d.family.alpha < 0.0;
            if finite {
                let (sampler, rate) = DensitySampler::build(&d.family, eps)?;
                d.sampler = Some(Arc::new(sampler));
                d.rate = rate;
            } else {
                d.sampler = None;
                d.rate = f64::INFINITY;
            }
        }
        Ok(self)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<(TemperedStable, f64)> {
        self.density.as_ref().map(|d| (d.family, d.eps))
    }

    pub fn is_discrete(&self) -> bool {
        self.density.is_none()
    }

    /// ν(ℝ₀); infinite for an untruncated infinite-activity density.
    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum::<f64>() + self.density.as_ref().map_or(0.0, |d| d.rate)
    }

    /// `∫|x|^m ν(dx)`; `+∞` when it diverges.
    pub fn abs_moment(&self, m: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.rate * a.size.abs().powf(m)).sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            let f = &d.family;
            TemperedStable::side_moment(f.c_pos, f.lambda_pos, f.alpha, m, d.eps)
                + TemperedStable::side_moment(f.c_neg, f.lambda_neg, f.alpha, m, d.eps)
        });
        atoms + dens
    }

    /// `∫x ν(dx)`, the mean jump rate. Requires `∫|x|ν < ∞`.
    pub fn first_moment(&self) -> Result<f64> {
        if !self.abs_moment(1.0).is_finite() {
            return Err(Error::Precondition("∫|x| ν(dx) is infinite".into()));
        }
        let atoms: f64 = self.atoms.iter().map(|a| a.rate * a.size).sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            let f = &d.family;
            TemperedStable::side_moment(f.c_pos, f.lambda_pos, f.alpha, 1.0, d.eps)
                - TemperedStable::side_moment(f.c_neg, f.lambda_neg, f.alpha, 1.0, d.eps)
        });
        Ok(atoms + dens)
    }

    /// Variance of `L(1)`, i.e. `∫x² ν(dx)`.
    pub fn levy_variance(&self) -> f64 {
        self.abs_moment(2.0)
    }

    /// Drift making `L` a martingale, `-∫x ν(dx)`. Only defined for finite
    /// activity (the compensated small jumps of an infinite-activity measure
    /// have no pathwise drift).
    pub fn drift_rate(&self) -> Result<f64> {
        if !self.total_rate().is_finite() {
            return Err(Error::Config(
                "infinite-activity measure: truncate small jumps before simulating".into(),
            ));
        }
        Ok(-self.first_moment()?)
    }

    /// Check `∫|x|^m ν < ∞` for `m = 2..=max_order`.
    pub fn check_moments(&self, max_order: u32) -> Result<()> {
        for m in 2..=max_order {
            if !self.abs_moment(m as f64).is_finite() {
                return Err(Error::Precondition(format!("moment of order {m} is infinite")));
            }
        }
        Ok(())
    }

    /// `∫ g(x) ν(dx)` for an integrand vanishing at least like `|x|^order`
    /// at the origin (`order` only matters for untruncated densities).
    pub fn integrate_x<T, G>(&self, g: G, order: f64) -> Result<T>
    where
        T: QuadValue,
        G: Fn(f64) -> T,
    {
        let mut acc = T::default();
        for a in &self.atoms {
            acc = acc + g(a.size) * a.rate;
        }
        if let Some(d) = &self.density {
            let f = d.family;
            let tol = Tolerance::new(1e-14, 1e-11);
            for (sign, c, lambda) in [(1.0, f.c_pos, f.lambda_pos), (-1.0, f.c_neg, f.lambda_neg)] {
                if c == 0.0 {
                    continue;
                }
                let side = |x: f64| g(sign * x) * f.density(sign * x);
                let split = d.eps.max(1.0);
                if d.eps < 1.0 {
                    if d.eps > 0.0 {
                        acc = acc + integrate(side, d.eps, 1.0, tol).context("jump measure integral")?.value;
                    } else {
                        if order <= f.alpha {
                            return Err(Error::Precondition(format!(
                                "integrand of order {order} is not ν-integrable near 0 (α = {})",
                                f.alpha
                            )));
                        }
                        // x = u^p flattens x^{order-1-α} near the origin
                        let p = 1.0 / (order - f.alpha);
                        let mapped = |u: f64| {
                            if u <= 0.0 {
                                T::default()
                            } else {
                                side(u.powf(p)) * (p * u.powf(p - 1.0))
                            }
                        };
                        acc = acc + integrate(mapped, 0.0, 1.0, tol).context("jump measure integral")?.value;
                    }
                }
                let tail_scale = 1.0 / lambda;
                let tail = |v: f64| {
                    if v <= 0.0 {
                        return T::default();
                    }
                    let x = split + tail_scale * (1.0 - v) / v;
                    side(x) * (tail_scale / (v * v))
                };
                acc = acc + integrate(tail, 0.0, 1.0, tol).context("jump measure tail")?.value;
            }
        }
        Ok(acc)
    }

    /// Characteristic exponent `ψ(u) = ∫(e^{iux} - 1 - iux) ν(dx)`, so that
    /// `E[e^{iuL(t)}] = exp(t ψ(u))`.
    pub fn char_exponent(&self, u: f64) -> Result<Complex64> {
        self.integrate_x(|x: f64| levy_khintchine_integrand(u * x), 2.0)
    }

    /// Keep only jumps with `|x| > eps`. Atoms are never dropped silently:
    /// atoms inside `[-eps, eps]` are removed and counted in the bias bound.
    pub fn truncate_small_jumps(&self, eps: f64) -> Result<Truncation> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("truncation threshold must be positive, got {eps}")));
        }
        let mut discarded = 0.0;
        let mut atoms = Vec::new();
        for a in &self.atoms {
            if a.size.abs() > eps {
                atoms.push(*a);
            } else {
                discarded += a.rate * a.size * a.size;
            }
        }
        let mut out = JumpMeasure {
            atoms,
            density: self.density.clone(),
        };
        if let Some(d) = &self.density {
            let cut = eps.max(d.eps);
            let f = &d.family;
            for (c, lambda) in [(f.c_pos, f.lambda_pos), (f.c_neg, f.lambda_neg)] {
                discarded += TemperedStable::side_moment(c, lambda, f.alpha, 2.0, d.eps)
                    - TemperedStable::side_moment(c, lambda, f.alpha, 2.0, cut);
            }
            out = out.with_density_cut(cut)?;
        }
        let warning = if out.total_rate() == 0.0 && self.total_rate() > 0.0 {
            Some(format!("truncation at ε = {eps} removes every jump"))
        } else {
            None
        };
        Ok(Truncation {
            measure: out,
            discarded_variance: discarded.max(0.0),
            warning,
        })
    }

    fn sample_size<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = self.total_rate();
        let mut u = rng.random::<f64>() * total;
        for a in &self.atoms {
            if u < a.rate {
                return a.size;
            }
            u -= a.rate;
        }
        match &self.density {
            Some(DensityPart {
                sampler: Some(s),
                family,
                ..
            }) => s.sample(family, rng),
            // rounding fell off the end of the atom table
            _ => self.atoms.last().map_or(0.0, |a| a.size),
        }
    }
}

/// `e^{iz} - 1 - iz`, evaluated stably for small `z`.
pub fn levy_khintchine_integrand(z: f64) -> Complex64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        Complex64::new(-z2 / 2.0 + z2 * z2 / 24.0, -z2 * z / 6.0)
    } else {
        Complex64::new(z.cos() - 1.0, z.sin() - z)
    }
}

/// One jump of the Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// A realization of the jump measure on `[window.0, window.1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub window: (f64, f64),
    /// Sorted by time.
    pub jumps: Vec<Jump>,
    pub drift_rate: f64,
    pub key: StreamKey,
    pub index: u64,
}

impl JumpPath {
    /// Deterministic path with the given jumps (tests, CLI replays).
    pub fn from_jumps(window: (f64, f64), mut jumps: Vec<Jump>, drift_rate: f64) -> Result<Self> {
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        if jumps.iter().any(|j| j.time < window.0 || j.time > window.1) {
            return Err(Error::Contract("jump outside the path window".into()));
        }
        if jumps.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::Contract("jump times must be distinct".into()));
        }
        Ok(JumpPath {
            window,
            jumps,
            drift_rate,
            key: StreamKey::new(0, 0),
            index: 0,
        })
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.window.0 <= lo && hi <= self.window.1
    }

    /// `L(t)`: `Σ_{0<s≤t} x + m t` for `t ≥ 0`, `-Σ_{t<s≤0} x + m t` for `t < 0`.
    pub fn levy_value(&self, t: f64) -> f64 {
        if t >= 0.0 {
            let s: f64 = self.jumps.iter().filter(|j| j.time > 0.0 && j.time <= t).map(|j| j.size).sum();
            s + self.drift_rate * t
        } else {
            let s: f64 = self.jumps.iter().filter(|j| j.time > t && j.time <= 0.0).map(|j| j.size).sum();
            -s + self.drift_rate * t
        }
    }

    /// `L(t-)`.
    pub fn levy_left_limit(&self, t: f64) -> f64 {
        let at: f64 = self.jumps.iter().filter(|j| j.time == t).map(|j| j.size).sum();
        self.levy_value(t) - at
    }

    /// Jumps with time in `(lo, hi]`.
    pub fn jumps_in(&self, lo: f64, hi: f64) -> impl Iterator<Item = &Jump> {
        let start = self.jumps.partition_point(|j| j.time <= lo);
        self.jumps[start..].iter().take_while(move |j| j.time <= hi)
    }

    /// CSV dump with columns `s,x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x\n");
        for j in &self.jumps {
            out.push_str(&format!("{:.12e},{:.12e}\n", j.time, j.size));
        }
        out
    }
}

/// Simulate the jumps of `L` on `window`. The negative-time half uses an
/// independent branch of the path's stream, mirroring the two-sided
/// construction from two independent one-sided copies.
pub fn simulate_path(measure: &JumpMeasure, window: (f64, f64), key: StreamKey, index: u64) -> Result<JumpPath> {
    simulate_tilted_path(measure, window, key, index, |_, _| 1.0, 1.0)
}

/// Simulate jumps with intensity `tilt(x, t) ν(dx) dt` by thinning a
/// proposal with intensity `bound · ν(dx) dt`; requires
/// `0 ≤ tilt ≤ bound` everywhere on the window.
pub fn simulate_tilted_path<F>(
    measure: &JumpMeasure,
    window: (f64, f64),
    key: StreamKey,
    index: u64,
    tilt: F,
    bound: f64,
) -> Result<JumpPath>
where
    F: Fn(f64, f64) -> f64,
{
    let (a, b) = window;
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Config(format!("invalid window [{a}, {b}]")));
    }
    if !bound.is_finite() || bound <= 0.0 {
        return Err(Error::Config(format!("thinning bound must be finite and positive, got {bound}")));
    }
    let rate = measure.total_rate();
    if !rate.is_finite() {
        return Err(Error::Config(
            "infinite total jump rate: truncate small jumps before simulating".into(),
        ));
    }
    let drift_rate = measure.drift_rate()?;
    let mut jumps = Vec::new();
    if rate > 0.0 {
        let branches = [(a, b.min(0.0), 1u32), (a.max(0.0), b, 0u32)];
        for (lo, hi, branch) in branches {
            if hi <= lo {
                continue;
            }
            let mut rng = key.rng(index, branch);
            let mean = rate * bound * (hi - lo);
            let count = Poisson::new(mean)
                .map_err(|e| Error::Config(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng) as usize;
            for _ in 0..count {
                let time = lo + (hi - lo) * rng.random::<f64>();
                let size = measure.sample_size(&mut rng);
                let accept = tilt(size, time) / bound;
                if accept >= 1.0 || rng.random::<f64>() < accept {
                    jumps.push(Jump { time, size });
                }
            }
        }
    }
    jumps.sort_by(|p, q| p.time.total_cmp(&q.time));
    Ok(JumpPath {
        window,
        jumps,
        drift_rate,
        key,
        index,
    })
}

/// Empirical characteristic function of `L(t)` against `exp(t ψ(u))`:
/// one row for the real and one for the imaginary part per `(t, u)`.
pub fn charfn_check(
    measure: &JumpMeasure,
    times: &[f64],
    us: &[f64],
    key: StreamKey,
    n: u64,
    sigmas: f64,
) -> Result<Vec<crate::report::Residual>> {
    let t_hi = times.iter().copied().fold(0.0, f64::max);
    if !(t_hi > 0.0) {
        return Err(Error::Config("characteristic-function check needs a positive time".into()));
    }
    let width = 2 * times.len() * us.len();
    let est = crate::mc::ensemble(key, n, width, |i, out| match simulate_path(measure, (0.0, t_hi), key, i) {
        Ok(p) => {
            let mut c = 0;
            for &t in times {
                let l = p.levy_value(t);
                for &u in us {
                    let (s, co) = (u * l).sin_cos();
                    out[c] = co;
                    out[c + 1] = s;
                    c += 2;
                }
            }
        }
        Err(_) => out.fill(f64::NAN),
    })?;
    let mut rows = Vec::new();
    let mut c = 0;
    for &t in times {
        for &u in us {
            let phi = (measure.char_exponent(u)? * t).exp();
            let id = format!("levy_charfn[t={t},u={u}]");
            rows.push(crate::report::Residual::statistical(format!("{id}.re"), "zero", est[c], phi.re, 0.0, sigmas, 1e-12));
            rows.push(crate::report::Residual::statistical(format!("{id}.im"), "zero", est[c + 1], phi.im, 0.0, sigmas, 1e-12));
            c += 2;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::ensemble;

    fn sym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 0.5), (-1.0, 0.5)]).unwrap()
    }

    fn asym() -> JumpMeasure {
        JumpMeasure::discrete(&[(1.0, 2.0), (-2.0, 1.0)]).unwrap()
    }

    #[test]
    fn char_exponent_atom_sums() {
        assert_eq!(sym().char_exponent(0.0).unwrap(), Complex64::new(0.0, 0.0));
        let psi = sym().char_exponent(1.0).unwrap();
        assert!((psi - Complex64::new(1f64.cos() - 1.0, 0.0)).norm() < 1e-15);
        let i = Complex64::i();
        let expected = 2.0 * ((i).exp() - 1.0 - i) + ((-2.0 * i).exp() - 1.0 + 2.0 * i);
        assert!((asym().char_exponent(1.0).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn char_exponent_symmetries() {
        let ts = JumpMeasure::tempered_stable(TemperedStable {
            c_pos: 1.0,
            c_neg: 0.5,
            lambda_pos: 2.0,
            lambda_neg: 3.0,
            alpha: 0.7,
        })
        .unwrap();
        for m in [sym(), asym(), ts] {
            for u in [0.3, 1.0, 2.5, 7.0] {
                let p = m.char_exponent(u).unwrap();
                let q = m.char_exponent(-u).unwrap();
                assert!(p.re <= 1e-14);
                assert!((p - q.conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn levy_variance_atoms() {
        assert_eq!(sym().levy_variance(), 1.0);
        assert_eq!(asym().levy_variance(), 6.0);
        assert_eq!(JumpMeasure::empty().levy_variance(), 0.0);
    }

    #[test]
    fn measure_rejects_atom_at_zero() {
        assert!(JumpMeasure::discrete(&[(0.0, 1.0)]).is_err());
        assert!(JumpMeasure::discrete(&[(1.0, -1.0)]).is_err());
    }

    #[test]
    fn drift_makes_mean_zero() {
        assert_eq!(asym().drift_rate().unwrap(), -(2.0 - 2.0));
        let m = JumpMeasure::discrete(&[(1.0, 3.0), (-2.0, 1.0)]).unwrap();
        assert_eq!(m.drift_rate().unwrap(), -1.0);
    }

    #[test]
    fn tempered_stable_moments_match_quadrature() {
        let f = TemperedStable::symmetric(1.0, 1.5, 0.5);
        let m = JumpMeasure::tempered_stable(f).unwrap();
        let quad: f64 = m.integrate_x(|x: f64| x * x, 2.0).unwrap();
        assert!((quad - m.levy_variance()).abs() < 1e-9 * quad);
        // closed form 2 c Γ(2-α) λ^{α-2}
        let closed = 2.0 * gamma(1.5) * 1.5f64.powf(-1.5);
        assert!((m.levy_variance() - closed).abs() < 1e-12);
        assert!(m.check_moments(6).is_ok());
        assert!(!m.total_rate().is_finite());
        assert!(m.drift_rate().is_err());
    }

    #[test]
    fn truncation_keeps_large_atoms() {
        let t = sym().truncate_small_jumps(0.5).unwrap();
        assert_eq!(t.measure.atoms(), sym().atoms());
        assert_eq!(t.discarded_variance, 0.0);
        let t = sym().truncate_small_jumps(2.0).unwrap();
        assert!(t.warning.is_some());
        assert_eq!(t.discarded_variance, 1.0);
    }

    #[test]
    fn truncation_bias_is_small_jump_variance() {
        let f = TemperedStable::symmetric(0.8, 1.0, 1.2);
        let m = JumpMeasure::tempered_stable(f).unwrap();
        let eps = 0.01;
        let t = m.truncate_small_jumps(eps).unwrap();
        // direct quadrature of x² ν(x) over [-ε, ε] with x = u^p, p = 1/(2-α)
        let p = 1.0 / (2.0 - 1.2);
        let oracle = 2.0
            * integrate(
                |u: f64| {
                    let x = u.powf(p);
                    if u == 0.0 { 0.0 } else { x * x * f.density(x) * p * u.powf(p - 1.0) }
                },
                0.0,
                eps.powf(1.0 / p),
                Tolerance::new(0.0, 1e-12),
            )
            .unwrap()
            .value;
        assert!((t.discarded_variance - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", t.discarded_variance);
        assert!(t.measure.total_rate().is_finite());
        assert!((t.measure.levy_variance() + t.discarded_variance - m.levy_variance()).abs() < 1e-9);
        // bias bound decreases monotonically to 0
        let mut prev = f64::INFINITY;
        for e in [0.5, 0.1, 0.02, 0.004, 0.0008] {
            let b = m.truncate_small_jumps(e).unwrap().discarded_variance;
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn empty_measure_gives_flat_path() {
        let p = simulate_path(&JumpMeasure::empty(), (-1.0, 2.0), StreamKey::new(1, 1), 0).unwrap();
        assert!(p.jumps.is_empty());
        assert_eq!(p.levy_value(1.5), 0.0);
        assert_eq!(p.levy_value(-0.5), 0.0);
    }

    #[test]
    fn untruncated_density_cannot_be_simulated() {
        let m = JumpMeasure::tempered_stable(TemperedStable::symmetric(1.0, 1.0, 0.5)).unwrap();
        assert!(matches!(
            simulate_path(&m, (0.0, 1.0), StreamKey::new(1, 1), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn two_sided_path_is_rcll_with_zero_at_origin() {
        let p = simulate_path(&asym(), (-3.0, 3.0), StreamKey::new(9, 9), 5).unwrap();
        assert_eq!(p.levy_value(0.0), 0.0);
        assert!(p.jumps.windows(2).all(|w| w[0].time < w[1].time));
        for j in &p.jumps {
            let d = p.levy_value(j.time) - p.levy_left_limit(j.time);
            assert!((d - j.size).abs() < 1e-12);
            let before = p.levy_value(j.time - 1e-9);
            assert!((before - p.levy_left_limit(j.time)).abs() < 1e-6);
        }
    }

    #[test]
    fn poisson_counts_and_moments() {
        let m = sym();
        let key = StreamKey::new(3, 17);
        let est = ensemble(key, 40_000, 4, |i, out| {
            let p = simulate_path(&m, (0.0, 2.0), key, i).unwrap();
            let l = p.levy_value(2.0);
            out[0] = p.jumps.len() as f64;
            out[1] = l;
            out[2] = l * l;
            out[3] = l * l * l;
        })
        .unwrap();
        assert!(est[0].agrees_with(2.0, 4.0));
        assert!(est[1].agrees_with(0.0, 4.0));
        assert!(est[2].agrees_with(2.0, 4.0));
        // symmetric ν: L(t) and -L(t) share a law, so odd moments vanish
        assert!(est[3].agrees_with(0.0, 4.0));
    }

    #[test]
    fn truncated_density_paths_have_stated_variance() {
        let f = TemperedStable {
            c_pos: 0.6,
            c_neg: 0.4,
            lambda_pos: 2.0,
            lambda_neg: 1.5,
            alpha: 0.8,
        };
        let t = JumpMeasure::tempered_stable(f).unwrap().truncate_small_jumps(0.05).unwrap();
        let m = t.measure;
        let key = StreamKey::new(5, 1);
        let est = ensemble(key, 40_000, 2, |i, out| {
            let p = simulate_path(&m, (0.0, 1.0), key, i).unwrap();
            let l = p.levy_value(1.0);
            out[0] = l;
            out[1] = l * l;
        })
        .unwrap();
        assert!(est[0].agrees_with(0.0, 4.0), "{:?}", est[0]);
        assert!(est[1].agrees_with(m.levy_variance(), 4.0), "{:?} vs {}", est[1], m.levy_variance());
    }
}
