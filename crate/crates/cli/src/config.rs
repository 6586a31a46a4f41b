//! Scenario files: TOML with one table per concern.
//!
//! ```toml
//! id = "SCEN-A"
//! seed = 42
//! n = 100000          # Monte Carlo paths per check
//! horizon = 2.0       # T
//! t_star = 2.0        # right end of the kernels' support
//!
//! [measure]
//! atoms = [[1.0, 0.5], [-1.0, 0.5]]   # (size, rate) pairs
//! # tempered = { c_pos = 1.0, c_neg = 1.0, lambda_pos = 1.0, lambda_neg = 1.0, alpha = 0.5 }
//! # truncate = 0.1                     # keep jumps with |x| > 0.1
//!
//! [[kernel]]
//! kind = "ou"          # indicator | shot_noise | ou | fractional
//! kappa = 0.5
//!
//! [eta]                # omitted: the six built-in members
//! members = [{ flavor = "even", c = 0.5, width = 1.0 }]
//!
//! [g]
//! scale = 1.0          # G(y) = exp(-y²/(2 scale²))
//!
//! [checks]             # suite parameters, all optional
//! [tolerances]         # acceptance bands, all optional
//! ```

use std::path::Path;

use convlevy::ito::{Ito2Tolerance, TestFunctionG};
use convlevy::kernels::VolterraKernel;
use convlevy::levy::{JumpMeasure, TemperedStable};
use convlevy::stransform::{default_family, EtaTest, Flavor};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: u64,
    pub horizon: f64,
    #[serde(default)]
    pub t_star: Option<f64>,
    pub measure: MeasureSpec,
    #[serde(rename = "kernel")]
    pub kernels: Vec<KernelSpec>,
    #[serde(default)]
    pub eta: EtaSpec,
    #[serde(default)]
    pub g: GSpec,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_seed() -> u64 {
    42
}

fn default_n() -> u64 {
    100_000
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default)]
    pub tempered: Option<TemperedStable>,
    #[serde(default)]
    pub truncate: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Indicator,
    ShotNoise { coeffs: Vec<f64> },
    Ou { kappa: f64 },
    Fractional { d: f64, s_min: f64 },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSpec {
    #[serde(default)]
    pub members: Option<Vec<EtaMember>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EtaMember {
    pub flavor: Flavor,
    pub c: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GSpec {
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for GSpec {
    fn default() -> Self {
        GSpec { scale: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

/// Parameters of the individual suites.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Checks {
    pub charfn_times: Vec<f64>,
    pub charfn_us: Vec<f64>,
    /// Points of the path grid on `[0, T]`.
    pub grid_points: usize,
    /// Paths compared pathwise (route equivalence, Wiener-type pairs,
    /// telescoping).
    pub pathwise_paths: u64,
    /// Time and frequency of the S-transform route comparison.
    pub route_time: f64,
    pub route_u: f64,
    /// `(a, b)` for moving `M(a)` under the integral over `(a, b]`;
    /// `(T/2, T)` when absent.
    pub split: Option<(f64, f64)>,
    pub frac_orders: Vec<f64>,
    pub frac_times: Vec<f64>,
    pub derivative_times: Vec<f64>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            charfn_times: vec![0.5, 1.0, 2.0],
            charfn_us: vec![0.5, 1.0, 2.0],
            grid_points: 201,
            pathwise_paths: 100,
            route_time: 1.0,
            route_u: 1.0,
            split: None,
            frac_orders: vec![0.1, 0.25, 0.4],
            frac_times: vec![0.5, 1.0, 2.0],
            derivative_times: vec![0.5, 1.0, 1.5],
        }
    }
}

/// Acceptance bands. Monte Carlo rows pass within `sigmas` standard errors.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub sigmas: f64,
    pub path_route: f64,
    pub jump_relation: f64,
    pub closed_form: f64,
    pub kernel_identity: f64,
    pub frac_parts: f64,
    pub wiener: f64,
    pub telescoping: f64,
    pub ito2_rel: f64,
    pub ito2_floor: f64,
    pub derivative: f64,
    pub rearrangement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sigmas: 4.0,
            path_route: 1e-6,
            jump_relation: 1e-10,
            closed_form: 1e-10,
            kernel_identity: 1e-5,
            frac_parts: 1e-5,
            wiener: 1e-4,
            telescoping: 1e-10,
            ito2_rel: 1e-3,
            ito2_floor: 1e-9,
            derivative: 1e-4,
            rearrangement: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn ito2(&self) -> Ito2Tolerance {
        Ito2Tolerance {
            rel: self.ito2_rel,
            floor: self.ito2_floor,
            rearrangement: self.rearrangement,
            sigmas: self.sigmas,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let fields = [
            ("sigmas", self.sigmas),
            ("path_route", self.path_route),
            ("jump_relation", self.jump_relation),
            ("closed_form", self.closed_form),
            ("kernel_identity", self.kernel_identity),
            ("frac_parts", self.frac_parts),
            ("wiener", self.wiener),
            ("telescoping", self.telescoping),
            ("ito2_rel", self.ito2_rel),
            ("ito2_floor", self.ito2_floor),
            ("derivative", self.derivative),
            ("rearrangement", self.rearrangement),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.t_star() < self.horizon {
            return Err(CliError::Config(format!(
                "t_star = {} must not be below the horizon {}",
                self.t_star(),
                self.horizon
            )));
        }
        if self.n == 0 {
            return Err(CliError::Config("n must be positive".into()));
        }
        if self.kernels.is_empty() {
            return Err(CliError::Config("at least one [[kernel]] is required".into()));
        }
        if self.checks.grid_points < 2 {
            return Err(CliError::Config("checks.grid_points must be at least 2".into()));
        }
        let (a, b) = self.split();
        if !(0.0 < a && a < b && b <= self.horizon) {
            return Err(CliError::Config(format!("checks.split must satisfy 0 < a < b <= T, got ({a}, {b})")));
        }
        self.tolerances.validate()?;
        // resolve everything once so that errors surface before any suite runs
        self.measure()?;
        self.kernels()?;
        self.etas()?;
        self.g()?;
        Ok(())
    }

    pub fn split(&self) -> (f64, f64) {
        self.checks.split.unwrap_or((0.5 * self.horizon, self.horizon))
    }

    pub fn t_star(&self) -> f64 {
        self.t_star.unwrap_or(self.horizon)
    }

    pub fn measure(&self) -> Result<JumpMeasure, CliError> {
        let m = &self.measure;
        let base = match m.tempered {
            Some(ts) => JumpMeasure::tempered_stable(ts)?.with_atoms(&m.atoms)?,
            None => {
                if m.atoms.is_empty() {
                    return Err(CliError::Config("[measure] needs atoms or a tempered density".into()));
                }
                JumpMeasure::discrete(&m.atoms)?
            }
        };
        match m.truncate {
            Some(eps) => {
                let t = base.truncate_small_jumps(eps)?;
                if let Some(w) = t.warning {
                    return Err(CliError::Config(w));
                }
                Ok(t.measure)
            }
            None => Ok(base),
        }
    }

    pub fn kernels(&self) -> Result<Vec<VolterraKernel>, CliError> {
        let t_star = self.t_star();
        self.kernels
            .iter()
            .map(|k| {
                Ok(match k {
                    KernelSpec::Indicator => VolterraKernel::indicator(t_star)?,
                    KernelSpec::ShotNoise { coeffs } => VolterraKernel::shot_noise(t_star, coeffs.clone())?,
                    KernelSpec::Ou { kappa } => VolterraKernel::ornstein_uhlenbeck(*kappa, t_star)?,
                    KernelSpec::Fractional { d, s_min } => VolterraKernel::fractional_truncated(*d, *s_min)?,
                })
            })
            .collect()
    }

    pub fn etas(&self) -> Result<Vec<EtaTest>, CliError> {
        match &self.eta.members {
            None => Ok(default_family()),
            Some(list) if list.is_empty() => Err(CliError::Config("[eta] members must not be empty".into())),
            Some(list) => list
                .iter()
                .map(|m| EtaTest::builtin(m.c, m.width, m.flavor).map_err(CliError::from))
                .collect(),
        }
    }

    pub fn g(&self) -> Result<TestFunctionG, CliError> {
        Ok(TestFunctionG::gaussian_scaled(self.g.scale)?)
    }

    /// Uniform grid of `checks.grid_points` points on `[0, T]`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.checks.grid_points - 1;
        (0..=n).map(|i| self.horizon * i as f64 / n as f64).collect()
    }

    pub fn measure_label(&self) -> String {
        let mut parts: Vec<String> = self.measure.atoms.iter().map(|(x, r)| format!("{r}@{x}")).collect();
        if let Some(t) = &self.measure.tempered {
            parts.push(format!("ts(alpha={})", t.alpha));
        }
        if let Some(eps) = self.measure.truncate {
            parts.push(format!("|x|>{eps}"));
        }
        parts.join("+")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
id = "t"
horizon = 2.0
[measure]
atoms = [[1.0, 0.5], [-1.0, 0.5]]
[[kernel]]
kind = "ou"
kappa = 0.5
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.seed, 42);
        assert_eq!(s.n, 100_000);
        assert_eq!(s.t_star(), 2.0);
        assert_eq!(s.etas().unwrap().len(), 6);
        assert_eq!(s.tolerances.sigmas, 4.0);
        assert_eq!(s.grid().len(), 201);
        assert_eq!(s.measure_label(), "0.5@1+0.5@-1");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Scenario::parse("id = 1").is_err());
        let typo = MINIMAL.replace("kappa", "kapa");
        assert!(matches!(Scenario::parse(&typo), Err(CliError::Config(_))));
        let neg = format!("{MINIMAL}[tolerances]\nsigmas = -1.0\n");
        assert!(Scenario::parse(&neg).is_err());
        let split = format!("{MINIMAL}[checks]\nsplit = [1.5, 1.0]\n");
        assert!(Scenario::parse(&split).is_err());
    }

    #[test]
    fn explicit_eta_members() {
        let s = format!("{MINIMAL}[eta]\nmembers = [{{ flavor = \"odd\", c = 1.0, width = 0.5 }}]\n");
        let s = Scenario::parse(&s).unwrap();
        let etas = s.etas().unwrap();
        assert_eq!(etas.len(), 1);
        assert_eq!(etas[0].id(), "odd-c1-w0.5");
    }
}
