//! The verification suites. Each turns a scenario into residual rows.
//!
//! Random streams are keyed by `(seed, 100·suite + kernel)` so that adding
//! a kernel to a scenario leaves the other kernels' draws untouched.

use convlevy::conv::{fractional_cutoff_bias, isometry_check, path_route_check, simulation_window};
use convlevy::frac::{frac_parts_check, kernel_identity_sup_error, SampledFunction};
use convlevy::ito::{
    classical_reduction, derivative_consistency, ito1_indicator_pathwise, ito1_residual, ito2_residual,
};
use convlevy::kernels::{KernelKind, VolterraKernel};
use convlevy::levy::{charfn_check, simulate_path, JumpMeasure};
use convlevy::mc::StreamKey;
use convlevy::report::Residual;
use convlevy::skorokhod::{
    increment_check, ito_levy_integral, quadratic_candidate, product_correction_check, wiener_type_equiv,
    zero_expectation_suite, SkorokhodCandidate,
};
use convlevy::stransform::{
    simple_field_check, route_agreement, verify_ito_integral_stransform, wick_checks, EtaTest, Flavor, McSetup,
    ShippedIntegrand,
};

use crate::config::Scenario;
use crate::output::Row;
use crate::CliError;

/// Cut-off used for the Wiener-type pairs when the scenario has no
/// fractional kernel of that order.
const DEFAULT_S_MIN: f64 = -20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    LevyKhintchine,
    Isometry,
    PathRoutes,
    Wick,
    StransformRoutes,
    ItoIntegral,
    Frac,
    Skorokhod,
    Ito1,
    Ito2,
}

pub const ALL_SUITES: [Suite; 10] = [
    Suite::LevyKhintchine,
    Suite::Isometry,
    Suite::PathRoutes,
    Suite::Wick,
    Suite::StransformRoutes,
    Suite::ItoIntegral,
    Suite::Frac,
    Suite::Skorokhod,
    Suite::Ito1,
    Suite::Ito2,
];

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::LevyKhintchine => "levy_khintchine",
            Suite::Isometry => "isometry",
            Suite::PathRoutes => "path_routes",
            Suite::Wick => "wick",
            Suite::StransformRoutes => "stransform_routes",
            Suite::ItoIntegral => "ito_integral",
            Suite::Frac => "frac",
            Suite::Skorokhod => "skorokhod",
            Suite::Ito1 => "ito1",
            Suite::Ito2 => "ito2",
        }
    }

    fn index(self) -> u64 {
        ALL_SUITES.iter().position(|&s| s == self).expect("listed") as u64
    }
}

/// Expands a comma-separated list of suite names and groups
/// (`simulate`, `stransform`, `all`) into a sorted, deduplicated list.
pub fn resolve_suites(spec: &str) -> Result<Vec<Suite>, CliError> {
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "all" => out.extend(ALL_SUITES),
            "simulate" => out.extend([Suite::LevyKhintchine, Suite::Isometry, Suite::PathRoutes]),
            "stransform" => out.extend([Suite::Wick, Suite::StransformRoutes, Suite::ItoIntegral]),
            other => match ALL_SUITES.iter().find(|s| s.name() == other) {
                Some(&s) => out.push(s),
                None => return Err(CliError::Config(format!("unknown suite {other:?}"))),
            },
        }
    }
    if out.is_empty() {
        return Err(CliError::Config("no suite selected".into()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Default)]
pub struct SuiteResult {
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    suite: Suite,
    measure: JumpMeasure,
    kernels: Vec<VolterraKernel>,
    etas: Vec<EtaTest>,
    out: SuiteResult,
}

impl Ctx<'_> {
    fn key(&self, slot: u64) -> StreamKey {
        StreamKey::new(self.scenario.seed, self.suite.index() * 100 + slot)
    }

    fn push(&mut self, kernel: &str, rows: Vec<Residual>) {
        let measure = self.scenario.measure_label();
        for r in rows {
            self.out.rows.push(Row {
                scenario: self.scenario.id.clone(),
                suite: self.suite.name().to_string(),
                identity: r.identity,
                kernel: kernel.to_string(),
                measure: measure.clone(),
                eta: r.eta,
                lhs: r.lhs,
                rhs: r.rhs,
                residual: r.residual,
                stderr: r.stderr,
                tolerance: r.tolerance,
                pass: r.pass,
            });
        }
    }

    fn note(&mut self, text: String) {
        self.out.notes.push(text);
    }

    fn setup(&self, k: &VolterraKernel, slot: u64) -> Result<McSetup, CliError> {
        Ok(McSetup::for_kernel(
            &self.measure,
            k,
            self.scenario.horizon,
            &self.etas,
            self.key(slot),
            self.scenario.n,
        )?)
    }
}

pub fn run_suite(scenario: &Scenario, suite: Suite) -> Result<SuiteResult, CliError> {
    let mut ctx = Ctx {
        scenario,
        suite,
        measure: scenario.measure()?,
        kernels: scenario.kernels()?,
        etas: scenario.etas()?,
        out: SuiteResult::default(),
    };
    match suite {
        Suite::LevyKhintchine => levy_khintchine(&mut ctx)?,
        Suite::Isometry => isometry(&mut ctx)?,
        Suite::PathRoutes => path_routes(&mut ctx)?,
        Suite::Wick => wick(&mut ctx)?,
        Suite::StransformRoutes => stransform_routes(&mut ctx)?,
        Suite::ItoIntegral => ito_integral(&mut ctx)?,
        Suite::Frac => frac(&mut ctx)?,
        Suite::Skorokhod => skorokhod(&mut ctx)?,
        Suite::Ito1 => ito1(&mut ctx)?,
        Suite::Ito2 => ito2(&mut ctx)?,
    }
    Ok(ctx.out)
}

fn levy_khintchine(ctx: &mut Ctx) -> Result<(), CliError> {
    let c = &ctx.scenario.checks;
    let rows = charfn_check(
        &ctx.measure,
        &c.charfn_times,
        &c.charfn_us,
        ctx.key(0),
        ctx.scenario.n,
        ctx.scenario.tolerances.sigmas,
    )?;
    ctx.push("-", rows);
    Ok(())
}

fn isometry(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        let row = isometry_check(k, &ctx.measure, s.horizon, ctx.key(i as u64), s.n, s.tolerances.sigmas)?;
        ctx.push(&k.name(), vec![row]);
    }
    // the linear shot-noise kernel k(u) = u has ‖f(1,·)‖² = 1/3 in closed form
    let lin = VolterraKernel::shot_noise(s.t_star().max(1.0), vec![0.0, 1.0])?;
    let var = ctx.measure.levy_variance();
    let row = Residual::exact(
        "isometry_closed_form[t=1]",
        "zero",
        var * lin.l2norm_sq(1.0)?,
        var / 3.0,
        s.tolerances.closed_form * var.max(1.0),
    );
    ctx.push(&lin.name(), vec![row]);
    Ok(())
}

fn path_routes(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    let grid = s.grid();
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        if !k.flags().all() {
            ctx.note(format!("{} skipped: route equivalence needs (H1)-(H4)", k.name()));
            continue;
        }
        let rows = path_route_check(
            k,
            &ctx.measure,
            &grid,
            ctx.key(i as u64),
            s.checks.pathwise_paths,
            s.tolerances.path_route,
            s.tolerances.jump_relation,
        )?;
        ctx.push(&k.name(), rows);
    }
    Ok(())
}

/// Window for checks that only need `[0, T]` and the test-function supports.
fn plain_setup(ctx: &Ctx, slot: u64) -> Result<McSetup, CliError> {
    let k = VolterraKernel::indicator(ctx.scenario.horizon)?;
    ctx.setup(&k, slot)
}

fn wick(ctx: &mut Ctx) -> Result<(), CliError> {
    let setup = plain_setup(ctx, 0)?;
    let rows = wick_checks(&setup, &ctx.etas, ctx.scenario.tolerances.sigmas)?;
    ctx.push("-", rows);
    Ok(())
}

fn stransform_routes(ctx: &mut Ctx) -> Result<(), CliError> {
    let c = &ctx.scenario.checks;
    let (t, u) = (c.route_time, c.route_u);
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        let setup = ctx.setup(k, i as u64)?;
        let rows = route_agreement(k, &setup, &ctx.etas, t, u, ctx.scenario.tolerances.sigmas)?;
        ctx.push(&k.name(), rows);
    }
    Ok(())
}

fn ito_integral(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    let sigmas = s.tolerances.sigmas;
    for (i, integrand) in [ShippedIntegrand::Jump, ShippedIntegrand::JumpTimesLevy].into_iter().enumerate() {
        let setup = plain_setup(ctx, i as u64)?;
        let rows = verify_ito_integral_stransform(integrand, &setup, &ctx.etas, s.horizon, sigmas)?;
        ctx.push("-", rows);
    }
    match ctx.measure.atoms().first() {
        Some(atom) => {
            let f = EtaTest::builtin(0.5, 1.0, Flavor::Even)?;
            let setup = plain_setup(ctx, 2)?;
            let rows = simple_field_check(&f, &[atom.size], s.split(), &setup, &ctx.etas, sigmas)?;
            ctx.push("-", rows);
        }
        None => ctx.note("simple-field identity skipped: the jump measure has no atom".into()),
    }
    Ok(())
}

fn fractional_cut(ctx: &Ctx, d: f64) -> f64 {
    ctx.kernels
        .iter()
        .find_map(|k| match k.kind() {
            KernelKind::Fractional { d: kd, s_min: Some(s) } if *kd == d => Some(*s),
            _ => None,
        })
        .unwrap_or(DEFAULT_S_MIN)
}

fn frac(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    let tol = &s.tolerances;
    let orders = s.checks.frac_orders.clone();
    for &d in &orders {
        let kname = VolterraKernel::fractional(d)?.name();
        let mut rows = Vec::new();
        for &t in &s.checks.frac_times {
            let grid: Vec<f64> = (0..=80).map(|i| -3.0 + (t + 3.5) * i as f64 / 80.0).collect();
            let err = kernel_identity_sup_error(d, t, &grid)?;
            rows.push(Residual::exact(format!("kernel_identity[t={t}]"), "zero", err, 0.0, tol.kernel_identity));
        }
        let pairs = [
            ("gaussian(0,0.5)", SampledFunction::gaussian(0.0, 0.5)?, "indicator[0,1]", SampledFunction::indicator(0.0, 1.0)?),
            ("triangle[-1,1]", SampledFunction::triangle(-1.0, 1.0)?, "bump(0.5,1)", SampledFunction::bump(0.5, 1.0)?),
        ];
        for (gn, g, hn, h) in &pairs {
            let r = frac_parts_check(g, h, d)?;
            rows.push(Residual::exact(format!("frac_parts[{gn},{hn}]"), "zero", r.lhs, r.rhs, tol.frac_parts));
        }
        ctx.push(&kname, rows);

        let k = VolterraKernel::fractional_truncated(d, fractional_cut(ctx, d))?;
        let gs = [
            ("gaussian(0.5,0.25)", SampledFunction::gaussian(0.5, 0.25)?),
            ("indicator[0,1]", SampledFunction::indicator(0.0, 1.0)?),
        ];
        let ghi = gs.iter().map(|(_, g)| g.support().1).fold(0.0, f64::max);
        let (wlo, _) = simulation_window(&k, ghi)?;
        let key = ctx.key((d * 1000.0).round() as u64);
        let mut worst: Vec<(f64, WienerRow)> = vec![(0.0, WienerRow::default()); gs.len()];
        for i in 0..s.checks.pathwise_paths {
            let path = simulate_path(&ctx.measure, (wlo, ghi), key, i)?;
            for ((_, g), w) in gs.iter().zip(worst.iter_mut()) {
                let pair = wiener_type_equiv(g, &k, &path)?;
                let r = (pair.lhs - pair.rhs).abs();
                if r >= w.0 {
                    *w = (r, WienerRow { lhs: pair.lhs, rhs: pair.rhs });
                }
            }
        }
        let rows = gs
            .iter()
            .zip(worst)
            .map(|((name, _), (_, w))| Residual::exact(format!("wiener_type[{name}]: worst path"), "zero", w.lhs, w.rhs, tol.wiener))
            .collect();
        ctx.push(&k.name(), rows);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
struct WienerRow {
    lhs: f64,
    rhs: f64,
}

fn skorokhod(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    let sigmas = s.tolerances.sigmas;
    let (a, b) = s.split();
    let zero = [EtaTest::zero()];
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        let setup = ctx.setup(k, i as u64)?;
        let mut candidates = vec![quadratic_candidate(k, &ctx.measure, s.horizon)];
        if i == 0 {
            let horizon = s.horizon;
            candidates.push(SkorokhodCandidate::new("ito_levy_integral", move |p| Ok(ito_levy_integral(p, horizon))));
        }
        let rows = zero_expectation_suite(&candidates, &setup, &ctx.etas, sigmas)?;
        ctx.push(&k.name(), rows);
        let rows = product_correction_check(k, a, b, &setup, &zero, sigmas)?;
        ctx.push(&k.name(), rows);
        let rows = increment_check(k, a, b, &setup, &ctx.etas, sigmas)?;
        ctx.push(&k.name(), rows);
    }
    Ok(())
}

fn ito1(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    if !ctx.measure.abs_moment(1.0).is_finite() {
        return Err(convlevy::Error::Precondition("the first change-of-variable formula needs ∫|x| ν(dx) < ∞".into()).into());
    }
    let g = s.g()?;
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        if !k.flags().all() {
            ctx.note(format!("{} skipped: the first formula needs (H1)-(H4)", k.name()));
            continue;
        }
        let setup = ctx.setup(k, i as u64)?;
        let rows = ito1_residual(k, &g, s.horizon, &setup, &ctx.etas, s.tolerances.sigmas)?;
        ctx.push(&k.name(), rows);
        if matches!(k.kind(), KernelKind::Indicator { .. }) {
            let key = ctx.key(50 + i as u64);
            let (mut first, mut classical) = (0.0f64, 0.0f64);
            for p in 0..s.checks.pathwise_paths {
                let path = simulate_path(&ctx.measure, (0.0, s.horizon), key, p)?;
                first = first.max(ito1_indicator_pathwise(&g, &ctx.measure, &path, s.horizon)?.abs());
                classical = classical.max(classical_reduction(&g, &path, s.horizon)?.abs());
            }
            let tol = s.tolerances.telescoping;
            let rows = vec![
                Residual::exact("ito1_telescoping: worst path", "zero", first, 0.0, tol),
                Residual::exact("classical_ito: worst path", "zero", classical, 0.0, tol),
            ];
            ctx.push(&k.name(), rows);
        }
    }
    Ok(())
}

fn ito2(ctx: &mut Ctx) -> Result<(), CliError> {
    let s = ctx.scenario;
    let tol = &s.tolerances;
    let g = s.g()?;
    for (i, k) in ctx.kernels.clone().iter().enumerate() {
        let setup = ctx.setup(k, i as u64)?;
        let (_, rows) = ito2_residual(k, &g, s.horizon, &ctx.etas, &ctx.measure, Some(&setup), tol.ito2())?;
        ctx.push(&k.name(), rows);
        for eta in &ctx.etas.clone() {
            let rows = derivative_consistency(k, &ctx.measure, &g, eta, &s.checks.derivative_times, tol.derivative)?;
            ctx.push(&k.name(), rows);
        }
        if let KernelKind::Fractional { d, s_min: Some(cut) } = k.kind() {
            let bias = fractional_cutoff_bias(*d, *cut, s.horizon)?;
            ctx.note(format!(
                "{}: applied formally outside (H1)-(H4); the cut-off at s = {cut} removes a fraction {bias:.3e} of ‖f(T,·)‖²",
                k.name()
            ));
        }
    }
    Ok(())
}
