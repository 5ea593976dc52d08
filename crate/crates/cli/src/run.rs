//! Scenario pipelines and the report they produce.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use ifd_core::bernoulli::{
    check_feasibility_with, compute_ktilde, feasibility_margin_field, remark_d_counterexample, solve_m,
    BernoulliSolution, FeasibilityReport,
};
use ifd_core::dynamics::{
    find_periodic_orbit, run_competition, CompetitionOptions, Environment, OrbitOptions, PeriodicOrbit,
};
use ifd_core::exprfield::{Expr, Params};
use ifd_core::fitness::{fitness_field, is_ifd, path_fitness_bounds, space_time_mean, FitnessField, PathBounds};
use ifd_core::floquet::{alpha_sweep, invasion_test_with, FloquetOptions};
use ifd_core::mesh::{sample_with, MeshError};
use ifd_core::par::Parallelism;
use ifd_core::strategy::{
    construct_ifd, construct_pursuit_invader, extract_invasion_path, smoothed_argmax_path, IfdConstruction,
    PeriodicPath, Strategy, StrategyError,
};
use ifd_core::{Grid, PeriodicScalar, SpaceTimeField};

use crate::config::{CompiledDrift, CompiledStrategy, RunSpec, ScenarioConfig, Tolerances};
use crate::error::{CliError, Staged};
use crate::output::{num, OutputDir};

pub struct RunOptions {
    pub parallelism: Parallelism,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            parallelism: Parallelism::Parallel,
        }
    }
}

/// Outcome of a successful run; `report` is also written as `report.json`.
pub struct RunOutcome {
    pub report: Value,
    pub artifacts: Vec<String>,
}

struct Ctx<'a> {
    grid: Grid,
    params: Params,
    tol: Tolerances,
    par: Parallelism,
    out: &'a mut OutputDir,
    timing: BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let r = f(self);
        *self.timing.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        r
    }

    fn sample(&self, e: &Expr, pointer: &str) -> Result<SpaceTimeField, CliError> {
        sample_with(e, &self.grid, &self.params, self.par).map_err(|err| match err {
            MeshError::Eval { i, j, source } => CliError::validation(
                pointer,
                format!("{source} at x = {}, t = {}", self.grid.x(i), self.grid.t(j)),
            ),
            other => CliError::validation(pointer, other.to_string()),
        })
    }

    fn positive(&self, e: &Expr, pointer: &str) -> Result<SpaceTimeField, CliError> {
        let f = self.sample(e, pointer)?;
        let (i, j, v) = f.argmin();
        if v <= 0.0 {
            return Err(CliError::validation(
                pointer,
                format!(
                    "must be positive, got {v} at x = {}, t = {}",
                    self.grid.x(i),
                    self.grid.t(j)
                ),
            ));
        }
        Ok(f)
    }

    fn orbit_opts(&self) -> OrbitOptions {
        OrbitOptions {
            tol: self.tol.orbit_tol.value,
            max_periods: self.tol.max_periods.value,
            min_substeps: self.tol.min_substeps.value,
        }
    }

    fn floquet_opts(&self) -> FloquetOptions {
        FloquetOptions {
            tol: self.tol.eig_tol.value,
            window: self.tol.eig_window.value,
            max_iters: self.tol.eig_max_iters.value,
            min_substeps: self.tol.min_substeps.value,
        }
    }
}

#[derive(Serialize)]
struct GridInfo {
    #[serde(rename = "L")]
    length: f64,
    nx: usize,
    #[serde(rename = "T")]
    period: f64,
    nt: usize,
    h: f64,
    tau: f64,
}

#[derive(Serialize)]
struct EnvelopeInfo {
    residual: f64,
    m_min: f64,
    m_max: f64,
    logderiv_min: f64,
    logderiv_max: f64,
    log_period_integral: f64,
}

impl EnvelopeInfo {
    fn of(s: &BernoulliSolution) -> Self {
        Self {
            residual: s.residual,
            m_min: s.m.min(),
            m_max: s.m.max(),
            logderiv_min: s.logderiv.min(),
            logderiv_max: s.logderiv.max(),
            log_period_integral: s.log_period_integral(),
        }
    }
}

#[derive(Serialize)]
struct OrbitInfo {
    label: String,
    defect: f64,
    periods: usize,
    substeps: usize,
    positive: bool,
    extinct: bool,
    min: f64,
    max: f64,
}

#[derive(Serialize)]
struct FitnessInfo {
    flatness: f64,
    is_ifd: bool,
    ifd_tol: f64,
    path_bounds: PathBounds,
    space_time_mean: f64,
}

impl FitnessInfo {
    fn of(f: &FitnessField, tol: f64) -> Self {
        Self {
            flatness: f.flatness,
            is_ifd: is_ifd(f, tol),
            ifd_tol: tol,
            path_bounds: path_fitness_bounds(&f.f),
            space_time_mean: space_time_mean(&f.f),
        }
    }
}

#[derive(Serialize)]
struct PathInfo {
    improving: bool,
    path_integral: f64,
    modes: usize,
    delta_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

/// Validates, runs and writes every artifact. The caller owns error reporting.
pub fn run_scenario(config: &ScenarioConfig, out: &mut OutputDir, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let compiled = config.validate()?;
    let grid = compiled.grid;
    let mut ctx = Ctx {
        grid,
        params: config.params.clone(),
        tol: config.tolerances.resolve(),
        par: opts.parallelism,
        out,
        timing: BTreeMap::new(),
    };

    let env = match (&compiled.r, &compiled.k) {
        (Some(r), Some(k)) => {
            let (r, k) = (ctx.positive(r, "/environment/r")?, ctx.positive(k, "/environment/K")?);
            Some(Environment::new(r, k).stage("environment")?)
        }
        _ => None,
    };

    let results = match &config.run {
        RunSpec::Feasibility { require_feasible } => {
            feasibility(&mut ctx, env.as_ref().expect("validated"), *require_feasible)?
        }
        RunSpec::Orbit { strategy, initial } => orbit(
            &mut ctx,
            env.as_ref().expect("validated"),
            &compiled.strategies,
            *strategy,
            initial.as_ref(),
        )?,
        RunSpec::Competition {
            strategies,
            periods,
            initial,
            record_every,
            stop_below,
        } => {
            let stop = stop_below.map(|s| (s.species, s.fraction));
            competition(
                &mut ctx,
                env.as_ref().expect("validated"),
                &compiled.strategies,
                strategies,
                *periods,
                initial.as_deref(),
                *record_every,
                stop,
            )?
        }
        RunSpec::Invasion { resident, invader } => invasion(
            &mut ctx,
            env.as_ref().expect("validated"),
            &compiled.strategies,
            *resident,
            *invader,
        )?,
        RunSpec::AlphaSweep {
            resident,
            alphas,
            mu,
            modes,
            delta_margin,
        } => sweep(
            &mut ctx,
            env.as_ref().expect("validated"),
            &compiled.strategies,
            *resident,
            alphas,
            *mu,
            *modes,
            *delta_margin,
        )?,
        RunSpec::RemarkD { rho, amplitude } => remark_d(&mut ctx, &compiled.strategies, rho, *amplitude)?,
    };

    let mut timing = json!({ "wall_seconds": started.elapsed().as_secs_f64() });
    timing["stages"] = serde_json::to_value(&ctx.timing).expect("timing serialises");
    let artifacts: Vec<String> = ctx.out.written().to_vec();
    let report = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "run": config.run.kind(),
        "grid": GridInfo {
            length: grid.length(),
            nx: grid.nx(),
            period: grid.period(),
            nt: grid.nt(),
            h: grid.h(),
            tau: grid.tau(),
        },
        "config": config,
        "tolerances": ctx.tol,
        "results": results,
        "artifacts": artifacts,
        "timing": timing,
    });
    ctx.out.json("report.json", &report)?;
    let artifacts = ctx.out.written().to_vec();
    Ok(RunOutcome { report, artifacts })
}

/// Drops the `timing` block so reports from identical runs compare equal.
pub fn comparable(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(obj) = r.as_object_mut() {
        obj.remove("timing");
    }
    r
}

fn feasibility(ctx: &mut Ctx, env: &Environment, require: bool) -> Result<Value, CliError> {
    let sol = ctx.timed("solve_m", |_| solve_m(env).stage("solve_m"))?;
    check_residual(ctx, &sol)?;
    let rep = check_feasibility_with(env, &sol, ctx.tol.eps_feas.value);
    let ktilde = compute_ktilde(env, &sol);
    let margin = feasibility_margin_field(env, &sol);
    ctx.out
        .series("envelope.csv", &[("M", &sol.m), ("logderiv", &sol.logderiv)])?;
    ctx.out.field("ktilde.csv", &ktilde)?;
    ctx.out.field("margin.csv", &margin)?;
    if require && !rep.feasible {
        return Err(infeasible_error(&rep));
    }
    Ok(json!({
        "envelope": EnvelopeInfo::of(&sol),
        "feasibility": rep,
        "ktilde": { "min": ktilde.min(), "max": ktilde.max() },
    }))
}

fn check_residual(ctx: &Ctx, sol: &BernoulliSolution) -> Result<(), CliError> {
    let tol = ctx.tol.bernoulli_residual_tol.value;
    if !(sol.residual < tol) {
        return Err(CliError::Numerical {
            stage: "solve_m".into(),
            message: format!("envelope residual {:.3e} exceeds {tol:.1e}; refine nt", sol.residual),
            diagnostics: json!({ "residual": sol.residual, "nt": ctx.grid.nt() }),
        });
    }
    Ok(())
}

fn infeasible_error(rep: &FeasibilityReport) -> CliError {
    CliError::Infeasible {
        stage: "feasibility".into(),
        message: format!(
            "environment admits no ideal free distribution: min(r - M'/M) = {:.6e} at x = {:.6}, t = {:.6}",
            rep.margin, rep.argmin.0, rep.argmin.1
        ),
        diagnostics: serde_json::to_value(rep).expect("report serialises"),
    }
}

/// A simulated strategy, plus its construction when it is the ideal free one.
struct Built {
    strategy: Strategy,
    ifd: Option<IfdConstruction>,
}

fn build(ctx: &mut Ctx, env: &Environment, strategies: &[CompiledStrategy], idx: usize) -> Result<Built, CliError> {
    let s = &strategies[idx];
    let mu = ctx.positive(&s.mu, &format!("/strategies/{idx}/mu"))?;
    match &s.drift {
        CompiledDrift::Expr(p) => {
            let p = ctx.sample(p, &format!("/strategies/{idx}/P"))?;
            let strategy = Strategy::from_fields(mu, p, s.label.clone())
                .map_err(|e| CliError::validation(format!("/strategies/{idx}"), e.to_string()))?;
            Ok(Built { strategy, ifd: None })
        }
        CompiledDrift::Ifd => {
            let sol = solve_m(env).stage("solve_m")?;
            check_residual(ctx, &sol)?;
            let rep = check_feasibility_with(env, &sol, ctx.tol.eps_feas.value);
            if !rep.feasible {
                return Err(infeasible_error(&rep));
            }
            let mut c = ctx.timed("construct_ifd", |_| construct_ifd(env, &mu).stage("construct_ifd"))?;
            c.strategy.label = s.label.clone();
            Ok(Built {
                strategy: c.strategy.clone(),
                ifd: Some(c),
            })
        }
        CompiledDrift::Pursuit(_) => unreachable!("validation rejects simulated pursuit strategies"),
    }
}

fn initial_density(ctx: &Ctx, env: &Environment, src: Option<&String>, pointer: &str) -> Result<Vec<f64>, CliError> {
    match src {
        None => Ok(env.k().slice(0)),
        Some(src) => {
            let e = ifd_core::exprfield::parse(src).map_err(|e| CliError::validation(pointer, e.to_string()))?;
            let g = ctx.grid;
            let mut u = Vec::with_capacity(g.nx());
            for i in 0..g.nx() {
                let v = e
                    .eval(g.x(i), 0.0, &ctx.params)
                    .map_err(|err| CliError::validation(pointer, err.to_string()))?;
                if v < 0.0 {
                    return Err(CliError::validation(
                        pointer,
                        format!("initial density is negative at x = {}", g.x(i)),
                    ));
                }
                u.push(v);
            }
            if u.iter().all(|v| *v == 0.0) {
                return Err(CliError::validation(pointer, "initial density is identically zero"));
            }
            Ok(u)
        }
    }
}

fn orbit_info(label: &str, o: &PeriodicOrbit) -> OrbitInfo {
    OrbitInfo {
        label: label.to_string(),
        defect: o.defect,
        periods: o.periods,
        substeps: o.substeps,
        positive: o.is_positive(),
        extinct: o.extinct[0],
        min: o.states[0].min(),
        max: o.states[0].max(),
    }
}

fn resident_orbit(
    ctx: &mut Ctx,
    env: &Environment,
    built: &Built,
    initial: Option<&String>,
    pointer: &str,
) -> Result<PeriodicOrbit, CliError> {
    let u0 = initial_density(ctx, env, initial, pointer)?;
    let opts = ctx.orbit_opts();
    let o = ctx.timed("find_periodic_orbit", |_| {
        find_periodic_orbit(env, std::slice::from_ref(&built.strategy), &[u0], opts).stage("find_periodic_orbit")
    })?;
    if o.extinct[0] {
        return Err(CliError::Numerical {
            stage: "find_periodic_orbit".into(),
            message: "resident went extinct; no positive periodic orbit".into(),
            diagnostics: json!({ "periods": o.periods }),
        });
    }
    Ok(o)
}

fn orbit(
    ctx: &mut Ctx,
    env: &Environment,
    strategies: &[CompiledStrategy],
    idx: usize,
    initial: Option<&String>,
) -> Result<Value, CliError> {
    let built = build(ctx, env, strategies, idx)?;
    let o = resident_orbit(ctx, env, &built, initial, "/run/initial")?;
    let f = fitness_field(env, &o.states[0]);
    ctx.out.field("orbit.csv", &o.states[0])?;
    ctx.out.field("fitness.csv", &f.f)?;
    let mut res = json!({
        "orbit": orbit_info(&built.strategy.label, &o),
        "fitness": FitnessInfo::of(&f, ctx.tol.ifd_tol.value),
    });
    if let Some(c) = &built.ifd {
        let theta = c.ktilde.scale_by_time(&c.solution.m);
        res["ifd"] = json!({
            "envelope": EnvelopeInfo::of(&c.solution),
            "relative_error": o.states[0].sup_distance(&theta) / theta.abs_max(),
            "poisson_compat_defect": c.poisson.compat_defect,
        });
        ctx.out.field("ifd_profile.csv", &theta)?;
    }
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
fn competition(
    ctx: &mut Ctx,
    env: &Environment,
    strategies: &[CompiledStrategy],
    list: &[usize],
    periods: usize,
    initial: Option<&[String]>,
    record_every: Option<usize>,
    stop_below: Option<(usize, f64)>,
) -> Result<Value, CliError> {
    let mut built = Vec::with_capacity(list.len());
    let mut u0 = Vec::with_capacity(list.len());
    for (k, &i) in list.iter().enumerate() {
        built.push(build(ctx, env, strategies, i)?.strategy);
        let src = initial.map(|v| &v[k]);
        u0.push(initial_density(ctx, env, src, &format!("/run/initial/{k}"))?);
    }
    let opts = CompetitionOptions {
        min_substeps: ctx.tol.min_substeps.value,
        record_every,
        stop_below,
    };
    let tr = ctx.timed("run_competition", |_| {
        run_competition(env, &built, &u0, periods, opts).stage("run_competition")
    })?;
    let rows = tr.masses.iter().enumerate().flat_map(|(p, m)| {
        m.iter()
            .enumerate()
            .map(move |(s, v)| vec![p.to_string(), s.to_string(), num(*v)])
            .collect::<Vec<_>>()
    });
    ctx.out.table("mass.csv", "period,species,mass", rows)?;
    let first = &tr.masses[0];
    let last = tr.masses.last().expect("initial masses are recorded");
    let species: Vec<Value> = (0..tr.species)
        .map(|s| {
            json!({
                "label": built[s].label,
                "initial_mass": first[s],
                "final_mass": last[s],
                "ratio": last[s] / first[s],
            })
        })
        .collect();
    let state_rows = tr.final_state().iter().enumerate().flat_map(|(s, u)| {
        let g = ctx.grid;
        u.iter()
            .enumerate()
            .map(move |(i, v)| vec![s.to_string(), num(g.x(i)), num(*v)])
            .collect::<Vec<_>>()
    });
    let state_rows: Vec<Vec<String>> = state_rows.collect();
    ctx.out.table("final_state.csv", "species,x,value", state_rows)?;
    Ok(json!({
        "periods": tr.periods,
        "requested_periods": periods,
        "stopped_early": tr.periods < periods,
        "substeps": tr.substeps,
        "species": species,
    }))
}

struct Resident {
    summary: Value,
    density: SpaceTimeField,
    fitness: FitnessField,
    path: PeriodicPath,
    info: PathInfo,
}

/// Resident orbit → fitness → invasion path (falling back to the smoothed
/// argmax when no path gains).
fn resident_pipeline(
    ctx: &mut Ctx,
    env: &Environment,
    strategies: &[CompiledStrategy],
    resident: usize,
    modes: usize,
    delta: f64,
) -> Result<Resident, CliError> {
    let built = build(ctx, env, strategies, resident)?;
    let o = resident_orbit(ctx, env, &built, None, "/run")?;
    let f = fitness_field(env, &o.states[0]);
    ctx.out.field("orbit.csv", &o.states[0])?;
    ctx.out.field("fitness.csv", &f.f)?;
    let (path, info) = match extract_invasion_path(&f.f, modes, delta) {
        Ok(p) => {
            let info = PathInfo {
                improving: true,
                path_integral: p.path_integral.unwrap_or(0.0),
                modes,
                delta_margin: delta,
                note: None,
            };
            (p, info)
        }
        Err(StrategyError::PathNotImproving { achieved, .. }) => {
            let p = smoothed_argmax_path(&f.f, modes, delta).stage("extract_invasion_path")?;
            let info = PathInfo {
                improving: false,
                path_integral: achieved,
                modes,
                delta_margin: delta,
                note: Some("no path with positive fitness gain; using the smoothed argmax path".into()),
            };
            (p, info)
        }
        Err(e) => return Err(e).stage("extract_invasion_path"),
    };
    ctx.out.series("path.csv", &[("gamma", &path.gamma)])?;
    let summary = json!({
        "orbit": orbit_info(&built.strategy.label, &o),
        "fitness": FitnessInfo::of(&f, ctx.tol.ifd_tol.value),
    });
    Ok(Resident {
        summary,
        density: o.states.into_iter().next().expect("one species"),
        fitness: f,
        path,
        info,
    })
}

fn invasion(
    ctx: &mut Ctx,
    env: &Environment,
    strategies: &[CompiledStrategy],
    resident: usize,
    invader: Option<usize>,
) -> Result<Value, CliError> {
    let l = ctx.grid.length();
    let (alpha, mu, modes, delta) = match invader.map(|i| &strategies[i].drift) {
        Some(CompiledDrift::Pursuit(p)) => (
            p.alpha,
            p.mu.unwrap_or(ctx.tol.invader_mu.value),
            p.modes.unwrap_or(ctx.tol.path_modes.value),
            p.delta_margin.unwrap_or(ctx.tol.delta_fraction.value * l),
        ),
        _ => (
            ctx.tol.invader_alpha.value,
            ctx.tol.invader_mu.value,
            ctx.tol.path_modes.value,
            ctx.tol.delta_fraction.value * l,
        ),
    };
    let Resident {
        summary: mut res,
        density,
        path,
        info,
        ..
    } = resident_pipeline(ctx, env, strategies, resident, modes, delta)?;
    let inv = construct_pursuit_invader(&path, alpha, mu).stage("construct_pursuit_invader")?;
    let fopts = ctx.floquet_opts();
    let result = ctx.timed("invasion_test", |_| {
        invasion_test_with(env, &density, &inv, fopts).stage("invasion_test")
    })?;
    let eps = ctx.tol.eps_eig.value;
    let invades = result.floquet.lambda1 < -eps;
    ctx.out.field("eigenfunction.csv", &result.floquet.eigenfunction)?;
    res["path"] = serde_json::to_value(&info).expect("path info serialises");
    res["invader"] = json!({ "alpha": alpha, "mu": mu, "modes": modes, "delta_margin": delta });
    res["floquet"] = json!({
        "lambda1": result.floquet.lambda1,
        "rho": result.floquet.rho,
        "iterations": result.floquet.iterations,
        "residual": result.floquet.residual,
        "substeps": result.floquet.substeps,
    });
    res["verdict"] = json!(if invades { "invades" } else { "no invasion" });
    res["eps_eig"] = json!(eps);
    Ok(res)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    ctx: &mut Ctx,
    env: &Environment,
    strategies: &[CompiledStrategy],
    resident: usize,
    alphas: &[f64],
    mu: Option<f64>,
    modes: Option<usize>,
    delta: Option<f64>,
) -> Result<Value, CliError> {
    let mu = mu.unwrap_or(ctx.tol.invader_mu.value);
    let modes = modes.unwrap_or(ctx.tol.path_modes.value);
    let delta = delta.unwrap_or(ctx.tol.delta_fraction.value * ctx.grid.length());
    let Resident {
        summary: mut res,
        fitness: f,
        path,
        info,
        ..
    } = resident_pipeline(ctx, env, strategies, resident, modes, delta)?;
    let (fopts, par) = (ctx.floquet_opts(), ctx.par);
    let s = ctx.timed("alpha_sweep", |_| {
        alpha_sweep(&f.f, &path, mu, alphas, fopts, par).stage("alpha_sweep")
    })?;
    let rows = s.points.iter().map(|p| {
        vec![
            num(p.alpha),
            num(p.lambda1),
            num(p.rho),
            p.iters.to_string(),
            num(s.bound),
        ]
    });
    let rows: Vec<Vec<String>> = rows.collect();
    ctx.out.table("sweep.csv", "alpha,lambda1,rho,iters,bound", rows)?;
    let mut sorted: Vec<_> = s.points.clone();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    let monotone = sorted.windows(2).all(|w| w[1].lambda1 <= w[0].lambda1 + 1e-9);
    res["path"] = serde_json::to_value(&info).expect("path info serialises");
    res["sweep"] = json!({
        "mu": mu,
        "points": s.points,
        "bound": s.bound,
        "min_lambda1": s.min_lambda(),
        "non_increasing": monotone,
    });
    Ok(res)
}

fn remark_d(
    ctx: &mut Ctx,
    strategies: &[CompiledStrategy],
    rho_src: &str,
    amplitude: Option<f64>,
) -> Result<Value, CliError> {
    let g = ctx.grid;
    let e = ifd_core::exprfield::parse(rho_src).map_err(|e| CliError::validation("/run/rho", e.to_string()))?;
    let mut rho = Vec::with_capacity(g.nt());
    for j in 0..g.nt() {
        let v = e
            .eval(0.0, g.t(j), &ctx.params)
            .map_err(|err| CliError::validation("/run/rho", err.to_string()))?;
        rho.push(v);
    }
    let rho = PeriodicScalar::from_values(g, rho).map_err(|err| CliError::validation("/run/rho", err.to_string()))?;
    if rho.min() <= 0.0 {
        return Err(CliError::validation("/run/rho", "rho must be positive"));
    }
    let rd = ctx.timed("remark_d", |_| {
        remark_d_counterexample(&rho, amplitude).stage("remark_d")
    })?;
    let sol = solve_m(&rd.env).stage("solve_m")?;
    let rep = check_feasibility_with(&rd.env, &sol, ctx.tol.eps_feas.value);
    ctx.out.field("r.csv", rd.env.r())?;
    ctx.out.field("margin.csv", &feasibility_margin_field(&rd.env, &sol))?;
    let profile = PeriodicScalar::from_values(g, rd.margin_profile.clone()).stage("remark_d")?;
    ctx.out.series(
        "envelope.csv",
        &[("M", &sol.m), ("logderiv", &sol.logderiv), ("min_margin", &profile)],
    )?;
    let mut runs = Vec::new();
    for (idx, s) in strategies.iter().enumerate() {
        let built = build(ctx, &rd.env, strategies, idx)?;
        let o = resident_orbit(ctx, &rd.env, &built, None, "/run")?;
        let f = fitness_field(&rd.env, &o.states[0]);
        ctx.out.field(&format!("orbit_{idx}.csv"), &o.states[0])?;
        runs.push(json!({
            "orbit": orbit_info(&s.label, &o),
            "fitness": FitnessInfo::of(&f, ctx.tol.ifd_tol.value),
        }));
    }
    Ok(json!({
        "amplitude": rd.amplitude,
        "kappa": rd.kappa,
        "envelope": EnvelopeInfo::of(&sol),
        "feasibility": rep,
        "strategies": runs,
    }))
}
