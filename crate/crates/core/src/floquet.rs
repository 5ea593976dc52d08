//! Principal eigenvalues of linear periodic-parabolic problems through the
//! principal Floquet multiplier of the period map, invasion tests, and the
//! large-drift sweep for pursuit invaders.
//!
//! For `φ_t = Lφ + Vφ` with period map `Φ`, power iteration on the positive
//! cone gives the dominant multiplier `ρ`, and `λ₁ = −ln ρ / T`. Negative
//! `λ₁` means a rare invader grows.

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Environment, NodeTable, OperatorTable, Schedule, REACTION_CFL};
use crate::fitness::fitness_field;
use crate::mesh::{face_average, FluxOperator, Grid, MeshError, SpaceTimeField};
use crate::par::{map_slice, Parallelism};
use crate::strategy::{PeriodicPath, Strategy};

pub const DEFAULT_EIG_TOL: f64 = 1e-10;
pub const DEFAULT_EIG_WINDOW: usize = 10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Invasion verdict threshold: invades iff `λ₁ < −EPS_EIG`.
pub const EPS_EIG: f64 = 1e-8;
/// Keeps the RK4 error of the potential term below the eigenvalue tolerance.
const POTENTIAL_DT_SCALE: f64 = 0.005;

#[derive(Debug, Error)]
pub enum FloquetError {
    #[error("power iteration did not converge in {iterations} iterations (last ratios {last:?})")]
    NonConvergence { iterations: usize, last: [f64; 2] },
    #[error("iterate changed sign at cell {i} in iteration {iteration} (value {value:.3e})")]
    SignChange { iteration: usize, i: usize, value: f64 },
    #[error("multiplier is not positive: {0}")]
    NonPositiveMultiplier(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// `φ_t = ∇·(μ∇φ − φP) + Vφ`, zero total flux at the boundary.
    Divergence,
    /// `φ_t = μΔφ + b·∇φ + Vφ`, `∂φ/∂n = 0`.
    Nondivergence,
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub form: Form,
    pub mu: SpaceTimeField,
    /// `P` for the divergence form, `b` for the non-divergence form.
    pub drift: SpaceTimeField,
    pub potential: SpaceTimeField,
    /// Exact face drift, if known (divergence form only).
    pub drift_faces: Option<Vec<Vec<f64>>>,
}

impl LinearProblem {
    pub fn divergence(strategy: &Strategy, potential: SpaceTimeField) -> Self {
        Self {
            form: Form::Divergence,
            mu: strategy.mu.clone(),
            drift: strategy.p.clone(),
            potential,
            drift_faces: strategy.p_faces.clone(),
        }
    }

    pub fn nondivergence(mu: SpaceTimeField, drift: SpaceTimeField, potential: SpaceTimeField) -> Self {
        Self {
            form: Form::Nondivergence,
            mu,
            drift,
            potential,
            drift_faces: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// The same problem with `potential + delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            potential: self.potential.map(|v| v + delta),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FloquetOptions {
    pub tol: f64,
    pub window: usize,
    pub max_iters: usize,
    pub min_substeps: usize,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EIG_TOL,
            window: DEFAULT_EIG_WINDOW,
            max_iters: DEFAULT_MAX_ITERS,
            min_substeps: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FloquetResult {
    pub rho: f64,
    pub lambda1: f64,
    /// Periodic eigenfunction `e^{λ₁ t} ψ(t)`, normalised to max 1.
    pub eigenfunction: SpaceTimeField,
    /// `‖Φψ − ρψ‖₁ / ρ` with `‖ψ‖₁ = 1`.
    pub residual: f64,
    pub iterations: usize,
    pub substeps: usize,
}

/// The linear period map.
pub(crate) struct LinearMap {
    nx: usize,
    form: Form,
    ops: OperatorTable,
    /// Deviation of the potential from its space-time mean.
    potential: NodeTable,
    /// Space-time mean of the potential, integrated exactly.
    vbar: f64,
    schedule: Schedule,
}

impl LinearMap {
    pub(crate) fn new(p: &LinearProblem, min_substeps: usize) -> Result<Self, FloquetError> {
        let g = *p.grid();
        if p.drift.grid() != &g || p.potential.grid() != &g {
            return Err(FloquetError::Shape("coefficients live on different grids".into()));
        }
        let (i, j, value) = p.mu.argmin();
        if value <= 0.0 {
            return Err(MeshError::NonPositiveMu { i, j, value }.into());
        }
        let ops: Vec<FluxOperator> = (0..g.nt())
            .map(|j| {
                let muf = face_average(&p.mu.slice(j));
                let pf = match &p.drift_faces {
                    Some(f) if p.form == Form::Divergence => f[j].clone(),
                    _ => face_average(&p.drift.slice(j)),
                };
                FluxOperator::from_faces(g.h(), &muf, &pf)
            })
            .collect();
        let ops = OperatorTable::from_ops(&ops);
        let vbar = p.potential.values().iter().sum::<f64>() / p.potential.values().len() as f64;
        let potential = NodeTable::from_field(&p.potential.map(|v| v - vbar));
        let mut max_dt = ops.max_dt();
        let vmax = potential.abs_max();
        if vmax > 0.0 {
            max_dt = max_dt.min(REACTION_CFL / vmax).min(POTENTIAL_DT_SCALE / vmax);
        }
        Ok(Self {
            nx: g.nx(),
            form: p.form,
            ops,
            potential,
            vbar,
            schedule: Schedule::for_limits(&g, max_dt, min_substeps),
        })
    }

    fn rhs(&self, op: &FluxOperator, v: &[f64], u: &[f64], out: &mut [f64]) {
        match self.form {
            Form::Divergence => op.apply(u, out),
            Form::Nondivergence => op.apply_transpose(u, out),
        }
        for i in 0..self.nx {
            out[i] += v[i] * u[i];
        }
    }

    /// One period; optional snapshots at each time node.
    pub(crate) fn advance(&self, u: &mut [f64], mut snapshots: Option<&mut Vec<Vec<f64>>>) {
        let n = self.nx;
        let dt = self.schedule.dt;
        let growth = (self.vbar * dt).exp();
        let mut ops = [self.ops.scratch(), self.ops.scratch(), self.ops.scratch()];
        let mut pots = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let fill = |g: usize, op: &mut FluxOperator, pot: &mut [f64]| {
            let (base, w) = self.schedule.at(g);
            self.ops.fill(base, w, op);
            self.potential.fill(base, w, pot);
        };
        {
            let (o, p) = (&mut ops[0], &mut pots[0]);
            fill(0, o, p);
        }
        let (mut a, mut b, mut c) = (0usize, 1usize, 2usize);
        for step in 0..self.schedule.substeps() {
            if step % self.schedule.m == 0 {
                if let Some(s) = snapshots.as_deref_mut() {
                    s.push(u.to_vec());
                }
            }
            let g = 2 * step;
            fill(g + 1, &mut ops[b], &mut pots[b]);
            fill(g + 2, &mut ops[c], &mut pots[c]);
            self.rhs(&ops[a], &pots[a], u, &mut k1);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            self.rhs(&ops[b], &pots[b], &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            self.rhs(&ops[b], &pots[b], &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            self.rhs(&ops[c], &pots[c], &tmp, &mut k4);
            for i in 0..n {
                u[i] = growth * (u[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]));
            }
            std::mem::swap(&mut a, &mut c);
            let _ = &mut b;
        }
    }

    pub(crate) fn substeps(&self) -> usize {
        self.schedule.substeps()
    }
}

fn l1(u: &[f64]) -> f64 {
    u.iter().map(|v| v.abs()).sum()
}

fn check_sign(u: &[f64], iteration: usize) -> Result<(), FloquetError> {
    let max = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some((i, &value)) = u.iter().enumerate().find(|(_, v)| **v < -1e-12 * max) {
        return Err(FloquetError::SignChange { iteration, i, value });
    }
    Ok(())
}

pub fn principal_eigenvalue(p: &LinearProblem) -> Result<FloquetResult, FloquetError> {
    principal_eigenvalue_with(p, FloquetOptions::default())
}

pub fn principal_eigenvalue_with(p: &LinearProblem, opts: FloquetOptions) -> Result<FloquetResult, FloquetError> {
    let g = *p.grid();
    let map = LinearMap::new(p, opts.min_substeps)?;
    let nx = g.nx();
    let mut psi = vec![1.0 / nx as f64; nx];
    let mut ratios: Vec<f64> = Vec::new();
    let mut phi = psi.clone();
    for it in 1..=opts.max_iters {
        phi.copy_from_slice(&psi);
        map.advance(&mut phi, None);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { period: it }.into());
        }
        check_sign(&phi, it)?;
        let rho = l1(&phi);
        if !(rho > 0.0) {
            return Err(FloquetError::NonPositiveMultiplier(rho));
        }
        ratios.push(rho);
        let converged = ratios.len() > opts.window && {
            let old = ratios[ratios.len() - 1 - opts.window];
            (rho - old).abs() < opts.tol * rho
        };
        if converged {
            let residual = phi.iter().zip(&psi).map(|(a, b)| (a - rho * b).abs()).sum::<f64>() / rho;
            for (ps, ph) in psi.iter_mut().zip(&phi) {
                *ps = ph / rho;
            }
            let lambda1 = -rho.ln() / g.period();
            let eigenfunction = periodic_eigenfunction(&map, &g, &psi, lambda1)?;
            return Ok(FloquetResult {
                rho,
                lambda1,
                eigenfunction,
                residual,
                iterations: it,
                substeps: map.substeps(),
            });
        }
        for (ps, ph) in psi.iter_mut().zip(&phi) {
            *ps = ph / rho;
        }
    }
    let n = ratios.len();
    Err(FloquetError::NonConvergence {
        iterations: opts.max_iters,
        last: [ratios[n.saturating_sub(2)], ratios[n - 1]],
    })
}

fn periodic_eigenfunction(
    map: &LinearMap,
    g: &Grid,
    psi: &[f64],
    lambda1: f64,
) -> Result<SpaceTimeField, FloquetError> {
    let (nx, nt) = (g.nx(), g.nt());
    let mut u = psi.to_vec();
    let mut snaps = Vec::with_capacity(nt);
    map.advance(&mut u, Some(&mut snaps));
    let mut values = vec![0.0; nx * nt];
    for (j, s) in snaps.iter().enumerate() {
        let scale = (lambda1 * g.t(j)).exp();
        for i in 0..nx {
            values[i * nt + j] = s[i] * scale;
        }
    }
    let max = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    values.iter_mut().for_each(|v| *v /= max);
    if let Some(idx) = values.iter().position(|v| *v <= 0.0) {
        return Err(FloquetError::SignChange {
            iteration: 0,
            i: idx / nt,
            value: values[idx],
        });
    }
    Ok(SpaceTimeField::from_values(*g, values)?)
}

#[derive(Debug, Clone)]
pub struct InvasionResult {
    pub floquet: FloquetResult,
    pub invades: bool,
}

/// Linear stability of `(θ*, 0)` against a rare invader.
pub fn invasion_test(
    env: &Environment,
    resident: &SpaceTimeField,
    invader: &Strategy,
) -> Result<InvasionResult, FloquetError> {
    invasion_test_with(env, resident, invader, FloquetOptions::default())
}

pub fn invasion_test_with(
    env: &Environment,
    resident: &SpaceTimeField,
    invader: &Strategy,
    opts: FloquetOptions,
) -> Result<InvasionResult, FloquetError> {
    let f = fitness_field(env, resident).f;
    let floquet = principal_eigenvalue_with(&LinearProblem::divergence(invader, f), opts)?;
    let invades = floquet.lambda1 < -EPS_EIG;
    Ok(InvasionResult { floquet, invades })
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub lambda1: f64,
    pub rho: f64,
    pub iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// `−(1/T) ∮ V(γ(t), t) dt` with the fitness along the forward path.
    pub bound: f64,
}

impl SweepResult {
    pub fn min_lambda(&self) -> f64 {
        self.points.iter().map(|p| p.lambda1).fold(f64::INFINITY, f64::min)
    }
}

/// Non-divergence problem `φ_t = μΔφ + α(γ̃ − x)φ_x + Vφ` with
/// `γ̃(t) = γ(T − t)` and `V(x, t) = F(x, T − t)`.
pub fn pursuit_adjoint_problem(f: &SpaceTimeField, path: &PeriodicPath, mu: f64, alpha: f64) -> LinearProblem {
    let g = *f.grid();
    let mut drift = Vec::with_capacity(g.nx() * g.nt());
    for i in 0..g.nx() {
        let x = g.x(i);
        drift.extend((0..g.nt()).map(|j| alpha * (path.gamma.get(g.reflect(j)) - x)));
    }
    LinearProblem::nondivergence(
        SpaceTimeField::constant(g, mu),
        SpaceTimeField::from_values(g, drift).expect("finite drift"),
        f.time_reversed(),
    )
}

/// `λ₁(α)` for each `α` (concurrently when `parallelism` allows).
pub fn alpha_sweep(
    f: &SpaceTimeField,
    path: &PeriodicPath,
    mu: f64,
    alphas: &[f64],
    opts: FloquetOptions,
    parallelism: Parallelism,
) -> Result<SweepResult, FloquetError> {
    if alphas.iter().any(|a| !(*a >= 0.0)) {
        return Err(FloquetError::Shape("alphas must be nonnegative".into()));
    }
    let results = map_slice(alphas, parallelism, |&alpha| {
        principal_eigenvalue_with(&pursuit_adjoint_problem(f, path, mu, alpha), opts).map(|r| SweepPoint {
            alpha,
            lambda1: r.lambda1,
            rho: r.rho,
            iters: r.iterations,
        })
    });
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let g = f.grid();
    let bound = -crate::fitness::pathwise_fitness(f, path) / g.period();
    Ok(SweepResult { points, bound })
}

/// [`alpha_sweep`] for the fitness of a resident density.
pub fn alpha_sweep_resident(
    env: &Environment,
    resident: &SpaceTimeField,
    path: &PeriodicPath,
    mu: f64,
    alphas: &[f64],
    opts: FloquetOptions,
    parallelism: Parallelism,
) -> Result<SweepResult, FloquetError> {
    alpha_sweep(&fitness_field(env, resident).f, path, mu, alphas, opts, parallelism)
}
