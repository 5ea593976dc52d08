//! Explicit time stepping of the single- and multi-species
//! reaction-diffusion-advection models, periodic orbits as fixed points of
//! the period map, and competition runs.
//!
//! Each species obeys `u_t = ∇·(μ∇u − uP) + r u (1 − Σ_s u_s / K)` with
//! no-flux boundaries. Space is discretised by [`FluxOperator`]; time by
//! classical RK4 with `m` substeps per grid interval `τ`. Coefficients at
//! stage times that fall between time nodes come from 6-point periodic
//! Lagrange interpolation.

use thiserror::Error;

use crate::exprfield::{Expr, Params};
use crate::mesh::{divergence_flux_operator, face_average, sample, FluxOperator, Grid, MeshError, SpaceTimeField};
use crate::strategy::Strategy;

/// Densities below this are an error; values in `(-NEG_TOL, 0)` are clipped.
pub const NEG_TOL: f64 = 1e-12;
pub const DEFAULT_ORBIT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_PERIODS: usize = 20000;

/// Diffusive CFL bound `μ dt / h² ≤ DIFFUSIVE_CFL`.
pub const DIFFUSIVE_CFL: f64 = 0.4;
/// Advective CFL bound `|P| dt / h ≤ ADVECTIVE_CFL`.
pub const ADVECTIVE_CFL: f64 = 0.5;
/// Reaction bound `max|rate| dt ≤ REACTION_CFL`.
pub const REACTION_CFL: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{field} must be positive, got {value} at cell {i}, time node {j}")]
    NonPositive {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(
        "density of species {species} became {value:.3e} at cell {i} (period {period}); the step violates positivity"
    )]
    Negativity {
        species: usize,
        i: usize,
        value: f64,
        period: usize,
    },
    #[error("non-finite state in period {period}")]
    NonFinite { period: usize },
    #[error("periodic orbit not found after {periods} periods (last defect {:.3e})", defect_history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { periods: usize, defect_history: Vec<f64> },
    #[error("all species collapsed to zero after {periods} periods")]
    Extinction { periods: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Habitat data `(Ω, T, r, K)` sampled on a grid.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: Grid,
    r: SpaceTimeField,
    k: SpaceTimeField,
}

impl Environment {
    pub fn new(r: SpaceTimeField, k: SpaceTimeField) -> Result<Self, DynamicsError> {
        if r.grid() != k.grid() {
            return Err(DynamicsError::Shape("r and K live on different grids".into()));
        }
        for (field, f) in [("r", &r), ("K", &k)] {
            let (i, j, value) = f.argmin();
            if value <= 0.0 {
                return Err(DynamicsError::NonPositive { field, i, j, value });
            }
        }
        Ok(Self { grid: *r.grid(), r, k })
    }

    /// Same as [`new`](Self::new) without the positivity check; used for
    /// degenerate test problems such as `r ≡ 0`.
    pub fn new_unchecked(r: SpaceTimeField, k: SpaceTimeField) -> Result<Self, DynamicsError> {
        if r.grid() != k.grid() {
            return Err(DynamicsError::Shape("r and K live on different grids".into()));
        }
        Ok(Self { grid: *r.grid(), r, k })
    }

    pub fn from_exprs(grid: Grid, r: &Expr, k: &Expr, params: &Params) -> Result<Self, DynamicsError> {
        Self::new(sample(r, &grid, params)?, sample(k, &grid, params)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn r(&self) -> &SpaceTimeField {
        &self.r
    }
    pub fn k(&self) -> &SpaceTimeField {
        &self.k
    }
}

/// Densities of `N` species, each of length `nx`.
pub type State = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub species: usize,
    /// `masses[p][s]` = `Σ_i u_s,i h` after `p` periods (`p = 0` is the initial state).
    pub masses: Vec<Vec<f64>>,
    /// `(period, state)` pairs recorded on request; the final state is always last.
    pub states: Vec<(usize, State)>,
    pub periods: usize,
    pub substeps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        &self.states.last().expect("trajectory records its final state").1
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    /// One field per species; `states[s].get(i, j)` is the density at `(x_i, t_j)`.
    pub states: Vec<SpaceTimeField>,
    pub defect: f64,
    pub periods: usize,
    pub substeps: usize,
    /// Species whose density fell below `1e-12` of the total.
    pub extinct: Vec<bool>,
}

impl PeriodicOrbit {
    pub fn state_at(&self, j: usize) -> State {
        self.states.iter().map(|f| f.slice(j)).collect()
    }
    pub fn is_positive(&self) -> bool {
        self.states.iter().all(SpaceTimeField::is_positive)
    }
}

// ---------------------------------------------------------------------------
// Time interpolation of node tables

/// Weights for one stage time: node offsets relative to a base node.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weights {
    offsets: [isize; 6],
    w: [f64; 6],
    len: usize,
}

impl Weights {
    /// 6-point Lagrange weights for fractional position `f ∈ [0, 1)`
    /// between node 0 and node 1 (stencil −2..=3).
    fn lagrange(f: f64) -> Self {
        if f == 0.0 {
            return Self {
                offsets: [0; 6],
                w: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                len: 1,
            };
        }
        let nodes: [isize; 6] = [-2, -1, 0, 1, 2, 3];
        let mut w = [0.0; 6];
        for (a, &oa) in nodes.iter().enumerate() {
            let mut p = 1.0;
            for &ob in nodes.iter().filter(|&&ob| ob != oa) {
                p *= (f - ob as f64) / ((oa - ob) as f64);
            }
            w[a] = p;
        }
        Self {
            offsets: nodes,
            w,
            len: 6,
        }
    }
}

/// Per-node table of `len` values, stored node-major.
#[derive(Debug, Clone)]
pub(crate) struct NodeTable {
    data: Vec<f64>,
    len: usize,
    nt: usize,
    constant: bool,
}

impl NodeTable {
    pub(crate) fn new(data: Vec<f64>, len: usize, nt: usize) -> Self {
        let constant = (1..nt).all(|j| data[j * len..(j + 1) * len] == data[..len]);
        Self {
            data,
            len,
            nt,
            constant,
        }
    }

    /// Node-major copy of a field.
    pub(crate) fn from_field(f: &SpaceTimeField) -> Self {
        let g = f.grid();
        let mut data = Vec::with_capacity(g.nx() * g.nt());
        for j in 0..g.nt() {
            data.extend(f.slice(j));
        }
        Self::new(data, g.nx(), g.nt())
    }

    pub(crate) fn node(&self, j: usize) -> &[f64] {
        &self.data[j * self.len..(j + 1) * self.len]
    }

    pub(crate) fn abs_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn fill(&self, base: usize, w: &Weights, out: &mut [f64]) {
        if self.constant {
            out.copy_from_slice(self.node(0));
            return;
        }
        let nt = self.nt as isize;
        let j0 = (base as isize + w.offsets[0]).rem_euclid(nt) as usize;
        out.copy_from_slice(self.node(j0));
        if w.len == 1 {
            return;
        }
        let w0 = w.w[0];
        out.iter_mut().for_each(|o| *o *= w0);
        for k in 1..w.len {
            let j = (base as isize + w.offsets[k]).rem_euclid(nt) as usize;
            let wk = w.w[k];
            for (o, v) in out.iter_mut().zip(self.node(j)) {
                *o += wk * v;
            }
        }
    }
}

/// Face coefficients of a flux operator at every time node.
#[derive(Debug, Clone)]
pub(crate) struct OperatorTable {
    diff: NodeTable,
    adv: NodeTable,
}

impl OperatorTable {
    pub(crate) fn from_ops(ops: &[FluxOperator]) -> Self {
        let nt = ops.len();
        let len = ops[0].diff.len();
        let mut diff = Vec::with_capacity(nt * len);
        let mut adv = Vec::with_capacity(nt * len);
        for op in ops {
            diff.extend_from_slice(&op.diff);
            adv.extend_from_slice(&op.adv);
        }
        Self {
            diff: NodeTable::new(diff, len, nt),
            adv: NodeTable::new(adv, len, nt),
        }
    }

    /// Builds `A(t_j)` for every node from a strategy, using the exact face
    /// drift when the strategy carries one.
    pub(crate) fn from_strategy(s: &Strategy) -> Result<Self, DynamicsError> {
        let g = *s.mu.grid();
        let ops = (0..g.nt())
            .map(|j| match &s.p_faces {
                Some(faces) => {
                    let mu_j = s.mu.slice(j);
                    if let Some((i, &value)) = mu_j.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                        return Err(MeshError::NonPositiveMu { i, j, value });
                    }
                    Ok(FluxOperator::from_faces(g.h(), &face_average(&mu_j), &faces[j]))
                }
                None => divergence_flux_operator(&s.mu, &s.p, j),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_ops(&ops))
    }

    /// Largest stable step for the explicit scheme.
    pub(crate) fn max_dt(&self) -> f64 {
        let d = self.diff.abs_max();
        let a = self.adv.abs_max();
        // adv = P / (2h), diff = μ / h²
        let mut dt = f64::INFINITY;
        if d > 0.0 {
            dt = dt.min(DIFFUSIVE_CFL / d);
        }
        if a > 0.0 {
            dt = dt.min(ADVECTIVE_CFL / (2.0 * a));
        }
        dt
    }

    pub(crate) fn fill(&self, base: usize, w: &Weights, out: &mut FluxOperator) {
        self.diff.fill(base, w, &mut out.diff);
        self.adv.fill(base, w, &mut out.adv);
    }

    pub(crate) fn scratch(&self) -> FluxOperator {
        FluxOperator {
            diff: vec![0.0; self.diff.len],
            adv: vec![0.0; self.adv.len],
        }
    }
}

/// Stage-time bookkeeping for `m` substeps per time interval.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub(crate) m: usize,
    pub(crate) nt: usize,
    pub(crate) dt: f64,
    phases: Vec<Weights>,
}

impl Schedule {
    pub(crate) fn new(grid: &Grid, m: usize) -> Self {
        let m = m.max(1);
        let phases = (0..2 * m)
            .map(|p| Weights::lagrange(p as f64 / (2 * m) as f64))
            .collect();
        Self {
            m,
            nt: grid.nt(),
            dt: grid.tau() / m as f64,
            phases,
        }
    }

    /// Chooses `m` so that `dt ≤ max_dt` and the period has at least
    /// `min_substeps` steps.
    pub(crate) fn for_limits(grid: &Grid, max_dt: f64, min_substeps: usize) -> Self {
        let nt = grid.nt();
        let mut m = min_substeps.div_ceil(nt).max(1);
        if max_dt.is_finite() {
            m = m.max((grid.tau() / max_dt).ceil() as usize);
        }
        Self::new(grid, m)
    }

    pub(crate) fn substeps(&self) -> usize {
        self.m * self.nt
    }

    /// `(base node, weights)` at half-step index `g` within the period.
    pub(crate) fn at(&self, g: usize) -> (usize, &Weights) {
        let per = 2 * self.m;
        ((g / per) % self.nt, &self.phases[g % per])
    }
}

/// Stage coefficients for the nonlinear model.
struct Stage {
    ops: Vec<FluxOperator>,
    r: Vec<f64>,
    inv_k: Vec<f64>,
}

/// The period map of the `N`-species model.
#[derive(Debug, Clone)]
pub struct PeriodMap {
    nx: usize,
    h: f64,
    ops: Vec<OperatorTable>,
    r: NodeTable,
    k: NodeTable,
    schedule: Schedule,
}

impl PeriodMap {
    /// `min_substeps` is raised as needed to satisfy the CFL bounds and
    /// rounded up to a multiple of `nt`.
    pub fn new(env: &Environment, strategies: &[Strategy], min_substeps: usize) -> Result<Self, DynamicsError> {
        let g = env.grid();
        if strategies.is_empty() {
            return Err(DynamicsError::Shape("need at least one strategy".into()));
        }
        for (s, st) in strategies.iter().enumerate() {
            if st.mu.grid() != g || st.p.grid() != g {
                return Err(DynamicsError::Shape(format!(
                    "strategy {s} is sampled on a different grid"
                )));
            }
        }
        let ops = strategies
            .iter()
            .map(OperatorTable::from_strategy)
            .collect::<Result<Vec<_>, _>>()?;
        let r = NodeTable::from_field(env.r());
        let k = NodeTable::from_field(env.k());
        let mut max_dt = ops.iter().map(OperatorTable::max_dt).fold(f64::INFINITY, f64::min);
        let rmax = r.abs_max();
        if rmax > 0.0 {
            max_dt = max_dt.min(REACTION_CFL / rmax);
        }
        let schedule = Schedule::for_limits(g, max_dt, min_substeps);
        Ok(Self {
            nx: g.nx(),
            h: g.h(),
            ops,
            r,
            k,
            schedule,
        })
    }

    pub fn substeps(&self) -> usize {
        self.schedule.substeps()
    }

    pub fn species(&self) -> usize {
        self.ops.len()
    }

    fn stage(&self) -> Stage {
        Stage {
            ops: self.ops.iter().map(OperatorTable::scratch).collect(),
            r: vec![0.0; self.nx],
            inv_k: vec![0.0; self.nx],
        }
    }

    fn fill_stage(&self, g: usize, st: &mut Stage) {
        let (base, w) = self.schedule.at(g);
        for (tab, op) in self.ops.iter().zip(st.ops.iter_mut()) {
            tab.fill(base, w, op);
        }
        self.r.fill(base, w, &mut st.r);
        self.k.fill(base, w, &mut st.inv_k);
        st.inv_k.iter_mut().for_each(|k| *k = 1.0 / *k);
    }

    fn rhs(&self, st: &Stage, u: &[f64], out: &mut [f64], total: &mut [f64]) {
        let nx = self.nx;
        total.iter_mut().for_each(|t| *t = 0.0);
        for s in 0..self.ops.len() {
            for (t, v) in total.iter_mut().zip(&u[s * nx..(s + 1) * nx]) {
                *t += v;
            }
        }
        for (s, op) in st.ops.iter().enumerate() {
            let us = &u[s * nx..(s + 1) * nx];
            let os = &mut out[s * nx..(s + 1) * nx];
            op.apply(us, os);
            for i in 0..nx {
                os[i] += st.r[i] * us[i] * (1.0 - total[i] * st.inv_k[i]);
            }
        }
    }

    fn flatten(&self, state: &[Vec<f64>]) -> Result<Vec<f64>, DynamicsError> {
        if state.len() != self.ops.len() || state.iter().any(|s| s.len() != self.nx) {
            return Err(DynamicsError::Shape(format!(
                "expected {} species of length {}",
                self.ops.len(),
                self.nx
            )));
        }
        Ok(state.concat())
    }

    fn unflatten(&self, u: &[f64]) -> State {
        u.chunks(self.nx).map(<[f64]>::to_vec).collect()
    }

    /// Advances one period. When `snapshots` is given it receives the
    /// state at every time node `t_0, …, t_{nt-1}` (before each interval).
    fn advance(
        &self,
        u: &mut [f64],
        period: usize,
        mut snapshots: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<(), DynamicsError> {
        let n = u.len();
        let dt = self.schedule.dt;
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut total = vec![0.0; self.nx];
        let mut s0 = self.stage();
        let mut s1 = self.stage();
        let mut s2 = self.stage();
        self.fill_stage(0, &mut s0);
        for step in 0..self.schedule.substeps() {
            if step % self.schedule.m == 0 {
                if let Some(snaps) = snapshots.as_deref_mut() {
                    snaps.push(u.to_vec());
                }
            }
            let g = 2 * step;
            self.fill_stage(g + 1, &mut s1);
            self.fill_stage(g + 2, &mut s2);
            self.rhs(&s0, u, &mut k1, &mut total);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            self.rhs(&s1, &tmp, &mut k2, &mut total);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            self.rhs(&s1, &tmp, &mut k3, &mut total);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            self.rhs(&s2, &tmp, &mut k4, &mut total);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
            for (idx, v) in u.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(DynamicsError::NonFinite { period });
                }
                if *v < 0.0 {
                    if *v < -NEG_TOL {
                        return Err(DynamicsError::Negativity {
                            species: idx / self.nx,
                            i: idx % self.nx,
                            value: *v,
                            period,
                        });
                    }
                    *v = 0.0;
                }
            }
            std::mem::swap(&mut s0, &mut s2);
        }
        Ok(())
    }

    /// Applies the period map to `state`.
    pub fn step(&self, state: &[Vec<f64>]) -> Result<State, DynamicsError> {
        let mut u = self.flatten(state)?;
        self.advance(&mut u, 0, None)?;
        Ok(self.unflatten(&u))
    }

    /// Applies the period map and also returns the states at the time
    /// nodes `t_0, …, t_{nt−1}` passed on the way.
    pub fn step_recording(&self, state: &[Vec<f64>]) -> Result<(State, Vec<State>), DynamicsError> {
        let mut u = self.flatten(state)?;
        let mut snaps = Vec::with_capacity(self.schedule.nt);
        self.advance(&mut u, 0, Some(&mut snaps))?;
        let snaps = snaps.iter().map(|s| self.unflatten(s)).collect();
        Ok((self.unflatten(&u), snaps))
    }

    fn masses(&self, u: &[f64]) -> Vec<f64> {
        u.chunks(self.nx).map(|c| c.iter().sum::<f64>() * self.h).collect()
    }
}

/// Advances `state` by one period; `substeps` is a lower bound.
pub fn step_period(
    env: &Environment,
    strategies: &[Strategy],
    state: &[Vec<f64>],
    substeps: usize,
) -> Result<State, DynamicsError> {
    PeriodMap::new(env, strategies, substeps)?.step(state)
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub tol: f64,
    pub max_periods: usize,
    pub min_substeps: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_ORBIT_TOL,
            max_periods: DEFAULT_MAX_PERIODS,
            min_substeps: 0,
        }
    }
}

/// Iterates the period map from `initial` until
/// `sup |Φu − u| < tol · max(1, ‖u‖∞)`, then records one period on the
/// time nodes.
pub fn find_periodic_orbit(
    env: &Environment,
    strategies: &[Strategy],
    initial: &[Vec<f64>],
    opts: OrbitOptions,
) -> Result<PeriodicOrbit, DynamicsError> {
    let map = PeriodMap::new(env, strategies, opts.min_substeps)?;
    let mut u = map.flatten(initial)?;
    if u.iter().any(|v| *v < 0.0) {
        return Err(DynamicsError::Shape("initial state must be nonnegative".into()));
    }
    if u.iter().all(|v| *v == 0.0) {
        return Err(DynamicsError::Shape("initial state must be nontrivial".into()));
    }
    let mut history = Vec::new();
    let mut prev = u.clone();
    for period in 1..=opts.max_periods {
        map.advance(&mut u, period, None)?;
        let norm = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if norm < 1e-14 {
            return Err(DynamicsError::Extinction { periods: period });
        }
        let defect = u.iter().zip(&prev).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(defect);
        if defect < opts.tol * norm.max(1.0) {
            let mut snaps = Vec::with_capacity(map.schedule.nt);
            let mut w = u.clone();
            map.advance(&mut w, period + 1, Some(&mut snaps))?;
            return Ok(build_orbit(&map, env.grid(), &snaps, defect, period));
        }
        prev.copy_from_slice(&u);
    }
    Err(DynamicsError::NonConvergence {
        periods: opts.max_periods,
        defect_history: history,
    })
}

fn build_orbit(map: &PeriodMap, grid: &Grid, snaps: &[Vec<f64>], defect: f64, periods: usize) -> PeriodicOrbit {
    let (nx, nt) = (grid.nx(), grid.nt());
    let n = map.species();
    let states: Vec<SpaceTimeField> = (0..n)
        .map(|s| {
            let mut values = vec![0.0; nx * nt];
            for (j, snap) in snaps.iter().enumerate() {
                for i in 0..nx {
                    values[i * nt + j] = snap[s * nx + i];
                }
            }
            SpaceTimeField::from_values(*grid, values).expect("finite orbit")
        })
        .collect();
    let total: f64 = states.iter().map(SpaceTimeField::abs_max).sum();
    let extinct = states.iter().map(|f| f.abs_max() < 1e-12 * total).collect();
    PeriodicOrbit {
        states,
        defect,
        periods,
        substeps: map.substeps(),
        extinct,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CompetitionOptions {
    pub min_substeps: usize,
    /// Record the full state every this many periods.
    pub record_every: Option<usize>,
    /// Stop early once species `.0` has mass below `.1` times its initial mass.
    pub stop_below: Option<(usize, f64)>,
}

/// Evolves the coupled system for up to `periods` periods, recording
/// per-period masses.
pub fn run_competition(
    env: &Environment,
    strategies: &[Strategy],
    initial: &[Vec<f64>],
    periods: usize,
    opts: CompetitionOptions,
) -> Result<Trajectory, DynamicsError> {
    let map = PeriodMap::new(env, strategies, opts.min_substeps)?;
    let mut u = map.flatten(initial)?;
    if u.iter().any(|v| *v < 0.0) {
        return Err(DynamicsError::Shape("initial state must be nonnegative".into()));
    }
    let m0 = map.masses(&u);
    let mut masses = vec![m0.clone()];
    let mut states = Vec::new();
    let mut done = 0;
    for period in 1..=periods {
        map.advance(&mut u, period, None)?;
        let m = map.masses(&u);
        done = period;
        if let Some(every) = opts.record_every {
            if every > 0 && period % every == 0 && period != periods {
                states.push((period, map.unflatten(&u)));
            }
        }
        let stop = opts
            .stop_below
            .is_some_and(|(s, frac)| s < m.len() && m[s] < frac * m0[s]);
        masses.push(m);
        if stop {
            break;
        }
    }
    states.push((done, map.unflatten(&u)));
    Ok(Trajectory {
        species: map.species(),
        masses,
        states,
        periods: done,
        substeps: map.substeps(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn diffusion(g: Grid, mu: f64) -> Strategy {
        Strategy::diffusion(g, mu)
    }

    #[test]
    fn lagrange_weights_reproduce_quintics() {
        for f in [0.1, 0.25, 0.5, 0.9] {
            let w = Weights::lagrange(f);
            for p in 0..6 {
                let s: f64 = (0..6).map(|k| w.w[k] * (w.offsets[k] as f64).powi(p)).sum();
                assert!((s - f.powi(p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lagrange_weights_are_reflection_symmetric() {
        let a = Weights::lagrange(0.25);
        let b = Weights::lagrange(0.75);
        for k in 0..6 {
            assert!((a.w[k] - b.w[5 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_equilibrium_is_fixed() {
        let g = Grid::new(1.0, 16, 1.0, 16).unwrap();
        let env = Environment::new(SpaceTimeField::constant(g, 2.0), SpaceTimeField::constant(g, 3.0)).unwrap();
        let out = step_period(&env, &[diffusion(g, 0.1)], &[vec![3.0; 16]], 0).unwrap();
        assert!(out[0].iter().all(|v| (v - 3.0).abs() < 1e-10));
    }

    #[test]
    fn mass_change_equals_reaction_quadrature() {
        let g = Grid::new(1.0, 16, 1.0, 8).unwrap();
        let env = Environment::new(
            SpaceTimeField::from_fn(g, |x, t| 1.0 + 0.5 * (PI * x).cos() * (2.0 * PI * t).sin()),
            SpaceTimeField::from_fn(g, |x, _| 1.0 + 0.5 * x),
        )
        .unwrap();
        let s = Strategy::from_fields(
            SpaceTimeField::constant(g, 0.05),
            SpaceTimeField::from_fn(g, |x, t| 0.3 * (PI * x).sin() * (2.0 * PI * t).cos()),
            "test",
        )
        .unwrap();
        let map = PeriodMap::new(&env, &[s], 0).unwrap();
        let u: Vec<f64> = (0..16).map(|i| 0.5 + 0.02 * i as f64).collect();
        let mut st = map.stage();
        map.fill_stage(0, &mut st);
        let mut k = vec![0.0; 16];
        let mut total = vec![0.0; 16];
        map.rhs(&st, &u, &mut k, &mut total);
        let dmass: f64 = k.iter().sum::<f64>() * g.h();
        let reaction: f64 = (0..16)
            .map(|i| st.r[i] * u[i] * (1.0 - u[i] * st.inv_k[i]))
            .sum::<f64>()
            * g.h();
        assert!((dmass - reaction).abs() <= 1e-10 * reaction.abs());
    }

    #[test]
    fn identical_species_stay_identical() {
        let g = Grid::new(1.0, 16, 1.0, 16).unwrap();
        let env = Environment::new(
            SpaceTimeField::from_fn(g, |x, t| 1.0 + 0.5 * x * (2.0 * PI * t).sin()),
            SpaceTimeField::from_fn(g, |x, _| 1.0 + x),
        )
        .unwrap();
        let s = diffusion(g, 0.1);
        let u0: Vec<f64> = (0..16).map(|i| 0.2 + 0.01 * i as f64).collect();
        let tr = run_competition(
            &env,
            &[s.clone(), s],
            &[u0.clone(), u0],
            5,
            CompetitionOptions::default(),
        )
        .unwrap();
        let last = tr.final_state();
        for (a, b) in last[0].iter().zip(&last[1]) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn orbit_of_constant_environment_is_k() {
        let g = Grid::new(1.0, 16, 1.0, 16).unwrap();
        let env = Environment::new(SpaceTimeField::constant(g, 1.0), SpaceTimeField::constant(g, 2.0)).unwrap();
        let orbit = find_periodic_orbit(&env, &[diffusion(g, 0.1)], &[vec![0.5; 16]], OrbitOptions::default()).unwrap();
        assert!(orbit.states[0].values().iter().all(|v| (v - 2.0).abs() < 1e-8));
        assert!(orbit.is_positive());
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = Grid::new(1.0, 8, 1.0, 8).unwrap();
        let env = Environment::new(SpaceTimeField::constant(g, 1.0), SpaceTimeField::constant(g, 1.0)).unwrap();
        assert!(matches!(
            step_period(&env, &[diffusion(g, 1.0)], &[vec![1.0; 7]], 0),
            Err(DynamicsError::Shape(_))
        ));
        assert!(matches!(
            Environment::new(SpaceTimeField::constant(g, 0.0), SpaceTimeField::constant(g, 1.0)),
            Err(DynamicsError::NonPositive { field: "r", .. })
        ));
    }
}
