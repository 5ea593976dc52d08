//! The periodic envelope `M(t)`, the transformed carrying capacity `K̃`,
//! and the feasibility criterion `r(x,t) > M'(t)/M(t)`.
//!
//! `M` is the unique positive periodic solution of
//! `M'/M + b(t) M = a(t)` with `a = K̄ / (K/r)̄` and `b = 1 / (K/r)̄`.
//! Writing `w = 1/M` gives the linear problem `w' + a w = b`; with
//! `p` the zero-mean periodic antiderivative of `a - ā` and `w = e^{-p} y`
//! this becomes `y' + ā y = b e^{p}`, whose periodic solution is diagonal
//! in Fourier space: `ŷ_k = ĝ_k / (ā + i ω_k)`.

use rustfft::num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Environment;
use crate::mesh::{space_mean, Grid, MeshError, PeriodicScalar, SpaceTimeField, Spectral};

/// Default strictness for the feasibility margin.
pub const DEFAULT_EPS_FEAS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BernoulliError {
    #[error("{field} must be positive, got {value} at cell {i}, time node {j}")]
    NonPositive {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("coefficient {name} must be positive, got {value} at time node {j}")]
    NonPositiveCoefficient { name: &'static str, j: usize, value: f64 },
    #[error("internal consistency: {0}")]
    Inconsistent(String),
    #[error("rho must be positive and non-constant")]
    DegenerateRho,
    #[error("amplitude {amplitude} cannot force a sign change in min_x r - M'/M (margin profile min {min_margin:.3e}, max {max_margin:.3e})")]
    AmplitudeTooSmall {
        amplitude: f64,
        min_margin: f64,
        max_margin: f64,
        margin_profile: Vec<f64>,
    },
    #[error("K̃ is not positive (min {min} at cell {i}, time node {j}); the environment admits no IFD")]
    Infeasible { min: f64, i: usize, j: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Periodic envelope and its Bernoulli coefficients.
#[derive(Debug, Clone)]
pub struct BernoulliSolution {
    pub m: PeriodicScalar,
    /// `M'/M`, computed as `a - b M`.
    pub logderiv: PeriodicScalar,
    pub a: PeriodicScalar,
    pub b: PeriodicScalar,
    /// `max_t |D_t M / M + b M - a|` with `D_t` the spectral derivative.
    pub residual: f64,
}

impl BernoulliSolution {
    /// `∮ M'/M dt`, which vanishes for a periodic `M`.
    pub fn log_period_integral(&self) -> f64 {
        self.logderiv.integral()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    /// `min_{x,t} (r - M'/M)`.
    pub margin: f64,
    pub feasible: bool,
    /// `(x*, t*)` where the margin is attained.
    pub argmin: (f64, f64),
    pub eps: f64,
}

/// `a = K̄ / (K/r)̄`, `b = 1 / (K/r)̄`.
pub fn coefficients(env: &Environment) -> Result<(PeriodicScalar, PeriodicScalar), BernoulliError> {
    check_positive("r", env.r())?;
    check_positive("K", env.k())?;
    let k_over_r = env.k().zip_map(env.r(), |k, r| k / r);
    let kbar = space_mean(env.k());
    let krbar = space_mean(&k_over_r);
    let a = kbar.zip_map(&krbar, |k, kr| k / kr);
    let b = krbar.map(|kr| 1.0 / kr);
    Ok((a, b))
}

fn check_positive(field: &'static str, f: &SpaceTimeField) -> Result<(), BernoulliError> {
    let (i, j, value) = f.argmin();
    if value > 0.0 {
        Ok(())
    } else {
        Err(BernoulliError::NonPositive { field, i, j, value })
    }
}

/// Solves for `M` from the sampled environment.
pub fn solve_m(env: &Environment) -> Result<BernoulliSolution, BernoulliError> {
    let (a, b) = coefficients(env)?;
    solve_m_coefficients(&a, &b)
}

/// Solves `M'/M + b M = a` for given positive periodic `a`, `b`.
pub fn solve_m_coefficients(a: &PeriodicScalar, b: &PeriodicScalar) -> Result<BernoulliSolution, BernoulliError> {
    let grid = *a.grid();
    for (name, c) in [("a", a), ("b", b)] {
        if let Some((j, &value)) = c.values().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(BernoulliError::NonPositiveCoefficient { name, j, value });
        }
    }
    let nt = grid.nt();
    let abar = a.integral() / grid.period();
    if !(abar > 0.0) || (-abar * grid.period()).exp() >= 1.0 {
        return Err(BernoulliError::Inconsistent(format!(
            "exp(-∫a) must be < 1, mean of a is {abar}"
        )));
    }
    let sp = Spectral::new(nt);
    let p = sp.antiderivative_zero_mean(a.values(), grid.period());
    let g: Vec<f64> = b.values().iter().zip(&p).map(|(b, p)| b * p.exp()).collect();
    let omega = 2.0 * std::f64::consts::PI / grid.period();
    let mut spec = sp.forward(&g);
    for (k, c) in spec.iter_mut().enumerate() {
        let wk = if sp.is_nyquist(k) {
            0.0
        } else {
            omega * sp.wavenumber(k) as f64
        };
        *c /= Complex::new(abar, wk);
    }
    let y = sp.inverse_real(spec);
    let m_vals: Vec<f64> = y.iter().zip(&p).map(|(y, p)| p.exp() / y).collect();
    if let Some((j, &v)) = m_vals.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(BernoulliError::Inconsistent(format!(
            "envelope is not positive at time node {j}: {v}"
        )));
    }
    let m = PeriodicScalar::from_values(grid, m_vals)?;
    let logderiv = a.zip_map(&b.zip_map(&m, |b, m| b * m), |a, bm| a - bm);
    let dm = m.derivative();
    let residual = (0..nt)
        .map(|j| (dm.get(j) / m.get(j) + b.get(j) * m.get(j) - a.get(j)).abs())
        .fold(0.0, f64::max);
    Ok(BernoulliSolution {
        m,
        logderiv,
        a: a.clone(),
        b: b.clone(),
        residual,
    })
}

/// `K̃ = K/M − (K/r)·(M′/M)/M`.
pub fn compute_ktilde(env: &Environment, sol: &BernoulliSolution) -> SpaceTimeField {
    let g = *env.grid();
    let nt = g.nt();
    let vals: Vec<f64> = env
        .k()
        .values()
        .iter()
        .zip(env.r().values())
        .enumerate()
        .map(|(idx, (&k, &r))| {
            let j = idx % nt;
            let m = sol.m.get(j);
            k / m - (k / r) * sol.logderiv.get(j) / m
        })
        .collect();
    SpaceTimeField::from_values(g, vals).expect("finite inputs give a finite K̃")
}

/// The same profile written as
/// `(K − K̄)/M + (K/r)/(K/r)̄ − (K̄/M)[(K/r)/(K/r)̄ − 1]`; its positivity is
/// the alternative form of the feasibility criterion.
pub fn ktilde_mean_form(env: &Environment, sol: &BernoulliSolution) -> SpaceTimeField {
    let g = *env.grid();
    let nt = g.nt();
    let k_over_r = env.k().zip_map(env.r(), |k, r| k / r);
    let kbar = space_mean(env.k());
    let krbar = space_mean(&k_over_r);
    let vals: Vec<f64> = env
        .k()
        .values()
        .iter()
        .zip(k_over_r.values())
        .enumerate()
        .map(|(idx, (&k, &kr))| {
            let j = idx % nt;
            let m = sol.m.get(j);
            let ratio = kr / krbar.get(j);
            (k - kbar.get(j)) / m + ratio - kbar.get(j) / m * (ratio - 1.0)
        })
        .collect();
    SpaceTimeField::from_values(g, vals).expect("finite inputs give a finite K̃")
}

/// Pointwise `r − M′/M`.
pub fn feasibility_margin_field(env: &Environment, sol: &BernoulliSolution) -> SpaceTimeField {
    let nt = env.grid().nt();
    let vals = env
        .r()
        .values()
        .iter()
        .enumerate()
        .map(|(idx, r)| r - sol.logderiv.get(idx % nt))
        .collect();
    SpaceTimeField::from_values(*env.grid(), vals).expect("finite margin")
}

pub fn check_feasibility(env: &Environment, sol: &BernoulliSolution) -> FeasibilityReport {
    check_feasibility_with(env, sol, DEFAULT_EPS_FEAS)
}

pub fn check_feasibility_with(env: &Environment, sol: &BernoulliSolution, eps: f64) -> FeasibilityReport {
    let field = feasibility_margin_field(env, sol);
    let (i, j, margin) = field.argmin();
    let g = env.grid();
    FeasibilityReport {
        margin,
        feasible: margin > eps,
        argmin: (g.x(i), g.t(j)),
        eps,
    }
}

/// `θ* = M K̃`; requires `K̃ > 0`.
pub fn define_ifd_profile(sol: &BernoulliSolution, ktilde: &SpaceTimeField) -> Result<SpaceTimeField, BernoulliError> {
    let (i, j, min) = ktilde.argmin();
    if min <= 0.0 {
        return Err(BernoulliError::Infeasible { min, i, j });
    }
    Ok(ktilde.scale_by_time(&sol.m))
}

/// Environment built so that the feasibility criterion fails.
#[derive(Debug, Clone)]
pub struct RemarkDEnvironment {
    pub env: Environment,
    pub solution: BernoulliSolution,
    pub amplitude: f64,
    /// Sharpness of the temporal weight `σ(t) = exp(κ (M'/M − max M'/M))`.
    pub kappa: f64,
    /// `min_x r(·, t_j) − M′/M(t_j)`.
    pub margin_profile: Vec<f64>,
}

/// Builds `r = K = ρ(t) + A s(x) σ(t)` with `s = −cos(πx/L)` (zero midpoint
/// mean, so `r̄ = ρ`) and `σ` a positive bump centred where `M'/M` peaks,
/// where `M` solves `M'/M + M = ρ`. `amplitude = None` picks `A` half way
/// between the infeasibility and positivity thresholds at the peak.
pub fn remark_d_counterexample(
    rho: &PeriodicScalar,
    amplitude: Option<f64>,
) -> Result<RemarkDEnvironment, BernoulliError> {
    let grid = *rho.grid();
    let (rmin, rmax) = (rho.min(), rho.max());
    if !(rmin > 0.0) || rmax - rmin <= 1e-12 * rmax {
        return Err(BernoulliError::DegenerateRho);
    }
    let ones = PeriodicScalar::constant(grid, 1.0);
    let sol = solve_m_coefficients(rho, &ones)?;
    let ell = sol.logderiv.values();
    let (jstar, lmax) =
        ell.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (j, v)| if v > acc.1 { (j, v) } else { acc },
        );
    let s: Vec<f64> = (0..grid.nx())
        .map(|i| -(std::f64::consts::PI * grid.x(i) / grid.length()).cos())
        .collect();
    let depth = s.iter().fold(0.0_f64, |m, v| m.max(-v));

    let m = sol.m.values();
    let rho_v = rho.values();
    let amp = amplitude.unwrap_or(0.5 * (m[jstar] + rho_v[jstar]) / depth);

    let profile = |kappa: f64| -> (Vec<f64>, Vec<f64>) {
        let sigma: Vec<f64> = ell.iter().map(|l| (kappa * (l - lmax)).exp()).collect();
        let margin = (0..grid.nt())
            .map(|j| rho_v[j] - amp * sigma[j] * depth - ell[j])
            .collect();
        (sigma, margin)
    };

    let too_small = |margin: Vec<f64>| {
        let min_margin = margin.iter().copied().fold(f64::INFINITY, f64::min);
        let max_margin = margin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        BernoulliError::AmplitudeTooSmall {
            amplitude: amp,
            min_margin,
            max_margin,
            margin_profile: margin,
        }
    };

    if !(lmax > 0.0) || !(amp * depth > m[jstar]) {
        return Err(too_small(profile(1.0).1));
    }
    if amp * depth >= rho_v[jstar] {
        return Err(BernoulliError::Inconsistent(format!(
            "amplitude {amp} drives r negative at the peak of M'/M"
        )));
    }

    let scale = 1.0 / (lmax - ell.iter().copied().fold(f64::INFINITY, f64::min)).max(1e-12);
    let mut kappa = scale;
    for _ in 0..40 {
        let (sigma, margin) = profile(kappa);
        let positive = (0..grid.nt()).all(|j| {
            let floor = 0.25 * rho_v[j].min(rho_v[j] - amp * depth);
            rho_v[j] - amp * sigma[j] * depth >= floor
        });
        let changes_sign = margin.iter().any(|&v| v < 0.0) && margin.iter().any(|&v| v > 0.0);
        if positive && changes_sign {
            let mut values = Vec::with_capacity(grid.nx() * grid.nt());
            for si in &s {
                for j in 0..grid.nt() {
                    values.push(rho_v[j] + amp * si * sigma[j]);
                }
            }
            let r = SpaceTimeField::from_values(grid, values)?;
            let env = Environment::new(r.clone(), r).map_err(|e| BernoulliError::Inconsistent(e.to_string()))?;
            return Ok(RemarkDEnvironment {
                env,
                solution: sol,
                amplitude: amp,
                kappa,
                margin_profile: margin,
            });
        }
        kappa *= 2.0;
    }
    Err(too_small(profile(kappa).1))
}

/// Convenience for tests and the CLI: the grid that `sol` lives on.
pub fn solution_grid(sol: &BernoulliSolution) -> Grid {
    *sol.m.grid()
}
