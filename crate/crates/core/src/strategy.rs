//! Dispersal strategies `(μ, P)`: the ideal free advection field built
//! from `K̃` and a Neumann Poisson solve, and pursuit invaders that drift
//! towards a moving target `γ(t)`.

use thiserror::Error;

use crate::bernoulli::{check_feasibility, compute_ktilde, solve_m, BernoulliError, BernoulliSolution};
use crate::dynamics::Environment;
use crate::exprfield::{Expr, Params};
use crate::fitness::pathwise_fitness;
use crate::mesh::{face_average, sample, time_derivative, Grid, MeshError, PeriodicScalar, SpaceTimeField, Spectral};

/// Default number of retained harmonics when smoothing a path.
pub const DEFAULT_MODES: usize = 5;
/// Default interior margin as a fraction of `L`.
pub const DEFAULT_DELTA_FRACTION: f64 = 0.05;
/// Largest tolerated spatial mean of a Poisson right-hand side.
pub const POISSON_COMPAT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("environment is infeasible: min(r - M'/M) = {margin:.6e} at x = {x:.6}, t = {t:.6}")]
    Infeasible { margin: f64, x: f64, t: f64 },
    #[error(
        "Poisson right-hand side has spatial mean {defect:.3e} at time node {j}; compatibility requires zero mean"
    )]
    Compatibility { j: usize, defect: f64 },
    #[error(
        "smoothed path gains nothing: ∮F(γ) = {achieved:.6e} (raw argmax path {raw:.6e}); try more than {modes} modes"
    )]
    PathNotImproving { raw: f64, achieved: f64, modes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Bernoulli(#[from] BernoulliError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A dispersal pair with no-flux boundary semantics.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub mu: SpaceTimeField,
    /// Drift at cell centres.
    pub p: SpaceTimeField,
    pub label: String,
    /// Exact drift on the `nx + 1` faces at each time node, when the
    /// strategy was built face-first. Boundary entries are zero.
    pub p_faces: Option<Vec<Vec<f64>>>,
}

impl Strategy {
    pub fn from_fields(mu: SpaceTimeField, p: SpaceTimeField, label: impl Into<String>) -> Result<Self, StrategyError> {
        if mu.grid() != p.grid() {
            return Err(MeshError::Shape("μ and P live on different grids".into()).into());
        }
        let (i, j, value) = mu.argmin();
        if value <= 0.0 {
            return Err(MeshError::NonPositiveMu { i, j, value }.into());
        }
        Ok(Self {
            mu,
            p,
            label: label.into(),
            p_faces: None,
        })
    }

    pub fn from_exprs(
        grid: &Grid,
        mu: &Expr,
        p: &Expr,
        params: &Params,
        label: impl Into<String>,
    ) -> Result<Self, StrategyError> {
        Self::from_fields(sample(mu, grid, params)?, sample(p, grid, params)?, label)
    }

    /// Pure diffusion with constant rate.
    pub fn diffusion(grid: Grid, mu: f64) -> Self {
        assert!(mu > 0.0, "diffusion rate must be positive");
        Self {
            mu: SpaceTimeField::constant(grid, mu),
            p: SpaceTimeField::constant(grid, 0.0),
            label: "diffusion".into(),
            p_faces: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.mu.grid()
    }

    /// The same strategy with face drift recomputed from cell values.
    pub fn centered(&self) -> Self {
        Self {
            p_faces: None,
            ..self.clone()
        }
    }

    /// Face drift at time node `j` (exact if available, else averaged).
    pub fn face_drift(&self, j: usize) -> Vec<f64> {
        match &self.p_faces {
            Some(f) => f[j].clone(),
            None => {
                let mut f = face_average(&self.p.slice(j));
                let n = f.len();
                f[0] = 0.0;
                f[n - 1] = 0.0;
                f
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonResult {
    pub q: SpaceTimeField,
    /// `∂q/∂x` on the `nx + 1` faces at each time node; boundary entries are 0.
    pub qx_faces: Vec<Vec<f64>>,
    pub compat_defect: f64,
}

/// Solves `q_xx = rhs` with `q_x = 0` at both ends and zero spatial mean,
/// independently at each time node.
pub fn solve_neumann_poisson(rhs: &SpaceTimeField) -> Result<PoissonResult, StrategyError> {
    let g = *rhs.grid();
    let (nx, nt, h) = (g.nx(), g.nt(), g.h());
    let scale = rhs.abs_max().max(1.0);
    let mut worst = (0, 0.0_f64);
    let mut qx_faces = Vec::with_capacity(nt);
    let mut q = vec![0.0; nx * nt];
    for j in 0..nt {
        let col = rhs.slice(j);
        let mean = col.iter().sum::<f64>() / nx as f64;
        if mean.abs() > worst.1.abs() {
            worst = (j, mean);
        }
        let mut faces = vec![0.0; nx + 1];
        let mut acc = 0.0;
        for f in 1..nx {
            acc += h * (col[f - 1] - mean);
            faces[f] = acc;
        }
        let mut cells = vec![0.0; nx];
        for i in 1..nx {
            cells[i] = cells[i - 1] + h * faces[i];
        }
        let cmean = cells.iter().sum::<f64>() / nx as f64;
        for i in 0..nx {
            q[i * nt + j] = cells[i] - cmean;
        }
        qx_faces.push(faces);
    }
    if worst.1.abs() > POISSON_COMPAT_TOL * scale {
        return Err(StrategyError::Compatibility {
            j: worst.0,
            defect: worst.1,
        });
    }
    Ok(PoissonResult {
        q: SpaceTimeField::from_values(g, q)?,
        qx_faces,
        compat_defect: worst.1.abs(),
    })
}

/// Everything produced while synthesising the ideal free strategy.
#[derive(Debug, Clone)]
pub struct IfdConstruction {
    pub strategy: Strategy,
    pub solution: BernoulliSolution,
    pub ktilde: SpaceTimeField,
    pub poisson: PoissonResult,
}

/// `P* = (μ ∂ₓK̃ − ∂ₓq) / K̃`, built on faces and extrapolated to cells.
pub fn construct_ifd_strategy(env: &Environment, mu: &SpaceTimeField) -> Result<Strategy, StrategyError> {
    Ok(construct_ifd(env, mu)?.strategy)
}

pub fn construct_ifd(env: &Environment, mu: &SpaceTimeField) -> Result<IfdConstruction, StrategyError> {
    let g = *env.grid();
    if mu.grid() != &g {
        return Err(MeshError::Shape("μ lives on a different grid than the environment".into()).into());
    }
    if g.nx() < 3 {
        return Err(StrategyError::InvalidParameter("need nx >= 3".into()));
    }
    let solution = solve_m(env)?;
    let rep = check_feasibility(env, &solution);
    if !rep.feasible {
        return Err(StrategyError::Infeasible {
            margin: rep.margin,
            x: rep.argmin.0,
            t: rep.argmin.1,
        });
    }
    let ktilde = compute_ktilde(env, &solution);
    let poisson = solve_neumann_poisson(&time_derivative(&ktilde))?;
    let (nx, nt, h) = (g.nx(), g.nt(), g.h());
    let mut faces_all = Vec::with_capacity(nt);
    let mut cells = vec![0.0; nx * nt];
    for j in 0..nt {
        let kt = ktilde.slice(j);
        let muf = face_average(&mu.slice(j));
        let qx = &poisson.qx_faces[j];
        let mut pf = vec![0.0; nx + 1];
        for f in 1..nx {
            let kface = 0.5 * (kt[f - 1] + kt[f]);
            pf[f] = (muf[f] * (kt[f] - kt[f - 1]) / h - qx[f]) / kface;
        }
        cells[j] = 0.5 * (3.0 * pf[1] - pf[2]);
        cells[(nx - 1) * nt + j] = 0.5 * (3.0 * pf[nx - 1] - pf[nx - 2]);
        for i in 1..nx - 1 {
            cells[i * nt + j] = 0.5 * (pf[i] + pf[i + 1]);
        }
        faces_all.push(pf);
    }
    let strategy = Strategy {
        mu: mu.clone(),
        p: SpaceTimeField::from_values(g, cells)?,
        label: "ifd".into(),
        p_faces: Some(faces_all),
    };
    Ok(IfdConstruction {
        strategy,
        solution,
        ktilde,
        poisson,
    })
}

/// A T-periodic target path inside `[δ, L − δ]`.
#[derive(Debug, Clone)]
pub struct PeriodicPath {
    pub gamma: PeriodicScalar,
    pub modes: usize,
    pub delta_margin: f64,
    /// `∮ F(γ(t), t) dt` for the fitness the path was extracted from.
    pub path_integral: Option<f64>,
}

impl PeriodicPath {
    pub fn new(gamma: PeriodicScalar, modes: usize, delta_margin: f64) -> Result<Self, StrategyError> {
        let l = gamma.grid().length();
        if gamma.min() < delta_margin || gamma.max() > l - delta_margin {
            return Err(StrategyError::InvalidParameter(format!(
                "path leaves [{delta_margin}, {}]",
                l - delta_margin
            )));
        }
        Ok(Self {
            gamma,
            modes,
            delta_margin,
            path_integral: None,
        })
    }

    pub fn constant(grid: Grid, x0: f64) -> Result<Self, StrategyError> {
        let delta = x0.min(grid.length() - x0).min(DEFAULT_DELTA_FRACTION * grid.length());
        Self::new(PeriodicScalar::constant(grid, x0), 0, delta)
    }

    pub fn grid(&self) -> &Grid {
        self.gamma.grid()
    }
}

/// Argmax of `F` over cells at each time node; ties go to the smaller `x`.
pub fn raw_argmax_path(f: &SpaceTimeField) -> Vec<f64> {
    let g = f.grid();
    (0..g.nt())
        .map(|j| {
            let col = f.slice(j);
            let mut best = 0;
            for (i, v) in col.iter().enumerate() {
                if *v > col[best] {
                    best = i;
                }
            }
            g.x(best)
        })
        .collect()
}

/// Smoothed and clamped argmax path without the gain check.
pub fn smoothed_argmax_path(
    f: &SpaceTimeField,
    modes: usize,
    delta_margin: f64,
) -> Result<PeriodicPath, StrategyError> {
    let g = *f.grid();
    let l = g.length();
    if !(delta_margin >= 0.0 && delta_margin < 0.5 * l) {
        return Err(StrategyError::InvalidParameter(format!(
            "delta_margin must lie in [0, L/2), got {delta_margin}"
        )));
    }
    let raw = raw_argmax_path(f);
    let smooth = Spectral::new(g.nt()).truncate(&raw, modes);
    let clamped = smooth
        .into_iter()
        .map(|v| v.clamp(delta_margin, l - delta_margin))
        .collect();
    PeriodicPath::new(PeriodicScalar::from_values(g, clamped)?, modes, delta_margin)
}

/// Extracts a smooth path along which `F` integrates to a positive value.
pub fn extract_invasion_path(
    f: &SpaceTimeField,
    modes: usize,
    delta_margin: f64,
) -> Result<PeriodicPath, StrategyError> {
    let mut path = smoothed_argmax_path(f, modes, delta_margin)?;
    let achieved = pathwise_fitness(f, &path);
    if achieved <= 0.0 {
        let g = f.grid();
        let raw = raw_argmax_path(f);
        let raw_int: f64 = (0..g.nt()).map(|j| interp_x(f, j, raw[j])).sum::<f64>() * g.tau();
        return Err(StrategyError::PathNotImproving {
            raw: raw_int,
            achieved,
            modes,
        });
    }
    path.path_integral = Some(achieved);
    Ok(path)
}

/// Linear interpolation of `F(·, t_j)` at `x`, constant beyond the end cells.
pub(crate) fn interp_x(f: &SpaceTimeField, j: usize, x: f64) -> f64 {
    let g = f.grid();
    let nx = g.nx();
    let s = x / g.h() - 0.5;
    if s <= 0.0 {
        return f.get(0, j);
    }
    if s >= (nx - 1) as f64 {
        return f.get(nx - 1, j);
    }
    let i = s.floor() as usize;
    let w = s - i as f64;
    (1.0 - w) * f.get(i, j) + w * f.get(i + 1, j)
}

/// `Q(x, t) = α (γ(t) − x)` with constant diffusion `μ`.
pub fn construct_pursuit_invader(path: &PeriodicPath, alpha: f64, mu: f64) -> Result<Strategy, StrategyError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(StrategyError::InvalidParameter(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(StrategyError::InvalidParameter(format!("mu must be > 0, got {mu}")));
    }
    let g = *path.grid();
    let mut values = Vec::with_capacity(g.nx() * g.nt());
    for i in 0..g.nx() {
        let x = g.x(i);
        values.extend(path.gamma.values().iter().map(|gm| alpha * (gm - x)));
    }
    let p = SpaceTimeField::from_values(g, values)?;
    Ok(Strategy {
        mu: SpaceTimeField::constant(g, mu),
        p,
        label: format!("pursuit({alpha})"),
        p_faces: None,
    })
}

/// The pursuit potential `m(x, t) = −½ (x − γ(t))²`.
pub fn pursuit_potential(path: &PeriodicPath) -> SpaceTimeField {
    let g = *path.grid();
    let mut values = Vec::with_capacity(g.nx() * g.nt());
    for i in 0..g.nx() {
        let x = g.x(i);
        values.extend(path.gamma.values().iter().map(|gm| -0.5 * (x - gm) * (x - gm)));
    }
    SpaceTimeField::from_values(g, values).expect("finite potential")
}
