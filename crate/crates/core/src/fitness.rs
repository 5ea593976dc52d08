//! Local fitness `F = r (1 − θ/K)`, pathwise fitness along periodic paths,
//! and the ideal-free verdict.

use serde::Serialize;

use crate::dynamics::Environment;
use crate::mesh::SpaceTimeField;
use crate::strategy::{interp_x, PeriodicPath};

/// IFD tolerance for analytically constructed densities.
pub const IFD_TOL_ANALYTIC: f64 = 1e-6;
/// IFD tolerance for simulated orbits.
pub const IFD_TOL_SIMULATED: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct FitnessField {
    pub f: SpaceTimeField,
    /// `max_t (max_x F − min_x F)`.
    pub flatness: f64,
}

pub fn fitness_field(env: &Environment, theta: &SpaceTimeField) -> FitnessField {
    let f = env.r().zip_map(env.k(), |r, k| r / k).zip_map(theta, |rk, th| rk * th);
    let f = env.r().zip_map(&f, |r, v| r - v);
    let flatness = flatness(&f);
    FitnessField { f, flatness }
}

pub fn flatness(f: &SpaceTimeField) -> f64 {
    let g = f.grid();
    (0..g.nt())
        .map(|j| {
            let col = f.slice(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// `flatness < tol · (1 + max|F|)`.
pub fn is_ifd(f: &FitnessField, tol: f64) -> bool {
    f.flatness < tol * (1.0 + f.f.abs_max())
}

/// `∮ F(γ(t), t) dt` by the periodic trapezoid rule, linear in `x`.
pub fn pathwise_fitness(f: &SpaceTimeField, path: &PeriodicPath) -> f64 {
    let g = f.grid();
    (0..g.nt()).map(|j| interp_x(f, j, path.gamma.get(j))).sum::<f64>() * g.tau()
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct PathBounds {
    /// `∮ min_x F dt`.
    pub inf: f64,
    /// `∮ max_x F dt`.
    pub sup: f64,
}

pub fn path_fitness_bounds(f: &SpaceTimeField) -> PathBounds {
    let g = f.grid();
    let (mut inf, mut sup) = (0.0, 0.0);
    for j in 0..g.nt() {
        let col = f.slice(j);
        inf += col.iter().copied().fold(f64::INFINITY, f64::min);
        sup += col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    PathBounds {
        inf: inf * g.tau(),
        sup: sup * g.tau(),
    }
}

/// Unweighted space-time mean `(1/(|Ω| T)) ∬ F dx dt`, reported but not
/// expected to vanish in general.
pub fn space_time_mean(f: &SpaceTimeField) -> f64 {
    f.values().iter().sum::<f64>() / f.values().len() as f64
}
