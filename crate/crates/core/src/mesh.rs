//! Cell-centred space-time grid on `[0, L] x [0, T)`, sampled fields,
//! quadrature, spectral time differentiation and the conservative
//! flux-form spatial operator.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::exprfield::{EvalError, Expr, Params};
use crate::par::{self, Parallelism};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("evaluation failed at cell {i}, time node {j}: {source}")]
    Eval {
        i: usize,
        j: usize,
        #[source]
        source: EvalError,
    },
    #[error("diffusion rate must be positive, got {value} at cell {i}, time node {j}")]
    NonPositiveMu { i: usize, j: usize, value: f64 },
    #[error("field shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform cell-centred grid in space, uniform periodic grid in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    length: f64,
    nx: usize,
    period: f64,
    nt: usize,
}

impl Grid {
    /// Smallest resolution accepted along either axis.
    pub const MIN_POINTS: usize = 4;

    pub fn new(length: f64, nx: usize, period: f64, nt: usize) -> Result<Self, MeshError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(MeshError::InvalidGrid(format!("L must be positive, got {length}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(MeshError::InvalidGrid(format!("T must be positive, got {period}")));
        }
        if nx < Self::MIN_POINTS || nt < Self::MIN_POINTS {
            return Err(MeshError::InvalidGrid(format!(
                "need nx, nt >= {}, got nx={nx}, nt={nt}",
                Self::MIN_POINTS
            )));
        }
        if !nx.is_power_of_two() || !nt.is_power_of_two() {
            log::debug!("grid nx={nx}, nt={nt} is not a power of two");
        }
        Ok(Self { length, nx, period, nt })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    /// Cell width `h`.
    pub fn h(&self) -> f64 {
        self.length / self.nx as f64
    }
    /// Time step `tau` between samples.
    pub fn tau(&self) -> f64 {
        self.period / self.nt as f64
    }
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.tau()
    }
    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|j| self.t(j)).collect()
    }
    /// Time index reflected about `t = 0`: `t_j -> T - t_j`.
    pub fn reflect(&self, j: usize) -> usize {
        (self.nt - j % self.nt) % self.nt
    }
    pub fn with_resolution(&self, nx: usize, nt: usize) -> Result<Self, MeshError> {
        Self::new(self.length, nx, self.period, nt)
    }
}

/// A T-periodic scalar field sampled at cell centres and time nodes.
/// Storage is row-major over `(i, j)`: `values[i * nt + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != grid.nx * grid.nt {
            return Err(MeshError::Shape(format!(
                "expected {} values, got {}",
                grid.nx * grid.nt,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(MeshError::Shape(format!(
                "non-finite value at cell {}, time node {}",
                k / grid.nt,
                k % grid.nt
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.nx * grid.nt);
        for i in 0..grid.nx {
            for j in 0..grid.nt {
                values.push(f(grid.x(i), grid.t(j)));
            }
        }
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.nx * grid.nt],
        }
    }

    /// Builds a field from time slices `slices[j][i]`.
    pub fn from_slices(grid: Grid, slices: &[Vec<f64>]) -> Result<Self, MeshError> {
        if slices.len() != grid.nt || slices.iter().any(|s| s.len() != grid.nx) {
            return Err(MeshError::Shape("slices do not match grid".into()));
        }
        let mut values = vec![0.0; grid.nx * grid.nt];
        for (j, s) in slices.iter().enumerate() {
            for (i, v) in s.iter().enumerate() {
                values[i * grid.nt + j] = *v;
            }
        }
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nt + j]
    }
    /// Time series at cell `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let nt = self.grid.nt;
        &self.values[i * nt..(i + 1) * nt]
    }
    /// Spatial profile at time node `j`.
    pub fn slice(&self, j: usize) -> Vec<f64> {
        (0..self.grid.nx).map(|i| self.get(i, j)).collect()
    }
    /// All spatial profiles, indexed `[j][i]`.
    pub fn slices(&self) -> Vec<Vec<f64>> {
        (0..self.grid.nt).map(|j| self.slice(j)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Multiplies every spatial profile at time `t_j` by `s[j]`.
    pub fn scale_by_time(&self, s: &PeriodicScalar) -> Self {
        let nt = self.grid.nt;
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * s.values[k % nt])
                .collect(),
        }
    }

    /// Field with its time axis reflected, `f(x, T - t)`.
    pub fn time_reversed(&self) -> Self {
        let g = self.grid;
        let mut values = vec![0.0; self.values.len()];
        for i in 0..g.nx {
            for j in 0..g.nt {
                values[i * g.nt + j] = self.get(i, g.reflect(j));
            }
        }
        Self { grid: g, values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn abs_max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    /// `(i, j, value)` of the smallest entry; first occurrence wins.
    pub fn argmin(&self) -> (usize, usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, &v) in self.values.iter().enumerate() {
            if v < best.1 {
                best = (k, v);
            }
        }
        (best.0 / self.grid.nt, best.0 % self.grid.nt, best.1)
    }
    pub fn is_positive(&self) -> bool {
        self.min() > 0.0
    }
    /// Sup-norm distance to another field on the same grid.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Writes `x,t,value` rows, row-major over `(i, j)`, with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), MeshError> {
        writeln!(w, "x,t,value")?;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.nt {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e}",
                    self.grid.x(i),
                    self.grid.t(j),
                    self.get(i, j)
                )?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv) back onto `grid`.
    pub fn read_csv<R: BufRead>(grid: Grid, r: R) -> Result<Self, MeshError> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "x,t,value" => {}
            _ => return Err(MeshError::Csv("missing `x,t,value` header".into())),
        }
        let mut values = Vec::with_capacity(grid.nx * grid.nt);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(MeshError::Csv(format!("row {}: expected 3 columns", k + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| MeshError::Csv(format!("row {}: {e}", k + 1)))
            };
            let (x, t, v) = (parse(cols[0])?, parse(cols[1])?, parse(cols[2])?);
            let (i, j) = (values.len() / grid.nt, values.len() % grid.nt);
            if i >= grid.nx || (x - grid.x(i)).abs() > 1e-9 * grid.length || (t - grid.t(j)).abs() > 1e-9 * grid.period
            {
                return Err(MeshError::Csv(format!("row {}: coordinates do not match grid", k + 1)));
            }
            values.push(v);
        }
        Self::from_values(grid, values)
    }
}

/// A T-periodic function of time sampled on the time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicScalar {
    grid: Grid,
    values: Vec<f64>,
}

impl PeriodicScalar {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, MeshError> {
        if values.len() != grid.nt {
            return Err(MeshError::Shape(format!(
                "expected {} values, got {}",
                grid.nt,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::Shape("non-finite periodic sample".into()));
        }
        Ok(Self { grid, values })
    }
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.nt).map(|j| f(grid.t(j))).collect(),
        }
    }
    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.nt],
        }
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    /// Periodic rectangle (= trapezoid) rule for `∫_0^T f dt`.
    pub fn integral(&self) -> f64 {
        self.grid.tau() * self.values.iter().sum::<f64>()
    }
    /// Spectral derivative in time.
    pub fn derivative(&self) -> Self {
        Self {
            grid: self.grid,
            values: spectral_derivative(&self.values, self.grid.period),
        }
    }
    /// Rotates samples so that `out[j] = self[(j + k) mod nt]`.
    pub fn rotated(&self, k: usize) -> Self {
        let nt = self.grid.nt;
        Self {
            grid: self.grid,
            values: (0..nt).map(|j| self.values[(j + k) % nt]).collect(),
        }
    }
}

/// Samples `e` at every cell centre and time node.
pub fn sample(e: &Expr, grid: &Grid, params: &Params) -> Result<SpaceTimeField, MeshError> {
    sample_with(e, grid, params, Parallelism::default())
}

pub fn sample_with(
    e: &Expr,
    grid: &Grid,
    params: &Params,
    parallelism: Parallelism,
) -> Result<SpaceTimeField, MeshError> {
    let rows: Vec<Result<Vec<f64>, MeshError>> = par::map_range(grid.nx, parallelism, |i| {
        let x = grid.x(i);
        (0..grid.nt)
            .map(|j| {
                e.eval(x, grid.t(j), params)
                    .map_err(|source| MeshError::Eval { i, j, source })
            })
            .collect()
    });
    let mut values = Vec::with_capacity(grid.nx * grid.nt);
    for r in rows {
        values.extend(r?);
    }
    SpaceTimeField::from_values(*grid, values)
}

/// Midpoint-rule spatial average `(1/|Ω|) ∫ f dx` at every time node.
pub fn space_mean(f: &SpaceTimeField) -> PeriodicScalar {
    let g = f.grid;
    let mut out = vec![0.0; g.nt];
    for i in 0..g.nx {
        for (o, v) in out.iter_mut().zip(f.row(i)) {
            *o += v;
        }
    }
    let n = g.nx as f64;
    PeriodicScalar {
        grid: g,
        values: out.into_iter().map(|s| s / n).collect(),
    }
}

/// Row-wise spectral derivative along the time axis.
pub fn time_derivative(f: &SpaceTimeField) -> SpaceTimeField {
    let g = f.grid;
    let fft = Spectral::new(g.nt);
    let mut values = Vec::with_capacity(f.values.len());
    for i in 0..g.nx {
        values.extend(fft.derivative(f.row(i), g.period));
    }
    SpaceTimeField { grid: g, values }
}

// ---------------------------------------------------------------------------
// Periodic Fourier helpers

pub(crate) struct Spectral {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Signed wavenumber of FFT bin `k`.
    pub(crate) fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    pub(crate) fn is_nyquist(&self, k: usize) -> bool {
        self.n.is_multiple_of(2) && k == self.n / 2
    }

    pub(crate) fn forward(&self, data: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/n` normalisation; returns the real part.
    pub(crate) fn inverse_real(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let n = self.n as f64;
        spec.into_iter().map(|c| c.re / n).collect()
    }

    pub(crate) fn derivative(&self, data: &[f64], period: f64) -> Vec<f64> {
        let w = 2.0 * std::f64::consts::PI / period;
        let mut spec = self.forward(data);
        for (k, c) in spec.iter_mut().enumerate() {
            if self.is_nyquist(k) {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c *= Complex::new(0.0, w * self.wavenumber(k) as f64);
            }
        }
        self.inverse_real(spec)
    }

    /// Periodic antiderivative with zero mean of `data - mean(data)`.
    pub(crate) fn antiderivative_zero_mean(&self, data: &[f64], period: f64) -> Vec<f64> {
        let w = 2.0 * std::f64::consts::PI / period;
        let mut spec = self.forward(data);
        for (k, c) in spec.iter_mut().enumerate() {
            if k == 0 || self.is_nyquist(k) {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c /= Complex::new(0.0, w * self.wavenumber(k) as f64);
            }
        }
        self.inverse_real(spec)
    }

    /// Keeps Fourier coefficients with `|k| <= modes`, zeroing the rest.
    pub(crate) fn truncate(&self, data: &[f64], modes: usize) -> Vec<f64> {
        let mut spec = self.forward(data);
        for (k, c) in spec.iter_mut().enumerate() {
            if self.wavenumber(k).unsigned_abs() as usize > modes || (self.is_nyquist(k) && modes < self.n / 2) {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inverse_real(spec)
    }
}

pub(crate) fn spectral_derivative(data: &[f64], period: f64) -> Vec<f64> {
    Spectral::new(data.len()).derivative(data, period)
}

// ---------------------------------------------------------------------------
// Flux-form operator

/// Tridiagonal finite-volume operator at one time node, stored by faces.
///
/// `diff[f] = μ_f / h²` and `adv[f] = P_f / (2h)` for faces `f = 0..=nx`;
/// the two boundary faces carry zero coefficients, which is the no-flux
/// condition.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxOperator {
    pub(crate) diff: Vec<f64>,
    pub(crate) adv: Vec<f64>,
}

impl FluxOperator {
    /// Builds the operator from face values of `μ` and `P` (length `nx + 1`;
    /// boundary entries are ignored).
    pub fn from_faces(h: f64, mu_faces: &[f64], p_faces: &[f64]) -> Self {
        let n = mu_faces.len();
        let mut diff = vec![0.0; n];
        let mut adv = vec![0.0; n];
        for f in 1..n - 1 {
            diff[f] = mu_faces[f] / (h * h);
            adv[f] = p_faces[f] / (2.0 * h);
        }
        Self { diff, adv }
    }

    pub fn nx(&self) -> usize {
        self.diff.len() - 1
    }

    /// Face flux divided by `h`: `G_f = D_f (θ_{i+1} - θ_i) - C_f (θ_i + θ_{i+1})`.
    pub fn face_fluxes(&self, theta: &[f64]) -> Vec<f64> {
        let nx = theta.len();
        let mut g = vec![0.0; nx + 1];
        for f in 1..nx {
            let (l, r) = (theta[f - 1], theta[f]);
            g[f] = self.diff[f] * (r - l) - self.adv[f] * (l + r);
        }
        g
    }

    /// `out = ∇·(μ∇θ − θP)` with zero boundary flux.
    pub fn apply(&self, theta: &[f64], out: &mut [f64]) {
        let nx = theta.len();
        let mut left = 0.0;
        for i in 0..nx {
            let right = if i + 1 < nx {
                let f = i + 1;
                self.diff[f] * (theta[i + 1] - theta[i]) - self.adv[f] * (theta[i] + theta[i + 1])
            } else {
                0.0
            };
            out[i] = right - left;
            left = right;
        }
    }

    /// Transpose of [`apply`](Self::apply): `out = μΔφ + P·∇φ` with `∂φ/∂n = 0`.
    pub fn apply_transpose(&self, phi: &[f64], out: &mut [f64]) {
        let nx = phi.len();
        let mut left = 0.0;
        let mut left_adv = 0.0;
        for i in 0..nx {
            let (right, right_adv) = if i + 1 < nx {
                let f = i + 1;
                let d = phi[i + 1] - phi[i];
                (self.diff[f] * d, self.adv[f] * d)
            } else {
                (0.0, 0.0)
            };
            out[i] = right - left + right_adv + left_adv;
            left = right;
            left_adv = right_adv;
        }
    }

    /// Dense `(lower, diag, upper)` bands of the flux-form matrix.
    pub fn bands(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nx = self.nx();
        let mut lower = vec![0.0; nx];
        let mut diag = vec![0.0; nx];
        let mut upper = vec![0.0; nx];
        for i in 0..nx {
            let (fl, fr) = (i, i + 1);
            diag[i] = -(self.diff[fr] + self.diff[fl]) - (self.adv[fr] - self.adv[fl]);
            if i > 0 {
                lower[i] = self.diff[fl] + self.adv[fl];
            }
            if i + 1 < nx {
                upper[i] = self.diff[fr] - self.adv[fr];
            }
        }
        (lower, diag, upper)
    }

    /// Largest face Péclet number `|P_f| h / (2 μ_f)`.
    pub fn peclet(&self) -> f64 {
        self.diff
            .iter()
            .zip(&self.adv)
            .filter(|(d, _)| **d > 0.0)
            .map(|(d, a)| a.abs() / d)
            .fold(0.0, f64::max)
    }
}

/// Arithmetic face averages of a cell profile; boundary faces copy the end cells.
pub fn face_average(cells: &[f64]) -> Vec<f64> {
    let nx = cells.len();
    let mut faces = vec![0.0; nx + 1];
    faces[0] = cells[0];
    faces[nx] = cells[nx - 1];
    for f in 1..nx {
        faces[f] = 0.5 * (cells[f - 1] + cells[f]);
    }
    faces
}

/// Assembles `A(t_j)` for `∇·(μ∇θ − θP)` with no-flux boundaries.
pub fn divergence_flux_operator(mu: &SpaceTimeField, p: &SpaceTimeField, j: usize) -> Result<FluxOperator, MeshError> {
    let g = mu.grid;
    let mu_j = mu.slice(j);
    if let Some((i, &value)) = mu_j.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(MeshError::NonPositiveMu { i, j, value });
    }
    let op = FluxOperator::from_faces(g.h(), &face_average(&mu_j), &face_average(&p.slice(j)));
    let pe = op.peclet();
    if pe >= 1.0 {
        log::warn!("cell Péclet number {pe:.3} >= 1 at time node {j}; central advection may oscillate");
    }
    Ok(op)
}
