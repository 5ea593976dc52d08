//! Ideal free dispersal in bounded, time-periodic, spatially heterogeneous
//! habitats.
//!
//! Modules build on each other roughly in this order:
//!
//! * [`exprfield`]: a small expression language for `(x, t)` fields,
//! * [`mesh`]: grids, sampled fields, quadrature and the flux-form operator,
//! * [`bernoulli`]: the envelope `M(t)`, `K̃`, and the feasibility test,
//! * [`strategy`]: the ideal free drift and pursuit invaders,
//! * [`dynamics`]: the explicit period map, periodic orbits and competition,
//! * [`fitness`]: local and pathwise fitness,
//! * [`floquet`]: principal eigenvalues and invasion tests.
//!
//! With the `parallel` feature (default) independent work such as field
//! sampling and eigenvalue sweeps runs on the rayon pool; see [`par`].

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernoulli;
pub mod dynamics;
pub mod exprfield;
pub mod fitness;
pub mod floquet;
pub mod mesh;
pub mod par;
pub mod strategy;

pub use dynamics::Environment;
pub use mesh::{Grid, PeriodicScalar, SpaceTimeField};
pub use strategy::Strategy;
