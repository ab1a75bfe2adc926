//! Exact simulation and analysis of the wave equation `z_tt = z_xx` on `(0, 1)`
//! with `z(t, 0) = 0` and a set-valued damping relation at `x = 1`.
//!
//! The state is carried by a Riemann invariant `g`, piecewise constant on a
//! fixed lattice, which evolves by pointwise iteration of the rotated boundary
//! map: `g_{n+1}(s) in S(g_n(s))`. Energies, reconstructions and decay
//! diagnostics are all closed-form sums over cells.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod damping_maps;
pub mod decay_analysis;
pub mod disturbance_iss;
pub mod error;
pub mod numeric;
pub mod rate_law;
pub mod riemann_core;
pub mod scalar;
pub mod sign_map;
pub mod slow_convergence;

pub use damping_maps::{
    compose_negated, iterate_map, rotate_relation, BoundaryRelation, ExplicitMap, Relation, Resolution, RotatedMap,
    SelectionPolicy,
};
pub use error::{Error, Result};
pub use rate_law::RateLaw;
pub use riemann_core::{evolve, InitialData, Norm, SimpleProfile, Trajectory};
pub use scalar::{PiecewiseLinear, ScalarFn};
