//! Numerical laboratory for the duality between Wasserstein control of a
//! Markov kernel and gradient estimates of the operator it induces.
//!
//! The crate is organised bottom-up:
//!
//! - [`metric`]: finite metric spaces, shortest-path metrics and discrete geodesics.
//! - [`transport`]: discrete measures, exact `W_p` (transportation simplex),
//!   bottleneck `W_∞` (threshold max-flow), Kantorovich potentials, gluing.
//! - [`slope`]: scalar fields, local slopes at a scale, Lipschitz constants,
//!   upper-gradient checks along paths.
//! - [`hopf_lax`]: the inf-convolution semigroup `Q_t` for power Lagrangians.
//! - [`kernels`]: row-stochastic kernels, `Pf` and `P*μ`, torus heat kernels and
//!   lazy random walks.
//! - [`heisenberg`]: step-2 nilpotent groups, the Korányi gauge, a
//!   Carnot-Carathéodory length estimator and the hypoelliptic diffusion sampler.
//! - [`duality`]: best constants for the Wasserstein control `(C_p)` and the
//!   gradient estimate `(G_q)`, and the audits comparing them.
//!
//! Everything operates on dense `f64` data and is deterministic for fixed seeds.

#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod duality;
pub mod error;
pub mod exponent;
pub mod heisenberg;
pub mod hopf_lax;
pub mod io;
pub mod kernels;
pub mod metric;
pub mod slope;
pub mod transport;

pub use error::{Error, Result};
pub use exponent::Exponent;
