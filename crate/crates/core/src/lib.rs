//! Drawdown bubbles for discrete-time nonnegative martingales.
//!
//! A nonnegative martingale `S` is a *bubble* when it loses expected mass at
//! some drawdown time `τ_k` (the `k`-th index at which `S` strictly
//! decreases). This crate offers three independent ways to look at that
//! question:
//!
//! * [`kernels`]: analytic criteria on a one-step Markov transition kernel,
//!   driven by the down-move probability `a(x)` and the relative recovery
//!   `b(x)`;
//! * [`volterra`]: the default function `M_S` as the maximal solution of the
//!   homogeneous Volterra equation `M(x) = ∫_{[x,∞)} M(y) K(x, dy)`;
//! * [`montecarlo`]: simulation of paths and direct estimation of the mass
//!   lost at drawdown times.
//!
//! [`iid`] covers products of independent returns and [`ctdiscretize`]
//! samples continuous strict local martingales along stopping-time schedules.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ctdiscretize;
pub mod error;
pub mod iid;
pub mod io;
pub mod kernels;
pub mod montecarlo;
pub mod quad;
pub mod rng;
pub mod special;
pub mod volterra;

pub use error::{Error, Result};
pub use kernels::{Atom, KernelDiagnostics, KernelKind, MarkovKernel};
pub use volterra::{GridFunction, SolveReport};
