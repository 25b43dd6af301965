//! The default function as the maximal solution of
//! `M(x) = ∫_{[x,∞)} M(y) K(x, dy)` with `0 ≤ M(x) ≤ x`.
//!
//! The operator is monotone, so Picard iteration from the identity gives a
//! nonincreasing sequence whose limit is the largest solution, and iteration
//! from a subsolution gives a nondecreasing one. When `inf a > 0` and
//! `sup x·b(x) < ∞` the operator also contracts in the sup norm.

mod grid;
mod operator;
mod solve;

pub use grid::{default_ratio_profile, log_grid, GridFunction, RatioPoint, Shape};
pub use operator::{apply_to_fn, DiscreteOperator};
pub use solve::{
    certify_subsolution, certify_subsolution_fn, contraction_solve, picard_from_identity,
    picard_from_identity_with_shape, picard_iterate, Direction, SolveOptions, SolveReport, SubsolutionCheck,
};

use crate::error::Result;
use crate::kernels::MarkovKernel;

/// One application of the operator to `m`, assembling the discretisation
/// on `m`'s grid.
pub fn apply_operator<K: MarkovKernel + ?Sized>(m: &GridFunction, kernel: &K) -> Result<GridFunction> {
    DiscreteOperator::assemble(kernel, m.grid(), None)?.apply(m)
}
