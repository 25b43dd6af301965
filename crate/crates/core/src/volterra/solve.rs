use serde::{Deserialize, Serialize};

use super::grid::{GridFunction, Shape};
use super::operator::{apply_to_fn, DiscreteOperator};
use crate::error::{Error, Result};
use crate::kernels::{ContractionBounds, MarkovKernel};

/// Relative slack `|ΔM|/x` tolerated before a Picard step counts as
/// breaking monotonicity.
const MONOTONE_SLACK: f64 = 1e-9;

/// Increments below this fraction of the largest grid point are dominated
/// by rounding and are left out of the observed contraction factor.
const FACTOR_NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    /// Stop once `max_j |M_{n+1}(x_j) − M_n(x_j)| / x_j ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Reject kernels that send more than this mass past the grid.
    pub tail_tolerance: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            tail_tolerance: None,
        }
    }
}

/// Expected direction of the Picard sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Started from a supersolution such as the identity.
    Nonincreasing,
    /// Started from a subsolution.
    Nondecreasing,
    /// No ordering is enforced (contraction iteration).
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub iterations: usize,
    /// `max_j |M(x_j) − K(M)(x_j)| / x_j` for the returned function.
    pub sup_residual: f64,
    /// Whether the iterates moved pointwise in a single direction.
    pub monotone: bool,
    pub converged: bool,
    /// Largest ratio of successive absolute sup-norm increments, which is
    /// also the trend indicator when the iteration stops on `max_iter`.
    pub contraction_factor: Option<f64>,
    /// Last relative sup-norm increment.
    pub last_increment: f64,
    /// `max_j M(x_j)/x_j`.
    pub max_ratio: f64,
    /// `max_j (x_j − M(x_j))`.
    pub distance_to_identity: f64,
    /// Largest kernel mass sent past the last grid node.
    pub max_tail_weight: f64,
}

/// Iterates `M ↦ K(M)` from `start` on a pre-assembled operator.
pub fn picard_iterate(
    op: &DiscreteOperator,
    start: GridFunction,
    direction: Direction,
    opts: &SolveOptions,
    method: &str,
) -> Result<(GridFunction, SolveReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = op.grid().to_vec();
    let floor = FACTOR_NOISE_FLOOR * grid.iter().fold(0.0_f64, |m, &x| m.max(x));
    let mut current = start;
    let mut iterations = 0;
    let mut last_increment = f64::INFINITY;
    let mut previous_abs: Option<f64> = None;
    let mut factor: Option<f64> = None;
    let (mut never_up, mut never_down) = (true, true);

    while iterations < opts.max_iter {
        let next = op.apply(&current)?;
        iterations += 1;
        for (j, (&new, &old)) in next.values().iter().zip(current.values()).enumerate() {
            let slack = MONOTONE_SLACK * grid[j];
            never_up &= new <= old + slack;
            never_down &= new >= old - slack;
            let broken = match direction {
                Direction::Nonincreasing => new > old + slack,
                Direction::Nondecreasing => new < old - slack,
                Direction::Free => false,
            };
            if broken {
                return Err(Error::Monotonicity {
                    iteration: iterations,
                    index: j,
                    x: grid[j],
                });
            }
        }
        let abs = next.sup_distance(&current)?;
        if let Some(prev) = previous_abs {
            if prev > floor && abs > floor {
                let r = abs / prev;
                factor = Some(factor.map_or(r, |f: f64| f.max(r)));
            }
        }
        previous_abs = Some(abs);
        last_increment = next.sup_relative_distance(&current)?;
        current = next;
        if last_increment <= opts.tol {
            break;
        }
    }

    let image = op.apply(&current)?;
    let sup_residual = image.sup_relative_distance(&current)?;
    let converged = sup_residual <= opts.tol;
    let report = SolveReport {
        method: method.to_string(),
        iterations,
        sup_residual,
        monotone: never_up || never_down,
        converged,
        contraction_factor: factor,
        last_increment,
        max_ratio: current.ratio_profile().first().map_or(0.0, |p| p.tail_max),
        distance_to_identity: current.distance_to_identity(),
        max_tail_weight: op.tail_weights().iter().fold(0.0, |m: f64, &w| m.max(w)),
    };
    Ok((current, report))
}

/// `K^n(id)`: the largest solution below the identity, which is the
/// default function when the chain keeps moving down.
pub fn picard_from_identity<K: MarkovKernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<(GridFunction, SolveReport)> {
    picard_from_identity_with_shape(kernel, grid, Shape::RatioLinear, opts)
}

/// [`picard_from_identity`] with a chosen continuation past the grid.
///
/// The ratio shape suits kernels whose default function grows like a
/// multiple of `x`; the gap shape suits those where `x − M(x)` settles.
pub fn picard_from_identity_with_shape<K: MarkovKernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
    shape: Shape,
    opts: &SolveOptions,
) -> Result<(GridFunction, SolveReport)> {
    let op = DiscreteOperator::assemble(kernel, grid, opts.tail_tolerance)?;
    let start = GridFunction::identity(grid, shape)?;
    picard_iterate(&op, start, Direction::Nonincreasing, opts, "picard-from-identity")
}

/// Iterates from the call function `(x − β/α)^+` under the contraction
/// bounds, on the gap-shaped interpolation where the discrete operator
/// contracts with factor at most `1 − α`.
///
/// Without explicit `bounds` the kernel's own closed-form bounds are used.
/// Both are checked on the grid first.
pub fn contraction_solve<K: MarkovKernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
    bounds: Option<ContractionBounds>,
    opts: &SolveOptions,
) -> Result<(GridFunction, SolveReport)> {
    let bounds = bounds
        .or_else(|| kernel.contraction_bounds())
        .ok_or_else(|| Error::invalid("contraction solve needs bounds on inf a and sup x·b"))?;
    if !(bounds.alpha > 0.0 && bounds.alpha <= 1.0 && bounds.beta >= 0.0 && bounds.beta.is_finite()) {
        return Err(Error::invalid(format!("bad contraction bounds {bounds:?}")));
    }
    let op = DiscreteOperator::assemble(kernel, grid, opts.tail_tolerance)?;
    for (j, &x) in op.grid().iter().enumerate() {
        let a = 1.0 - op.upper_mass(j);
        let xb = x - op.identity_image(j);
        if a < bounds.alpha - 1e-9 {
            return Err(Error::Hypothesis {
                x,
                reason: format!("a(x) = {a} below the claimed bound {}", bounds.alpha),
            });
        }
        if xb > bounds.beta + 1e-9 * x.max(1.0) {
            return Err(Error::Hypothesis {
                x,
                reason: format!("x·b(x) = {xb} above the claimed bound {}", bounds.beta),
            });
        }
    }
    let start = GridFunction::call(grid, Shape::GapLinear, bounds.beta / bounds.alpha)?;
    picard_iterate(&op, start, Direction::Free, opts, "contraction")
}

/// Smallest margin `K(M)(x) − M(x)` over the probe points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionCheck {
    pub certified: bool,
    pub min_margin: f64,
    pub argmin: f64,
    pub slack: f64,
}

/// Checks `M ≤ K(M)` at every node of a grid function, with the operator
/// evaluated on the same interpolation.
pub fn certify_subsolution(m: &GridFunction, op: &DiscreteOperator, slack: f64) -> Result<SubsolutionCheck> {
    let image = op.apply(m)?;
    let mut check = SubsolutionCheck {
        certified: true,
        min_margin: f64::INFINITY,
        argmin: f64::NAN,
        slack,
    };
    for ((&x, &v), &k) in m.grid().iter().zip(m.values()).zip(image.values()) {
        let margin = k - v;
        if margin < check.min_margin {
            check.min_margin = margin;
            check.argmin = x;
        }
    }
    check.certified = check.min_margin >= -slack;
    Ok(check)
}

/// Checks `f ≤ K(f)` for a closed-form candidate by direct quadrature at
/// each probe point. `kinks` are the points where `f` is not smooth.
pub fn certify_subsolution_fn<K, F>(
    kernel: &K,
    probes: &[f64],
    f: F,
    kinks: &[f64],
    slack: f64,
) -> Result<SubsolutionCheck>
where
    K: MarkovKernel + ?Sized,
    F: Fn(f64) -> f64,
{
    let mut check = SubsolutionCheck {
        certified: true,
        min_margin: f64::INFINITY,
        argmin: f64::NAN,
        slack,
    };
    for &x in probes {
        let margin = apply_to_fn(kernel, x, &f, kinks)? - f(x);
        if margin < check.min_margin {
            check.min_margin = margin;
            check.argmin = x;
        }
    }
    check.certified = check.min_margin >= -slack;
    Ok(check)
}
