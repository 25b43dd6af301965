//! One-step Markov transition kernels on `(0, ∞)`.
//!
//! A kernel `K(x, dy)` is stored as a finite list of atoms plus a density
//! part. Everything the bubble criteria need is an integral against the
//! kernel over a half-line:
//!
//! * `a(x) = K(x, (0, x))`, the probability of a down move (atoms exactly at
//!   `x` do not count as down);
//! * `b_ε(x) = ∫_{(0, x(1+ε))} (y/x) K(x, dy)`, the relative recovery, with
//!   `b = b_0`;
//! * the default-function operator integrates over `[x, ∞)`.

mod classify;
mod families;
mod sample;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_pieces, QuadOptions, QUAD_TOL};

pub use classify::{
    classify_markov_bubble, BubbleVerdict, CertificateClaim, ClassifyOptions, Criterion, Evidence, TailCertificate,
    TailGrid, Verdict,
};
pub use families::{
    AffineDrop, Completed, ExponentialRatio, GaussianLogStep, Multiplicative, SigmaProfile, TabulatedUpper,
    TwoPointComplete, UniformSplit, UpperPart,
};
pub use sample::sample_generic;

/// Point mass `weight · δ_location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(location: f64, weight: f64) -> Self {
        Self { location, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    TwoPointComplete,
    Multiplicative,
    UniformSplit,
    AffineDrop,
    ExponentialRatio,
    GaussianLogStep,
    InverseBesselDiscretized,
    UserDefined,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::TwoPointComplete => "two-point-complete",
            KernelKind::Multiplicative => "multiplicative",
            KernelKind::UniformSplit => "uniform-split",
            KernelKind::AffineDrop => "affine-drop",
            KernelKind::ExponentialRatio => "exponential-ratio",
            KernelKind::GaussianLogStep => "gaussian-log-step",
            KernelKind::InverseBesselDiscretized => "inverse-bessel-discretized",
            KernelKind::UserDefined => "user-defined",
        };
        f.write_str(s)
    }
}

/// Closed-form constants `α ≤ inf a(x)` and `β ≥ sup x·b(x)` under which the
/// default-function operator contracts in the sup metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionBounds {
    pub alpha: f64,
    pub beta: f64,
}

/// A positive martingale transition kernel. Implementations are immutable
/// and shared freely between threads.
pub trait MarkovKernel: Send + Sync + fmt::Debug {
    fn kind(&self) -> KernelKind;

    /// Atoms of `K(x, ·)`, all located in `(0, ∞)`.
    fn atoms(&self, x: f64) -> Vec<Atom>;

    /// Density of the absolutely continuous part at `y`.
    fn density(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }

    /// Interval carrying the density part up to [`QUAD_TOL`]; `None` when
    /// the kernel is purely atomic.
    fn support_hint(&self, _x: f64) -> Option<(f64, f64)> {
        None
    }

    /// Points inside the support where the density is not smooth.
    fn breakpoints(&self, _x: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Draws `S_1` given `S_0 = x`.
    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        sample_generic(self, x, rng)
    }

    /// True when `K(x, ·) = δ_x`.
    fn is_absorbing(&self, _x: f64) -> bool {
        false
    }

    /// Closed-form tail statements about `b` / `b_ε` known for this family.
    fn certificates(&self, _eps: f64) -> Vec<TailCertificate> {
        Vec::new()
    }

    fn contraction_bounds(&self) -> Option<ContractionBounds> {
        None
    }

    fn as_two_point(&self) -> Option<&TwoPointComplete> {
        None
    }
}

/// Half-line over which a kernel integral is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    /// `y < cut`
    Below(f64),
    /// `y ≥ cut`
    AtOrAbove(f64),
}

impl Region {
    fn contains(self, y: f64) -> bool {
        match self {
            Region::All => true,
            Region::Below(c) => y < c,
            Region::AtOrAbove(c) => y >= c,
        }
    }
}

/// `∫_region f(y) K(x, dy)` for a vector-valued `f`.
pub fn kernel_integral<K, F, const N: usize>(
    kernel: &K,
    x: f64,
    region: Region,
    f: F,
    opts: QuadOptions,
) -> Result<[f64; N]>
where
    K: MarkovKernel + ?Sized,
    F: Fn(f64) -> [f64; N],
{
    let mut total = [0.0; N];
    for atom in kernel.atoms(x) {
        if atom.weight > 0.0 && region.contains(atom.location) {
            let v = f(atom.location);
            for c in 0..N {
                total[c] += atom.weight * v[c];
            }
        }
    }
    if let Some((lo, hi)) = kernel.support_hint(x) {
        let (lo, hi) = match region {
            Region::All => (lo, hi),
            Region::Below(c) => (lo, hi.min(c)),
            Region::AtOrAbove(c) => (lo.max(c), hi),
        };
        if hi > lo {
            let breaks = kernel.breakpoints(x);
            let part = integrate_pieces(
                |y| {
                    let d = kernel.density(x, y);
                    let v = f(y);
                    let mut out = [0.0; N];
                    for c in 0..N {
                        out[c] = d * v[c];
                    }
                    out
                },
                lo,
                hi,
                &breaks,
                opts,
            )?;
            for c in 0..N {
                total[c] += part[c];
            }
        }
    }
    Ok(total)
}

fn diag_opts() -> QuadOptions {
    QuadOptions::default().with_abs_tol(1e-14)
}

/// Total mass and mean of `K(x, ·)`.
pub fn kernel_moments<K: MarkovKernel + ?Sized>(kernel: &K, x: f64) -> Result<(f64, f64)> {
    let [mass, mean] = kernel_integral(kernel, x, Region::All, |y| [1.0, y / x], diag_opts())?;
    Ok((mass, mean * x))
}

/// `a(x) = P_x[S_1 < x]`.
pub fn probability_down<K: MarkovKernel + ?Sized>(kernel: &K, x: f64) -> Result<f64> {
    check_state(x)?;
    let [a] = kernel_integral(kernel, x, Region::Below(x), |_| [1.0], diag_opts())?;
    Ok(a.clamp(0.0, 1.0))
}

/// `b_ε(x) = E_x[(S_1/x) 1{S_1 < x(1+ε)}]`; `eps = 0` gives `b(x)`.
pub fn relative_recovery<K: MarkovKernel + ?Sized>(kernel: &K, x: f64, eps: f64) -> Result<f64> {
    check_state(x)?;
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("relaxation ε must be nonnegative, got {eps}")));
    }
    let [b] = kernel_integral(kernel, x, Region::Below(x * (1.0 + eps)), |y| [y / x], diag_opts())?;
    Ok(b.max(0.0))
}

/// `a`, `b` and `b_ε` at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub eps: f64,
    pub b_eps: f64,
}

impl KernelDiagnostics {
    pub fn compute<K: MarkovKernel + ?Sized>(kernel: &K, x: f64, eps: f64) -> Result<Self> {
        Ok(Self {
            x,
            a: probability_down(kernel, x)?,
            b: relative_recovery(kernel, x, 0.0)?,
            eps,
            b_eps: relative_recovery(kernel, x, eps)?,
        })
    }
}

/// Checks the mass and martingale invariants at every probe state.
pub fn validate_kernel<K: MarkovKernel + ?Sized>(kernel: &K, probes: &[f64], tol: f64) -> Result<()> {
    for &x in probes {
        check_state(x)?;
        for atom in kernel.atoms(x) {
            if !(atom.location > 0.0 && atom.location.is_finite()) || !(atom.weight >= 0.0) {
                return Err(Error::InvalidKernel {
                    x,
                    reason: format!("atom {atom:?} outside (0, ∞) or with negative weight"),
                });
            }
        }
        if let Some((lo, _)) = kernel.support_hint(x) {
            if lo < 0.0 {
                return Err(Error::InvalidKernel {
                    x,
                    reason: format!("density support starts at {lo} < 0"),
                });
            }
        }
        let (mass, mean) = kernel_moments(kernel, x)?;
        if (mass - 1.0).abs() > tol {
            return Err(Error::InvalidKernel {
                x,
                reason: format!("total mass {mass} differs from 1"),
            });
        }
        if (mean - x).abs() > tol * x {
            return Err(Error::InvalidKernel {
                x,
                reason: format!("mean {mean} differs from the state"),
            });
        }
    }
    Ok(())
}

/// Default validation tolerance, ten times the truncation tolerance.
pub const VALIDATION_TOL: f64 = 10.0 * QUAD_TOL;

pub(crate) fn check_state(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("state must be positive and finite, got {x}")))
    }
}
