use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{check_state, Atom, KernelKind, MarkovKernel};
use crate::quad::{integrate_pieces, QuadOptions};
use crate::rng::open_unit;
use crate::special::{normal_cdf, normal_pdf};

/// Truncation tolerance for the lower end of the density support.
const LOWER_REMAINDER: f64 = 1e-15;

/// Relative tolerance of the inverse-CDF sampler.
const SAMPLE_REL_TOL: f64 = 1e-10;

/// One step of the inverse three-dimensional Bessel process stopped at the
/// relative barrier `(1 + β) x` or after time `α`, whichever comes first.
///
/// In the variable `c = 1/x − 1/z` the law is a difference of two shifted
/// Gaussian integrals, so the CDF has the closed form used by
/// [`InverseBessel::cdf`]; [`bessel_cdf`] integrates the density instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseBessel {
    alpha: f64,
    beta: f64,
}

impl InverseBessel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "inverse Bessel kernel needs α, β > 0, got α = {alpha}, β = {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The barrier `(1 + β) x`.
    pub fn barrier(&self, x: f64) -> f64 {
        (1.0 + self.beta) * x
    }

    /// `β / ((1 + β) x)`: distance of `1/x` from the barrier on the
    /// reciprocal scale.
    fn reciprocal_gap(&self, x: f64) -> f64 {
        self.beta / ((1.0 + self.beta) * x)
    }

    /// `(2 / (1 + β)) Φ(−β / ((1 + β) x √α))`.
    pub fn atom_weight(&self, x: f64) -> f64 {
        2.0 / (1.0 + self.beta) * normal_cdf(-self.reciprocal_gap(x) / self.alpha.sqrt())
    }

    /// CDF of the continuous part in the variable `c = 1/x − 1/z < m`.
    fn cdf_reciprocal(&self, x: f64, c: f64) -> f64 {
        let s = self.alpha.sqrt();
        let m = self.reciprocal_gap(x);
        let (t0, t1) = (c / s, (c - 2.0 * m) / s);
        let inv = 1.0 / x;
        let value =
            x * (inv * normal_cdf(t0) + s * normal_pdf(t0) - (inv - 2.0 * m) * normal_cdf(t1) - s * normal_pdf(t1));
        value.clamp(0.0, 1.0)
    }

    /// Derivative of [`Self::cdf_reciprocal`] in `c`.
    fn cdf_reciprocal_slope(&self, x: f64, c: f64) -> f64 {
        let s = self.alpha.sqrt();
        let m = self.reciprocal_gap(x);
        x * (1.0 / x - c) / s * (normal_pdf(c / s) - normal_pdf((c - 2.0 * m) / s))
    }

    /// `P_x[S_1 ≤ z]` in closed form.
    pub fn cdf(&self, x: f64, z: f64) -> f64 {
        if z <= 0.0 {
            0.0
        } else if z >= self.barrier(x) {
            1.0
        } else {
            self.cdf_reciprocal(x, 1.0 / x - 1.0 / z)
        }
    }

    /// Upper bound on `P_x[S_1 ≤ z]` that drops the reflected term.
    pub fn lower_remainder_bound(&self, x: f64, z: f64) -> f64 {
        if z <= 0.0 {
            return 0.0;
        }
        let s = self.alpha.sqrt();
        let t = (1.0 / x - 1.0 / z) / s;
        (normal_cdf(t) + x * s * normal_pdf(t)).min(1.0)
    }

    /// A point below which the kernel carries less than `tol` mass.
    pub fn lower_cutoff(&self, x: f64, tol: f64) -> f64 {
        let s = self.alpha.sqrt();
        let mut t = -1.0;
        while normal_cdf(t) + x * s * normal_pdf(t) > tol && t > -60.0 {
            t -= 0.25;
        }
        1.0 / (1.0 / x - t * s)
    }

    /// Inverts the continuous part: the `z` with `P_x[S_1 ≤ z] = target`
    /// for `target` in `[0, 1 − atom_weight)`.
    pub fn quantile(&self, x: f64, target: f64) -> Result<f64> {
        let m = self.reciprocal_gap(x);
        let s = self.alpha.sqrt();
        let top = self.cdf_reciprocal(x, m);
        if !(target >= 0.0 && target < top) {
            return Err(Error::Support { x, u: target });
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (-s, m);
        while self.cdf_reciprocal(x, lo) > target {
            hi = lo;
            lo *= 2.0;
            if lo < -1e6 * s - 1e6 / x {
                return Err(Error::Support { x, u: target });
            }
        }
        let mut c = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf_reciprocal(x, c) - target;
            if f > 0.0 {
                hi = c;
            } else {
                lo = c;
            }
            let slope = self.cdf_reciprocal_slope(x, c);
            let newton = c - f / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - c).abs();
            c = next;
            if step <= SAMPLE_REL_TOL * 1e-2 * (1.0 / x - c) || hi - lo <= SAMPLE_REL_TOL * (1.0 / x - hi) {
                return Ok(1.0 / (1.0 / x - c));
            }
        }
        Err(Error::Support { x, u: target })
    }

    /// Draws `S_1` from a given uniform: the barrier when `u` is below the
    /// atom weight, otherwise the quantile of `u − atom_weight`.
    pub fn sample_with_uniform(&self, x: f64, u: f64) -> Result<f64> {
        let w = self.atom_weight(x);
        if u < w {
            Ok(self.barrier(x))
        } else {
            let target = (u - w).min(self.cdf_reciprocal(x, self.reciprocal_gap(x)) * (1.0 - f64::EPSILON));
            self.quantile(x, target)
        }
    }
}

impl MarkovKernel for InverseBessel {
    fn kind(&self) -> KernelKind {
        KernelKind::InverseBesselDiscretized
    }

    fn atoms(&self, x: f64) -> Vec<Atom> {
        vec![Atom {
            location: self.barrier(x),
            weight: self.atom_weight(x),
        }]
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let top = self.barrier(x);
        if !(y > 0.0 && y < top) {
            return 0.0;
        }
        let a = 1.0 / y - 1.0 / x;
        let b = 1.0 / y + (self.beta - 1.0) / ((1.0 + self.beta) * x);
        // e^{−a²/2α} − e^{−b²/2α} with the difference of squares factored
        // out, which stays accurate next to the barrier where a² ≈ b².
        let diff = (b - a) * (b + a);
        x / ((2.0 * std::f64::consts::PI * self.alpha).sqrt() * y.powi(3))
            * (-a * a / (2.0 * self.alpha)).exp()
            * -(-diff / (2.0 * self.alpha)).exp_m1()
    }

    fn support_hint(&self, x: f64) -> Option<(f64, f64)> {
        Some((self.lower_cutoff(x, LOWER_REMAINDER), self.barrier(x)))
    }

    fn breakpoints(&self, x: f64) -> Vec<f64> {
        vec![x]
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        check_state(x)?;
        self.sample_with_uniform(x, open_unit(rng))
    }
}

/// `P_x[S_1 ≤ z]` by adaptive quadrature of the density from a lower
/// cutoff, together with a certified bound on the mass below the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfEvaluation {
    pub value: f64,
    pub remainder_bound: f64,
}

pub fn bessel_cdf(x: f64, alpha: f64, beta: f64, z: f64) -> Result<CdfEvaluation> {
    let kernel = InverseBessel::new(alpha, beta)?;
    check_state(x)?;
    let top = kernel.barrier(x);
    if !(z > 0.0) {
        return Ok(CdfEvaluation {
            value: 0.0,
            remainder_bound: 0.0,
        });
    }
    if z >= top {
        return Err(Error::invalid(format!("z = {z} must lie below the barrier {top}")));
    }
    let cutoff = kernel.lower_cutoff(x, LOWER_REMAINDER).min(z);
    let remainder_bound = kernel.lower_remainder_bound(x, cutoff);
    let opts = QuadOptions::default().with_abs_tol(1e-14);
    let [value] = integrate_pieces(|w| [kernel.density(x, w)], cutoff, z, &[x], opts)?;
    Ok(CdfEvaluation {
        value: value.clamp(0.0, 1.0),
        remainder_bound,
    })
}

/// Draws one step of the discretised inverse Bessel process.
pub fn sample_bessel_step(x: f64, alpha: f64, beta: f64, rng: &mut dyn RngCore) -> Result<f64> {
    InverseBessel::new(alpha, beta)?.sample_step(x, rng)
}
