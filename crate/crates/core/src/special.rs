//! Standard normal helpers.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF `Φ`, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density `φ`.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `∫_t^∞ Φ(-s) ds = φ(t) - t Φ(-t)`.
pub fn normal_tail_integral(t: f64) -> f64 {
    normal_pdf(t) - t * normal_cdf(-t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_scalar, QuadOptions};

    #[test]
    fn reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-15);
        // deep tail stays relative-accurate
        let t = normal_cdf(-30.0);
        assert!((t / 4.906_713_927_148_187e-198 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tail_integral_matches_quadrature() {
        for &t in &[-1.0, 0.0, 0.7, 3.0] {
            let q = integrate_scalar(|s| normal_cdf(-s), t, 40.0, QuadOptions::default()).unwrap();
            assert!((q - normal_tail_integral(t)).abs() < 1e-12, "t={t}");
        }
    }
}
