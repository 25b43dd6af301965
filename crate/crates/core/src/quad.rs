//! Adaptive Gauss–Kronrod quadrature (10-point Gauss / 21-point Kronrod).
//!
//! The integrator works on vector-valued integrands `[f64; N]` so that
//! several moments of the same density (mass, mean, hat-function weights)
//! share one set of function evaluations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Truncation tolerance used for kernel integrals throughout the crate.
pub const QUAD_TOL: f64 = 1e-10;

#[allow(clippy::excessive_precision)] // published 21-point Gauss-Kronrod table
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)] // published 21-point Gauss-Kronrod table
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_452_394,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)] // published 21-point Gauss-Kronrod table
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 400,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment<const N: usize> {
    lo: f64,
    hi: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl<const N: usize> Eq for Segment<N> {}

impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<const N: usize, F>(f: &mut F, lo: f64, hi: f64) -> Segment<N>
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs_sum = [0.0; N];
    for c in 0..N {
        kronrod[c] = fc[c] * WGK[10];
        abs_sum[c] = fc[c].abs() * WGK[10];
    }
    let mut samples = [[0.0; N]; 21];
    samples[20] = fc;
    for (j, &node) in XGK.iter().take(10).enumerate() {
        let dx = half * node;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        samples[2 * j] = f1;
        samples[2 * j + 1] = f2;
        for c in 0..N {
            kronrod[c] += WGK[j] * (f1[c] + f2[c]);
            abs_sum[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * (f1[c] + f2[c]);
            }
        }
    }
    let mut error: f64 = 0.0;
    for c in 0..N {
        let mean = 0.5 * kronrod[c];
        let mut asc = WGK[10] * (fc[c] - mean).abs();
        for j in 0..10 {
            asc += WGK[j] * ((samples[2 * j][c] - mean).abs() + (samples[2 * j + 1][c] - mean).abs());
        }
        let asc = asc * half.abs();
        let mut err = ((kronrod[c] - gauss[c]) * half).abs();
        if asc != 0.0 && err != 0.0 {
            err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
        }
        let res_abs = abs_sum[c] * half.abs();
        if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * res_abs);
        }
        error = error.max(err);
    }
    let mut value = [0.0; N];
    for c in 0..N {
        value[c] = kronrod[c] * half;
    }
    Segment { lo, hi, value, error }
}

/// Integrates `f` over `[a, b]` by globally adaptive bisection.
pub fn integrate<const N: usize, F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("non-finite integration bounds [{a}, {b}]")));
    }
    if a == b {
        return Ok([0.0; N]);
    }
    let first = gauss_kronrod(&mut f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if total_err <= opts.abs_tol.max(opts.rel_tol * scale) {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                lo: a,
                hi: b,
                residual: total_err,
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval exhausted at machine precision; accept what we have.
            heap.push(worst);
            break;
        }
        let left = gauss_kronrod(&mut f, worst.lo, mid);
        let right = gauss_kronrod(&mut f, mid, worst.hi);
        for (c, t) in total.iter_mut().enumerate() {
            *t += left.value[c] + right.value[c] - worst.value[c];
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the cancellation accumulated by incremental updates.
    let mut sum = [0.0; N];
    for seg in heap.iter() {
        for (s, v) in sum.iter_mut().zip(&seg.value) {
            *s += v;
        }
    }
    Ok(sum)
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], a, b, opts).map(|v| v[0])
}

/// `∫_a^b f(y) dy` computed in the variable `u = ln y`. Requires `0 < a < b`.
pub fn integrate_log<const N: usize, F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    if !(a > 0.0) {
        return Err(Error::invalid(format!(
            "log substitution needs a positive lower bound, got {a}"
        )));
    }
    integrate(
        |u| {
            let y = u.exp();
            let mut v = f(y);
            for c in v.iter_mut() {
                *c *= y;
            }
            v
        },
        a.ln(),
        b.ln(),
        opts,
    )
}

/// Integrates over `[a, b]` split at the interior `breaks`, switching to the
/// log variable on pieces that span more than a decade.
pub fn integrate_pieces<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<[f64; N]>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut cuts: Vec<f64> = Vec::with_capacity(breaks.len() + 2);
    cuts.push(a);
    cuts.extend(breaks.iter().copied().filter(|&p| p > a && p < b));
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let pieces = (cuts.len() - 1).max(1) as f64;
    let piece_opts = QuadOptions {
        abs_tol: opts.abs_tol / pieces,
        ..opts
    };
    let mut total = [0.0; N];
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let part = if lo > 0.0 && hi / lo > 10.0 {
            integrate_log(&mut f, lo, hi, piece_opts)?
        } else {
            integrate(&mut f, lo, hi, piece_opts)?
        };
        for c in 0..N {
            total[c] += part[c];
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_scalar(|x| 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - 8.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate_scalar(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -40.0,
            40.0,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn kink_is_resolved_by_bisection() {
        let v = integrate_scalar(|x: f64| (x - 0.3).abs(), 0.0, 1.0, QuadOptions::default()).unwrap();
        let exact = 0.5 * (0.3 * 0.3 + 0.7 * 0.7);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn log_substitution_handles_wide_ranges() {
        // ∫_{1e-6}^{1e6} 1/(1+y)^2 dy
        let v = integrate_log(|y| [1.0 / ((1.0 + y) * (1.0 + y))], 1e-6, 1e6, QuadOptions::default()).unwrap()[0];
        let exact = 1.0 / (1.0 + 1e-6) - 1.0 / (1.0 + 1e6);
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn pieces_with_jump() {
        let v = integrate_pieces(
            |x: f64| [if x < 0.5 { 1.0 } else { 3.0 }],
            0.0,
            1.0,
            &[0.5],
            QuadOptions::default(),
        )
        .unwrap()[0];
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn non_convergence_is_reported() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..QuadOptions::default()
        };
        let err = integrate_scalar(|x: f64| (1.0 / x).sin(), 1e-4, 1.0, opts).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }
}
