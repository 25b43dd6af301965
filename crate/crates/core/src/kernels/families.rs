//! Built-in kernel families.

use std::f64::consts::E;
use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::classify::{CertificateClaim, TailCertificate};
use super::{sample_generic, Atom, ContractionBounds, KernelKind, MarkovKernel};
use crate::error::{Error, Result};
use crate::special::normal_cdf;

/// Width of the Gaussian window, in standard deviations, kept by support hints.
const GAUSS_WINDOW: f64 = 12.0;

// ---------------------------------------------------------------------------
// Two-point complete family

/// `K(x, ·) = a δ_{x b(x)/a} + (1 − a) δ_{x (1 − b(x))/(1 − a)}` with a
/// constant down probability `a` and recovery `b(x) = min(scale · x^{-power}, a)`.
///
/// Where the recovery reaches `a` both atoms merge at `x` and the state is
/// absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointComplete {
    down_prob: f64,
    recovery_scale: f64,
    recovery_power: f64,
}

impl TwoPointComplete {
    pub fn new(down_prob: f64, recovery_scale: f64, recovery_power: f64) -> Result<Self> {
        if !(down_prob > 0.0 && down_prob < 1.0) {
            return Err(Error::invalid(format!(
                "down probability must lie in (0, 1), got {down_prob}"
            )));
        }
        if !(recovery_scale >= 0.0 && recovery_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "recovery scale must be finite and ≥ 0, got {recovery_scale}"
            )));
        }
        if !(recovery_power >= 0.0 && recovery_power.is_finite()) {
            return Err(Error::invalid(format!(
                "recovery power must be finite and ≥ 0, got {recovery_power}"
            )));
        }
        Ok(Self {
            down_prob,
            recovery_scale,
            recovery_power,
        })
    }

    /// The model whose state drops to `1/2` and then stays there:
    /// `a = 1/2`, `b(x) = 1/(4x)`.
    pub fn absorbing_half() -> Self {
        Self::new(0.5, 0.25, 1.0).expect("valid constants")
    }

    /// Binomial returns `u = 3/2`, `d = 1/2` with probability `1/2` each.
    pub fn binomial_half() -> Self {
        Self::new(0.5, 0.25, 0.0).expect("valid constants")
    }

    pub fn down_prob(&self) -> f64 {
        self.down_prob
    }

    pub fn recovery_scale(&self) -> f64 {
        self.recovery_scale
    }

    pub fn recovery_power(&self) -> f64 {
        self.recovery_power
    }

    fn raw_recovery(&self, x: f64) -> f64 {
        self.recovery_scale * x.powf(-self.recovery_power)
    }

    /// `b(x)`.
    pub fn recovery(&self, x: f64) -> f64 {
        self.raw_recovery(x).min(self.down_prob)
    }

    fn locations(&self, x: f64) -> (f64, f64) {
        let b = self.recovery(x);
        // x^{1-p} avoids the rounding of x·(c x^{-p})/a, so the classic
        // absorbing example lands exactly on 1/2.
        let down = self.recovery_scale * x.powf(1.0 - self.recovery_power) / self.down_prob;
        let up = x * (1.0 - b) / (1.0 - self.down_prob);
        (down, up)
    }
}

impl MarkovKernel for TwoPointComplete {
    fn kind(&self) -> KernelKind {
        KernelKind::TwoPointComplete
    }

    fn atoms(&self, x: f64) -> Vec<Atom> {
        if self.is_absorbing(x) {
            return vec![Atom::new(x, 1.0)];
        }
        let (down, up) = self.locations(x);
        vec![Atom::new(down, self.down_prob), Atom::new(up, 1.0 - self.down_prob)]
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        if self.is_absorbing(x) {
            return Ok(x);
        }
        let (down, up) = self.locations(x);
        let u: f64 = rng.gen();
        Ok(if u < self.down_prob { down } else { up })
    }

    fn is_absorbing(&self, x: f64) -> bool {
        self.raw_recovery(x) >= self.down_prob
    }

    fn certificates(&self, _eps: f64) -> Vec<TailCertificate> {
        if self.recovery_power == 0.0 {
            vec![TailCertificate {
                from: 0.0,
                claim: CertificateClaim::RecoveryFloor {
                    lower: self.recovery(1.0),
                },
            }]
        } else {
            // b < a once x exceeds (scale / a)^{1/power}; b itself decays as a power.
            let from = (self.recovery_scale / self.down_prob).powf(1.0 / self.recovery_power);
            vec![TailCertificate {
                from: from.max(f64::MIN_POSITIVE),
                claim: CertificateClaim::PowerDecay {
                    scale: self.recovery_scale,
                    exponent: self.recovery_power,
                },
            }]
        }
    }

    fn as_two_point(&self) -> Option<&TwoPointComplete> {
        Some(self)
    }
}

// ---------------------------------------------------------------------------
// Multiplicative (i.i.d. return) family

/// `S_1 = x R` for a fixed discrete law of the return `R` with mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multiplicative {
    factors: Vec<Atom>,
}

impl Multiplicative {
    /// `factors` are `(ratio, weight)` pairs.
    pub fn new(factors: &[(f64, f64)]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::invalid("multiplicative kernel needs at least one factor"));
        }
        let mut atoms: Vec<Atom> = factors.iter().map(|&(r, w)| Atom::new(r, w)).collect();
        for a in &atoms {
            if !(a.location > 0.0 && a.location.is_finite()) || !(a.weight >= 0.0) {
                return Err(Error::invalid(format!("bad return factor {a:?}")));
            }
        }
        atoms.sort_by(|p, q| p.location.total_cmp(&q.location));
        let mass: f64 = atoms.iter().map(|a| a.weight).sum();
        let mean: f64 = atoms.iter().map(|a| a.weight * a.location).sum();
        if (mass - 1.0).abs() > 1e-12 || (mean - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "return factors must have mass 1 and mean 1, got mass {mass} and mean {mean}"
            )));
        }
        Ok(Self { factors: atoms })
    }

    /// `δ_x`: every state is absorbing.
    pub fn identity() -> Self {
        Self {
            factors: vec![Atom::new(1.0, 1.0)],
        }
    }

    pub fn factors(&self) -> &[Atom] {
        &self.factors
    }

    fn recovery(&self) -> f64 {
        self.factors
            .iter()
            .filter(|a| a.location < 1.0)
            .map(|a| a.weight * a.location)
            .sum()
    }
}

impl MarkovKernel for Multiplicative {
    fn kind(&self) -> KernelKind {
        KernelKind::Multiplicative
    }

    fn atoms(&self, x: f64) -> Vec<Atom> {
        self.factors
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| Atom::new(a.location * x, a.weight))
            .collect()
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        if self.is_absorbing(x) {
            return Ok(x);
        }
        sample_generic(self, x, rng)
    }

    fn is_absorbing(&self, _x: f64) -> bool {
        self.factors.iter().all(|a| a.weight == 0.0 || a.location == 1.0)
    }

    fn certificates(&self, _eps: f64) -> Vec<TailCertificate> {
        let b = self.recovery();
        if b > 0.0 {
            vec![TailCertificate {
                from: 0.0,
                claim: CertificateClaim::RecoveryFloor { lower: b },
            }]
        } else {
            Vec::new()
        }
    }
}

// ---------------------------------------------------------------------------
// Uniform split

/// Above 1: half the mass uniform on `(0, 1)` and half uniform on
/// `(2x − 1, 2x)`. At or below 1: uniform on `(0, 2x)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UniformSplit;

impl MarkovKernel for UniformSplit {
    fn kind(&self) -> KernelKind {
        KernelKind::UniformSplit
    }

    fn atoms(&self, _x: f64) -> Vec<Atom> {
        Vec::new()
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        if x > 1.0 {
            if (0.0..1.0).contains(&y) || (y > 2.0 * x - 1.0 && y < 2.0 * x) {
                0.5
            } else {
                0.0
            }
        } else if y > 0.0 && y < 2.0 * x {
            0.5 / x
        } else {
            0.0
        }
    }

    fn support_hint(&self, x: f64) -> Option<(f64, f64)> {
        Some((0.0, 2.0 * x))
    }

    fn breakpoints(&self, x: f64) -> Vec<f64> {
        if x > 1.0 {
            vec![1.0, 2.0 * x - 1.0]
        } else {
            Vec::new()
        }
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        Ok(if x > 1.0 {
            if u < 0.5 {
                v
            } else {
                2.0 * x - 1.0 + v
            }
        } else {
            2.0 * x * v
        }
        .max(f64::MIN_POSITIVE))
    }

    fn certificates(&self, eps: f64) -> Vec<TailCertificate> {
        if !(eps > 0.0 && eps < 1.0) {
            return Vec::new();
        }
        vec![TailCertificate {
            from: 1.0 / (1.0 - eps),
            claim: CertificateClaim::PowerDecay {
                scale: 0.25,
                exponent: 1.0,
            },
        }]
    }
}

// ---------------------------------------------------------------------------
// Gaussian log step

/// Volatility of the log step as a function of `u = log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaProfile {
    Constant {
        sigma: f64,
    },
    /// `σ(u) = max(floor, intercept + slope · u)`.
    Affine {
        floor: f64,
        intercept: f64,
        slope: f64,
    },
}

impl SigmaProfile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SigmaProfile::Constant { sigma } => sigma,
            SigmaProfile::Affine {
                floor,
                intercept,
                slope,
            } => floor.max(intercept + slope * u),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SigmaProfile::Constant { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            SigmaProfile::Affine {
                floor,
                intercept,
                slope,
            } if floor > 0.0 && floor.is_finite() && intercept.is_finite() && slope >= 0.0 && slope.is_finite() => {
                Ok(())
            }
            other => Err(Error::invalid(format!(
                "volatility profile {other:?} must be positive and nondecreasing"
            ))),
        }
    }
}

/// `S_1 = x exp(σ Z − σ²/2)` with `σ = σ(log x)` and `Z` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLogStep {
    sigma: SigmaProfile,
}

impl GaussianLogStep {
    pub fn new(sigma: SigmaProfile) -> Result<Self> {
        sigma.validate()?;
        Ok(Self { sigma })
    }

    pub fn sigma_at(&self, x: f64) -> f64 {
        self.sigma.eval(x.ln())
    }

    pub fn profile(&self) -> SigmaProfile {
        self.sigma
    }
}

impl MarkovKernel for GaussianLogStep {
    fn kind(&self) -> KernelKind {
        KernelKind::GaussianLogStep
    }

    fn atoms(&self, _x: f64) -> Vec<Atom> {
        Vec::new()
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let s = self.sigma_at(x);
        let z = ((y / x).ln() + 0.5 * s * s) / s;
        crate::special::normal_pdf(z) / (s * y)
    }

    fn support_hint(&self, x: f64) -> Option<(f64, f64)> {
        // Symmetric in log space around 0, wide enough that both the mass
        // and the mean-weighted law lose less than Φ(−12).
        let s = self.sigma_at(x);
        let half = (0.5 * s * s + GAUSS_WINDOW * s).min(700.0);
        Some((x * (-half).exp(), x * half.exp()))
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        let s = self.sigma_at(x);
        let z: f64 = StandardNormal.sample(rng);
        let y = x * (s * z - 0.5 * s * s).exp();
        if y > 0.0 && y.is_finite() {
            Ok(y)
        } else {
            Err(Error::DegenerateModel(format!(
                "log step from {x} left the float range"
            )))
        }
    }

    fn certificates(&self, eps: f64) -> Vec<TailCertificate> {
        match self.sigma {
            SigmaProfile::Constant { sigma } => vec![TailCertificate {
                from: 0.0,
                claim: CertificateClaim::RecoveryFloor {
                    lower: normal_cdf(-0.5 * sigma),
                },
            }],
            SigmaProfile::Affine {
                floor,
                intercept,
                slope,
            } if slope > 0.0 => {
                // Past the point where σ ≥ max(1, floor):
                // b_ε ≤ Φ(ln(1+ε)/σ_min − σ/2) with σ/2 affine in ln x.
                let sigma_min = floor.max(1.0);
                let u0 = (sigma_min - intercept) / slope;
                vec![TailCertificate {
                    from: u0.exp(),
                    claim: CertificateClaim::GaussianDecay {
                        slope: 0.5 * slope,
                        offset: 0.5 * intercept - (1.0 + eps).ln() / sigma_min,
                    },
                }]
            }
            SigmaProfile::Affine { floor, .. } => vec![TailCertificate {
                from: 0.0,
                claim: CertificateClaim::RecoveryFloor {
                    lower: normal_cdf(-0.5 * floor),
                },
            }],
        }
    }
}

// ---------------------------------------------------------------------------
// Kernels given by their part on or above the diagonal

/// The part of a kernel living on `[x, ∞)`.
///
/// `a`, `b` and the default-function operator only see this part. The
/// [`Completed`] wrapper adds the single atom below `x` that restores total
/// mass 1 and mean `x`.
pub trait UpperPart: Send + Sync + fmt::Debug {
    fn kind(&self) -> KernelKind;

    /// Density at `y ≥ x`.
    fn density(&self, x: f64, y: f64) -> f64;

    /// Upper end of the support, up to the truncation tolerance.
    fn upper_end(&self, x: f64) -> f64;

    fn breakpoints(&self, _x: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Mass and mean `(∫ k dy, ∫ y k dy)` over `[x, ∞)`.
    fn moments(&self, x: f64) -> (f64, f64);

    /// Exact draw from the upper part conditioned on `S_1 ≥ x`, when the
    /// family has one.
    fn sample_up(&self, _x: f64, _rng: &mut dyn RngCore) -> Option<f64> {
        None
    }

    fn has_exact_sampler(&self) -> bool {
        false
    }

    fn contraction_bounds(&self) -> Option<ContractionBounds> {
        None
    }
}

/// An [`UpperPart`] plus the atom `y* = (x − mean_up)/(1 − mass_up)` below the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Completed<U> {
    upper: U,
}

impl<U: UpperPart> Completed<U> {
    pub fn new(upper: U) -> Self {
        Self { upper }
    }

    pub fn upper(&self) -> &U {
        &self.upper
    }

    fn down_atom(&self, x: f64) -> Option<Atom> {
        let (mass, mean) = self.upper.moments(x);
        let rest = 1.0 - mass;
        if rest <= 1e-15 {
            return None;
        }
        Some(Atom::new(((x - mean) / rest).max(f64::MIN_POSITIVE), rest))
    }
}

impl<U: UpperPart> MarkovKernel for Completed<U> {
    fn kind(&self) -> KernelKind {
        self.upper.kind()
    }

    fn atoms(&self, x: f64) -> Vec<Atom> {
        self.down_atom(x).into_iter().collect()
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        if y >= x {
            self.upper.density(x, y)
        } else {
            0.0
        }
    }

    fn support_hint(&self, x: f64) -> Option<(f64, f64)> {
        Some((x, self.upper.upper_end(x)))
    }

    fn breakpoints(&self, x: f64) -> Vec<f64> {
        self.upper.breakpoints(x)
    }

    fn sample_step(&self, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        if !self.upper.has_exact_sampler() {
            return sample_generic(self, x, rng);
        }
        if let Some(atom) = self.down_atom(x) {
            let u: f64 = rng.gen();
            if u < atom.weight {
                return Ok(atom.location);
            }
        }
        self.upper
            .sample_up(x, rng)
            .ok_or(Error::Support { x, u: f64::NAN })
    }

    fn contraction_bounds(&self) -> Option<ContractionBounds> {
        self.upper.contraction_bounds()
    }
}

/// Upper density `2/(3(x+1))` on `[x, 2x]`, so `a(x) = (x+3)/(3x+3)` and
/// `x b(x) = x/(x+1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineDrop;

impl AffineDrop {
    pub fn kernel() -> Completed<Self> {
        Completed::new(Self)
    }
}

impl UpperPart for AffineDrop {
    fn kind(&self) -> KernelKind {
        KernelKind::AffineDrop
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        if y >= x && y <= 2.0 * x {
            2.0 / (3.0 * (x + 1.0))
        } else {
            0.0
        }
    }

    fn upper_end(&self, x: f64) -> f64 {
        2.0 * x
    }

    fn moments(&self, x: f64) -> (f64, f64) {
        (2.0 * x / (3.0 * (x + 1.0)), x * x / (x + 1.0))
    }

    fn sample_up(&self, x: f64, rng: &mut dyn RngCore) -> Option<f64> {
        let v: f64 = rng.gen();
        Some(x * (1.0 + v))
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn contraction_bounds(&self) -> Option<ContractionBounds> {
        Some(ContractionBounds {
            alpha: 1.0 / 3.0,
            beta: 1.0,
        })
    }
}

/// Upper density
/// `(e/2) (1 − e^{−x})/(1 − e^{−y}) · (1/x) e^{−y/x}` on `[x, ∞)`.
///
/// Its default function is `x (1 − e^{−x})`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExponentialRatio;

/// `∫_0^∞ e^{−s}/(1+s) ds`.
const GOMPERTZ: f64 = 0.596_347_362_323_194_074_341_078_499_369_279_376_074_177_860_152_548_781_573_484_910_482_327_219_114_874_005_184_739_279;

const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

impl ExponentialRatio {
    pub fn kernel() -> Completed<Self> {
        Completed::new(Self)
    }

    /// `(Σ_{n≥0} g(nx), Σ_{n≥0} h(nx))` with `g(s) = e^{−s}/(1+s)` and
    /// `h(s) = e^{−s}(1/(1+s) + 1/(1+s)²)`.
    fn series(x: f64) -> (f64, f64) {
        if x > 0.1 {
            let q = (-x).exp();
            let mut decay = 1.0;
            let (mut sg, mut sh) = (0.0, 0.0);
            let mut n = 0.0;
            while decay > 1e-18 {
                let inv = 1.0 / (1.0 + n * x);
                sg += decay * inv;
                sh += decay * (inv + inv * inv);
                decay *= q;
                n += 1.0;
            }
            (sg, sh)
        } else {
            Self::euler_maclaurin(x)
        }
    }

    pub(super) fn euler_maclaurin(x: f64) -> (f64, f64) {
        // Taylor coefficients of g and h at 0 up to order 13.
        let mut inv_fact = [0.0; 14];
        inv_fact[0] = 1.0;
        for k in 1..14 {
            inv_fact[k] = inv_fact[k - 1] / k as f64;
        }
        let coeff = |k: usize| -> (f64, f64) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let g: f64 = (0..=k).map(|j| inv_fact[j]).sum();
            let h2: f64 = (0..=k).map(|j| (k - j + 1) as f64 * inv_fact[j]).sum();
            (sign * g, sign * (g + h2))
        };
        let mut sg = GOMPERTZ / x + 0.5;
        let mut sh = 1.0 / x + 1.0;
        let mut power = x;
        for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
            let order = 2 * j + 1;
            let (cg, ch) = coeff(order);
            let factor = b * power / (order + 1) as f64;
            sg -= factor * cg;
            sh -= factor * ch;
            power *= x * x;
        }
        (sg, sh)
    }
}

impl UpperPart for ExponentialRatio {
    fn kind(&self) -> KernelKind {
        KernelKind::ExponentialRatio
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        if y < x {
            return 0.0;
        }
        0.5 * E * (-(-x).exp_m1()) / (-(-y).exp_m1()) / x * (-y / x).exp()
    }

    fn upper_end(&self, x: f64) -> f64 {
        48.0 * x
    }

    fn moments(&self, x: f64) -> (f64, f64) {
        let (sg, sh) = Self::series(x);
        let front = -0.5 * (-x).exp_m1();
        (front * sg, front * x * sh)
    }

    fn sample_up(&self, x: f64, rng: &mut dyn RngCore) -> Option<f64> {
        // Shifted exponential proposal, accepted with probability
        // (1 − e^{−x})/(1 − e^{−y}) ≤ 1.
        let top = -(-x).exp_m1();
        loop {
            let e: f64 = Exp1.sample(rng);
            let y = x + x * e;
            let u: f64 = rng.gen();
            if u * -(-y).exp_m1() < top {
                return Some(y);
            }
        }
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn contraction_bounds(&self) -> Option<ContractionBounds> {
        Some(ContractionBounds {
            alpha: 0.5,
            beta: (-1.0_f64).exp(),
        })
    }
}

// ---------------------------------------------------------------------------
// Tabulated upper part

/// One tabulated state: the upper density in ratio form `g(r) = x k(x, x r)`
/// on nodes `r_0 ≥ 1 < r_1 < …`, linear between nodes.
#[derive(Debug, Clone, PartialEq)]
struct TabRow {
    x: f64,
    ratios: Vec<f64>,
    values: Vec<f64>,
    mass: f64,
    mean_ratio: f64,
}

impl TabRow {
    fn new(x: f64, ratios: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mut mass = 0.0;
        let mut mean_ratio = 0.0;
        for i in 1..ratios.len() {
            let (r0, r1) = (ratios[i - 1], ratios[i]);
            let (g0, g1) = (values[i - 1], values[i]);
            mass += 0.5 * (r1 - r0) * (g0 + g1);
            mean_ratio += (r1 - r0) / 6.0 * (r0 * (2.0 * g0 + g1) + r1 * (g0 + 2.0 * g1));
        }
        if !(mass < 1.0) {
            return Err(Error::InvalidKernel {
                x,
                reason: format!("tabulated mass on or above the diagonal is {mass}, must be below 1"),
            });
        }
        if !(mean_ratio < 1.0) {
            return Err(Error::InvalidKernel {
                x,
                reason: format!("tabulated mean on or above the diagonal is {mean_ratio}·x, must be below x"),
            });
        }
        Ok(Self {
            x,
            ratios,
            values,
            mass,
            mean_ratio,
        })
    }

    fn eval(&self, r: f64) -> f64 {
        let n = self.ratios.len();
        if n < 2 || r < self.ratios[0] || r > self.ratios[n - 1] {
            return 0.0;
        }
        let i = self.ratios.partition_point(|&q| q <= r).clamp(1, n - 1);
        let (r0, r1) = (self.ratios[i - 1], self.ratios[i]);
        let t = (r - r0) / (r1 - r0);
        self.values[i - 1] + t * (self.values[i] - self.values[i - 1])
    }
}

/// User-supplied upper part, read from a `(x, y, k)` table.
///
/// Between tabulated states the ratio-form density is interpolated linearly
/// in `log x`; outside the tabulated range the nearest row is used.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedUpper {
    rows: Vec<TabRow>,
}

#[derive(Debug, Deserialize)]
struct TableRecord {
    x: f64,
    y: f64,
    k: f64,
}

impl TabulatedUpper {
    /// Builds the table from `(x, y, k)` triples. Entries with `y < x` must
    /// be zero: the sub-diagonal part is supplied by the completion atom.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        let mut sorted: Vec<(f64, f64, f64)> = triples.to_vec();
        for &(x, y, k) in &sorted {
            if !(x > 0.0 && x.is_finite() && y > 0.0 && y.is_finite() && k >= 0.0 && k.is_finite()) {
                return Err(Error::invalid(format!("bad table entry (x={x}, y={y}, k={k})")));
            }
            if y < x && k > 0.0 {
                return Err(Error::InvalidKernel {
                    x,
                    reason: format!("density {k} at y = {y} below the diagonal; tabulate only y ≥ x"),
                });
            }
        }
        sorted.retain(|&(x, y, _)| y >= x);
        sorted.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        let mut rows = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let x = sorted[i].0;
            let mut ratios = Vec::new();
            let mut values = Vec::new();
            while i < sorted.len() && sorted[i].0 == x {
                let (_, y, k) = sorted[i];
                if ratios.last() == Some(&(y / x)) {
                    return Err(Error::InvalidKernel {
                        x,
                        reason: format!("duplicate table entry at y = {y}"),
                    });
                }
                ratios.push(y / x);
                values.push(x * k);
                i += 1;
            }
            if ratios.len() < 2 {
                return Err(Error::InvalidKernel {
                    x,
                    reason: "each tabulated state needs at least two y nodes".into(),
                });
            }
            rows.push(TabRow::new(x, ratios, values)?);
        }
        if rows.is_empty() {
            return Err(Error::invalid("kernel table has no entries on or above the diagonal"));
        }
        Ok(Self { rows })
    }

    /// Reads CSV with header `x,y,k`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut triples = Vec::new();
        for rec in rdr.deserialize() {
            let rec: TableRecord = rec?;
            triples.push((rec.x, rec.y, rec.k));
        }
        Self::from_triples(&triples)
    }

    pub fn kernel(self) -> Completed<Self> {
        Completed::new(self)
    }

    /// Neighbouring rows and the weight of the upper one.
    fn bracket(&self, x: f64) -> (&TabRow, &TabRow, f64) {
        let n = self.rows.len();
        if x <= self.rows[0].x {
            return (&self.rows[0], &self.rows[0], 0.0);
        }
        if x >= self.rows[n - 1].x {
            return (&self.rows[n - 1], &self.rows[n - 1], 0.0);
        }
        let i = self.rows.partition_point(|r| r.x <= x).clamp(1, n - 1);
        let (lo, hi) = (&self.rows[i - 1], &self.rows[i]);
        let t = (x / lo.x).ln() / (hi.x / lo.x).ln();
        (lo, hi, t)
    }
}

impl UpperPart for TabulatedUpper {
    fn kind(&self) -> KernelKind {
        KernelKind::UserDefined
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let (lo, hi, t) = self.bracket(x);
        let r = y / x;
        ((1.0 - t) * lo.eval(r) + t * hi.eval(r)) / x
    }

    fn upper_end(&self, x: f64) -> f64 {
        let (lo, hi, _) = self.bracket(x);
        x * lo
            .ratios
            .last()
            .copied()
            .unwrap_or(1.0)
            .max(hi.ratios.last().copied().unwrap_or(1.0))
    }

    fn breakpoints(&self, x: f64) -> Vec<f64> {
        let (lo, hi, _) = self.bracket(x);
        let mut pts: Vec<f64> = lo.ratios.iter().chain(hi.ratios.iter()).map(|r| r * x).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn moments(&self, x: f64) -> (f64, f64) {
        let (lo, hi, t) = self.bracket(x);
        let mass = (1.0 - t) * lo.mass + t * hi.mass;
        let mean = (1.0 - t) * lo.mean_ratio + t * hi.mean_ratio;
        (mass, x * mean)
    }
}
