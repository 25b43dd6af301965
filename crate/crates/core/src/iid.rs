//! Products of independent mean-one returns, `S_k = X_1 ⋯ X_k`.
//!
//! With `a_k = P[X_k < 1]` and `b_k = E[X_k 1{X_k < 1}]`, `S` is a bubble
//! exactly when `Σ a_k = ∞` and `Σ b_k < ∞`. Series behaviour is never
//! read off partial sums: verdicts come from declared closed-form bounds on
//! `a_k` and `b_k`, which are checked term by term on a finite prefix.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Atom, Verdict};
use crate::montecarlo::PathModel;
use crate::special::normal_cdf;

/// Tolerance on `E[X_k] = 1` and on bound checks.
const MEAN_TOL: f64 = 1e-12;

/// Law of the return `X_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReturnLaw {
    /// `X_k = 1/k` with probability `1/k`, otherwise `1 + 1/k`.
    HarmonicDrops {},
    /// The same discrete law at every step, as `(value, probability)`.
    Stationary { factors: Vec<(f64, f64)> },
    /// `X_k = depth` with probability `rate^k`, otherwise the up value that
    /// keeps the mean at 1.
    GeometricDrops { rate: f64, depth: f64 },
    /// `X_k = exp(σ Z − σ²/2)` with `Z` standard normal, at every step.
    LogNormal { sigma: f64 },
}

/// A closed-form sequence `k ↦ u_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeriesBound {
    /// `scale · k^{−exponent}`.
    Power {
        scale: f64,
        exponent: f64,
    },
    /// `scale · ratio^k`.
    Geometric {
        scale: f64,
        ratio: f64,
    },
    Constant {
        value: f64,
    },
}

impl SeriesBound {
    pub fn eval(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            SeriesBound::Power { scale, exponent } => scale * k.powf(-exponent),
            SeriesBound::Geometric { scale, ratio } => scale * ratio.powf(k),
            SeriesBound::Constant { value } => value,
        }
    }

    /// Whether `Σ u_k < ∞`.
    pub fn summable(&self) -> bool {
        match *self {
            SeriesBound::Power { scale, exponent } => scale == 0.0 || exponent > 1.0,
            SeriesBound::Geometric { scale, ratio } => scale == 0.0 || (0.0..1.0).contains(&ratio),
            SeriesBound::Constant { value } => value == 0.0,
        }
    }

    /// An upper bound on `Σ_{k > n} u_k` for nonnegative summable bounds.
    pub fn tail_sum(&self, n: usize) -> Option<f64> {
        if !self.summable() {
            return None;
        }
        let n = n.max(1) as f64;
        Some(match *self {
            SeriesBound::Power { scale, exponent } if scale != 0.0 => scale * n.powf(1.0 - exponent) / (exponent - 1.0),
            SeriesBound::Geometric { scale, ratio } if scale != 0.0 => scale * ratio.powf(n + 1.0) / (1.0 - ratio),
            _ => 0.0,
        })
    }
}

/// `u_k ≤ value` or `u_k ≥ value` for every `k ≥ from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "direction", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeriesClaim {
    AtLeast { from: usize, bound: SeriesBound },
    AtMost { from: usize, bound: SeriesBound },
}

impl SeriesClaim {
    fn from(&self) -> usize {
        match *self {
            SeriesClaim::AtLeast { from, .. } | SeriesClaim::AtMost { from, .. } => from.max(1),
        }
    }

    fn bound(&self) -> SeriesBound {
        match *self {
            SeriesClaim::AtLeast { bound, .. } | SeriesClaim::AtMost { bound, .. } => bound,
        }
    }

    /// `Some(true)` when the claim proves divergence, `Some(false)` when it
    /// proves convergence.
    fn decides_divergence(&self) -> Option<bool> {
        match *self {
            SeriesClaim::AtLeast { bound, .. } if !bound.summable() => Some(true),
            SeriesClaim::AtMost { bound, .. } if bound.summable() => Some(false),
            _ => None,
        }
    }

    fn check(&self, k: usize, observed: f64) -> Result<()> {
        let claimed = self.bound().eval(k);
        let slack = MEAN_TOL * claimed.abs().max(1.0);
        let ok = match self {
            SeriesClaim::AtLeast { .. } => observed >= claimed - slack,
            SeriesClaim::AtMost { .. } => observed <= claimed + slack,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::CertificateRejected {
                at: k as f64,
                claimed,
                observed,
            })
        }
    }
}

/// Declared tail behaviour of `a_k` and `b_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailDeclaration {
    #[serde(default)]
    pub down_prob: Option<SeriesClaim>,
    #[serde(default)]
    pub recovery: Option<SeriesClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidReturnModel {
    pub law: ReturnLaw,
    /// Overrides the law's built-in declaration when present.
    #[serde(default)]
    pub declared: Option<TailDeclaration>,
}

impl IidReturnModel {
    pub fn new(law: ReturnLaw) -> Result<Self> {
        let model = Self { law, declared: None };
        model.validate_law()?;
        Ok(model)
    }

    pub fn with_declaration(mut self, declared: TailDeclaration) -> Self {
        self.declared = Some(declared);
        self
    }

    /// The bubble example: drops to `1/k` with probability `1/k`.
    pub fn harmonic_drops() -> Self {
        Self {
            law: ReturnLaw::HarmonicDrops {},
            declared: None,
        }
    }

    /// I.i.d. binomial returns `3/2` or `1/2` with equal probability.
    pub fn binomial_half() -> Self {
        Self {
            law: ReturnLaw::Stationary {
                factors: vec![(0.5, 0.5), (1.5, 0.5)],
            },
            declared: None,
        }
    }

    fn validate_law(&self) -> Result<()> {
        match &self.law {
            ReturnLaw::HarmonicDrops {} => Ok(()),
            ReturnLaw::Stationary { factors } => {
                let atoms = stationary_atoms(factors)?;
                if atoms.iter().all(|a| a.location == 1.0) {
                    return Err(Error::DegenerateModel("returns equal 1 surely".into()));
                }
                Ok(())
            }
            ReturnLaw::GeometricDrops { rate, depth } => {
                if !(*rate > 0.0 && *rate < 1.0 && (0.0..1.0).contains(depth)) {
                    return Err(Error::invalid(format!(
                        "geometric drops need rate in (0, 1) and depth in [0, 1), got {rate} and {depth}"
                    )));
                }
                Ok(())
            }
            ReturnLaw::LogNormal { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
                }
                Ok(())
            }
        }
    }

    /// Atoms of `X_k` for discrete laws.
    pub fn factor_atoms(&self, k: usize) -> Option<Vec<Atom>> {
        let k = k.max(1);
        match &self.law {
            ReturnLaw::HarmonicDrops {} => {
                let kf = k as f64;
                if k == 1 {
                    Some(vec![Atom {
                        location: 1.0,
                        weight: 1.0,
                    }])
                } else {
                    Some(vec![
                        Atom {
                            location: 1.0 / kf,
                            weight: 1.0 / kf,
                        },
                        Atom {
                            location: 1.0 + 1.0 / kf,
                            weight: 1.0 - 1.0 / kf,
                        },
                    ])
                }
            }
            ReturnLaw::Stationary { factors } => stationary_atoms(factors).ok(),
            ReturnLaw::GeometricDrops { rate, depth } => {
                let q = rate.powi(k as i32);
                Some(vec![
                    Atom {
                        location: *depth,
                        weight: q,
                    },
                    Atom {
                        location: (1.0 - depth * q) / (1.0 - q),
                        weight: 1.0 - q,
                    },
                ])
            }
            ReturnLaw::LogNormal { .. } => None,
        }
    }

    /// `a_k = P[X_k < 1]`.
    pub fn down_prob(&self, k: usize) -> f64 {
        match (&self.law, self.factor_atoms(k)) {
            (_, Some(atoms)) => atoms.iter().filter(|a| a.location < 1.0).map(|a| a.weight).sum(),
            (ReturnLaw::LogNormal { sigma }, None) => normal_cdf(sigma / 2.0),
            _ => unreachable!("every law without atoms is log-normal"),
        }
    }

    /// `b_k = E[X_k 1{X_k < 1}]`.
    pub fn recovery(&self, k: usize) -> f64 {
        match (&self.law, self.factor_atoms(k)) {
            (_, Some(atoms)) => atoms
                .iter()
                .filter(|a| a.location < 1.0)
                .map(|a| a.weight * a.location)
                .sum(),
            (ReturnLaw::LogNormal { sigma }, None) => normal_cdf(-sigma / 2.0),
            _ => unreachable!("every law without atoms is log-normal"),
        }
    }

    /// Checks `E[X_k] = 1` and `0 ≤ b_k ≤ a_k < 1` for `k = 1, …, upto`.
    pub fn validate(&self, upto: usize) -> Result<()> {
        self.validate_law()?;
        for k in 1..=upto.max(1) {
            if let Some(atoms) = self.factor_atoms(k) {
                let mass: f64 = atoms.iter().map(|a| a.weight).sum();
                let mean: f64 = atoms.iter().map(|a| a.weight * a.location).sum();
                if (mass - 1.0).abs() > MEAN_TOL || (mean - 1.0).abs() > MEAN_TOL {
                    return Err(Error::invalid(format!("return {k} has mass {mass} and mean {mean}")));
                }
            }
            let (a, b) = (self.down_prob(k), self.recovery(k));
            if a >= 1.0 {
                return Err(Error::DegenerateModel(format!("return {k} is below 1 surely")));
            }
            if !(b >= 0.0 && b <= a + MEAN_TOL) {
                return Err(Error::invalid(format!("return {k} has b = {b} outside [0, a = {a}]")));
            }
        }
        Ok(())
    }

    /// Closed-form statements known for the law.
    pub fn builtin_declaration(&self) -> TailDeclaration {
        match &self.law {
            ReturnLaw::HarmonicDrops {} => TailDeclaration {
                down_prob: Some(SeriesClaim::AtLeast {
                    from: 2,
                    bound: SeriesBound::Power {
                        scale: 1.0,
                        exponent: 1.0,
                    },
                }),
                recovery: Some(SeriesClaim::AtMost {
                    from: 1,
                    bound: SeriesBound::Power {
                        scale: 1.0,
                        exponent: 2.0,
                    },
                }),
            },
            ReturnLaw::GeometricDrops { rate, depth } => TailDeclaration {
                down_prob: Some(SeriesClaim::AtMost {
                    from: 1,
                    bound: SeriesBound::Geometric {
                        scale: 1.0,
                        ratio: *rate,
                    },
                }),
                recovery: Some(SeriesClaim::AtMost {
                    from: 1,
                    bound: SeriesBound::Geometric {
                        scale: *depth,
                        ratio: *rate,
                    },
                }),
            },
            ReturnLaw::Stationary { .. } | ReturnLaw::LogNormal { .. } => TailDeclaration {
                down_prob: Some(SeriesClaim::AtLeast {
                    from: 1,
                    bound: SeriesBound::Constant {
                        value: self.down_prob(1),
                    },
                }),
                recovery: Some(SeriesClaim::AtLeast {
                    from: 1,
                    bound: SeriesBound::Constant {
                        value: self.recovery(1),
                    },
                }),
            },
        }
    }

    fn declaration(&self) -> TailDeclaration {
        self.declared.unwrap_or_else(|| self.builtin_declaration())
    }

    /// Draws `X_k`.
    pub fn sample_factor(&self, k: usize, rng: &mut dyn RngCore) -> f64 {
        match (&self.law, self.factor_atoms(k)) {
            (_, Some(atoms)) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for atom in &atoms {
                    acc += atom.weight;
                    if u < acc {
                        return atom.location;
                    }
                }
                atoms.last().map_or(1.0, |a| a.location)
            }
            (ReturnLaw::LogNormal { sigma }, None) => {
                let z: f64 = rng.sample(StandardNormal);
                (sigma * z - sigma * sigma / 2.0).exp()
            }
            _ => unreachable!("every law without atoms is log-normal"),
        }
    }
}

fn stationary_atoms(factors: &[(f64, f64)]) -> Result<Vec<Atom>> {
    if factors.is_empty() {
        return Err(Error::invalid("stationary law needs at least one factor"));
    }
    let atoms: Vec<Atom> = factors
        .iter()
        .map(|&(location, weight)| Atom { location, weight })
        .collect();
    if atoms
        .iter()
        .any(|a| !(a.location >= 0.0 && a.location.is_finite() && a.weight >= 0.0))
    {
        return Err(Error::invalid(
            "factors need nonnegative finite values and probabilities",
        ));
    }
    let mass: f64 = atoms.iter().map(|a| a.weight).sum();
    let mean: f64 = atoms.iter().map(|a| a.weight * a.location).sum();
    if (mass - 1.0).abs() > MEAN_TOL || (mean - 1.0).abs() > MEAN_TOL {
        return Err(Error::invalid(format!(
            "factors have mass {mass} and mean {mean}, need 1 and 1"
        )));
    }
    Ok(atoms)
}

impl PathModel for IidReturnModel {
    fn step(&self, step: usize, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(x * self.sample_factor(step, rng))
    }

    fn absorbed(&self, _step: usize, x: f64) -> bool {
        x == 0.0
    }

    fn label(&self) -> String {
        match self.law {
            ReturnLaw::HarmonicDrops {} => "iid-harmonic-drops",
            ReturnLaw::Stationary { .. } => "iid-stationary",
            ReturnLaw::GeometricDrops { .. } => "iid-geometric-drops",
            ReturnLaw::LogNormal { .. } => "iid-log-normal",
        }
        .to_string()
    }
}

/// Which part of the summability criterion decided the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IidBranch {
    /// `Σ a_k = ∞` and `Σ b_k < ∞`.
    DivergentDownConvergentRecovery,
    /// `Σ b_k = ∞`.
    DivergentRecovery,
    /// `Σ a_k < ∞`: uniformly integrable by Kakutani's theorem.
    Kakutani,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IidVerdict {
    pub verdict: Verdict,
    pub branch: IidBranch,
    pub terms_checked: usize,
    pub partial_sum_down: f64,
    pub partial_sum_recovery: f64,
}

/// Checks the declared bounds on `a_k` and `b_k` for `k ≤ partial_n` and
/// classifies the product.
pub fn iid_bubble_check(model: &IidReturnModel, partial_n: usize) -> Result<IidVerdict> {
    if partial_n == 0 {
        return Err(Error::invalid("need at least one term to check"));
    }
    model.validate(partial_n)?;
    let declared = model.declaration();
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    for k in 1..=partial_n {
        let (a, b) = (model.down_prob(k), model.recovery(k));
        sum_a += a;
        sum_b += b;
        for (claim, observed) in [(declared.down_prob, a), (declared.recovery, b)] {
            if let Some(claim) = claim {
                if k >= claim.from() {
                    claim.check(k, observed)?;
                }
            }
        }
    }
    let down = declared.down_prob.and_then(|c| c.decides_divergence());
    let recovery = declared.recovery.and_then(|c| c.decides_divergence());
    let (verdict, branch) = match (down, recovery) {
        (_, Some(true)) => (Verdict::NoBubble, IidBranch::DivergentRecovery),
        (Some(false), _) => (Verdict::NoBubble, IidBranch::Kakutani),
        (Some(true), Some(false)) => (Verdict::Bubble, IidBranch::DivergentDownConvergentRecovery),
        _ => (Verdict::Indeterminate, IidBranch::Undetermined),
    };
    Ok(IidVerdict {
        verdict,
        branch,
        terms_checked: partial_n,
        partial_sum_down: sum_a,
        partial_sum_recovery: sum_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProduct {
    /// `∏_{ℓ=start}^{end} (1 − b_ℓ)`.
    pub value: f64,
    pub log_value: f64,
    /// A lower bound on the infinite product, from a summable declared
    /// bound on `b_ℓ`.
    pub limit_lower: Option<f64>,
}

/// `∏_{ℓ=start}^{end} (1 − b_ℓ)` in log space.
pub fn survival_product(model: &IidReturnModel, start: usize, end: usize) -> Result<SurvivalProduct> {
    let start = start.max(1);
    let mut log_value = 0.0;
    for l in start..=end {
        let b = model.recovery(l);
        if b >= 1.0 {
            return Err(Error::DegenerateModel(format!("b_{l} = {b} leaves nothing to survive")));
        }
        log_value += (-b).ln_1p();
    }
    // ln(1 − t) ≥ −t/(1 − t), applied with the bound's largest tail value.
    let limit_lower = match model.declaration().recovery {
        Some(claim @ SeriesClaim::AtMost { bound, .. }) if claim.from() <= end + 1 => {
            let first = end.max(start - 1) + 1;
            let largest = bound.eval(first);
            bound
                .tail_sum(first - 1)
                .filter(|_| largest < 1.0)
                .map(|tail| (log_value - tail / (1.0 - largest)).exp())
        }
        _ => None,
    };
    Ok(SurvivalProduct {
        value: log_value.exp(),
        log_value,
        limit_lower,
    })
}

/// `∏_{k=1}^{n} term(k)` for terms in `(0, 1]`, accumulated in log space.
pub fn partial_products(n: usize, term: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut log = 0.0;
    (1..=n)
        .map(|k| {
            log += term(k).ln();
            log.exp()
        })
        .collect()
}

/// `∏_{k=1}^{n} Φ(√k / 2)`, the probability that a geometric Brownian
/// motion sampled at times `1, 3, 6, 10, …` never increases.
pub fn appendix_product(n: usize) -> f64 {
    appendix_partial_products(n).last().copied().unwrap_or(1.0)
}

/// The partial products of [`appendix_product`] for `1, …, n`.
pub fn appendix_partial_products(n: usize) -> Vec<f64> {
    let mut log = 0.0;
    (1..=n)
        .map(|k| {
            // Φ(t) = 1 − Φ(−t), with the complement taken from erfc so the
            // terms near 1 keep full relative precision.
            log += (-normal_cdf(-(k as f64).sqrt() / 2.0)).ln_1p();
            log.exp()
        })
        .collect()
}
