//! Certificate-driven bubble classification for Markov kernels.
//!
//! Tail behaviour of `b` cannot be decided from finitely many evaluations,
//! so a verdict is only issued when a closed-form bound (a certificate) has
//! been supplied, either by the kernel family or by the caller, and checked
//! against the numerically computed diagnostics on a tail grid.

use serde::{Deserialize, Serialize};

use super::{probability_down, relative_recovery, MarkovKernel};
use crate::error::{Error, Result};
use crate::special::{normal_cdf, normal_tail_integral};

/// Absolute slack allowed when checking a certificate against quadrature.
const CHECK_SLACK: f64 = 1e-9;

/// Closed-form statement about the recovery on `[from, ∞)`.
///
/// Decay claims bound `b_ε` from above (for the two-point family, `b`);
/// the floor claim bounds `b` from below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCertificate {
    pub from: f64,
    pub claim: CertificateClaim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CertificateClaim {
    /// `b(x) ≥ lower`.
    RecoveryFloor { lower: f64 },
    /// `b_ε(x) ≤ scale · x^{−exponent}`.
    PowerDecay { scale: f64, exponent: f64 },
    /// `b_ε(x) ≤ Φ(−(slope · ln x + offset))`.
    GaussianDecay { slope: f64, offset: f64 },
}

impl TailCertificate {
    fn is_decay(&self) -> bool {
        !matches!(self.claim, CertificateClaim::RecoveryFloor { .. })
    }

    /// The claimed bound at `x`.
    pub fn bound(&self, x: f64) -> f64 {
        match self.claim {
            CertificateClaim::RecoveryFloor { lower } => lower,
            CertificateClaim::PowerDecay { scale, exponent } => scale * x.powf(-exponent),
            CertificateClaim::GaussianDecay { slope, offset } => normal_cdf(-(slope * x.ln() + offset)),
        }
    }

    /// `∫_{ln start}^∞ bound(e^u) du` when the claim makes it finite.
    pub fn tail_integral(&self, start: f64) -> Option<f64> {
        let start = start.max(self.from);
        if !(start > 0.0) {
            return None;
        }
        match self.claim {
            CertificateClaim::RecoveryFloor { .. } => None,
            CertificateClaim::PowerDecay { scale, exponent } if exponent > 0.0 => {
                Some(scale * start.powf(-exponent) / exponent)
            }
            CertificateClaim::GaussianDecay { slope, offset } if slope > 0.0 => {
                Some(normal_tail_integral(slope * start.ln() + offset) / slope)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.claim {
            CertificateClaim::RecoveryFloor { lower } => lower.is_finite() && lower >= 0.0,
            CertificateClaim::PowerDecay { scale, exponent } => {
                scale.is_finite() && scale >= 0.0 && exponent.is_finite()
            }
            CertificateClaim::GaussianDecay { slope, offset } => slope.is_finite() && offset.is_finite(),
        };
        if ok && self.from >= 0.0 && self.from.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("malformed certificate {self:?}")))
        }
    }
}

/// Log-spaced probe points `lo = x_1 < … < x_n = hi` covering the tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

impl Default for TailGrid {
    fn default() -> Self {
        Self {
            lo: 1.0,
            hi: 1e6,
            nodes: 61,
        }
    }
}

impl TailGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite() && self.nodes >= 2) {
            return Err(Error::invalid(format!("bad tail grid {self:?}")));
        }
        let step = (self.hi / self.lo).ln() / (self.nodes - 1) as f64;
        Ok((0..self.nodes)
            .map(|i| {
                if i + 1 == self.nodes {
                    self.hi
                } else {
                    self.lo * (step * i as f64).exp()
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    pub eps: f64,
    pub tail: TailGrid,
    /// Lower end of the region where the caller asserts `a > 0`.
    pub x_a: Option<f64>,
    /// Caller-supplied certificates, checked before use.
    pub certificates: Vec<TailCertificate>,
    /// Also use the closed-form certificates known for the kernel family.
    pub builtin_certificates: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            eps: 0.5,
            tail: TailGrid::default(),
            x_a: None,
            certificates: Vec::new(),
            builtin_certificates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bubble,
    NoBubble,
    Indeterminate,
}

/// Which criterion produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// `liminf b > 0`: no bubble.
    RecoveryFloor,
    /// `b_ε` eventually nonincreasing with `∫ b_ε(e^u) du < ∞`: bubble.
    IntegrableRecovery,
    /// Two-point family: bubble iff `∫ b(e^u) du < ∞`.
    TwoPointIntegral,
    /// Summability of `a_k` and `b_k` for independent returns.
    IndependentReturns,
    None,
}

/// Numbers behind a verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub min_b_on_tail: f64,
    pub min_a_on_tail: f64,
    pub b_eps_nonincreasing: bool,
    /// Certified upper bound on the tail integral of the recovery.
    pub tail_integral_bound: Option<f64>,
    /// Least-squares slope of `ln b_ε` against `ln x`; heuristic only.
    pub fitted_decay_exponent: Option<f64>,
    pub certificates_checked: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleVerdict {
    pub verdict: Verdict,
    pub criterion: Criterion,
    pub evidence: Evidence,
}

struct TailSample {
    x: f64,
    a: f64,
    b: f64,
    b_eps: f64,
}

/// Decides whether the Markov martingale driven by `kernel` is a bubble.
pub fn classify_markov_bubble<K: MarkovKernel + ?Sized>(kernel: &K, opts: &ClassifyOptions) -> Result<BubbleVerdict> {
    if !(opts.eps > 0.0 && opts.eps.is_finite()) {
        return Err(Error::invalid(format!(
            "relaxation ε must be positive, got {}",
            opts.eps
        )));
    }
    let points = opts.tail.points()?;
    let samples = points
        .iter()
        .map(|&x| {
            Ok(TailSample {
                x,
                a: probability_down(kernel, x)?,
                b: relative_recovery(kernel, x, 0.0)?,
                b_eps: relative_recovery(kernel, x, opts.eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut certs = opts.certificates.clone();
    if opts.builtin_certificates {
        certs.extend(kernel.certificates(opts.eps));
    }
    let two_point = kernel.as_two_point().is_some();
    for cert in &certs {
        cert.validate()?;
        check_certificate(cert, &samples, two_point)?;
    }

    let x_a = opts.x_a.unwrap_or(opts.tail.lo);
    let mut evidence = Evidence {
        min_b_on_tail: samples.iter().map(|s| s.b).fold(f64::INFINITY, f64::min),
        min_a_on_tail: samples
            .iter()
            .filter(|s| s.x >= x_a)
            .map(|s| s.a)
            .fold(f64::INFINITY, f64::min),
        b_eps_nonincreasing: nonincreasing(samples.iter().map(|s| s.b_eps)),
        tail_integral_bound: None,
        fitted_decay_exponent: fit_decay(&samples),
        certificates_checked: certs.len(),
        note: String::new(),
    };

    let floor = certs
        .iter()
        .filter_map(|c| match c.claim {
            CertificateClaim::RecoveryFloor { lower } if lower > 0.0 => Some(lower),
            _ => None,
        })
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    if let Some(lower) = floor {
        evidence.note = format!("b ≥ {lower} on the tail");
        return Ok(BubbleVerdict {
            verdict: Verdict::NoBubble,
            criterion: if two_point {
                Criterion::TwoPointIntegral
            } else {
                Criterion::RecoveryFloor
            },
            evidence,
        });
    }

    if two_point {
        let tail_ok = samples.iter().all(|s| s.b < s.a) && nonincreasing(samples.iter().map(|s| s.b));
        let integral = certs
            .iter()
            .filter(|c| c.is_decay())
            .filter_map(|c| c.tail_integral(opts.tail.lo))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
        if tail_ok {
            if let Some(bound) = integral {
                evidence.tail_integral_bound = Some(bound);
                evidence.note = "b < a with b nonincreasing and integrable on the tail".into();
                return Ok(BubbleVerdict {
                    verdict: Verdict::Bubble,
                    criterion: Criterion::TwoPointIntegral,
                    evidence,
                });
            }
        } else {
            evidence.note = "two-point hypotheses b < a, b nonincreasing fail on the tail grid".into();
        }
    } else {
        for cert in certs.iter().filter(|c| c.is_decay()) {
            let start = cert.from.max(opts.tail.lo);
            let region: Vec<&TailSample> = samples.iter().filter(|s| s.x >= start).collect();
            if region.len() < 2 {
                continue;
            }
            // b_ε must be nonincreasing up to quadrature noise.
            let monotone = region.windows(2).all(|w| w[1].b_eps <= w[0].b_eps + 10.0 * CHECK_SLACK);
            let positive_a = samples.iter().filter(|s| s.x >= x_a).all(|s| s.a > 0.0);
            let unbounded = upper_mass_beyond(kernel, points[points.len() - 1])? > 0.0;
            let Some(bound) = cert.tail_integral(start) else {
                continue;
            };
            if monotone && positive_a && unbounded {
                evidence.tail_integral_bound = Some(bound);
                evidence.note = format!("b_ε nonincreasing from x = {start} with certified integrable tail");
                return Ok(BubbleVerdict {
                    verdict: Verdict::Bubble,
                    criterion: Criterion::IntegrableRecovery,
                    evidence,
                });
            }
            evidence.note = format!(
                "decay certificate present but hypotheses unmet (b_ε monotone: {monotone}, a > 0: {positive_a}, \
                 unbounded: {unbounded})"
            );
        }
    }

    if evidence.note.is_empty() {
        evidence.note = "no certificate decides the tail".into();
    }
    Ok(BubbleVerdict {
        verdict: Verdict::Indeterminate,
        criterion: Criterion::None,
        evidence,
    })
}

fn check_certificate(cert: &TailCertificate, samples: &[TailSample], two_point: bool) -> Result<()> {
    for s in samples.iter().filter(|s| s.x >= cert.from) {
        let claimed = cert.bound(s.x);
        let (violated, observed) = match cert.claim {
            CertificateClaim::RecoveryFloor { .. } => (s.b < claimed - CHECK_SLACK, s.b),
            _ => {
                let observed = if two_point { s.b } else { s.b_eps };
                (observed > claimed + CHECK_SLACK, observed)
            }
        };
        if violated {
            return Err(Error::CertificateRejected {
                at: s.x,
                claimed,
                observed,
            });
        }
    }
    Ok(())
}

/// `K(x, (x(1+δ), ∞))` for a small `δ`: positive when the chain can keep rising.
fn upper_mass_beyond<K: MarkovKernel + ?Sized>(kernel: &K, x: f64) -> Result<f64> {
    let below = super::kernel_integral(
        kernel,
        x,
        super::Region::Below(x * 1.01),
        |_| [1.0],
        crate::quad::QuadOptions::default(),
    )?[0];
    Ok(1.0 - below)
}

fn nonincreasing(values: impl Iterator<Item = f64>) -> bool {
    let mut prev = f64::INFINITY;
    for v in values {
        if v > prev + 10.0 * CHECK_SLACK {
            return false;
        }
        prev = v;
    }
    true
}

fn fit_decay(samples: &[TailSample]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.b_eps > 0.0)
        .map(|s| (s.x.ln(), s.b_eps.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}
