//! Continuous positive local martingales sampled along stopping-time
//! schedules, and the explicit one-step kernel of the inverse Bessel
//! process under the relative-barrier schedule.

mod kernel;
mod sde;

pub use kernel::{bessel_cdf, sample_bessel_step, CdfEvaluation, InverseBessel};
pub use sde::{discretize_sde_path, sample_driver_at, Driver, Schedule, SdeBatch, SdeOptions, Sequence};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::montecarlo::{
    estimate_mass_loss, mass_loss_ladder, monotone_run_ladder, simulate_drawdowns, DrawdownEstimate, DrawdownSpec,
    KernelChain,
};

/// `sup_z |F_n(z) − F(z)|` of a sample against a distribution given by
/// `cdf(z) = (F(z−), F(z))`, so that atoms are handled exactly.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> (f64, f64)) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let (left, right) = cdf(v);
        d = d.max((left - i as f64 / n).abs()).max((right - j as f64 / n).abs());
        i = j;
    }
    d
}

/// `sup_z |F_a(z) − F_b(z)|` between two empirical distributions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Mass loss and monotone-run ladder of the inverse Bessel process under
/// the relative-barrier schedule, simulated through its one-step kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesselReport {
    pub alpha: f64,
    pub beta: f64,
    pub mass_loss: DrawdownEstimate,
    pub mass_loss_ladder: Vec<DrawdownEstimate>,
    pub run_ladder: Vec<DrawdownEstimate>,
}

pub fn bessel_bubble_report(
    x0: f64,
    alpha: f64,
    beta: f64,
    horizon: usize,
    paths: usize,
    seed: u64,
) -> Result<BesselReport> {
    let kernel = InverseBessel::new(alpha, beta)?;
    let spec = DrawdownSpec {
        max_drawdowns: 1,
        run_threshold: x0,
        run_start: 0,
        ladder: DrawdownSpec::geometric_ladder(horizon, 8),
    };
    let record = simulate_drawdowns(&KernelChain(&kernel), x0, horizon, paths, seed, &spec)?;
    Ok(BesselReport {
        alpha,
        beta,
        mass_loss: estimate_mass_loss(&record, 1)?,
        mass_loss_ladder: mass_loss_ladder(&record, 1)?,
        run_ladder: monotone_run_ladder(&record),
    })
}

#[cfg(test)]
mod tests;
