use serde::{Deserialize, Serialize};

use super::DrawdownRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimand {
    /// `E[S_{τ_k ∧ n}]`.
    StoppedValue,
    /// `x0 − E[S_{τ_k ∧ n}]`.
    MassLoss,
    /// `E[S_n 1{x ≤ S_k ≤ … ≤ S_n}]`.
    MonotoneRun,
    /// `E[S_n]`.
    TerminalValue,
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawdownEstimate {
    pub estimand: Estimand,
    pub value: f64,
    /// Sample standard deviation over `√N`.
    pub std_error: f64,
    /// Horizon.
    pub n: usize,
    /// Number of paths.
    #[serde(rename = "N")]
    pub paths: usize,
    pub seed: u64,
    /// Drawdown index `k` for stopped values and mass loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drawdown: Option<usize>,
    /// `(k, x)` of the monotone run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<(usize, f64)>,
    /// Paths whose `k`-th drawdown had not happened by the horizon; they
    /// contribute `S_n`.
    #[serde(default)]
    pub censored: usize,
}

impl DrawdownEstimate {
    /// `|value − target| ≤ sigmas · std_error + slack`.
    pub fn agrees_with(&self, target: f64, sigmas: f64, slack: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.std_error + slack
    }
}

/// Mean and standard error in a fixed order (Welford).
fn mean_and_error(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    let se = if count > 1 {
        (m2 / (count - 1) as f64 / count as f64).sqrt()
    } else {
        0.0
    };
    (mean, se, count)
}

fn check_drawdown(record: &DrawdownRecord, k: usize) -> Result<()> {
    if k == 0 || k > record.spec.max_drawdowns {
        return Err(Error::invalid(format!(
            "drawdown index {k} outside 1..={} recorded",
            record.spec.max_drawdowns
        )));
    }
    Ok(())
}

fn base(record: &DrawdownRecord, estimand: Estimand, n: usize, stats: (f64, f64, usize)) -> DrawdownEstimate {
    DrawdownEstimate {
        estimand,
        value: stats.0,
        std_error: stats.1,
        n,
        paths: stats.2,
        seed: record.master_seed,
        drawdown: None,
        run: None,
        censored: 0,
    }
}

fn stopped_at(record: &DrawdownRecord, k: usize, point: usize, mass_loss: bool) -> DrawdownEstimate {
    let kmax = record.spec.max_drawdowns;
    let n = record.spec.ladder[point];
    let stats = mean_and_error(record.paths.iter().map(|p| p.stopped_ladder[point * kmax + k - 1]));
    let censored = record
        .paths
        .iter()
        .filter(|p| p.times.get(k - 1).map_or(true, |&t| t > n))
        .count();
    let mut est = base(record, Estimand::StoppedValue, n, stats);
    if mass_loss {
        est.estimand = Estimand::MassLoss;
        est.value = record.x0 - est.value;
    }
    est.drawdown = Some(k);
    est.censored = censored;
    est
}

/// `E[S_{τ_k ∧ n}]` at the full horizon.
pub fn estimate_stopped_value(record: &DrawdownRecord, k: usize) -> Result<DrawdownEstimate> {
    check_drawdown(record, k)?;
    Ok(stopped_at(record, k, record.spec.ladder.len() - 1, false))
}

/// `x0 − E[S_{τ_k ∧ n}]` at the full horizon.
///
/// Paths that have not drawn down `k` times by the horizon contribute
/// `S_n`. Rare long climbs carry most of the mean of `S_{τ_k ∧ n}` when the
/// process is a bubble, so the estimate approaches the mass loss
/// `x0 − E[S_{τ_k}]` once such paths are too rare to be sampled; the
/// [`mass_loss_ladder`] and the `censored` count show where that happens.
pub fn estimate_mass_loss(record: &DrawdownRecord, k: usize) -> Result<DrawdownEstimate> {
    check_drawdown(record, k)?;
    Ok(stopped_at(record, k, record.spec.ladder.len() - 1, true))
}

/// [`estimate_mass_loss`] at every ladder horizon.
pub fn mass_loss_ladder(record: &DrawdownRecord, k: usize) -> Result<Vec<DrawdownEstimate>> {
    check_drawdown(record, k)?;
    Ok((0..record.spec.ladder.len())
        .map(|point| stopped_at(record, k, point, true))
        .collect())
}

fn run_at(record: &DrawdownRecord, point: usize) -> DrawdownEstimate {
    let stats = mean_and_error(record.paths.iter().map(|p| p.run_ladder[point]));
    let mut est = base(record, Estimand::MonotoneRun, record.spec.ladder[point], stats);
    est.run = Some((record.spec.run_start, record.spec.run_threshold));
    est
}

/// `E[S_n 1{x ≤ S_k ≤ … ≤ S_n}]` at the full horizon.
pub fn estimate_monotone_run(record: &DrawdownRecord) -> DrawdownEstimate {
    run_at(record, record.spec.ladder.len() - 1)
}

/// [`estimate_monotone_run`] at every ladder horizon `n' ≥ k`.
pub fn monotone_run_ladder(record: &DrawdownRecord) -> Vec<DrawdownEstimate> {
    (0..record.spec.ladder.len())
        .filter(|&point| record.spec.ladder[point] >= record.spec.run_start)
        .map(|point| run_at(record, point))
        .collect()
}

/// `E[S_n]`, which equals `x0` for a martingale.
pub fn terminal_mean(record: &DrawdownRecord) -> DrawdownEstimate {
    let stats = mean_and_error(record.paths.iter().map(|p| p.terminal));
    base(record, Estimand::TerminalValue, record.horizon, stats)
}
