use serde::{Deserialize, Serialize};

use super::PathBatch;
use crate::error::{Error, Result};

/// What to extract from each path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrawdownSpec {
    /// Number of drawdown times `τ_1, …, τ_k` to record.
    pub max_drawdowns: usize,
    /// Lower threshold `x` of the monotone run `x ≤ S_k ≤ … ≤ S_n`.
    pub run_threshold: f64,
    /// Index `k` where the monotone run starts.
    pub run_start: usize,
    /// Intermediate horizons at which stopped values and run values are
    /// also recorded. The full horizon is always added.
    pub ladder: Vec<usize>,
}

impl Default for DrawdownSpec {
    fn default() -> Self {
        Self {
            max_drawdowns: 1,
            run_threshold: 0.0,
            run_start: 0,
            ladder: Vec::new(),
        }
    }
}

impl DrawdownSpec {
    /// Validates against `horizon` and returns a copy with a sorted,
    /// deduplicated ladder that ends at `horizon`.
    pub fn resolved(&self, horizon: usize) -> Result<Self> {
        if self.max_drawdowns == 0 {
            return Err(Error::invalid("at least one drawdown time must be recorded"));
        }
        if self.run_start > horizon {
            return Err(Error::invalid(format!(
                "run start {} is beyond the horizon {horizon}",
                self.run_start
            )));
        }
        if !self.run_threshold.is_finite() {
            return Err(Error::invalid("run threshold must be finite"));
        }
        let mut ladder = self.ladder.clone();
        if let Some(&bad) = ladder.iter().find(|&&n| n == 0 || n > horizon) {
            return Err(Error::invalid(format!("ladder horizon {bad} outside 1..={horizon}")));
        }
        ladder.push(horizon);
        ladder.sort_unstable();
        ladder.dedup();
        Ok(Self { ladder, ..self.clone() })
    }

    /// `count` horizons spread geometrically from 1 to `horizon`.
    pub fn geometric_ladder(horizon: usize, count: usize) -> Vec<usize> {
        if count < 2 || horizon < 2 {
            return vec![horizon.max(1)];
        }
        let mut out: Vec<usize> = (0..count)
            .map(|i| ((horizon as f64).powf(i as f64 / (count - 1) as f64)).round() as usize)
            .map(|n| n.clamp(1, horizon))
            .collect();
        out.dedup();
        out
    }
}

/// Drawdown summary of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDrawdowns {
    /// `τ_1 < τ_2 < …`, the indices `j` with `S_j < S_{j−1}`, up to the
    /// requested count. Fewer entries mean the rest are censored at the
    /// horizon.
    pub times: Vec<usize>,
    /// `τ̃_k = inf{j > k : S_j < S_{j−1}}` for the run start `k`.
    pub shifted_time: Option<usize>,
    /// `S_{τ_i ∧ n}` for `i = 1, …, max_drawdowns`.
    pub stopped: Vec<f64>,
    pub terminal: f64,
    /// `1{x ≤ S_k ≤ S_{k+1} ≤ … ≤ S_n}`.
    pub run: bool,
    /// `S_{τ_i ∧ n'}` per ladder horizon `n'`, row-major by horizon.
    pub stopped_ladder: Vec<f64>,
    /// `S_{n'} 1{x ≤ S_k ≤ … ≤ S_{n'}}` per ladder horizon; NaN when
    /// `n' < k`.
    pub run_ladder: Vec<f64>,
}

impl PathDrawdowns {
    pub fn is_censored(&self, k: usize) -> bool {
        self.times.len() < k
    }
}

/// Drawdown summaries of a whole batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawdownRecord {
    pub x0: f64,
    pub horizon: usize,
    pub master_seed: u64,
    pub model: String,
    pub spec: DrawdownSpec,
    pub paths: Vec<PathDrawdowns>,
}

pub(crate) struct Tracker<'a> {
    spec: &'a DrawdownSpec,
    prev: f64,
    times: Vec<usize>,
    stopped: Vec<Option<f64>>,
    shifted: Option<usize>,
    run_alive: bool,
    next_ladder: usize,
    stopped_ladder: Vec<f64>,
    run_ladder: Vec<f64>,
}

impl<'a> Tracker<'a> {
    pub(crate) fn new(spec: &'a DrawdownSpec, x0: f64) -> Self {
        let k = spec.max_drawdowns;
        let points = spec.ladder.len();
        Self {
            spec,
            prev: x0,
            times: Vec::with_capacity(k),
            stopped: vec![None; k],
            shifted: None,
            run_alive: spec.run_start > 0 || x0 >= spec.run_threshold,
            next_ladder: 0,
            stopped_ladder: Vec::with_capacity(points * k),
            run_ladder: Vec::with_capacity(points),
        }
    }

    /// Feeds `S_step`; steps must arrive in order starting at 1.
    pub(crate) fn push(&mut self, step: usize, value: f64) {
        if value < self.prev {
            if self.times.len() < self.spec.max_drawdowns {
                self.stopped[self.times.len()] = Some(value);
                self.times.push(step);
            }
            if step > self.spec.run_start && self.shifted.is_none() {
                self.shifted = Some(step);
            }
        }
        self.update_run(step, value);
        self.prev = value;
        while self.spec.ladder.get(self.next_ladder) == Some(&step) {
            self.record(step);
            self.next_ladder += 1;
        }
    }

    fn update_run(&mut self, step: usize, value: f64) {
        if step == self.spec.run_start {
            self.run_alive = value >= self.spec.run_threshold;
        } else if step > self.spec.run_start {
            self.run_alive &= value >= self.prev;
        }
    }

    fn record(&mut self, step: usize) {
        let current = self.prev;
        self.stopped_ladder
            .extend(self.stopped.iter().map(|s| s.unwrap_or(current)));
        self.run_ladder.push(if step < self.spec.run_start {
            f64::NAN
        } else if self.run_alive {
            current
        } else {
            0.0
        });
    }

    /// The path stays at its current value from `step` to the horizon.
    pub(crate) fn hold(&mut self, step: usize) {
        let start = self.spec.run_start;
        let mut run_pending = start >= step;
        while let Some(&point) = self.spec.ladder.get(self.next_ladder) {
            if run_pending && start <= point {
                self.update_run(start, self.prev);
                run_pending = false;
            }
            self.record(point);
            self.next_ladder += 1;
        }
        if run_pending {
            self.update_run(start, self.prev);
        }
    }

    pub(crate) fn finish(self) -> PathDrawdowns {
        let terminal = self.prev;
        PathDrawdowns {
            stopped: self.stopped.iter().map(|s| s.unwrap_or(terminal)).collect(),
            times: self.times,
            shifted_time: self.shifted,
            terminal,
            run: self.run_alive,
            stopped_ladder: self.stopped_ladder,
            run_ladder: self.run_ladder,
        }
    }
}

/// Extracts drawdown times, stopped values and monotone-run indicators
/// from stored paths.
pub fn drawdowns(batch: &PathBatch, spec: &DrawdownSpec) -> Result<DrawdownRecord> {
    let spec = spec.resolved(batch.horizon)?;
    let mut rows = Vec::with_capacity(batch.paths.len());
    for (i, path) in batch.paths.iter().enumerate() {
        if path.len() != batch.horizon + 1 {
            return Err(Error::invalid(format!(
                "path {i} has {} values, expected {}",
                path.len(),
                batch.horizon + 1
            )));
        }
        let mut tracker = Tracker::new(&spec, path[0]);
        for (step, &x) in path.iter().enumerate().skip(1) {
            tracker.push(step, x);
        }
        rows.push(tracker.finish());
    }
    Ok(DrawdownRecord {
        x0: batch.x0,
        horizon: batch.horizon,
        master_seed: batch.master_seed,
        model: batch.model.clone(),
        spec,
        paths: rows,
    })
}
