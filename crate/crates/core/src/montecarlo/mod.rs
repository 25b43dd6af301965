//! Path simulation and Monte Carlo estimates of the mass lost at drawdown
//! times.
//!
//! Every path draws from its own counter-based stream keyed by the master
//! seed and the path index (see [`crate::rng`]), and all reductions run in
//! path order, so results do not depend on the number of threads.

mod drawdown;
mod estimate;

use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use drawdown::{drawdowns, DrawdownRecord, DrawdownSpec, PathDrawdowns};
pub use estimate::{
    estimate_mass_loss, estimate_monotone_run, estimate_stopped_value, mass_loss_ladder, monotone_run_ladder,
    terminal_mean, DrawdownEstimate, Estimand,
};

use crate::error::{Error, Result};
use crate::kernels::MarkovKernel;
use crate::rng::path_rng;

/// A discrete-time process that can be stepped one index at a time.
pub trait PathModel: Send + Sync {
    /// Draws `S_step` given `S_{step−1} = x`; `step` starts at 1.
    fn step(&self, step: usize, x: f64, rng: &mut dyn RngCore) -> Result<f64>;

    /// True when the path stays at `x` from `step` on.
    fn absorbed(&self, _step: usize, _x: f64) -> bool {
        false
    }

    fn label(&self) -> String;
}

/// The time-homogeneous Markov chain driven by a transition kernel.
#[derive(Debug, Clone, Copy)]
pub struct KernelChain<'a, K: ?Sized>(pub &'a K);

impl<K: MarkovKernel + ?Sized> PathModel for KernelChain<'_, K> {
    fn step(&self, _step: usize, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
        self.0.sample_step(x, rng)
    }

    fn absorbed(&self, _step: usize, x: f64) -> bool {
        self.0.is_absorbing(x)
    }

    fn label(&self) -> String {
        self.0.kind().to_string()
    }
}

/// Simulated trajectories, each of length `horizon + 1` starting at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub x0: f64,
    pub horizon: usize,
    pub master_seed: u64,
    pub model: String,
    pub paths: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PathRow {
    path: usize,
    step: usize,
    value: f64,
}

fn check_run(x0: f64, horizon: usize, paths: usize) -> Result<()> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::invalid(format!("starting value must be positive, got {x0}")));
    }
    if horizon == 0 || paths == 0 {
        return Err(Error::invalid("horizon and path count must be at least 1"));
    }
    Ok(())
}

/// Runs one path, calling `visit(step, value)` for steps `1..=horizon`.
/// Returns the step at which the path was absorbed, if it was.
pub(crate) fn run_path<M, F>(
    model: &M,
    x0: f64,
    horizon: usize,
    seed: u64,
    index: usize,
    mut visit: F,
) -> Result<Option<usize>>
where
    M: PathModel + ?Sized,
    F: FnMut(usize, f64),
{
    let mut rng = path_rng(seed, index as u64);
    let mut x = x0;
    for step in 1..=horizon {
        if model.absorbed(step, x) {
            return Ok(Some(step));
        }
        x = model.step(step, x, &mut rng).map_err(|e| Error::Path {
            path: index,
            source: Box::new(e),
        })?;
        visit(step, x);
    }
    Ok(None)
}

/// Simulates `paths` trajectories of `horizon` steps and stores them.
pub fn simulate<M: PathModel + ?Sized>(
    model: &M,
    x0: f64,
    horizon: usize,
    paths: usize,
    master_seed: u64,
) -> Result<PathBatch> {
    check_run(x0, horizon, paths)?;
    let paths = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut values = Vec::with_capacity(horizon + 1);
            values.push(x0);
            if let Some(step) = run_path(model, x0, horizon, master_seed, i, |_, x| values.push(x))? {
                let last = values[step - 1];
                values.resize(horizon + 1, last);
            }
            Ok(values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBatch {
        x0,
        horizon,
        master_seed,
        model: model.label(),
        paths,
    })
}

/// Simulates and summarises drawdowns path by path without storing the
/// trajectories. Gives the same record as [`drawdowns`] on [`simulate`].
pub fn simulate_drawdowns<M: PathModel + ?Sized>(
    model: &M,
    x0: f64,
    horizon: usize,
    paths: usize,
    master_seed: u64,
    spec: &DrawdownSpec,
) -> Result<DrawdownRecord> {
    check_run(x0, horizon, paths)?;
    let spec = spec.resolved(horizon)?;
    let rows = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut tracker = drawdown::Tracker::new(&spec, x0);
            if let Some(step) = run_path(model, x0, horizon, master_seed, i, |step, x| tracker.push(step, x))? {
                tracker.hold(step);
            }
            Ok(tracker.finish())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DrawdownRecord {
        x0,
        horizon,
        master_seed,
        model: model.label(),
        spec,
        paths: rows,
    })
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Long-format CSV with columns `path,step,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (path, values) in self.paths.iter().enumerate() {
            for (step, &value) in values.iter().enumerate() {
                w.serialize(PathRow { path, step, value })?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the long format back; `x0`, seed and model label are taken
    /// from the caller since the CSV does not carry them.
    pub fn read_csv<R: std::io::Read>(reader: R, master_seed: u64, model: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut paths: Vec<Vec<f64>> = Vec::new();
        for row in rdr.deserialize() {
            let row: PathRow = row?;
            if row.path == paths.len() && row.step == 0 {
                paths.push(vec![row.value]);
            } else if row.path + 1 == paths.len() && row.step == paths[row.path].len() {
                paths[row.path].push(row.value);
            } else {
                return Err(Error::invalid(format!(
                    "path CSV out of order at path {} step {}",
                    row.path, row.step
                )));
            }
        }
        let first = paths.first().ok_or_else(|| Error::invalid("path CSV has no rows"))?;
        let (x0, len) = (first[0], first.len());
        if len < 2 || paths.iter().any(|p| p.len() != len || p[0] != x0) {
            return Err(Error::invalid("paths must share their start value and length"));
        }
        Ok(Self {
            x0,
            horizon: len - 1,
            master_seed,
            model: model.to_string(),
            paths,
        })
    }
}
