use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::PathBatch;
use crate::rng::{open_unit, path_rng};

/// Number of standard deviations of a substep that must separate the state
/// from the barrier before the substep may grow beyond the minimum.
const BARRIER_CLEARANCE: f64 = 6.0;

/// An increasing divergent sequence `n ↦ s_n`, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sequence {
    /// `step · n`.
    Linear { step: f64 },
    /// `start · ratio^n`.
    Geometric { start: f64, ratio: f64 },
    /// Listed values `s_1, s_2, …`.
    Explicit { values: Vec<f64> },
}

impl Sequence {
    pub fn get(&self, n: usize) -> Option<f64> {
        match self {
            Sequence::Linear { step } => Some(step * n as f64),
            Sequence::Geometric { start, ratio } => Some(start * ratio.powi(n as i32)),
            Sequence::Explicit { values } => values.get(n.checked_sub(1)?).copied(),
        }
    }

    fn validate(&self, what: &str, horizon: usize) -> Result<()> {
        let ok = match self {
            Sequence::Linear { step } => *step > 0.0 && step.is_finite(),
            Sequence::Geometric { start, ratio } => *start > 0.0 && *ratio > 1.0 && ratio.is_finite(),
            Sequence::Explicit { values } => {
                values.len() >= horizon && values[0] > 0.0 && values.windows(2).all(|w| w[1] > w[0])
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what} must be positive, strictly increasing and cover {horizon} steps, got {self:?}"
            )))
        }
    }
}

/// Stopping times along which a continuous path is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    /// `τ_n = inf{t ≥ τ_{n−1} : X_t ≥ (1+β) X_{τ_{n−1}}} ∧ (τ_{n−1} + α)`.
    RelativeBarrier { alpha: f64, beta: f64 },
    /// `τ_n = inf{t ≥ 0 : X_t ≥ b_n} ∧ a_n`.
    DeterministicBarrier {
        #[serde(default = "default_times")]
        times: Sequence,
        #[serde(default = "default_levels")]
        levels: Sequence,
    },
}

fn default_times() -> Sequence {
    Sequence::Linear { step: 1.0 }
}

fn default_levels() -> Sequence {
    Sequence::Geometric { start: 2.0, ratio: 2.0 }
}

impl Schedule {
    /// Deterministic barriers `a_n = n` and `b_n = start · 2^n`.
    pub fn deterministic(start_level: f64) -> Self {
        Schedule::DeterministicBarrier {
            times: default_times(),
            levels: Sequence::Geometric {
                start: start_level,
                ratio: 2.0,
            },
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            Schedule::RelativeBarrier { alpha, beta } => {
                if !(*alpha > 0.0 && alpha.is_finite() && *beta > 0.0 && beta.is_finite()) {
                    return Err(Error::invalid(format!(
                        "relative barrier needs α, β > 0, got {alpha}, {beta}"
                    )));
                }
                Ok(())
            }
            Schedule::DeterministicBarrier { times, levels } => {
                times.validate("time caps", horizon)?;
                levels.validate("barrier levels", horizon)
            }
        }
    }

    /// Time budget and barrier for step `n` given the previous stop.
    fn target(&self, n: usize, now: f64, previous: f64) -> (f64, f64) {
        match self {
            Schedule::RelativeBarrier { alpha, beta } => (now + alpha, (1.0 + beta) * previous),
            Schedule::DeterministicBarrier { times, levels } => (
                times.get(n).unwrap_or(f64::INFINITY),
                levels.get(n).unwrap_or(f64::INFINITY),
            ),
        }
    }

    /// The smallest time scale of the schedule, used for default substeps.
    pub fn time_scale(&self) -> f64 {
        match self {
            Schedule::RelativeBarrier { alpha, .. } => *alpha,
            Schedule::DeterministicBarrier { times, .. } => times.get(1).unwrap_or(1.0),
        }
    }
}

/// Continuous positive local martingale to be discretised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Driver {
    /// `X = 1/|B|` for a three-dimensional Brownian motion `B`; a strict
    /// local martingale.
    InverseBessel {},
    /// `X = x exp(σ W − σ² t / 2)`; a true martingale.
    GeometricBrownian { sigma: f64 },
    /// `dX = σ X^γ dW` by Euler–Maruyama, absorbed at 0. A strict local
    /// martingale for `γ > 1`.
    Cev { sigma: f64, exponent: f64 },
}

impl Driver {
    pub fn validate(&self) -> Result<()> {
        match self {
            Driver::InverseBessel {} => Ok(()),
            Driver::GeometricBrownian { sigma } if *sigma > 0.0 && sigma.is_finite() => Ok(()),
            Driver::Cev { sigma, exponent } if *sigma > 0.0 && sigma.is_finite() && exponent.is_finite() => Ok(()),
            _ => Err(Error::invalid(format!("invalid driver {self:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Driver::InverseBessel {} => "inverse-bessel",
            Driver::GeometricBrownian { .. } => "geometric-brownian",
            Driver::Cev { .. } => "cev",
        }
    }

    fn start(&self, x0: f64) -> State {
        match self {
            Driver::InverseBessel {} => State::Position([1.0 / x0, 0.0, 0.0]),
            Driver::GeometricBrownian { .. } => State::Log(x0.ln()),
            Driver::Cev { .. } => State::Level(x0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum State {
    Position([f64; 3]),
    Log(f64),
    Level(f64),
}

impl State {
    fn value(&self) -> f64 {
        match *self {
            State::Position(p) => 1.0 / norm(p),
            State::Log(l) => l.exp(),
            State::Level(x) => x,
        }
    }
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Options of the path discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeOptions {
    /// Smallest substep; `None` means `1e-4` times the schedule's time
    /// scale.
    pub substep: Option<f64>,
    /// Apply the Brownian-bridge crossing correction between substeps.
    pub bridge_correction: bool,
    /// Let substeps grow while the barrier is out of reach. Euler driven
    /// diffusions always use the fixed substep.
    pub adaptive: bool,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self {
            substep: None,
            bridge_correction: true,
            adaptive: true,
        }
    }
}

/// Discretised paths with simulation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeBatch {
    pub batch: PathBatch,
    /// Stops that ended on the barrier.
    pub barrier_hits: usize,
    /// Paths whose value left the floating-point range and was capped.
    pub exploded_paths: usize,
    /// Substeps taken over all paths.
    pub substeps: u64,
}

struct PathOutcome {
    values: Vec<f64>,
    hits: usize,
    exploded: bool,
    substeps: u64,
}

/// Runs the driver from `state` at time `now` until `deadline` or until
/// the value reaches `level`. Returns the new state, the stop time and
/// whether the barrier was hit.
#[allow(clippy::too_many_arguments)]
fn advance(
    driver: &Driver,
    mut state: State,
    mut now: f64,
    deadline: f64,
    level: f64,
    min_dt: f64,
    opts: &SdeOptions,
    rng: &mut dyn RngCore,
    substeps: &mut u64,
) -> (State, f64, bool) {
    while now < deadline {
        let remaining = deadline - now;
        *substeps += 1;
        match (driver, state) {
            (Driver::InverseBessel {}, State::Position(p)) => {
                let r_bar = 1.0 / level;
                let r0 = norm(p);
                let dt = step_size(r0 - r_bar, 1.0, min_dt, remaining, opts.adaptive);
                let sd = dt.sqrt();
                let q = [
                    p[0] + sd * normal(rng),
                    p[1] + sd * normal(rng),
                    p[2] + sd * normal(rng),
                ];
                let r1 = norm(q);
                now += dt;
                let crossed = r1 <= r_bar
                    || (opts.bridge_correction && bridge_crossed(r0 - r_bar, r1 - r_bar, dt, open_unit(rng)));
                if crossed {
                    let scale = r_bar / r1;
                    return (State::Position([q[0] * scale, q[1] * scale, q[2] * scale]), now, true);
                }
                state = State::Position(q);
            }
            (Driver::GeometricBrownian { sigma }, State::Log(l)) => {
                let barrier = level.ln();
                // The bridge test is exact for Brownian motion with drift,
                // so one step to the deadline samples the stopped value.
                let dt = if opts.bridge_correction {
                    remaining
                } else {
                    step_size(barrier - l, *sigma, min_dt, remaining, opts.adaptive)
                };
                let next = l + sigma * dt.sqrt() * normal(rng) - sigma * sigma * dt / 2.0;
                now += dt;
                let crossed = next >= barrier
                    || (opts.bridge_correction
                        && bridge_crossed((barrier - l) / sigma, (barrier - next) / sigma, dt, open_unit(rng)));
                if crossed {
                    return (State::Log(barrier), now, true);
                }
                state = State::Log(next);
            }
            (Driver::Cev { sigma, exponent }, State::Level(x)) => {
                if x <= 0.0 {
                    return (State::Level(0.0), deadline, false);
                }
                let dt = min_dt.min(remaining);
                let vol = sigma * x.powf(*exponent);
                let next = (x + vol * dt.sqrt() * normal(rng)).max(0.0);
                now += dt;
                let crossed = next >= level
                    || (opts.bridge_correction
                        && vol > 0.0
                        && bridge_crossed((level - x) / vol, (level - next) / vol, dt, open_unit(rng)));
                if crossed {
                    return (State::Level(level), now, true);
                }
                state = State::Level(next);
            }
            _ => unreachable!("state always matches its driver"),
        }
    }
    (state, deadline, false)
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    rng.sample(StandardNormal)
}

/// Substep that keeps the barrier `BARRIER_CLEARANCE` standard deviations
/// away, never below `min_dt` and never past the deadline.
fn step_size(distance: f64, vol: f64, min_dt: f64, remaining: f64, adaptive: bool) -> f64 {
    let dt = if adaptive {
        let reach = distance / (BARRIER_CLEARANCE * vol);
        (reach * reach).max(min_dt)
    } else {
        min_dt
    };
    dt.min(remaining)
}

/// Whether a Brownian bridge from distance `d0` to `d1` (both positive, in
/// units of unit-variance Brownian motion) over time `dt` touched zero,
/// decided with the uniform `u`.
fn bridge_crossed(d0: f64, d1: f64, dt: f64, u: f64) -> bool {
    d0 > 0.0 && d1 > 0.0 && u < (-2.0 * d0 * d1 / dt).exp()
}

/// Samples `paths` trajectories of the driver started at `x0` and records
/// its value at the first `horizon` stopping times of the schedule.
pub fn discretize_sde_path(
    driver: &Driver,
    schedule: &Schedule,
    x0: f64,
    horizon: usize,
    paths: usize,
    seed: u64,
    opts: &SdeOptions,
) -> Result<SdeBatch> {
    driver.validate()?;
    schedule.validate(horizon)?;
    if !(x0 > 0.0 && x0.is_finite()) || horizon == 0 || paths == 0 {
        return Err(Error::invalid("need x0 > 0 and at least one step and path"));
    }
    let min_dt = opts.substep.unwrap_or(1e-4 * schedule.time_scale());
    if !(min_dt > 0.0) {
        return Err(Error::invalid(format!("substep must be positive, got {min_dt}")));
    }
    let outcomes: Vec<PathOutcome> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut state = driver.start(x0);
            let mut now = 0.0;
            let mut values = Vec::with_capacity(horizon + 1);
            values.push(x0);
            let (mut hits, mut exploded, mut substeps) = (0, false, 0);
            for n in 1..=horizon {
                let previous = *values.last().unwrap_or(&x0);
                let (deadline, level) = schedule.target(n, now, previous);
                let (next, stop, hit) = advance(
                    driver,
                    state,
                    now,
                    deadline,
                    level,
                    min_dt,
                    opts,
                    &mut rng,
                    &mut substeps,
                );
                state = next;
                now = stop;
                hits += usize::from(hit);
                let mut value = if hit { level } else { state.value() };
                if !value.is_finite() {
                    exploded = true;
                    value = f64::MAX;
                }
                values.push(value);
            }
            PathOutcome {
                values,
                hits,
                exploded,
                substeps,
            }
        })
        .collect();
    let barrier_hits = outcomes.iter().map(|o| o.hits).sum();
    let exploded_paths = outcomes.iter().filter(|o| o.exploded).count();
    let substeps = outcomes.iter().map(|o| o.substeps).sum();
    Ok(SdeBatch {
        batch: PathBatch {
            x0,
            horizon,
            master_seed: seed,
            model: driver.label().to_string(),
            paths: outcomes.into_iter().map(|o| o.values).collect(),
        },
        barrier_hits,
        exploded_paths,
        substeps,
    })
}

/// `X_t` of the driver from `x0` without any barrier, using exact
/// increments where available.
pub fn sample_driver_at(driver: &Driver, x0: f64, t: f64, min_dt: f64, rng: &mut dyn RngCore) -> f64 {
    let mut substeps = 0;
    let opts = SdeOptions {
        substep: Some(min_dt),
        bridge_correction: false,
        adaptive: true,
    };
    match driver {
        Driver::InverseBessel {} | Driver::GeometricBrownian { .. } => {
            // No barrier: a single exact Gaussian step.
            let (state, _, _) = advance(
                driver,
                driver.start(x0),
                0.0,
                t,
                f64::INFINITY,
                t,
                &opts,
                rng,
                &mut substeps,
            );
            state.value()
        }
        Driver::Cev { .. } => {
            let (state, _, _) = advance(
                driver,
                driver.start(x0),
                0.0,
                t,
                f64::INFINITY,
                min_dt,
                &opts,
                rng,
                &mut substeps,
            );
            state.value()
        }
    }
}
