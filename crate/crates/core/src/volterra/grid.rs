use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a [`GridFunction`] is read between and beyond its nodes.
///
/// Both shapes interpolate linearly in `log x`. They differ in the quantity
/// that is interpolated and frozen past the last node:
///
/// * `RatioLinear`: `M(x)/x`; beyond the grid the ratio stays at its last
///   value.
/// * `GapLinear`: `x − M(x)`; beyond the grid the gap stays at its last
///   value. Differences between two functions then never grow past the
///   grid, which keeps the operator a sup-norm contraction whenever the
///   kernel is one.
///
/// Below the first node both shapes freeze the ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    #[default]
    RatioLinear,
    GapLinear,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        return Err(Error::invalid(format!(
            "log grid needs 0 < lo < hi and n ≥ 2, got [{lo}, {hi}] with {n}"
        )));
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => lo * (step * i as f64).exp(),
        })
        .collect())
}

/// A function `M` with `0 ≤ M(x) ≤ x`, stored on a positive grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    shape: Shape,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x: f64,
    #[serde(rename = "M")]
    m: f64,
}

/// One point of the ratio profile `M(x)/x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub x: f64,
    pub ratio: f64,
    /// `max_{x' ≥ x} M(x')/x'` over the remaining grid.
    pub tail_max: f64,
}

/// Values may overshoot `[0, x]` by this relative amount before being
/// rejected; smaller overshoots are clamped.
const MEMBERSHIP_SLACK: f64 = 1e-9;

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, shape: Shape) -> Result<Self> {
        if grid.is_empty() || grid.len() != values.len() {
            return Err(Error::invalid(format!(
                "grid function needs matching non-empty grid and values, got {} and {}",
                grid.len(),
                values.len()
            )));
        }
        if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) || !grid[grid.len() - 1].is_finite() {
            return Err(Error::invalid("grid must be positive, finite and strictly increasing"));
        }
        let mut values = values;
        for (v, &x) in values.iter_mut().zip(&grid) {
            if !v.is_finite() || *v < -MEMBERSHIP_SLACK * x || *v > x * (1.0 + MEMBERSHIP_SLACK) {
                return Err(Error::invalid(format!("value {v} at x = {x} outside [0, x]")));
            }
            *v = v.clamp(0.0, x);
        }
        Ok(Self { grid, values, shape })
    }

    pub fn from_fn(grid: &[f64], shape: Shape, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.to_vec(), grid.iter().map(|&x| f(x)).collect(), shape)
    }

    pub fn identity(grid: &[f64], shape: Shape) -> Result<Self> {
        Self::from_fn(grid, shape, |x| x)
    }

    pub fn zero(grid: &[f64], shape: Shape) -> Result<Self> {
        Self::from_fn(grid, shape, |_| 0.0)
    }

    /// `(x − strike)^+`.
    pub fn call(grid: &[f64], shape: Shape, strike: f64) -> Result<Self> {
        Self::from_fn(grid, shape, |x| (x - strike).max(0.0))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    /// Interpolation coefficients: ratios or gaps depending on the shape.
    pub(crate) fn coefficients(&self) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &m)| match self.shape {
                Shape::RatioLinear => m / x,
                Shape::GapLinear => x - m,
            })
            .collect()
    }

    /// `M(x)` under the shape's interpolation and tail rules.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid.len();
        if x <= self.grid[0] {
            return x * self.values[0] / self.grid[0];
        }
        let coeff = |i: usize| match self.shape {
            Shape::RatioLinear => self.values[i] / self.grid[i],
            Shape::GapLinear => self.grid[i] - self.values[i],
        };
        let c = if x >= self.grid[n - 1] {
            coeff(n - 1)
        } else {
            let i = self.grid.partition_point(|&g| g <= x).clamp(1, n - 1);
            let (x0, x1) = (self.grid[i - 1], self.grid[i]);
            let t = (x / x0).ln() / (x1 / x0).ln();
            (1.0 - t) * coeff(i - 1) + t * coeff(i)
        };
        let m = match self.shape {
            Shape::RatioLinear => x * c,
            Shape::GapLinear => x - c,
        };
        m.clamp(0.0, x)
    }

    /// `max_j |M(x_j) − N(x_j)| / x_j` on a shared grid.
    pub fn sup_relative_distance(&self, other: &GridFunction) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .grid
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(&x, (&a, &b))| (a - b).abs() / x)
            .fold(0.0, f64::max))
    }

    /// `max_j |M(x_j) − N(x_j)|`.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `max_j (x_j − M(x_j))`, the sup distance to the identity on the grid.
    pub fn distance_to_identity(&self) -> f64 {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(x, m)| x - m)
            .fold(0.0, f64::max)
    }

    fn same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::invalid("grid functions live on different grids"))
        }
    }

    /// The ratio `M(x)/x` at every node with its running tail maximum.
    pub fn ratio_profile(&self) -> Vec<RatioPoint> {
        let mut out: Vec<RatioPoint> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &m)| RatioPoint {
                x,
                ratio: m / x,
                tail_max: 0.0,
            })
            .collect();
        let mut running = f64::NEG_INFINITY;
        for p in out.iter_mut().rev() {
            running = running.max(p.ratio);
            p.tail_max = running;
        }
        out
    }

    /// CSV with header `x,M`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (&x, &m) in self.grid.iter().zip(&self.values) {
            w.serialize(CsvRow { x, m })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, shape: Shape) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            grid.push(row.x);
            values.push(row.m);
        }
        Self::new(grid, values, shape)
    }
}

/// The ratio profile of a solved default function.
pub fn default_ratio_profile(m: &GridFunction) -> Vec<RatioPoint> {
    m.ratio_profile()
}
