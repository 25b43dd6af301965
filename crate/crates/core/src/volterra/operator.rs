use rayon::prelude::*;

use super::grid::{GridFunction, Shape};
use crate::error::{Error, Result};
use crate::kernels::MarkovKernel;
use crate::quad::{integrate_pieces, QuadOptions};

/// `K(M)(x) = ∫_{[x,∞)} M(y) K(x, dy)` restricted to a grid.
///
/// Both grid-function shapes are linear in their interpolation coefficients
/// `c_i` over the hat functions `φ_i` (in `log y`, with the last one extended
/// by 1 beyond the grid), so the operator is stored as two matrices:
///
/// * `P[j][i] = ∫_{[x_j,∞)} φ_i(y) K(x_j, dy)`
/// * `Q[j][i] = ∫_{[x_j,∞)} y φ_i(y) K(x_j, dy)`
///
/// and `K(M)(x_j)` is `Q c` for ratios and `Σ_i Q[j][i] − P c` for gaps.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Vec<f64>,
    mass: Vec<f64>,
    mean: Vec<f64>,
    tail_weight: Vec<f64>,
}

impl DiscreteOperator {
    /// Assembles the operator. With `tail_tolerance` set, fails when some
    /// node sends more than that much mass past the last grid point.
    pub fn assemble<K: MarkovKernel + ?Sized>(kernel: &K, grid: &[f64], tail_tolerance: Option<f64>) -> Result<Self> {
        let probe = GridFunction::zero(grid, Shape::RatioLinear)?;
        let grid = probe.grid().to_vec();
        let n = grid.len();
        let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|j| assemble_row(kernel, &grid, j))
            .collect::<Result<_>>()?;
        let mut mass = vec![0.0; n * n];
        let mut mean = vec![0.0; n * n];
        let mut tail_weight = vec![0.0; n];
        for (j, (p, q, t)) in rows.into_iter().enumerate() {
            mass[j * n..(j + 1) * n].copy_from_slice(&p);
            mean[j * n..(j + 1) * n].copy_from_slice(&q);
            tail_weight[j] = t;
            if let Some(tol) = tail_tolerance {
                if t > tol {
                    return Err(Error::TailMass {
                        x: grid[j],
                        weight: t,
                        tolerance: tol,
                    });
                }
            }
        }
        Ok(Self {
            grid,
            mass,
            mean,
            tail_weight,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn row<'a>(&self, table: &'a [f64], j: usize) -> &'a [f64] {
        let n = self.grid.len();
        &table[j * n..(j + 1) * n]
    }

    /// `K(x_j, [x_j, ∞))`, that is `1 − a(x_j)`.
    pub fn upper_mass(&self, j: usize) -> f64 {
        self.row(&self.mass, j).iter().sum()
    }

    /// `K(id)(x_j) = x_j (1 − b(x_j))`.
    pub fn identity_image(&self, j: usize) -> f64 {
        self.row(&self.mean, j).iter().sum()
    }

    /// Kernel mass beyond the last grid point, per node.
    pub fn tail_weights(&self) -> &[f64] {
        &self.tail_weight
    }

    pub fn apply(&self, m: &GridFunction) -> Result<GridFunction> {
        if m.grid() != self.grid.as_slice() {
            return Err(Error::invalid("grid function and operator use different grids"));
        }
        let c = m.coefficients();
        let values: Vec<f64> = (0..self.grid.len())
            .map(|j| {
                let dot = |table: &[f64]| -> f64 { self.row(table, j).iter().zip(&c).map(|(w, c)| w * c).sum() };
                let v = match m.shape() {
                    Shape::RatioLinear => dot(&self.mean),
                    Shape::GapLinear => self.identity_image(j) - dot(&self.mass),
                };
                v.clamp(0.0, self.grid[j])
            })
            .collect();
        GridFunction::new(self.grid.clone(), values, m.shape())
    }
}

fn panel_opts(x: f64) -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15 * x.max(1.0),
        rel_tol: 1e-12,
        max_intervals: 200,
    }
}

fn assemble_row<K: MarkovKernel + ?Sized>(kernel: &K, grid: &[f64], j: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = grid.len();
    let x = grid[j];
    let top = grid[n - 1];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut tail = 0.0;

    for atom in kernel.atoms(x) {
        let y = atom.location;
        if atom.weight <= 0.0 || y < x {
            continue;
        }
        if y >= top {
            p[n - 1] += atom.weight;
            q[n - 1] += atom.weight * y;
            tail += atom.weight;
            continue;
        }
        let i = grid.partition_point(|&g| g <= y).clamp(1, n - 1) - 1;
        let t = (y / grid[i]).ln() / (grid[i + 1] / grid[i]).ln();
        p[i] += atom.weight * (1.0 - t);
        p[i + 1] += atom.weight * t;
        q[i] += atom.weight * y * (1.0 - t);
        q[i + 1] += atom.weight * y * t;
    }

    if let Some((lo, hi)) = kernel.support_hint(x) {
        let breaks = kernel.breakpoints(x);
        let opts = panel_opts(x);
        for i in j..n - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let (l, h) = (a.max(lo), b.min(hi));
            if l >= h {
                if a >= hi {
                    break;
                }
                continue;
            }
            let width = (b / a).ln();
            let [m0, m1, y0, y1] = integrate_pieces(
                |y| {
                    let k = kernel.density(x, y);
                    let t = (y / a).ln() / width;
                    [k * (1.0 - t), k * t, y * k * (1.0 - t), y * k * t]
                },
                l,
                h,
                &breaks,
                opts,
            )?;
            p[i] += m0;
            p[i + 1] += m1;
            q[i] += y0;
            q[i + 1] += y1;
        }
        if hi > top {
            let l = top.max(lo);
            let [m, y] = integrate_pieces(
                |y| {
                    let k = kernel.density(x, y);
                    [k, y * k]
                },
                l,
                hi,
                &breaks,
                opts,
            )?;
            p[n - 1] += m;
            q[n - 1] += y;
            tail += m;
        }
    }
    Ok((p, q, tail))
}

/// `∫_{[x,∞)} f(y) K(x, dy)` by direct quadrature, for functions known in
/// closed form. `kinks` lists points where `f` is not smooth.
pub fn apply_to_fn<K, F>(kernel: &K, x: f64, f: F, kinks: &[f64]) -> Result<f64>
where
    K: MarkovKernel + ?Sized,
    F: Fn(f64) -> f64,
{
    let mut total = 0.0;
    for atom in kernel.atoms(x) {
        if atom.location >= x {
            total += atom.weight * f(atom.location);
        }
    }
    if let Some((lo, hi)) = kernel.support_hint(x) {
        let (l, h) = (lo.max(x), hi);
        if h > l {
            let mut breaks = kernel.breakpoints(x);
            breaks.extend_from_slice(kinks);
            let opts = QuadOptions::default().with_abs_tol(1e-14 * x.max(1.0));
            total += integrate_pieces(|y| [f(y) * kernel.density(x, y)], l, h, &breaks, opts)?[0];
        }
    }
    Ok(total)
}
