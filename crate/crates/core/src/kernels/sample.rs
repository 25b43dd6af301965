use rand::{Rng, RngCore};

use super::MarkovKernel;
use crate::error::{Error, Result};
use crate::quad::{integrate_pieces, QuadOptions};

const PANELS_PER_PIECE: usize = 16;
const BISECTION_REL_TOL: f64 = 1e-12;

/// Inverse-transform sampling: atoms by cumulative weight, the density part
/// by bracketing on panel masses followed by bisection on the numeric CDF.
pub fn sample_generic<K: MarkovKernel + ?Sized>(kernel: &K, x: f64, rng: &mut dyn RngCore) -> Result<f64> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for atom in kernel.atoms(x) {
        acc += atom.weight;
        if u < acc {
            return Ok(atom.location);
        }
    }
    invert_density(kernel, x, u - acc, u)
}

fn invert_density<K: MarkovKernel + ?Sized>(kernel: &K, x: f64, target: f64, u: f64) -> Result<f64> {
    let Some((lo, hi)) = kernel.support_hint(x) else {
        return Err(Error::Support { x, u });
    };
    let opts = QuadOptions::default();
    let density = |y: f64| [kernel.density(x, y)];
    let panels = panel_edges(lo, hi, &kernel.breakpoints(x));

    let mut cumulative = 0.0;
    for w in panels.windows(2) {
        let (p_lo, p_hi) = (w[0], w[1]);
        let [mass] = integrate_pieces(density, p_lo, p_hi, &[], opts)?;
        if cumulative + mass > target {
            return bisect(kernel, x, p_lo, p_hi, target - cumulative, opts);
        }
        cumulative += mass;
    }
    // The draw fell into the mass the support hint is allowed to drop.
    if target - cumulative <= 1e-8 {
        Ok(hi)
    } else {
        Err(Error::Support { x, u })
    }
}

fn bisect<K: MarkovKernel + ?Sized>(
    kernel: &K,
    x: f64,
    mut lo: f64,
    mut hi: f64,
    target: f64,
    opts: QuadOptions,
) -> Result<f64> {
    let start = lo;
    let mut below = 0.0;
    while hi - lo > BISECTION_REL_TOL * hi.abs().max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // Integrate only the newly added slice to keep each step cheap.
        let [slice] = integrate_pieces(|y| [kernel.density(x, y)], lo, mid, &[], opts)?;
        if below + slice > target {
            hi = mid;
        } else {
            below += slice;
            lo = mid;
        }
    }
    debug_assert!(lo >= start);
    Ok(0.5 * (lo + hi))
}

fn panel_edges(lo: f64, hi: f64, breaks: &[f64]) -> Vec<f64> {
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = vec![cuts[0]];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let log_spaced = a > 0.0 && b / a > 10.0;
        for i in 1..=PANELS_PER_PIECE {
            let t = i as f64 / PANELS_PER_PIECE as f64;
            let e = if i == PANELS_PER_PIECE {
                b
            } else if log_spaced {
                a * (b / a).powf(t)
            } else {
                a + (b - a) * t
            };
            edges.push(e);
        }
    }
    edges
}
