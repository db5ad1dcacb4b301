//! Reference solvers for checking the distributed code paths.
//!
//! Nothing here calls into `admm` or `trajopt`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::CommGraph;

/// `g_i(theta) = sum_c W_ic (theta_c - a_ic)^2` for every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusLsqInstance {
    pub targets: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub graph: CommGraph,
}

/// Minimizer of `sum_i |theta - a_i|^2_{W_i}`: the per-channel weighted mean.
pub fn centralized_consensus_lsq(instance: &ConsensusLsqInstance) -> Result<Vec<f64>> {
    let dim = instance.targets.first().map_or(0, Vec::len);
    let mut num = vec![0.0; dim];
    let mut den = vec![0.0; dim];
    for (a, w) in instance.targets.iter().zip(&instance.weights) {
        if a.len() != dim || w.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: dim,
                found: a.len().min(w.len()),
            });
        }
        for c in 0..dim {
            num[c] += w[c] * a[c];
            den[c] += w[c];
        }
    }
    if den.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidConfig { field: "weights" });
    }
    Ok(num.iter().zip(&den).map(|(n, d)| n / d).collect())
}

/// Exhaustive search over a regular grid with spacing `resolution` on the
/// box `[lo_c, hi_c]` (both ends included). Dimension at most 3.
///
/// For Lipschitz `f` with constant `L` the returned value is within
/// `L * resolution * sqrt(dim) / 2` of the global minimum. Only a sanity
/// bound: the returned point can be far from the minimizer when `f` is flat.
pub fn grid_minimize<F>(f: F, bounds: &[(f64, f64)], resolution: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if bounds.len() > 3 {
        return Err(Error::DimensionTooLarge { dim: bounds.len() });
    }
    if bounds.is_empty() {
        return Err(Error::InvalidConfig { field: "bounds" });
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidConfig {
            field: "resolution",
        });
    }
    let mut counts = Vec::with_capacity(bounds.len());
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidConfig { field: "bounds" });
        }
        counts.push(((hi - lo) / resolution + 1e-9) as usize + 1);
    }
    let total: usize = counts.iter().product();
    let mut best = (vec![0.0; bounds.len()], f64::INFINITY);
    let mut point = vec![0.0; bounds.len()];
    for flat in 0..total {
        let mut rem = flat;
        for (c, &n) in counts.iter().enumerate() {
            point[c] = (bounds[c].0 + (rem % n) as f64 * resolution).min(bounds[c].1);
            rem /= n;
        }
        let v = f(&point);
        if v < best.1 {
            best = (point.clone(), v);
        }
    }
    Ok(best)
}
