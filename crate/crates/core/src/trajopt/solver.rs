//! Projected gradient descent with a monotone Armijo backtracking line search.
//! Trial steps start from the Barzilai-Borwein length of the previous
//! accepted step.

use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};

/// A smooth objective over a box-like feasible set.
pub trait SmoothObjective {
    fn value(&self, z: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Euclidean projection onto the feasible set. Must be idempotent.
    fn project(&self, z: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub max_inner_iters: usize,
    /// Stop once the projected-gradient step `|z - P(z - grad)|` falls below this.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Central-difference step for gradient checks; unused by the solver itself.
    pub fd_epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_inner_iters: 200,
            grad_tol: 1e-6,
            initial_step: 1e-3,
            min_step: 1e-12,
            max_step: 1e3,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            fd_epsilon: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field| Err(Error::InvalidConfig { field });
        if self.max_inner_iters == 0 {
            return bad("max_inner_iters");
        }
        for (v, name) in [
            (self.grad_tol, "grad_tol"),
            (self.initial_step, "initial_step"),
            (self.min_step, "min_step"),
            (self.max_step, "max_step"),
            (self.armijo, "armijo"),
            (self.fd_epsilon, "fd_epsilon"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name);
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack");
        }
        if self.min_step > self.max_step {
            return bad("min_step");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Norm of the final projected-gradient step.
    pub pg_norm: f64,
    pub converged: bool,
    /// Objective after projection of the start point, then after every
    /// accepted step.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn projected_step<O: SmoothObjective + ?Sized>(
    obj: &O,
    z: &[f64],
    g: &[f64],
    alpha: f64,
) -> Vec<f64> {
    let mut t: Vec<f64> = z.iter().zip(g).map(|(z, g)| z - alpha * g).collect();
    obj.project(&mut t);
    t
}

/// Minimizes `obj` from `z0`. The start point is projected first; its
/// evaluation errors are returned, while errors at trial points only shrink
/// the step.
pub fn minimize<O: SmoothObjective + ?Sized>(
    obj: &O,
    z0: &[f64],
    cfg: &SolverConfig,
) -> Result<MinimizeReport> {
    cfg.validate()?;
    let mut z = z0.to_vec();
    obj.project(&mut z);
    let (mut f, mut g) = obj.value_and_gradient(&z)?;
    let mut history = Vec::new();
    history.push(f);
    let mut alpha = cfg.initial_step;
    let mut pg_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_inner_iters {
        let unit = projected_step(obj, &z, &g, 1.0);
        pg_norm = norm(&unit.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        if pg_norm <= cfg.grad_tol {
            converged = true;
            break;
        }

        let mut accepted = None;
        let mut step = alpha;
        for _ in 0..=cfg.max_backtracks {
            let trial = projected_step(obj, &z, &g, step);
            let decrease: f64 = g
                .iter()
                .zip(&trial)
                .zip(&z)
                .map(|((g, t), z)| g * (t - z))
                .sum();
            if decrease == 0.0 {
                break;
            }
            if let Ok((ft, gt)) = obj.value_and_gradient(&trial) {
                if ft <= f + cfg.armijo * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= cfg.backtrack;
            if step < cfg.min_step {
                break;
            }
        }
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };
        iterations += 1;

        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..z.len() {
            let s = next[i] - z[i];
            let y = g_next[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        alpha = if sy > 0.0 {
            (ss / sy).clamp(cfg.min_step, cfg.max_step)
        } else {
            (step * 2.0).min(cfg.max_step)
        };
        z = next;
        f = f_next;
        g = g_next;
        history.push(f);
    }

    if !converged && iterations == cfg.max_inner_iters {
        let unit = projected_step(obj, &z, &g, 1.0);
        pg_norm = norm(&unit.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        converged = pg_norm <= cfg.grad_tol;
    }
    Ok(MinimizeReport {
        z,
        value: f,
        iterations,
        pg_norm,
        converged,
        history,
    })
}
