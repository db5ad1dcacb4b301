//! Local primal subproblem of the distributed MPC.
//!
//! Every agent keeps a copy of the stacked trajectories of *all* agents (a
//! [`LocalVariable`]). Agent `i` owns its input block; its own state block is
//! always the RK4 rollout of those inputs from the measured state. Other
//! agents' blocks are free variables, pulled by the consensus and collision
//! terms only.

mod cost;
mod solver;

pub use cost::{
    collision_penalty, consensus_dual_terms, local_objective, state_bound_penalty, tracking_cost,
    ConsensusTerms, LocalProblem,
};
pub use solver::{minimize, MinimizeReport, SmoothObjective, SolverConfig};

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::dynamics::{InputVec, StateVec, INPUT_DIM, STATE_DIM};
use crate::error::{check_len, Error, Result};

/// Shape of a [`LocalVariable`]: `n_agents` blocks of `(H+1)` states followed
/// by `H` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_agents: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn new(n_agents: usize, horizon: usize) -> Self {
        Layout { n_agents, horizon }
    }

    pub fn block_len(&self) -> usize {
        (self.horizon + 1) * STATE_DIM + self.horizon * INPUT_DIM
    }

    /// `(H+1) * 12N + H * 4N`.
    pub fn len(&self) -> usize {
        self.n_agents * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, agent: usize) -> Range<usize> {
        let start = agent * self.block_len();
        start..start + self.block_len()
    }

    pub fn state_range(&self, agent: usize, k: usize) -> Range<usize> {
        let start = agent * self.block_len() + k * STATE_DIM;
        start..start + STATE_DIM
    }

    pub fn input_range(&self, agent: usize, k: usize) -> Range<usize> {
        let start = agent * self.block_len() + (self.horizon + 1) * STATE_DIM + k * INPUT_DIM;
        start..start + INPUT_DIM
    }

    /// All state entries of one agent's block.
    pub fn states_of(&self, agent: usize) -> Range<usize> {
        let start = agent * self.block_len();
        start..start + (self.horizon + 1) * STATE_DIM
    }

    /// All input entries of one agent's block.
    pub fn inputs_of(&self, agent: usize) -> Range<usize> {
        let start = agent * self.block_len() + (self.horizon + 1) * STATE_DIM;
        start..start + self.horizon * INPUT_DIM
    }
}

/// One agent's copy of every agent's state and input trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVariable {
    layout: Layout,
    data: Vec<f64>,
}

/// Aggregated multiplier; shares the shape of [`LocalVariable`].
pub type DualVariable = LocalVariable;

impl LocalVariable {
    pub fn zeros(layout: Layout) -> Self {
        LocalVariable {
            layout,
            data: vec![0.0; layout.len()],
        }
    }

    pub fn from_vec(layout: Layout, data: Vec<f64>) -> Result<Self> {
        check_len(layout.len(), data.len())?;
        Ok(LocalVariable { layout, data })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn state(&self, agent: usize, k: usize) -> StateVec {
        let mut x = [0.0; STATE_DIM];
        x.copy_from_slice(&self.data[self.layout.state_range(agent, k)]);
        x
    }

    pub fn set_state(&mut self, agent: usize, k: usize, x: &StateVec) {
        let r = self.layout.state_range(agent, k);
        self.data[r].copy_from_slice(x);
    }

    pub fn input(&self, agent: usize, k: usize) -> InputVec {
        let mut u = [0.0; INPUT_DIM];
        u.copy_from_slice(&self.data[self.layout.input_range(agent, k)]);
        u
    }

    pub fn set_input(&mut self, agent: usize, k: usize, u: &InputVec) {
        let r = self.layout.input_range(agent, k);
        self.data[r].copy_from_slice(u);
    }

    pub fn position(&self, agent: usize, k: usize) -> [f64; 3] {
        let s = self.layout.state_range(agent, k).start;
        [self.data[s], self.data[s + 1], self.data[s + 2]]
    }

    /// Inputs of one agent as fixed-size arrays.
    pub fn inputs(&self, agent: usize) -> Vec<InputVec> {
        (0..self.layout.horizon)
            .map(|k| self.input(agent, k))
            .collect()
    }

    /// Receding-horizon warm start: every trajectory moves one step earlier and
    /// the last entry is repeated.
    pub fn shifted(&self) -> Self {
        let h = self.layout.horizon;
        let mut out = self.clone();
        for a in 0..self.layout.n_agents {
            for k in 0..h {
                out.set_state(a, k, &self.state(a, k + 1));
            }
            out.set_state(a, h, &self.state(a, h));
            for k in 0..h {
                out.set_input(a, k, &self.input(a, (k + 1).min(h - 1)));
            }
        }
        out
    }
}

/// Per-agent MPC settings shared by every local problem.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MpcConfig {
    pub horizon: usize,
    /// Discretization step in seconds.
    pub dt: f64,
    pub q_diag: [f64; STATE_DIM],
    pub r_diag: [f64; INPUT_DIM],
    /// Input the `R` weight pulls toward. The literal cost uses zero; hover
    /// thrust makes the goal equilibrium a stationary point.
    #[cfg_attr(feature = "serde", serde(default))]
    pub input_ref: InputVec,
    pub d_min: f64,
    pub collision_weight: f64,
    /// `[lo, hi]` per input channel.
    pub input_bounds: [[f64; 2]; INPUT_DIM],
    /// `[lo, hi]` per state channel, `None` for unbounded.
    #[cfg_attr(feature = "serde", serde(default))]
    pub state_bounds: [Option<[f64; 2]>; STATE_DIM],
    #[cfg_attr(feature = "serde", serde(default))]
    pub state_bound_weight: f64,
    /// Also weight the deviation of the final predicted state.
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub terminal_weight: bool,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 15,
            dt: 0.05,
            q_diag: [
                4.0, 4.0, 4.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.05, 0.05, 0.05,
            ],
            r_diag: [0.05, 5.0, 5.0, 5.0],
            input_ref: [0.0; INPUT_DIM],
            d_min: 0.5,
            collision_weight: 200.0,
            input_bounds: [[0.0, 20.0], [-0.2, 0.2], [-0.2, 0.2], [-0.1, 0.1]],
            state_bounds: [None; STATE_DIM],
            state_bound_weight: 0.0,
            terminal_weight: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field| Err(Error::InvalidConfig { field });
        if self.horizon < 1 {
            return bad("horizon");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt");
        }
        if !self.q_diag.iter().all(|q| *q >= 0.0 && q.is_finite()) {
            return bad("q_diag");
        }
        if !self.r_diag.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return bad("r_diag");
        }
        if !self.input_ref.iter().all(|u| u.is_finite()) {
            return bad("input_ref");
        }
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return bad("d_min");
        }
        if !(self.collision_weight >= 0.0 && self.collision_weight.is_finite()) {
            return bad("collision_weight");
        }
        if !self
            .input_bounds
            .iter()
            .all(|[lo, hi]| lo <= hi && !lo.is_nan() && !hi.is_nan())
        {
            return bad("input_bounds");
        }
        if !self.state_bounds.iter().flatten().all(|[lo, hi]| lo <= hi) {
            return bad("state_bounds");
        }
        if !(self.state_bound_weight >= 0.0 && self.state_bound_weight.is_finite()) {
            return bad("state_bound_weight");
        }
        Ok(())
    }

    /// Clamps every input entry of `theta` into the input box.
    pub fn project_inputs(&self, layout: &Layout, theta: &mut [f64]) {
        for a in 0..layout.n_agents {
            for k in 0..layout.horizon {
                let r = layout.input_range(a, k);
                for (v, [lo, hi]) in theta[r].iter_mut().zip(&self.input_bounds) {
                    *v = v.clamp(*lo, *hi);
                }
            }
        }
    }
}
