//! Run artifacts. Floats are written as `{:.16e}` (17 significant digits),
//! which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use consensus_admm::admm::Termination;
use consensus_admm::mpc::RunResult;
use consensus_admm::netsim;
use serde::Serialize;

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const SUMMARY: &str = "summary.json";
pub const DELIVERY: &str = "delivery.csv";

const STATE_COLUMNS: [&str; 12] = [
    "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "wx", "wy", "wz",
];
const INPUT_COLUMNS: [&str; 4] = ["thrust", "tau_x", "tau_y", "tau_z"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n_agents: usize,
    pub mpc_steps: usize,
    pub completed: bool,
    /// Executed-state index at which each agent first met the goal test.
    pub goal_reached_step: Vec<Option<usize>>,
    pub min_distance_overall: Option<f64>,
    pub rounds_per_mpc_step: Vec<usize>,
    pub converged_per_mpc_step: Vec<bool>,
    pub final_consensus_residual: Vec<f64>,
}

impl Summary {
    pub fn of(result: &RunResult) -> Self {
        Summary {
            n_agents: result.states.first().map_or(0, Vec::len),
            mpc_steps: result.mpc_steps(),
            completed: result.completed,
            goal_reached_step: result.goal_reached.clone(),
            min_distance_overall: result.min_distance_overall(),
            rounds_per_mpc_step: result.residuals.iter().map(Vec::len).collect(),
            converged_per_mpc_step: result
                .terminations
                .iter()
                .map(|t| *t == Termination::Converged)
                .collect(),
            final_consensus_residual: result
                .residuals
                .iter()
                .map(|r| r.last().map_or(0.0, |r| r.consensus_residual))
                .collect(),
        }
    }
}

fn float(s: &mut String, v: f64) {
    let _ = write!(s, "{v:.16e}");
}

pub fn trajectories_csv(result: &RunResult) -> String {
    let mut s = String::from("step,agent");
    for c in STATE_COLUMNS.iter().chain(&INPUT_COLUMNS) {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (step, states) in result.states.iter().enumerate() {
        for (agent, x) in states.iter().enumerate() {
            let _ = write!(s, "{step},{agent}");
            for v in x {
                s.push(',');
                float(&mut s, *v);
            }
            match result.inputs.get(step) {
                Some(inputs) => {
                    for v in &inputs[agent] {
                        s.push(',');
                        float(&mut s, *v);
                    }
                }
                None => s.push_str(",,,,"),
            }
            s.push('\n');
        }
    }
    s
}

/// One row per ADMM round; `round` counts from 1 within each MPC step.
pub fn residuals_csv(result: &RunResult) -> String {
    let mut s = String::from("mpc_step,round,consensus_residual,dual_residual\n");
    for (step, records) in result.residuals.iter().enumerate() {
        for (k, r) in records.iter().enumerate() {
            let _ = write!(s, "{step},{},", k + 1);
            float(&mut s, r.consensus_residual);
            s.push(',');
            float(&mut s, r.dual_residual);
            s.push('\n');
        }
    }
    s
}

pub fn summary_json(result: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(&Summary::of(result)).expect("summary serializes");
    s.push('\n');
    s
}

/// File name and contents of every artifact, in a fixed order.
pub fn render(result: &RunResult) -> [(&'static str, String); 4] {
    [
        (TRAJECTORIES, trajectories_csv(result)),
        (RESIDUALS, residuals_csv(result)),
        (SUMMARY, summary_json(result)),
        (DELIVERY, netsim::delivery_csv(&result.delivery_log)),
    ]
}

/// Writes the four artifacts into `out_dir`, creating it if needed.
pub fn write_outputs(result: &RunResult, out_dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, body) in render(result) {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}
