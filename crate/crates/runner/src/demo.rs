//! Built-in scenarios.

use consensus_admm::admm::AdmmConfig;
use consensus_admm::dynamics::{DroneParams, DroneState};
use consensus_admm::mpc::Scenario;
use consensus_admm::netsim::ChannelConfig;
use consensus_admm::trajopt::{MpcConfig, SolverConfig};

pub const NAMES: [&str; 3] = ["two_drone_swap", "single_hover", "triangle"];

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "two_drone_swap" => Some(two_drone_swap()),
        "single_hover" => Some(single_hover()),
        "triangle" => Some(triangle()),
        _ => None,
    }
}

/// MPC settings shared by the demos: `H = 15`, `h = 0.05`, hover as the
/// input reference, soft roll/pitch limits of 0.5 rad.
pub fn mpc_config(params: &DroneParams) -> MpcConfig {
    let mut cfg = MpcConfig {
        q_diag: [
            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.05, 0.05, 0.05,
        ],
        input_ref: [params.hover_thrust(), 0.0, 0.0, 0.0],
        collision_weight: 500.0,
        state_bound_weight: 1000.0,
        ..MpcConfig::default()
    };
    cfg.state_bounds[6] = Some([-0.5, 0.5]);
    cfg.state_bounds[7] = Some([-0.5, 0.5]);
    cfg
}

fn scenario(edges: Vec<[usize; 2]>, starts: &[[f64; 3]], goals: &[[f64; 3]]) -> Scenario {
    let drone_params = DroneParams::default();
    Scenario {
        n_agents: starts.len(),
        edges,
        initial_states: starts.iter().map(|p| DroneState::at_rest(*p)).collect(),
        goal_positions: goals.to_vec(),
        mpc: mpc_config(&drone_params),
        drone_params,
        admm: AdmmConfig {
            rho: 20.0,
            max_rounds: 60,
            tol_consensus: 1e-2,
            tol_dual: 1e-2,
        },
        channel: ChannelConfig {
            drop_probability: 0.0,
            seed: 7,
        },
        solver: SolverConfig {
            max_inner_iters: 50,
            ..SolverConfig::default()
        },
        mpc_max_steps: 400,
        goal_tolerance: 0.1,
    }
}

/// Two drones 4 m apart fly to each other's start. The second one starts
/// 0.2 m higher: with equal altitudes the problem is symmetric under a
/// half turn about the vertical axis and the drones stall nose to nose.
pub fn two_drone_swap() -> Scenario {
    scenario(
        vec![[0, 1]],
        &[[-2.0, 0.0, 1.0], [2.0, 0.0, 1.2]],
        &[[2.0, 0.0, 1.0], [-2.0, 0.0, 1.2]],
    )
}

/// One drone hops 1 m sideways and settles into hover.
pub fn single_hover() -> Scenario {
    let mut s = scenario(Vec::new(), &[[0.0, 0.0, 1.0]], &[[1.0, 0.0, 1.0]]);
    s.mpc_max_steps = 200;
    s
}

/// Three drones on a circle of radius 1.5 m each fly to the next vertex.
/// Altitudes differ by 0.15 m to break the rotational symmetry.
pub fn triangle() -> Scenario {
    let r = 1.5;
    let vertex = |k: usize, z: f64| {
        let a = 2.0 * core::f64::consts::PI * k as f64 / 3.0;
        [r * a.cos(), r * a.sin(), z]
    };
    let z = [1.0, 1.15, 1.3];
    let starts = [vertex(0, z[0]), vertex(1, z[1]), vertex(2, z[2])];
    let goals = [vertex(1, z[0]), vertex(2, z[1]), vertex(0, z[2])];
    let mut s = scenario(vec![[0, 1], [0, 2], [1, 2]], &starts, &goals);
    s.mpc_max_steps = 700;
    s
}
