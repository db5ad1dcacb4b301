//! Analytic gradient of the local objective against central differences.

use consensus_admm::dynamics::{DroneParams, StateVec, STATE_DIM};
use consensus_admm::graph::CommGraph;
use consensus_admm::mpc::goal_state;
use consensus_admm::trajopt::{ConsensusTerms, Layout, LocalProblem, LocalVariable, MpcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

struct Instance {
    layout: Layout,
    graph: CommGraph,
    cfg: MpcConfig,
    x0: StateVec,
    x_ref: Vec<StateVec>,
    theta: Vec<f64>,
    lambda: Vec<f64>,
    midpoints: Vec<Vec<f64>>,
    rho: f64,
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, h: usize, bounds: bool) -> Instance {
    let params = DroneParams::default();
    let layout = Layout::new(n, h);
    let graph = CommGraph::complete(n);
    let mut cfg = MpcConfig {
        horizon: h,
        input_ref: [params.hover_thrust(), 0.0, 0.0, 0.0],
        terminal_weight: rng.gen_bool(0.5),
        ..MpcConfig::default()
    };
    if bounds {
        cfg.state_bounds[2] = Some([0.9, 1.02]);
        cfg.state_bounds[7] = Some([-0.05, 0.05]);
        cfg.state_bound_weight = 50.0;
    }

    let mut x0 = [0.0; STATE_DIM];
    for (c, v) in x0.iter_mut().enumerate() {
        *v = match c {
            0..=2 => rng.gen_range(-0.5..0.5),
            6..=8 => rng.gen_range(-0.2..0.2),
            _ => rng.gen_range(-0.5..0.5),
        };
    }
    x0[2] += 1.0;
    let goal = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(0.5..1.5),
    ];
    let x_ref = vec![goal_state(&goal); h + 1];

    let mut theta = LocalVariable::zeros(layout);
    for v in theta.as_mut_slice() {
        *v = rng.gen_range(-1.0..1.0);
    }
    for a in 0..n {
        for k in 0..h {
            let u = [
                params.hover_thrust() + rng.gen_range(-2.0..2.0),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            ];
            theta.set_input(a, k, &u);
        }
    }
    let problem = LocalProblem {
        agent: 0,
        layout,
        graph: &graph,
        model: &params,
        x0,
        x_ref: &x_ref,
        cfg: &cfg,
    };
    let rolled = problem.rolled_out(theta.as_slice()).unwrap();
    // park every neighbor inside the safety distance of the own rollout
    for j in 1..n {
        for k in 0..=h {
            let p = rolled.position(0, k);
            let mut x = theta.state(j, k);
            for c in 0..3 {
                x[c] = p[c] + rng.gen_range(-0.25..0.25);
            }
            theta.set_state(j, k, &x);
        }
    }

    let len = layout.len();
    let lambda = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let midpoints = (1..n)
        .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Instance {
        layout,
        graph,
        cfg,
        x0,
        x_ref,
        theta: theta.into_vec(),
        lambda,
        midpoints,
        rho: rng.gen_range(0.1..5.0),
    }
}

/// Relative 2-norm error between the analytic and central-difference
/// gradients, plus whether any collision hinge was active.
fn check(inst: &Instance) -> (f64, bool) {
    let params = DroneParams::default();
    let problem = LocalProblem {
        agent: 0,
        layout: inst.layout,
        graph: &inst.graph,
        model: &params,
        x0: inst.x0,
        x_ref: &inst.x_ref,
        cfg: &inst.cfg,
    };
    let terms = ConsensusTerms {
        lambda: &inst.lambda,
        midpoints: &inst.midpoints,
        rho: inst.rho,
    };
    let g = problem.gradient(&inst.theta, &terms).unwrap();

    let mut num = 0.0;
    let mut den = 0.0;
    let mut z = inst.theta.clone();
    for i in 0..z.len() {
        let orig = z[i];
        z[i] = orig + EPS;
        let fp = problem.objective(&z, &terms).unwrap();
        z[i] = orig - EPS;
        let fm = problem.objective(&z, &terms).unwrap();
        z[i] = orig;
        let fd = (fp - fm) / (2.0 * EPS);
        num += (g[i] - fd).powi(2);
        den += fd * fd;
    }

    let rolled = problem.rolled_out(&inst.theta).unwrap();
    let active = (1..inst.layout.n_agents).any(|j| {
        (0..=inst.layout.horizon).any(|k| {
            let (a, b) = (rolled.position(0, k), rolled.position(j, k));
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            d < inst.cfg.d_min
        })
    });
    (num.sqrt() / den.sqrt(), active)
}

#[test]
fn ten_two_agent_instances_with_active_collision() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..10 {
        let inst = random_instance(&mut rng, 2, 3, false);
        let (err, active) = check(&inst);
        assert!(active, "case {case}: collision hinge inactive");
        assert!(err < 1e-4, "case {case}: relative error {err:e}");
    }
}

#[test]
fn every_term_up_to_three_agents_and_five_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in 1..=3 {
        for h in 1..=5 {
            for bounds in [false, true] {
                let inst = random_instance(&mut rng, n, h, bounds);
                let (err, _) = check(&inst);
                assert!(
                    err < 1e-4,
                    "N={n} H={h} bounds={bounds}: relative error {err:e}"
                );
            }
        }
    }
}

#[test]
fn consensus_term_alone_is_two_rho_offset_plus_lambda() {
    let params = DroneParams::default();
    let layout = Layout::new(2, 2);
    let graph = CommGraph::complete(2);
    // zero tracking and collision weights leave only the consensus terms
    // plus the input regularizer, which vanishes at `input_ref`
    let cfg = MpcConfig {
        horizon: 2,
        q_diag: [0.0; STATE_DIM],
        collision_weight: 0.0,
        input_ref: [1.0, 0.0, 0.0, 0.0],
        ..MpcConfig::default()
    };
    let x_ref = vec![[0.0; STATE_DIM]; 3];
    let problem = LocalProblem {
        agent: 0,
        layout,
        graph: &graph,
        model: &params,
        x0: [0.0; STATE_DIM],
        x_ref: &x_ref,
        cfg: &cfg,
    };
    let mut theta = LocalVariable::zeros(layout);
    for v in theta.as_mut_slice() {
        *v = 0.3;
    }
    for k in 0..2 {
        theta.set_input(0, k, &[1.0, 0.0, 0.0, 0.0]);
    }
    let theta = theta.into_vec();
    let mid: Vec<f64> = (0..layout.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let lambda: Vec<f64> = (0..layout.len()).map(|i| (i as f64 * 0.11).cos()).collect();
    let rho = 1.7;
    let terms = ConsensusTerms {
        lambda: &lambda,
        midpoints: std::slice::from_ref(&mid),
        rho,
    };
    let g = problem.gradient(&theta, &terms).unwrap();
    for i in layout.block(1) {
        let expected = 2.0 * rho * (theta[i] - mid[i]) + lambda[i];
        assert!((g[i] - expected).abs() < 1e-12, "entry {i}");
    }
}
