use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use super::solver::{minimize, SmoothObjective, SolverConfig};
use super::{Layout, LocalVariable, MpcConfig};
use crate::dynamics::{rk4_taped, Dynamics, StateVec, StepTape, INPUT_DIM, STATE_DIM};
use crate::error::{check_len, sq, Error, Result};
use crate::graph::CommGraph;

/// Below this separation the collision gradient direction is fixed to `e1`.
const COINCIDENT: f64 = 1e-9;

fn check_ref(x_ref: &[StateVec], layout: &Layout) -> Result<()> {
    check_len(layout.horizon + 1, x_ref.len())
}

fn check_agent(agent: usize, layout: &Layout) -> Result<()> {
    if agent < layout.n_agents {
        Ok(())
    } else {
        Err(Error::BadAgent {
            agent,
            n_agents: layout.n_agents,
        })
    }
}

/// Quadratic tracking cost of agent `agent`'s own block.
pub fn tracking_cost(
    theta: &LocalVariable,
    agent: usize,
    x_ref: &[StateVec],
    cfg: &MpcConfig,
) -> Result<f64> {
    let layout = theta.layout();
    check_ref(x_ref, &layout)?;
    check_agent(agent, &layout)?;
    let h = layout.horizon;
    let mut total = 0.0;
    let last = if cfg.terminal_weight { h } else { h - 1 };
    for (k, xr) in x_ref.iter().enumerate().take(last + 1) {
        let x = theta.state(agent, k);
        total += (0..STATE_DIM)
            .map(|c| cfg.q_diag[c] * sq(x[c] - xr[c]))
            .sum::<f64>();
    }
    for k in 0..h {
        let u = theta.input(agent, k);
        total += (0..INPUT_DIM)
            .map(|c| cfg.r_diag[c] * sq(u[c] - cfg.input_ref[c]))
            .sum::<f64>();
    }
    Ok(total)
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    sqrt(sq(a[0] - b[0]) + sq(a[1] - b[1]) + sq(a[2] - b[2]))
}

/// Squared-hinge penalty on separations below `d_min` between `agent` and each
/// graph neighbor, over `k = 0..=H`, read from `agent`'s copy.
pub fn collision_penalty(
    theta: &LocalVariable,
    agent: usize,
    graph: &CommGraph,
    cfg: &MpcConfig,
) -> Result<f64> {
    let layout = theta.layout();
    check_agent(agent, &layout)?;
    let mut total = 0.0;
    for &j in graph.neighbor_indices(agent)? {
        for k in 0..=layout.horizon {
            let gap = cfg.d_min - distance(&theta.position(agent, k), &theta.position(j, k));
            if gap > 0.0 {
                total += gap * gap;
            }
        }
    }
    Ok(cfg.collision_weight * total)
}

/// Squared-hinge penalty on `agent`'s own states leaving `state_bounds`.
pub fn state_bound_penalty(theta: &LocalVariable, agent: usize, cfg: &MpcConfig) -> Result<f64> {
    let layout = theta.layout();
    check_agent(agent, &layout)?;
    if cfg.state_bound_weight == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for k in 0..=layout.horizon {
        let x = theta.state(agent, k);
        for (v, b) in x.iter().zip(&cfg.state_bounds) {
            if let Some([lo, hi]) = b {
                total += sq((lo - v).max(0.0)) + sq((v - hi).max(0.0));
            }
        }
    }
    Ok(cfg.state_bound_weight * total)
}

/// `lambda . theta + rho * sum_j |theta - midpoint_j|^2`.
pub fn consensus_dual_terms(
    theta: &[f64],
    lambda: &[f64],
    midpoints: &[Vec<f64>],
    rho: f64,
) -> Result<f64> {
    check_len(theta.len(), lambda.len())?;
    let mut total: f64 = theta.iter().zip(lambda).map(|(t, l)| t * l).sum();
    for m in midpoints {
        check_len(theta.len(), m.len())?;
        total += rho * theta.iter().zip(m).map(|(t, m)| sq(t - m)).sum::<f64>();
    }
    Ok(total)
}

/// Full primal objective evaluated on `theta` as given (no rollout).
#[allow(clippy::too_many_arguments)]
pub fn local_objective(
    theta: &LocalVariable,
    agent: usize,
    x_ref: &[StateVec],
    lambda: &[f64],
    midpoints: &[Vec<f64>],
    rho: f64,
    graph: &CommGraph,
    cfg: &MpcConfig,
) -> Result<f64> {
    Ok(tracking_cost(theta, agent, x_ref, cfg)?
        + collision_penalty(theta, agent, graph, cfg)?
        + state_bound_penalty(theta, agent, cfg)?
        + consensus_dual_terms(theta.as_slice(), lambda, midpoints, rho)?)
}

/// The dual and consensus data entering one primal update.
#[derive(Debug, Clone, Copy)]
pub struct ConsensusTerms<'a> {
    pub lambda: &'a [f64],
    /// `(theta_i^k + theta_j^k) / 2` for every neighbor `j`, ascending.
    pub midpoints: &'a [Vec<f64>],
    pub rho: f64,
}

impl ConsensusTerms<'_> {
    pub const NONE: ConsensusTerms<'static> = ConsensusTerms {
        lambda: &[],
        midpoints: &[],
        rho: 0.0,
    };
}

/// Agent `agent`'s primal subproblem at one MPC step.
///
/// Own states are never free: every evaluation first replaces them with the
/// rollout of the own inputs from `x0`.
pub struct LocalProblem<'a, D: Dynamics + ?Sized> {
    pub agent: usize,
    pub layout: Layout,
    pub graph: &'a CommGraph,
    pub model: &'a D,
    pub x0: StateVec,
    pub x_ref: &'a [StateVec],
    pub cfg: &'a MpcConfig,
}

impl<D: Dynamics + ?Sized> LocalProblem<'_, D> {
    fn check(&self, theta: &[f64], terms: &ConsensusTerms<'_>) -> Result<()> {
        check_len(self.layout.len(), theta.len())?;
        check_ref(self.x_ref, &self.layout)?;
        check_agent(self.agent, &self.layout)?;
        if !terms.lambda.is_empty() {
            check_len(self.layout.len(), terms.lambda.len())?;
        }
        for m in terms.midpoints {
            check_len(self.layout.len(), m.len())?;
        }
        Ok(())
    }

    /// Overwrites the own state block with the rollout of the own inputs.
    fn roll(&self, theta: &mut LocalVariable, tapes: Option<&mut Vec<StepTape>>) -> Result<()> {
        let a = self.agent;
        let mut x = self.x0;
        theta.set_state(a, 0, &x);
        let mut tapes = tapes;
        for k in 0..self.layout.horizon {
            let u = theta.input(a, k);
            let (next, tape) =
                rk4_taped(self.model, &x, &u, self.cfg.dt).map_err(|e| e.at_step(k))?;
            if let Some(t) = tapes.as_deref_mut() {
                t.push(tape);
            }
            theta.set_state(a, k + 1, &next);
            x = next;
        }
        Ok(())
    }

    /// Copy of `theta` with the own state block replaced by the rollout.
    pub fn rolled_out(&self, theta: &[f64]) -> Result<LocalVariable> {
        let mut v = LocalVariable::from_vec(self.layout, theta.to_vec())?;
        self.roll(&mut v, None)?;
        Ok(v)
    }

    fn objective_on(&self, v: &LocalVariable, terms: &ConsensusTerms<'_>) -> Result<f64> {
        let mut f = tracking_cost(v, self.agent, self.x_ref, self.cfg)?
            + collision_penalty(v, self.agent, self.graph, self.cfg)?
            + state_bound_penalty(v, self.agent, self.cfg)?;
        if !terms.lambda.is_empty() || !terms.midpoints.is_empty() {
            let lambda_zero;
            let lambda = if terms.lambda.is_empty() {
                lambda_zero = vec![0.0; v.as_slice().len()];
                &lambda_zero[..]
            } else {
                terms.lambda
            };
            f += consensus_dual_terms(v.as_slice(), lambda, terms.midpoints, terms.rho)?;
        }
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite { step: None })
        }
    }

    /// Local objective after the own-state rollout.
    pub fn objective(&self, theta: &[f64], terms: &ConsensusTerms<'_>) -> Result<f64> {
        self.check(theta, terms)?;
        let v = self.rolled_out(theta)?;
        self.objective_on(&v, terms)
    }

    /// `g_i` alone (tracking, collision and state-bound terms) after rollout.
    pub fn local_cost(&self, theta: &[f64]) -> Result<f64> {
        self.objective(theta, &ConsensusTerms::NONE)
    }

    /// Gradient of every term w.r.t. every entry of `v`, all entries treated
    /// as independent.
    fn partial_gradient(&self, v: &LocalVariable, terms: &ConsensusTerms<'_>) -> Result<Vec<f64>> {
        let layout = self.layout;
        let cfg = self.cfg;
        let a = self.agent;
        let theta = v.as_slice();
        let mut g = vec![0.0; theta.len()];

        let last = if cfg.terminal_weight {
            layout.horizon
        } else {
            layout.horizon - 1
        };
        for k in 0..=last {
            let r = layout.state_range(a, k);
            for c in 0..STATE_DIM {
                g[r.start + c] += 2.0 * cfg.q_diag[c] * (theta[r.start + c] - self.x_ref[k][c]);
            }
        }
        for k in 0..layout.horizon {
            let r = layout.input_range(a, k);
            for c in 0..INPUT_DIM {
                g[r.start + c] += 2.0 * cfg.r_diag[c] * (theta[r.start + c] - cfg.input_ref[c]);
            }
        }

        if cfg.collision_weight > 0.0 {
            for &j in self.graph.neighbor_indices(a)? {
                for k in 0..=layout.horizon {
                    let pi = v.position(a, k);
                    let pj = v.position(j, k);
                    let d = distance(&pi, &pj);
                    let gap = cfg.d_min - d;
                    if gap <= 0.0 {
                        continue;
                    }
                    let dir = if d < COINCIDENT {
                        [1.0, 0.0, 0.0]
                    } else {
                        [
                            (pi[0] - pj[0]) / d,
                            (pi[1] - pj[1]) / d,
                            (pi[2] - pj[2]) / d,
                        ]
                    };
                    let scale = -2.0 * cfg.collision_weight * gap;
                    let ri = layout.state_range(a, k).start;
                    let rj = layout.state_range(j, k).start;
                    for c in 0..3 {
                        g[ri + c] += scale * dir[c];
                        g[rj + c] -= scale * dir[c];
                    }
                }
            }
        }

        if cfg.state_bound_weight > 0.0 {
            for k in 0..=layout.horizon {
                let r = layout.state_range(a, k);
                for (c, b) in cfg.state_bounds.iter().enumerate() {
                    if let Some([lo, hi]) = b {
                        let x = theta[r.start + c];
                        g[r.start + c] +=
                            2.0 * cfg.state_bound_weight * ((x - hi).max(0.0) - (lo - x).max(0.0));
                    }
                }
            }
        }

        if !terms.lambda.is_empty() {
            for (g, l) in g.iter_mut().zip(terms.lambda) {
                *g += l;
            }
        }
        for m in terms.midpoints {
            for ((g, t), m) in g.iter_mut().zip(theta).zip(m) {
                *g += 2.0 * terms.rho * (t - m);
            }
        }
        Ok(g)
    }

    /// Objective and gradient w.r.t. the free variables, chained through the
    /// rollout. Own-state entries of the gradient are zero.
    pub fn value_and_gradient(
        &self,
        theta: &[f64],
        terms: &ConsensusTerms<'_>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(theta, terms)?;
        let mut v = LocalVariable::from_vec(self.layout, theta.to_vec())?;
        let mut tapes = Vec::with_capacity(self.layout.horizon);
        self.roll(&mut v, Some(&mut tapes))?;
        let f = self.objective_on(&v, terms)?;
        let mut g = self.partial_gradient(&v, terms)?;

        let layout = self.layout;
        let a = self.agent;
        let state_grad = |g: &[f64], k: usize| {
            let mut s = [0.0; STATE_DIM];
            s.copy_from_slice(&g[layout.state_range(a, k)]);
            s
        };
        let mut adj = state_grad(&g, layout.horizon);
        for k in (0..layout.horizon).rev() {
            let (gx, gu) = tapes[k]
                .pullback(self.model, &adj)
                .map_err(|e| e.at_step(k))?;
            let r = layout.input_range(a, k);
            for c in 0..INPUT_DIM {
                g[r.start + c] += gu[c];
            }
            let own = state_grad(&g, k);
            for c in 0..STATE_DIM {
                adj[c] = own[c] + gx[c];
            }
        }
        for x in &mut g[layout.states_of(a)] {
            *x = 0.0;
        }
        if g.iter().all(|x| x.is_finite()) {
            Ok((f, g))
        } else {
            Err(Error::NonFinite { step: None })
        }
    }

    pub fn gradient(&self, theta: &[f64], terms: &ConsensusTerms<'_>) -> Result<Vec<f64>> {
        self.value_and_gradient(theta, terms).map(|(_, g)| g)
    }

    /// Projected-gradient minimization of the local objective starting from
    /// `initial`. The result's own state block is the rollout of its inputs.
    pub fn solve_primal(
        &self,
        initial: &[f64],
        terms: &ConsensusTerms<'_>,
        scfg: &SolverConfig,
    ) -> Result<LocalVariable> {
        self.check(initial, terms)?;
        let objective = PrimalObjective {
            problem: self,
            terms,
        };
        let report = minimize(&objective, initial, scfg)?;
        self.rolled_out(&report.z)
    }
}

struct PrimalObjective<'p, 'a, 't, D: Dynamics + ?Sized> {
    problem: &'p LocalProblem<'a, D>,
    terms: &'p ConsensusTerms<'t>,
}

impl<D: Dynamics + ?Sized> SmoothObjective for PrimalObjective<'_, '_, '_, D> {
    fn value(&self, z: &[f64]) -> Result<f64> {
        self.problem.objective(z, self.terms)
    }

    fn value_and_gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.problem.value_and_gradient(z, self.terms)
    }

    fn project(&self, z: &mut [f64]) {
        self.problem.cfg.project_inputs(&self.problem.layout, z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DroneParams, LinearModel};

    fn unit_q_cfg() -> MpcConfig {
        MpcConfig {
            q_diag: [1.0; STATE_DIM],
            r_diag: [1.0; INPUT_DIM],
            input_ref: [0.0; INPUT_DIM],
            ..Default::default()
        }
    }

    #[test]
    fn tracking_cost_examples() {
        let layout = Layout::new(1, 2);
        let x_ref = [[0.5; STATE_DIM]; 3];
        let mut theta = LocalVariable::zeros(layout);
        for k in 0..3 {
            theta.set_state(0, k, &x_ref[k]);
        }
        let cfg = unit_q_cfg();
        assert_eq!(tracking_cost(&theta, 0, &x_ref, &cfg).unwrap(), 0.0);

        // deviations of norm 1 and 3, inputs of norm 2 and 0
        let mut x0 = x_ref[0];
        x0[4] += 1.0;
        let mut x1 = x_ref[1];
        x1[0] += 3.0;
        theta.set_state(0, 0, &x0);
        theta.set_state(0, 1, &x1);
        theta.set_input(0, 0, &[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(tracking_cost(&theta, 0, &x_ref, &cfg).unwrap(), 14.0);

        // single quadratic term, H = 1
        let layout = Layout::new(1, 1);
        let mut q = [0.0; STATE_DIM];
        q[0] = 1.0;
        let cfg = MpcConfig {
            q_diag: q,
            r_diag: [1e-300; 4],
            terminal_weight: false,
            ..unit_q_cfg()
        };
        let mut theta = LocalVariable::zeros(layout);
        theta.set_state(0, 0, &{
            let mut x = [0.0; STATE_DIM];
            x[0] = 2.0;
            x
        });
        assert_eq!(
            tracking_cost(&theta, 0, &[[0.0; STATE_DIM]; 2], &cfg).unwrap(),
            4.0
        );

        assert!(matches!(
            tracking_cost(&theta, 0, &[[0.0; STATE_DIM]; 5], &cfg),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn terminal_weight_flag() {
        let layout = Layout::new(1, 1);
        let mut theta = LocalVariable::zeros(layout);
        theta.set_state(0, 1, &[1.0; STATE_DIM]);
        let on = unit_q_cfg();
        let off = MpcConfig {
            terminal_weight: false,
            ..unit_q_cfg()
        };
        let x_ref = [[0.0; STATE_DIM]; 2];
        assert_eq!(tracking_cost(&theta, 0, &x_ref, &on).unwrap(), 12.0);
        assert_eq!(tracking_cost(&theta, 0, &x_ref, &off).unwrap(), 0.0);
    }

    fn two_agent(p0: [f64; 3], p1: [f64; 3], steps: &[usize]) -> LocalVariable {
        let layout = Layout::new(2, 2);
        let mut theta = LocalVariable::zeros(layout);
        for k in 0..3 {
            let mut far = [0.0; STATE_DIM];
            far[0] = 100.0 * (k as f64 + 1.0);
            theta.set_state(0, k, &[0.0; STATE_DIM]);
            theta.set_state(1, k, &far);
        }
        for &k in steps {
            let mut a = [0.0; STATE_DIM];
            a[..3].copy_from_slice(&p0);
            let mut b = [0.0; STATE_DIM];
            b[..3].copy_from_slice(&p1);
            theta.set_state(0, k, &a);
            theta.set_state(1, k, &b);
        }
        theta
    }

    #[test]
    fn collision_penalty_examples() {
        let g = CommGraph::complete(2);
        let cfg = MpcConfig {
            d_min: 1.0,
            collision_weight: 1.0,
            ..Default::default()
        };
        let far = two_agent([0.0; 3], [5.0, 0.0, 0.0], &[]);
        assert_eq!(collision_penalty(&far, 0, &g, &cfg).unwrap(), 0.0);

        let coincident = two_agent([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], &[1]);
        assert_eq!(collision_penalty(&coincident, 0, &g, &cfg).unwrap(), 1.0);

        let cfg = MpcConfig {
            d_min: 1.0,
            collision_weight: 10.0,
            ..Default::default()
        };
        let half = two_agent([0.0; 3], [0.0, 0.5, 0.0], &[2]);
        assert_eq!(collision_penalty(&half, 0, &g, &cfg).unwrap(), 2.5);
    }

    #[test]
    fn consensus_term_examples() {
        let theta = [1.0, 2.0, 3.0];
        assert_eq!(
            consensus_dual_terms(&theta, &[0.0; 3], &[theta.to_vec()], 1.0).unwrap(),
            0.0
        );
        let mid = vec![1.0, 2.0, 5.0];
        assert_eq!(
            consensus_dual_terms(&theta, &[0.0; 3], &[mid], 0.5).unwrap(),
            2.0
        );
        let theta = [3.0, -1.0, 7.0];
        assert_eq!(
            consensus_dual_terms(&theta, &[1.0, 0.0, 0.0], &[theta.to_vec()], 4.0).unwrap(),
            3.0
        );
        assert!(consensus_dual_terms(&theta, &[0.0; 2], &[], 1.0).is_err());
    }

    #[test]
    fn local_objective_sums_components() {
        // tracking 14, collision 2.5, consensus 2.0
        let layout = Layout::new(2, 2);
        let x_ref = [[0.0; STATE_DIM]; 3];
        let mut theta = LocalVariable::zeros(layout);
        let mut far = [0.0; STATE_DIM];
        far[1] = 50.0;
        for k in 0..3 {
            theta.set_state(1, k, &far);
        }
        let mut x0 = [0.0; STATE_DIM];
        x0[4] = 1.0;
        let mut x1 = [0.0; STATE_DIM];
        x1[3] = 3.0;
        theta.set_state(0, 0, &x0);
        theta.set_state(0, 1, &x1);
        theta.set_input(0, 0, &[0.0, 0.0, 2.0, 0.0]);
        let mut near = [0.0; STATE_DIM];
        near[2] = 0.5;
        theta.set_state(1, 2, &near);
        let cfg = MpcConfig {
            d_min: 1.0,
            collision_weight: 10.0,
            ..unit_q_cfg()
        };
        let g = CommGraph::complete(2);
        assert_eq!(tracking_cost(&theta, 0, &x_ref, &cfg).unwrap(), 14.0);
        assert_eq!(collision_penalty(&theta, 0, &g, &cfg).unwrap(), 2.5);

        let mut mid = theta.as_slice().to_vec();
        mid[layout.input_range(1, 1).start] += 2.0;
        let lambda = vec![0.0; layout.len()];
        let total =
            local_objective(&theta, 0, &x_ref, &lambda, &[mid.clone()], 0.5, &g, &cfg).unwrap();
        assert_eq!(total, 18.5);

        // zero everything consensus-related: plain local MPC cost
        let plain = local_objective(&theta, 0, &x_ref, &lambda, &[mid], 0.0, &g, &cfg).unwrap();
        assert_eq!(plain, 16.5);
    }

    #[test]
    fn consensus_gradient_single_neighbor() {
        let layout = Layout::new(1, 1);
        let g = CommGraph::new(1, &[]);
        let cfg = MpcConfig {
            q_diag: [0.0; STATE_DIM],
            r_diag: [1e-300; 4],
            ..Default::default()
        };
        let model = LinearModel::decay(0.0);
        let x_ref = [[0.0; STATE_DIM]; 2];
        let problem = LocalProblem {
            agent: 0,
            layout,
            graph: &g,
            model: &model,
            x0: [0.0; STATE_DIM],
            x_ref: &x_ref,
            cfg: &cfg,
        };
        let theta: Vec<f64> = (0..layout.len()).map(|i| 0.1 * i as f64).collect();
        let mid: Vec<f64> = (0..layout.len()).map(|i| 1.0 - 0.05 * i as f64).collect();
        let lambda: Vec<f64> = (0..layout.len()).map(|i| (i % 3) as f64).collect();
        let rho = 0.7;
        let mids = [mid.clone()];
        let terms = ConsensusTerms {
            lambda: &lambda,
            midpoints: &mids,
            rho,
        };
        let grad = problem.gradient(&theta, &terms).unwrap();
        for i in layout.inputs_of(0) {
            let expected = 2.0 * rho * (theta[i] - mid[i]) + lambda[i];
            assert!((grad[i] - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
        // own states are not free
        assert!(grad[layout.states_of(0)].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn coincident_positions_use_fixed_direction() {
        let layout = Layout::new(2, 1);
        let g = CommGraph::complete(2);
        let cfg = MpcConfig {
            q_diag: [0.0; STATE_DIM],
            r_diag: [1e-300; 4],
            d_min: 1.0,
            collision_weight: 1.0,
            ..Default::default()
        };
        let params = DroneParams::default();
        let x_ref = [[0.0; STATE_DIM]; 2];
        let problem = LocalProblem {
            agent: 0,
            layout,
            graph: &g,
            model: &params,
            x0: [0.0; STATE_DIM],
            x_ref: &x_ref,
            cfg: &cfg,
        };
        let mut theta = LocalVariable::zeros(layout);
        theta.set_input(0, 0, &[params.hover_thrust(), 0.0, 0.0, 0.0]);
        let grad = problem
            .gradient(theta.as_slice(), &ConsensusTerms::NONE)
            .unwrap();
        let pj = layout.state_range(1, 0).start;
        // d/dp_j of (1 - |p_i - p_j|)^2 along e1 with p_i - p_j treated as +e1
        assert_eq!(&grad[pj..pj + 3], &[2.0, 0.0, 0.0]);
    }
}
