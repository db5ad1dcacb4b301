//! Receding-horizon loop: consensus ADMM to agree on a plan, apply each
//! agent's first input, advance the true state, shift, repeat.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::admm::{
    run_admm, AdmmConfig, ConsensusProblem, Exchange, ResidualRecord, SwarmIterate, Termination,
};
use crate::dynamics::{rk4, DroneParams, DroneState, InputVec, StateVec};
use crate::error::{sq, Error, Result};
use crate::graph::CommGraph;
use crate::netsim::{ChannelConfig, DeliveryEntry, Network};
use crate::trajopt::{
    ConsensusTerms, Layout, LocalProblem, LocalVariable, MpcConfig, SolverConfig,
};

/// Completion also requires the speed to drop below this (m/s).
pub const GOAL_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub n_agents: usize,
    pub edges: Vec<[usize; 2]>,
    pub initial_states: Vec<DroneState>,
    pub goal_positions: Vec<[f64; 3]>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub drone_params: DroneParams,
    pub mpc: MpcConfig,
    pub admm: AdmmConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub channel: ChannelConfig,
    #[cfg_attr(feature = "serde", serde(default))]
    pub solver: SolverConfig,
    pub mpc_max_steps: usize,
    pub goal_tolerance: f64,
}

/// A scenario field that failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    pub field: &'static str,
    pub cause: Error,
}

impl core::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.cause)
    }
}

impl core::error::Error for ScenarioError {}

impl Scenario {
    pub fn graph(&self) -> CommGraph {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        CommGraph::new(self.n_agents, &edges)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n_agents, self.mpc.horizon)
    }

    pub fn validate(&self) -> core::result::Result<(), ScenarioError> {
        fn field(field: &'static str) -> impl FnOnce(Error) -> ScenarioError {
            move |cause| ScenarioError { field, cause }
        }
        fn invalid(name: &'static str) -> ScenarioError {
            ScenarioError {
                field: name,
                cause: Error::InvalidConfig { field: name },
            }
        }
        if self.n_agents == 0 {
            return Err(invalid("n_agents"));
        }
        self.graph().validate().map_err(field("graph"))?;
        if self.initial_states.len() != self.n_agents {
            return Err(ScenarioError {
                field: "initial_states",
                cause: Error::ShapeMismatch {
                    expected: self.n_agents,
                    found: self.initial_states.len(),
                },
            });
        }
        if self.goal_positions.len() != self.n_agents {
            return Err(ScenarioError {
                field: "goal_positions",
                cause: Error::ShapeMismatch {
                    expected: self.n_agents,
                    found: self.goal_positions.len(),
                },
            });
        }
        if self
            .initial_states
            .iter()
            .any(|s| !s.to_array().iter().all(|v| v.is_finite()))
        {
            return Err(invalid("initial_states"));
        }
        if self.goal_positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("goal_positions"));
        }
        self.drone_params.validate().map_err(|cause| match cause {
            Error::InvalidConfig { field } => ScenarioError { field, cause },
            cause => ScenarioError {
                field: "drone_params",
                cause,
            },
        })?;
        let by_name = |cause: Error| match cause {
            Error::InvalidConfig { field } => ScenarioError { field, cause },
            cause => ScenarioError {
                field: "config",
                cause,
            },
        };
        self.mpc.validate().map_err(by_name)?;
        self.admm.validate().map_err(by_name)?;
        self.channel.validate().map_err(by_name)?;
        self.solver.validate().map_err(by_name)?;
        if self.mpc_max_steps == 0 {
            return Err(invalid("mpc_max_steps"));
        }
        if !(self.goal_tolerance > 0.0 && self.goal_tolerance.is_finite()) {
            return Err(invalid("goal_tolerance"));
        }
        Ok(())
    }
}

/// Hover at `p`: zero velocity, level attitude, zero rates.
pub fn goal_state(p: &[f64; 3]) -> StateVec {
    DroneState::at_rest(*p).to_array()
}

fn at_goal(x: &StateVec, goal: &[f64; 3], tol: f64) -> bool {
    let d = sqrt((0..3).map(|c| sq(x[c] - goal[c])).sum());
    let speed = sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5]);
    d <= tol && speed < GOAL_SPEED
}

/// Smallest distance over all agent pairs, `None` for a single agent.
pub fn min_pairwise_distance(states: &[StateVec]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            let d = sqrt((0..3).map(|c| sq(states[i][c] - states[j][c])).sum());
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    best
}

/// Every agent's primal subproblem at one MPC step, as seen by the ADMM engine.
pub struct MpcConsensus<'a> {
    pub graph: &'a CommGraph,
    pub params: &'a DroneParams,
    pub cfg: &'a MpcConfig,
    pub solver: &'a SolverConfig,
    pub layout: Layout,
    /// Measured state of every agent.
    pub x0: Vec<StateVec>,
    /// Tracking reference of every agent, `H + 1` states each.
    pub x_ref: Vec<Vec<StateVec>>,
}

impl MpcConsensus<'_> {
    fn local(&self, agent: usize) -> LocalProblem<'_, DroneParams> {
        LocalProblem {
            agent,
            layout: self.layout,
            graph: self.graph,
            model: self.params,
            x0: self.x0[agent],
            x_ref: &self.x_ref[agent],
            cfg: self.cfg,
        }
    }
}

impl ConsensusProblem for MpcConsensus<'_> {
    fn n_agents(&self) -> usize {
        self.layout.n_agents
    }

    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn solve_primal(
        &self,
        agent: usize,
        current: &[f64],
        lambda: &[f64],
        midpoints: &[Vec<f64>],
        rho: f64,
    ) -> Result<Vec<f64>> {
        let terms = ConsensusTerms {
            lambda,
            midpoints,
            rho,
        };
        Ok(self
            .local(agent)
            .solve_primal(current, &terms, self.solver)?
            .into_vec())
    }

    fn local_cost(&self, agent: usize, theta: &[f64]) -> Result<f64> {
        self.local(agent).local_cost(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    /// Executed states, `states[step][agent]`; one more entry than `inputs`.
    pub states: Vec<Vec<StateVec>>,
    /// Applied inputs, `inputs[step][agent]`.
    pub inputs: Vec<Vec<InputVec>>,
    /// ADMM residuals of each MPC step.
    pub residuals: Vec<Vec<ResidualRecord>>,
    pub terminations: Vec<Termination>,
    /// Smallest pairwise distance at every executed state.
    pub min_distance: Vec<Option<f64>>,
    /// First executed-state index at which each agent satisfied the goal test.
    pub goal_reached: Vec<Option<usize>>,
    /// All agents at their goals when the loop stopped.
    pub completed: bool,
    pub delivery_log: Vec<DeliveryEntry>,
}

impl RunResult {
    pub fn mpc_steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn min_distance_overall(&self) -> Option<f64> {
        self.min_distance.iter().flatten().copied().reduce(f64::min)
    }
}

/// Step-0 initial guess: every agent's block is a straight line in position
/// from its start to its goal with hover inputs.
pub fn initial_guess(scenario: &Scenario) -> LocalVariable {
    let layout = scenario.layout();
    let h = layout.horizon;
    let hover = [scenario.drone_params.hover_thrust(), 0.0, 0.0, 0.0];
    let mut theta = LocalVariable::zeros(layout);
    for a in 0..layout.n_agents {
        let x0 = scenario.initial_states[a].to_array();
        let goal = scenario.goal_positions[a];
        for k in 0..=h {
            let s = k as f64 / h as f64;
            let mut x = x0;
            for c in 0..3 {
                x[c] = x0[c] + s * (goal[c] - x0[c]);
            }
            theta.set_state(a, k, &x);
        }
        for k in 0..h {
            theta.set_input(a, k, &hover);
        }
    }
    theta
}

/// Shifted primal and dual iterates of the previous step.
type WarmStart = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Stepwise driver of the receding-horizon loop.
pub struct Simulation<'s, E: Exchange> {
    scenario: &'s Scenario,
    graph: CommGraph,
    x_ref: Vec<Vec<StateVec>>,
    exchange: E,
    states: Vec<StateVec>,
    warm: Option<WarmStart>,
    round: usize,
    result: RunResult,
}

impl<'s, E: Exchange> Simulation<'s, E> {
    pub fn new(scenario: &'s Scenario, exchange: E) -> Result<Self> {
        scenario.validate().map_err(|e| e.cause)?;
        let graph = scenario.graph();
        let h = scenario.mpc.horizon;
        let x_ref = scenario
            .goal_positions
            .iter()
            .map(|g| vec![goal_state(g); h + 1])
            .collect();
        let states: Vec<StateVec> = scenario
            .initial_states
            .iter()
            .map(DroneState::to_array)
            .collect();
        let mut result = RunResult {
            goal_reached: vec![None; scenario.n_agents],
            ..Default::default()
        };
        result.min_distance.push(min_pairwise_distance(&states));
        result.states.push(states.clone());
        let mut sim = Simulation {
            scenario,
            graph,
            x_ref,
            exchange,
            states,
            warm: None,
            round: 0,
            result,
        };
        sim.mark_goals();
        Ok(sim)
    }

    fn mark_goals(&mut self) {
        let idx = self.result.states.len() - 1;
        for (a, x) in self.states.iter().enumerate() {
            if self.result.goal_reached[a].is_none()
                && at_goal(
                    x,
                    &self.scenario.goal_positions[a],
                    self.scenario.goal_tolerance,
                )
            {
                self.result.goal_reached[a] = Some(idx);
            }
        }
    }

    /// All agents satisfy the goal test at the current state.
    pub fn all_at_goal(&self) -> bool {
        self.states
            .iter()
            .zip(&self.scenario.goal_positions)
            .all(|(x, g)| at_goal(x, g, self.scenario.goal_tolerance))
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    /// Runs ADMM from the warm start and returns the final iterate, residuals
    /// and termination, without applying anything.
    pub fn plan(&mut self) -> Result<(SwarmIterate, Vec<ResidualRecord>, Termination)> {
        let s = self.scenario;
        let layout = s.layout();
        let problem = MpcConsensus {
            graph: &self.graph,
            params: &s.drone_params,
            cfg: &s.mpc,
            solver: &s.solver,
            layout,
            x0: self.states.clone(),
            x_ref: self.x_ref.clone(),
        };
        let mut start = match &self.warm {
            Some((primal, dual)) => SwarmIterate::with_dual(primal.clone(), dual.clone())?,
            None => SwarmIterate::new(vec![initial_guess(s).into_vec(); s.n_agents])?,
        };
        start.round = self.round;
        let (iterate, records, term) =
            run_admm(&problem, &self.graph, start, &s.admm, &mut self.exchange)?;
        // the next step's priming exchange gets its own round number
        self.round = iterate.round + 1;
        Ok((iterate, records, term))
    }

    /// One MPC step: plan, apply every agent's first own input, advance.
    pub fn step(&mut self) -> Result<()> {
        let step = self.result.inputs.len();
        let wrap = |e: Error| Error::MpcStep {
            step,
            source: Box::new(e),
        };
        let (iterate, records, term) = self.plan().map_err(wrap)?;
        let plans = &iterate.primal;
        let layout = self.scenario.layout();
        let mut applied = Vec::with_capacity(self.states.len());
        let mut next = Vec::with_capacity(self.states.len());
        for (a, plan) in plans.iter().enumerate() {
            let own = LocalVariable::from_vec(layout, plan.clone()).map_err(wrap)?;
            let u = own.input(a, 0);
            let x = rk4(
                &self.scenario.drone_params,
                &self.states[a],
                &u,
                self.scenario.mpc.dt,
            )
            .map_err(|e| wrap(e.for_agent(a)))?;
            applied.push(u);
            next.push(x);
        }
        let shift = |vs: &[Vec<f64>]| {
            vs.iter()
                .map(|v| LocalVariable::from_vec(layout, v.clone()).map(|v| v.shifted().into_vec()))
                .collect::<Result<Vec<_>>>()
        };
        self.warm = Some((
            shift(plans).map_err(wrap)?,
            shift(&iterate.dual).map_err(wrap)?,
        ));
        self.states = next;
        self.result.inputs.push(applied);
        self.result.residuals.push(records);
        self.result.terminations.push(term);
        self.result
            .min_distance
            .push(min_pairwise_distance(&self.states));
        self.result.states.push(self.states.clone());
        self.mark_goals();
        Ok(())
    }

    /// Steps until every agent is at its goal or `mpc_max_steps` is reached.
    pub fn run(mut self) -> Result<(RunResult, E)> {
        while !self.all_at_goal() && self.result.inputs.len() < self.scenario.mpc_max_steps {
            self.step()?;
        }
        self.result.completed = self.all_at_goal();
        Ok((self.result, self.exchange))
    }
}

/// Runs the scenario through the simulated channel of its `channel` config;
/// the delivery log is stored in the result.
pub fn mpc_loop(scenario: &Scenario) -> Result<RunResult> {
    let net = Network::new(scenario.channel)?;
    let (mut result, net) = Simulation::new(scenario, net)?.run()?;
    result.delivery_log = net.delivery_log().to_vec();
    Ok(result)
}

/// Runs the scenario with a caller-supplied exchange.
pub fn mpc_loop_with<E: Exchange>(scenario: &Scenario, exchange: E) -> Result<(RunResult, E)> {
    Simulation::new(scenario, exchange)?.run()
}

/// Checks `states[s + 1] == rk4(states[s], inputs[s])` bit-for-bit for every
/// agent and step. Returns the first offending `(step, agent)`.
pub fn replay_mismatch(
    result: &RunResult,
    params: &DroneParams,
    dt: f64,
) -> Option<(usize, usize)> {
    for (s, inputs) in result.inputs.iter().enumerate() {
        for (a, u) in inputs.iter().enumerate() {
            match rk4(params, &result.states[s][a], u, dt) {
                Ok(x) if x == result.states[s + 1][a] => {}
                _ => return Some((s, a)),
            }
        }
    }
    None
}
