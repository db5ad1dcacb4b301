//! Synchronous consensus ADMM over a communication graph.
//!
//! One round is Gauss-Jacobi: every agent solves its primal problem from the
//! previous round's data, the new iterates are exchanged, then every agent
//! updates its aggregated multiplier
//!
//! ```text
//! lambda_i <- lambda_i + rho * sum_{j in N_i} (theta_i - theta_j)
//! ```
//!
//! using the iterates it received. The primal problem is pluggable through
//! [`ConsensusProblem`] and the channel through [`Exchange`].

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{check_len, Error, Result};
use crate::graph::CommGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_rounds: usize,
    pub tol_consensus: f64,
    pub tol_dual: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            max_rounds: 100,
            tol_consensus: 1e-3,
            tol_dual: 1e-3,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig { field: "rho" });
        }
        if self.max_rounds < 1 {
            return Err(Error::InvalidConfig {
                field: "max_rounds",
            });
        }
        if !(self.tol_consensus > 0.0) {
            return Err(Error::InvalidConfig {
                field: "tol_consensus",
            });
        }
        if !(self.tol_dual > 0.0) {
            return Err(Error::InvalidConfig { field: "tol_dual" });
        }
        Ok(())
    }
}

/// Per-agent primal update of a consensus problem.
pub trait ConsensusProblem {
    fn n_agents(&self) -> usize;

    /// Length of every local variable.
    fn dim(&self) -> usize;

    /// Minimizes `g_i(theta) + lambda . theta + rho * sum_j |theta - m_j|^2`
    /// starting from `current`.
    fn solve_primal(
        &self,
        agent: usize,
        current: &[f64],
        lambda: &[f64],
        midpoints: &[Vec<f64>],
        rho: f64,
    ) -> Result<Vec<f64>>;

    /// `g_i(theta)`, logged per round.
    fn local_cost(&self, agent: usize, theta: &[f64]) -> Result<f64>;
}

/// Messages received by one agent: `(sender, payload)` sorted by sender.
pub type Inbox = Vec<(usize, Vec<f64>)>;

/// Delivery of freshly computed iterates to graph neighbors.
pub trait Exchange {
    /// `outgoing[i]` is agent `i`'s payload; the result holds one inbox per
    /// agent. Must not return before every payload of the round is handled.
    fn exchange(
        &mut self,
        round: usize,
        outgoing: &[Vec<f64>],
        graph: &CommGraph,
    ) -> Result<Vec<Inbox>>;
}

/// Lossless in-memory delivery.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectExchange;

impl Exchange for DirectExchange {
    fn exchange(
        &mut self,
        _round: usize,
        outgoing: &[Vec<f64>],
        graph: &CommGraph,
    ) -> Result<Vec<Inbox>> {
        check_len(graph.n_agents(), outgoing.len())?;
        (0..graph.n_agents())
            .map(|i| {
                Ok(graph
                    .neighbor_indices(i)?
                    .iter()
                    .map(|&j| (j, outgoing[j].clone()))
                    .collect())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmIterate {
    pub primal: Vec<Vec<f64>>,
    pub dual: Vec<Vec<f64>>,
    /// Neighbor iterates as last delivered; empty until the first exchange.
    pub inbox: Vec<Inbox>,
    pub round: usize,
}

impl SwarmIterate {
    /// Zero multipliers, round 0, nothing delivered yet.
    pub fn new(primal: Vec<Vec<f64>>) -> Result<Self> {
        let dim = primal.first().map_or(0, Vec::len);
        for p in &primal {
            check_len(dim, p.len())?;
        }
        let dual = vec![vec![0.0; dim]; primal.len()];
        Ok(SwarmIterate {
            primal,
            dual,
            inbox: Vec::new(),
            round: 0,
        })
    }

    pub fn with_dual(primal: Vec<Vec<f64>>, dual: Vec<Vec<f64>>) -> Result<Self> {
        let mut it = Self::new(primal)?;
        check_len(it.primal.len(), dual.len())?;
        for d in &dual {
            check_len(it.dim(), d.len())?;
        }
        it.dual = dual;
        Ok(it)
    }

    pub fn n_agents(&self) -> usize {
        self.primal.len()
    }

    pub fn dim(&self) -> usize {
        self.primal.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualRecord {
    pub round: usize,
    pub consensus_residual: f64,
    pub dual_residual: f64,
    pub local_costs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Termination {
    /// Both residuals within tolerance.
    Converged,
    /// `max_rounds` reached first.
    MaxRounds,
}

/// `lambda + rho * sum_j (theta_i - theta_j)`.
pub fn dual_update(
    lambda: &[f64],
    rho: f64,
    theta_i: &[f64],
    neighbors: &[&[f64]],
) -> Result<Vec<f64>> {
    check_len(lambda.len(), theta_i.len())?;
    let mut diff = vec![0.0; lambda.len()];
    for theta_j in neighbors {
        check_len(lambda.len(), theta_j.len())?;
        for ((d, ti), tj) in diff.iter_mut().zip(theta_i).zip(theta_j.iter()) {
            *d += ti - tj;
        }
    }
    Ok(lambda.iter().zip(&diff).map(|(l, d)| l + rho * d).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `sqrt(sum over edges of |theta_i - theta_j|^2)`.
pub fn consensus_residual(primal: &[Vec<f64>], graph: &CommGraph) -> Result<f64> {
    check_len(graph.n_agents(), primal.len())?;
    let mut total = 0.0;
    for (i, j) in graph.edges() {
        check_len(primal[i].len(), primal[j].len())?;
        total += sq_dist(&primal[i], &primal[j]);
    }
    Ok(sqrt(total))
}

/// `rho * sqrt(sum_i |theta_i^now - theta_i^prev|^2)`.
pub fn dual_residual(now: &[Vec<f64>], prev: &[Vec<f64>], rho: f64) -> Result<f64> {
    check_len(now.len(), prev.len())?;
    let mut total = 0.0;
    for (a, b) in now.iter().zip(prev) {
        check_len(a.len(), b.len())?;
        total += sq_dist(a, b);
    }
    Ok(rho * sqrt(total))
}

fn midpoints(own: &[f64], inbox: &Inbox) -> Vec<Vec<f64>> {
    inbox
        .iter()
        .map(|(_, theta_j)| {
            own.iter()
                .zip(theta_j)
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        })
        .collect()
}

fn check_iterate<P: ConsensusProblem + ?Sized>(problem: &P, it: &SwarmIterate) -> Result<()> {
    check_len(problem.n_agents(), it.primal.len())?;
    check_len(problem.n_agents(), it.dual.len())?;
    for (p, d) in it.primal.iter().zip(&it.dual) {
        check_len(problem.dim(), p.len())?;
        check_len(problem.dim(), d.len())?;
    }
    Ok(())
}

/// Delivers the current iterates so the first round has neighbor data.
pub fn prime<E: Exchange + ?Sized>(
    iterate: &mut SwarmIterate,
    graph: &CommGraph,
    exchange: &mut E,
) -> Result<()> {
    iterate.inbox = exchange.exchange(iterate.round, &iterate.primal, graph)?;
    Ok(())
}

/// One synchronous round: primal updates, exchange, dual updates.
pub fn admm_round<P, E>(
    problem: &P,
    graph: &CommGraph,
    iterate: &SwarmIterate,
    rho: f64,
    exchange: &mut E,
) -> Result<(SwarmIterate, ResidualRecord)>
where
    P: ConsensusProblem + ?Sized,
    E: Exchange + ?Sized,
{
    check_iterate(problem, iterate)?;
    check_len(problem.n_agents(), graph.n_agents())?;
    let n = problem.n_agents();
    let inbox: Vec<Inbox> = if iterate.inbox.is_empty() {
        DirectExchange.exchange(iterate.round, &iterate.primal, graph)?
    } else {
        iterate.inbox.clone()
    };
    check_len(n, inbox.len())?;

    let mut primal = Vec::with_capacity(n);
    for i in 0..n {
        let mids = midpoints(&iterate.primal[i], &inbox[i]);
        let next = problem
            .solve_primal(i, &iterate.primal[i], &iterate.dual[i], &mids, rho)
            .map_err(|e| e.for_agent(i))?;
        check_len(problem.dim(), next.len()).map_err(|e| e.for_agent(i))?;
        primal.push(next);
    }

    let round = iterate.round + 1;
    let delivered = exchange.exchange(round, &primal, graph)?;
    check_len(n, delivered.len())?;

    let mut dual = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors: Vec<&[f64]> = delivered[i].iter().map(|(_, t)| t.as_slice()).collect();
        dual.push(dual_update(&iterate.dual[i], rho, &primal[i], &neighbors)?);
    }

    let local_costs = (0..n)
        .map(|i| {
            problem
                .local_cost(i, &primal[i])
                .map_err(|e| e.for_agent(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let record = ResidualRecord {
        round,
        consensus_residual: consensus_residual(&primal, graph)?,
        dual_residual: dual_residual(&primal, &iterate.primal, rho)?,
        local_costs,
    };
    Ok((
        SwarmIterate {
            primal,
            dual,
            inbox: delivered,
            round,
        },
        record,
    ))
}

/// Runs rounds until both residuals are within tolerance or `max_rounds`.
/// At least one round always executes, so the dual residual is defined at
/// the first check. Neighbor data is primed through `exchange` first when
/// the iterate has an empty inbox.
pub fn run_admm<P, E>(
    problem: &P,
    graph: &CommGraph,
    initial: SwarmIterate,
    cfg: &AdmmConfig,
    exchange: &mut E,
) -> Result<(SwarmIterate, Vec<ResidualRecord>, Termination)>
where
    P: ConsensusProblem + ?Sized,
    E: Exchange + ?Sized,
{
    cfg.validate()?;
    let mut iterate = initial;
    check_iterate(problem, &iterate)?;
    if iterate.inbox.is_empty() {
        prime(&mut iterate, graph, exchange)?;
    }
    let mut records = Vec::new();
    for _ in 0..cfg.max_rounds {
        let (next, record) = admm_round(problem, graph, &iterate, cfg.rho, exchange)?;
        let done =
            record.consensus_residual <= cfg.tol_consensus && record.dual_residual <= cfg.tol_dual;
        iterate = next;
        records.push(record);
        if done {
            return Ok((iterate, records, Termination::Converged));
        }
    }
    Ok((iterate, records, Termination::MaxRounds))
}

/// `g_i(theta) = sum_c w_ic (theta_c - a_ic)^2`, solved in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConsensus {
    pub targets: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    neighbor_counts: Vec<usize>,
}

impl QuadraticConsensus {
    pub fn new(targets: Vec<Vec<f64>>, weights: Vec<Vec<f64>>, graph: &CommGraph) -> Result<Self> {
        check_len(targets.len(), weights.len())?;
        check_len(graph.n_agents(), targets.len())?;
        let dim = targets.first().map_or(0, Vec::len);
        for (a, w) in targets.iter().zip(&weights) {
            check_len(dim, a.len())?;
            check_len(dim, w.len())?;
            if w.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::InvalidConfig { field: "weights" });
            }
        }
        let neighbor_counts = (0..graph.n_agents())
            .map(|i| graph.neighbor_indices(i).map(<[usize]>::len))
            .collect::<Result<_>>()?;
        Ok(QuadraticConsensus {
            targets,
            weights,
            neighbor_counts,
        })
    }
}

impl ConsensusProblem for QuadraticConsensus {
    fn n_agents(&self) -> usize {
        self.targets.len()
    }

    fn dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    fn solve_primal(
        &self,
        agent: usize,
        _current: &[f64],
        lambda: &[f64],
        midpoints: &[Vec<f64>],
        rho: f64,
    ) -> Result<Vec<f64>> {
        let dim = self.dim();
        check_len(dim, lambda.len())?;
        check_len(self.neighbor_counts[agent], midpoints.len())?;
        let a = &self.targets[agent];
        let w = &self.weights[agent];
        let deg = midpoints.len() as f64;
        let mut out = vec![0.0; dim];
        for c in 0..dim {
            let m: f64 = midpoints.iter().map(|m| m[c]).sum();
            let denom = 2.0 * w[c] + 2.0 * rho * deg;
            if denom <= 0.0 {
                return Err(Error::NonFinite { step: None });
            }
            out[c] = (2.0 * w[c] * a[c] - lambda[c] + 2.0 * rho * m) / denom;
        }
        Ok(out)
    }

    fn local_cost(&self, agent: usize, theta: &[f64]) -> Result<f64> {
        let a = &self.targets[agent];
        let w = &self.weights[agent];
        Ok(theta
            .iter()
            .zip(a)
            .zip(w)
            .map(|((t, a), w)| w * (t - a) * (t - a))
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_update_examples() {
        let lambda = [0.5, -1.0, 2.0];
        let theta = [1.0, 2.0, 3.0];
        assert_eq!(
            dual_update(&lambda, 3.0, &theta, &[&theta, &theta]).unwrap(),
            lambda.to_vec()
        );

        let theta_j = [0.0, 4.0, 3.5];
        let d: Vec<f64> = theta.iter().zip(&theta_j).map(|(a, b)| a - b).collect();
        assert_eq!(dual_update(&[0.0; 3], 1.0, &theta, &[&theta_j]).unwrap(), d);

        let (j1, j2) = ([0.5, 1.0, 1.5], [2.0, 2.0, -1.0]);
        let expected: Vec<f64> = (0..3)
            .map(|c| 1.0 + 2.0 * ((theta[c] - j1[c]) + (theta[c] - j2[c])))
            .collect();
        assert_eq!(
            dual_update(&[1.0; 3], 2.0, &theta, &[&j1, &j2]).unwrap(),
            expected
        );
        assert!(dual_update(&[1.0; 2], 2.0, &theta, &[]).is_err());
    }

    #[test]
    fn residual_examples() {
        let same = vec![vec![1.0, 2.0]; 3];
        assert_eq!(
            consensus_residual(&same, &CommGraph::complete(3)).unwrap(),
            0.0
        );
        let two = vec![vec![0.0, 0.0], vec![3.0, 0.0]];
        assert_eq!(consensus_residual(&two, &CommGraph::path(2)).unwrap(), 3.0);
        let three = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![3.0, 4.0]];
        assert_eq!(
            consensus_residual(&three, &CommGraph::path(3)).unwrap(),
            5.0
        );

        assert_eq!(dual_residual(&same, &same, 1.0).unwrap(), 0.0);
        let moved = vec![vec![1.0, 4.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        assert_eq!(dual_residual(&moved, &same, 0.5).unwrap(), 1.0);
        let moved = vec![vec![4.0, 2.0], vec![1.0, 6.0], vec![1.0, 2.0]];
        assert_eq!(dual_residual(&moved, &same, 1.0).unwrap(), 5.0);
    }

    fn two_agent_problem() -> (QuadraticConsensus, CommGraph) {
        let g = CommGraph::complete(2);
        let p = QuadraticConsensus::new(vec![vec![1.0], vec![3.0]], vec![vec![1.0], vec![1.0]], &g)
            .unwrap();
        (p, g)
    }

    #[test]
    fn two_agent_consensus_reaches_mean() {
        let (p, g) = two_agent_problem();
        let cfg = AdmmConfig {
            rho: 1.0,
            max_rounds: 500,
            tol_consensus: 1e-10,
            tol_dual: 1e-10,
        };
        let init = SwarmIterate::new(vec![vec![0.0], vec![0.0]]).unwrap();
        let (it, records, term) = run_admm(&p, &g, init, &cfg, &mut DirectExchange).unwrap();
        assert_eq!(term, Termination::Converged);
        for theta in &it.primal {
            assert!((theta[0] - 2.0).abs() < 1e-6);
        }
        assert!(records.last().unwrap().consensus_residual < records[0].consensus_residual);
    }

    #[test]
    fn converged_start_returns_after_one_round() {
        let (p, g) = two_agent_problem();
        // fixed point: theta = 2 everywhere, lambda_i = -grad g_i(2)
        let init = SwarmIterate::with_dual(vec![vec![2.0], vec![2.0]], vec![vec![-2.0], vec![2.0]])
            .unwrap();
        let cfg = AdmmConfig {
            rho: 1.0,
            max_rounds: 10,
            tol_consensus: 1e-12,
            tol_dual: 1e-12,
        };
        let (it, records, term) = run_admm(&p, &g, init, &cfg, &mut DirectExchange).unwrap();
        assert_eq!(term, Termination::Converged);
        assert_eq!(records.len(), 1);
        assert_eq!(it.primal, vec![vec![2.0], vec![2.0]]);
    }

    #[test]
    fn zero_max_rounds_rejected() {
        let (p, g) = two_agent_problem();
        let cfg = AdmmConfig {
            max_rounds: 0,
            ..Default::default()
        };
        let init = SwarmIterate::new(vec![vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(
            run_admm(&p, &g, init, &cfg, &mut DirectExchange).unwrap_err(),
            Error::InvalidConfig {
                field: "max_rounds"
            }
        );
    }

    #[test]
    fn zero_rho_keeps_duals_zero() {
        let (p, g) = two_agent_problem();
        let mut it = SwarmIterate::new(vec![vec![5.0], vec![-5.0]]).unwrap();
        for _ in 0..5 {
            it = admm_round(&p, &g, &it, 0.0, &mut DirectExchange).unwrap().0;
            assert!(it.dual.iter().all(|d| d[0] == 0.0));
        }
        assert_eq!(it.round, 5);
        assert_eq!(it.primal, vec![vec![1.0], vec![3.0]]);
    }

    #[test]
    fn single_agent_round_is_local_solve() {
        let g = CommGraph::new(1, &[]);
        let p = QuadraticConsensus::new(vec![vec![4.0, -1.0]], vec![vec![1.0, 2.0]], &g).unwrap();
        let it = SwarmIterate::new(vec![vec![0.0, 0.0]]).unwrap();
        let (next, rec) = admm_round(&p, &g, &it, 1.0, &mut DirectExchange).unwrap();
        assert_eq!(next.primal, vec![vec![4.0, -1.0]]);
        assert_eq!(next.dual, vec![vec![0.0, 0.0]]);
        assert_eq!(rec.consensus_residual, 0.0);
    }

    #[test]
    fn solver_errors_name_the_agent() {
        let g = CommGraph::new(1, &[]);
        // zero weight and no neighbors leaves the primal problem unbounded
        let p = QuadraticConsensus::new(vec![vec![1.0]], vec![vec![0.0]], &g).unwrap();
        let it = SwarmIterate::new(vec![vec![0.0]]).unwrap();
        let err = admm_round(&p, &g, &it, 1.0, &mut DirectExchange).unwrap_err();
        assert!(matches!(err, Error::Agent { agent: 0, .. }), "{err:?}");
    }
}
