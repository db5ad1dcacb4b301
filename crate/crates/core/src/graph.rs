//! Undirected communication graph between agents.
//!
//! Edges are stored once as `(min, max)` pairs. Neighborhoods are cached in
//! ascending order so every consensus sum iterates in the same order.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense agent index in `0..n_agents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentId(pub usize);

impl AgentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for AgentId {
    fn from(i: usize) -> Self {
        AgentId(i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommGraph {
    n_agents: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an edge list. Order within a pair and duplicates
    /// are ignored. No validation happens here; call [`CommGraph::validate`].
    pub fn new(n_agents: usize, edges: &[(usize, usize)]) -> Self {
        let edges: BTreeSet<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        let mut adjacency = vec![Vec::new(); n_agents];
        for &(a, b) in &edges {
            if a != b && b < n_agents {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        CommGraph {
            n_agents,
            edges,
            adjacency,
        }
    }

    /// Builds and validates in one go.
    pub fn try_new(n_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::new(n_agents, edges);
        g.validate()?;
        Ok(g)
    }

    pub fn complete(n_agents: usize) -> Self {
        let mut edges = Vec::new();
        for i in 0..n_agents {
            for j in i + 1..n_agents {
                edges.push((i, j));
            }
        }
        Self::new(n_agents, &edges)
    }

    pub fn path(n_agents: usize) -> Self {
        let edges: Vec<_> = (1..n_agents).map(|i| (i - 1, i)).collect();
        Self::new(n_agents, &edges)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(min, max)` pairs in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Neighbors of `i`, sorted ascending.
    pub fn neighbors(&self, i: AgentId) -> Result<Vec<AgentId>> {
        Ok(self
            .neighbor_indices(i.0)?
            .iter()
            .map(|&j| AgentId(j))
            .collect())
    }

    /// Borrowing variant of [`CommGraph::neighbors`] over raw indices.
    pub fn neighbor_indices(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::BadAgent {
                agent: i,
                n_agents: self.n_agents,
            })
    }

    /// Checks for self-loops, out-of-range endpoints and connectivity, in
    /// that order.
    pub fn validate(&self) -> Result<()> {
        for &(a, b) in &self.edges {
            if a == b {
                return Err(Error::SelfLoop { node: a });
            }
        }
        for &(a, b) in &self.edges {
            if b >= self.n_agents {
                return Err(Error::BadIndex {
                    edge: (a, b),
                    n_agents: self.n_agents,
                });
            }
        }
        if self.n_agents == 0 {
            return Err(Error::InvalidConfig { field: "n_agents" });
        }
        let mut seen = vec![false; self.n_agents];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(node) => Err(Error::Disconnected { node }),
            None => Ok(()),
        }
    }
}
