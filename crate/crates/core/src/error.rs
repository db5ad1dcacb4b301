use alloc::boxed::Box;
use core::fmt;

/// Errors produced by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Agent index outside `0..n_agents`.
    BadAgent { agent: usize, n_agents: usize },
    /// An edge names the same agent twice.
    SelfLoop { node: usize },
    /// An edge endpoint is outside `0..n_agents`.
    BadIndex {
        edge: (usize, usize),
        n_agents: usize,
    },
    /// The graph has more than one component; `node` is the first agent
    /// unreachable from agent 0.
    Disconnected { node: usize },
    /// Pitch reached the Euler-angle singularity guard.
    AttitudeSingularity { pitch: f64, step: Option<usize> },
    /// A NaN or infinity appeared during evaluation.
    NonFinite { step: Option<usize> },
    /// Two vectors that must share a shape do not.
    ShapeMismatch { expected: usize, found: usize },
    /// A message was dropped before any earlier payload on that edge existed.
    NoPriorMessage {
        round: usize,
        sender: usize,
        receiver: usize,
    },
    /// The oracle grid search only supports up to three dimensions.
    DimensionTooLarge { dim: usize },
    /// A configuration value violates its invariant.
    InvalidConfig { field: &'static str },
    /// A per-agent operation failed inside an ADMM round.
    Agent { agent: usize, source: Box<Error> },
    /// The receding-horizon loop failed at an MPC step.
    MpcStep { step: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn at_step(self, k: usize) -> Self {
        match self {
            Error::AttitudeSingularity { pitch, .. } => Error::AttitudeSingularity {
                pitch,
                step: Some(k),
            },
            Error::NonFinite { .. } => Error::NonFinite { step: Some(k) },
            other => other,
        }
    }

    pub(crate) fn for_agent(self, agent: usize) -> Self {
        Error::Agent {
            agent,
            source: Box::new(self),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BadAgent { agent, n_agents } => {
                write!(f, "agent {agent} out of range for {n_agents} agents")
            }
            Error::SelfLoop { node } => write!(f, "self-loop on node {node}"),
            Error::BadIndex { edge, n_agents } => {
                write!(f, "edge ({}, {}) has an endpoint outside 0..{n_agents}", edge.0, edge.1)
            }
            Error::Disconnected { node } => {
                write!(f, "graph is disconnected: node {node} is unreachable from node 0")
            }
            Error::AttitudeSingularity { pitch, step } => {
                write!(f, "pitch {pitch} hit the Euler singularity guard")?;
                if let Some(k) = step {
                    write!(f, " at rollout step {k}")?;
                }
                Ok(())
            }
            Error::NonFinite { step } => {
                write!(f, "non-finite value")?;
                if let Some(k) = step {
                    write!(f, " at rollout step {k}")?;
                }
                Ok(())
            }
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected length {expected}, found {found}")
            }
            Error::NoPriorMessage { round, sender, receiver } => write!(
                f,
                "message {sender} -> {receiver} dropped in round {round} with no earlier payload to fall back on"
            ),
            Error::DimensionTooLarge { dim } => {
                write!(f, "grid search supports at most 3 dimensions, got {dim}")
            }
            Error::InvalidConfig { field } => write!(f, "invalid configuration value: {field}"),
            Error::Agent { agent, source } => write!(f, "agent {agent}: {source}"),
            Error::MpcStep { step, source } => write!(f, "MPC step {step}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Agent { source, .. } | Error::MpcStep { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[inline]
pub(crate) fn sq(x: f64) -> f64 {
    x * x
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}
