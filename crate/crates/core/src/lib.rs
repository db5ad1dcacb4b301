//! Consensus ADMM for distributed trajectory optimization of quadrotor teams.
//!
//! Each agent keeps a local copy of the stacked state and input trajectories
//! of the whole team and negotiates with its graph neighbors until the copies
//! agree. The crate is `no_std` and only needs `alloc`; file formats and the
//! command-line runner live in a companion crate.
//!
//! Modules, bottom-up:
//!
//! - [`graph`]: communication topology and neighborhoods.
//! - [`dynamics`]: 12-state quadrotor model and RK4 discretization.
//! - [`trajopt`]: local cost terms, analytic gradients and the projected
//!   gradient solver for one agent's primal update.
//! - [`admm`]: the synchronous consensus ADMM engine.
//! - [`netsim`]: seeded lossy channel with stale-message fallback.
//! - [`mpc`]: scenarios and the receding-horizon loop.
//! - [`oracle`]: independent reference solvers used by the tests.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod admm;
pub mod dynamics;
mod error;
pub mod graph;
pub mod mpc;
pub mod netsim;
pub mod oracle;
pub mod trajopt;

pub use error::{Error, Result};
pub use graph::{AgentId, CommGraph};
