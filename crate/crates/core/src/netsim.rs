//! Simulated synchronous channel between graph neighbors.
//!
//! Each directed message is dropped independently with `drop_probability`.
//! A dropped message is replaced by the last payload delivered on that
//! directed edge, so rounds stay synchronous. All random draws come from one
//! seeded ChaCha stream in a fixed (receiver, sender) order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admm::{Exchange, Inbox};
use crate::error::{check_len, Error, Result};
use crate::graph::CommGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelConfig {
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..1.0).contains(&self.drop_probability) {
            Ok(())
        } else {
            Err(Error::InvalidConfig {
                field: "drop_probability",
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateMessage {
    pub sender: usize,
    pub round: usize,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Delivered,
    Dropped,
}

impl DeliveryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryStatus::Delivered => "delivered",
            DeliveryStatus::Dropped => "dropped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryEntry {
    pub round: usize,
    pub sender: usize,
    pub receiver: usize,
    pub status: DeliveryStatus,
}

/// Stateful channel: remembers the last delivered message per directed edge
/// and logs every decision.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    last: BTreeMap<(usize, usize), IterateMessage>,
    log: Vec<DeliveryEntry>,
}

impl Network {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Network {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            last: BTreeMap::new(),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> ChannelConfig {
        self.cfg
    }

    /// Changes the drop probability for later rounds. The random stream and
    /// stored messages are kept.
    pub fn set_drop_probability(&mut self, p: f64) -> Result<()> {
        let cfg = ChannelConfig {
            drop_probability: p,
            ..self.cfg
        };
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    /// Delivers `outgoing[j]` from every agent `j` to each neighbor. A message
    /// is either the fresh round-`round` payload or the last one delivered on
    /// the same directed edge.
    pub fn exchange(
        &mut self,
        round: usize,
        outgoing: &[Vec<f64>],
        graph: &CommGraph,
    ) -> Result<Vec<BTreeMap<usize, IterateMessage>>> {
        check_len(graph.n_agents(), outgoing.len())?;
        let p = self.cfg.drop_probability;
        let mut out = Vec::with_capacity(graph.n_agents());
        let mut fresh = Vec::new();
        for receiver in 0..graph.n_agents() {
            let mut inbox = BTreeMap::new();
            for &sender in graph.neighbor_indices(receiver)? {
                let dropped = p > 0.0 && self.rng.gen_bool(p);
                let msg = if dropped {
                    self.last
                        .get(&(sender, receiver))
                        .cloned()
                        .ok_or(Error::NoPriorMessage {
                            round,
                            sender,
                            receiver,
                        })?
                } else {
                    let msg = IterateMessage {
                        sender,
                        round,
                        payload: outgoing[sender].clone(),
                    };
                    fresh.push(((sender, receiver), msg.clone()));
                    msg
                };
                self.log.push(DeliveryEntry {
                    round,
                    sender,
                    receiver,
                    status: if dropped {
                        DeliveryStatus::Dropped
                    } else {
                        DeliveryStatus::Delivered
                    },
                });
                inbox.insert(sender, msg);
            }
            out.push(inbox);
        }
        self.last.extend(fresh);
        Ok(out)
    }

    /// Every channel decision so far, in the order it was made.
    pub fn delivery_log(&self) -> &[DeliveryEntry] {
        &self.log
    }

    /// The log as `round,sender,receiver,status` CSV with a header row.
    pub fn delivery_csv(&self) -> String {
        delivery_csv(&self.log)
    }
}

pub fn delivery_csv(log: &[DeliveryEntry]) -> String {
    let mut s = String::from("round,sender,receiver,status\n");
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            e.round,
            e.sender,
            e.receiver,
            e.status.as_str()
        );
    }
    s
}

impl Exchange for Network {
    fn exchange(
        &mut self,
        round: usize,
        outgoing: &[Vec<f64>],
        graph: &CommGraph,
    ) -> Result<Vec<Inbox>> {
        let delivered = Network::exchange(self, round, outgoing, graph)?;
        Ok(delivered
            .into_iter()
            .map(|inbox| inbox.into_iter().map(|(j, m)| (j, m.payload)).collect())
            .collect())
    }
}
