//! Per-round outcomes, as produced by the harness and read back from CSV.

use serde::{Deserialize, Serialize};

/// What one node did and experienced at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub node: usize,
    pub loss: f64,
    pub constraint: f64,
    pub violation: f64,
    /// Capped satisfaction `min(received / demand, 1)`.
    pub satisfaction: f64,
    /// Uncapped energy received; absent when read back from CSV.
    #[serde(default)]
    pub received: Option<f64>,
    pub dual: f64,
    pub generation: f64,
    pub demand: f64,
    pub allocation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub agents: Vec<AgentRecord>,
}

/// Node count shared by every record, if any.
pub fn node_count(records: &[RoundRecord]) -> usize {
    records.first().map_or(0, |r| r.agents.len())
}
