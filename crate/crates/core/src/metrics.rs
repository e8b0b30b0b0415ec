//! Regret, violation and satisfaction summaries over round records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ComparatorSequence, Landscape, NeighborhoodLoss};
use crate::record::{node_count, RoundRecord};

/// `sum max(g, 0)`.
pub fn hinge_sum(constraints: &[f64]) -> f64 {
    constraints.iter().map(|g| g.max(0.0)).sum()
}

/// Per-node cumulative loss.
pub fn cumulative_loss(records: &[RoundRecord]) -> Vec<f64> {
    let mut out = vec![0.0; node_count(records)];
    for r in records {
        for (acc, a) in out.iter_mut().zip(&r.agents) {
            *acc += a.loss;
        }
    }
    out
}

/// Per-node `V_T`: the sum of recorded violations.
pub fn violation_total(records: &[RoundRecord]) -> Vec<f64> {
    let mut out = vec![0.0; node_count(records)];
    for r in records {
        for (acc, a) in out.iter_mut().zip(&r.agents) {
            *acc += a.violation;
        }
    }
    out
}

/// Played loss minus comparator loss for one node.
///
/// `rounds[t]` is the node's loss at round `t + 1` as a function of its own
/// allocation; the played losses come from the records.
pub fn dynamic_regret_node(
    records: &[RoundRecord],
    node: usize,
    rounds: &[NeighborhoodLoss],
    comparator: &ComparatorSequence,
) -> Result<f64> {
    if rounds.len() != records.len() || comparator.points.len() != records.len() {
        return Err(Error::DimensionMismatch {
            expected: records.len(),
            got: if rounds.len() != records.len() {
                rounds.len()
            } else {
                comparator.points.len()
            },
        });
    }
    let mut played = 0.0;
    let mut best = 0.0;
    for ((r, f), u) in records.iter().zip(rounds).zip(&comparator.points) {
        let a = r.agents.get(node).ok_or(Error::NodeOutOfRange {
            node,
            nodes: r.agents.len(),
        })?;
        played += a.loss;
        best += f.value(u);
    }
    Ok(played - best)
}

/// Per-node dynamic regret; `rounds[i]` and `comparators[i]` belong to node `i`.
pub fn dynamic_regret(
    records: &[RoundRecord],
    rounds: &[Vec<NeighborhoodLoss>],
    comparators: &[ComparatorSequence],
) -> Result<Vec<f64>> {
    let n = node_count(records);
    if rounds.len() != n || comparators.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rounds.len().min(comparators.len()),
        });
    }
    (0..n)
        .map(|i| dynamic_regret_node(records, i, &rounds[i], &comparators[i]))
        .collect()
}

/// Regret against one fixed action per node: dynamic regret with a constant comparator.
pub fn static_regret(records: &[RoundRecord], rounds: &[Vec<NeighborhoodLoss>], best_fixed: &[Vec<f64>]) -> Result<Vec<f64>> {
    let comparators: Vec<ComparatorSequence> = best_fixed
        .iter()
        .map(|u| ComparatorSequence::constant(u.clone(), records.len()))
        .collect();
    dynamic_regret(records, rounds, &comparators)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionReport {
    pub window: usize,
    /// Mean uncapped received/demand per node over the window.
    pub ratio: Vec<f64>,
    /// Same, if every node kept its own generation.
    pub no_sharing: Vec<f64>,
    pub variance: f64,
    pub no_sharing_variance: f64,
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Final-window satisfaction ratios, with the keep-everything reference.
pub fn satisfaction_report(records: &[RoundRecord], window: usize) -> Result<SatisfactionReport> {
    if window == 0 || window > records.len() {
        return Err(Error::param(
            "window",
            format!("must lie in 1..={}, got {window}", records.len()),
        ));
    }
    let n = node_count(records);
    let tail = &records[records.len() - window..];
    let mut ratio = vec![0.0; n];
    let mut no_sharing = vec![0.0; n];
    for r in tail {
        for (i, a) in r.agents.iter().enumerate() {
            let received = a
                .received
                .ok_or_else(|| Error::InvalidInput("records carry no received energy".into()))?;
            ratio[i] += received / a.demand;
            no_sharing[i] += a.generation / a.demand;
        }
    }
    let w = window as f64;
    ratio.iter_mut().for_each(|v| *v /= w);
    no_sharing.iter_mut().for_each(|v| *v /= w);
    Ok(SatisfactionReport {
        window,
        variance: variance(&ratio),
        no_sharing_variance: variance(&no_sharing),
        ratio,
        no_sharing,
    })
}
