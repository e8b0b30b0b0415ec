//! Energy supply and demand, and the per-node satisfaction, loss and
//! constraint functions evaluated on a round's allocations.
//!
//! Node `k` sends `x_k(j)` to each `j` in its closed neighborhood. What `j`
//! receives is `sum_k c(j,k) * x_k(j)` (with `c = 1` unless discounts are
//! configured); its satisfaction is that total over its demand, capped at 1.
//! A node's loss is one minus the mean satisfaction over its closed
//! neighborhood, and its constraint is what it sends minus what it generated.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkGraph;
use crate::rng;

/// How per-node generation `d_{i,t}` evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GenerationKind {
    /// `d_{i,t} = means[i]` exactly.
    Constant { means: Vec<f64> },
    /// Uniform on `[mean - half_width, mean + half_width]`, floored at zero.
    IidUniform { means: Vec<f64>, half_width: Vec<f64> },
    /// Means switch at each change point: `levels[k]` holds from
    /// `change_points[k-1]` (inclusive) until `change_points[k]`.
    PiecewiseStationary {
        change_points: Vec<u64>,
        levels: Vec<Vec<f64>>,
        #[serde(default)]
        half_width: Option<Vec<f64>>,
    },
    /// `mean = base + amplitude * sin(2 pi t / period)`, floored at zero.
    DriftingMean {
        base: Vec<f64>,
        amplitude: Vec<f64>,
        period: f64,
        #[serde(default)]
        half_width: Option<Vec<f64>>,
    },
}

impl GenerationKind {
    /// Cycles through `levels`, switching every `period` rounds up to `horizon`.
    pub fn periodic(levels: Vec<Vec<f64>>, period: u64, horizon: u64, half_width: Option<Vec<f64>>) -> Self {
        let segments = horizon.div_ceil(period.max(1)) as usize;
        let change_points = (1..segments.max(1)).map(|k| 1 + k as u64 * period).collect();
        let levels = (0..segments.max(1)).map(|k| levels[k % levels.len()].clone()).collect();
        GenerationKind::PiecewiseStationary {
            change_points,
            levels,
            half_width,
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            GenerationKind::Constant { means } | GenerationKind::IidUniform { means, .. } => means.len(),
            GenerationKind::PiecewiseStationary { levels, .. } => levels.first().map_or(0, Vec::len),
            GenerationKind::DriftingMean { base, .. } => base.len(),
        }
    }

    fn half_width(&self) -> Option<&[f64]> {
        match self {
            GenerationKind::Constant { .. } => None,
            GenerationKind::IidUniform { half_width, .. } => Some(half_width),
            GenerationKind::PiecewiseStationary { half_width, .. }
            | GenerationKind::DriftingMean { half_width, .. } => half_width.as_deref(),
        }
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        let check = |field: &str, v: &[f64], nonneg: bool| -> Result<()> {
            if v.len() != nodes {
                return Err(Error::config(
                    format!("generation.{field}"),
                    format!("expected {nodes} entries, got {}", v.len()),
                ));
            }
            if let Some(k) = v.iter().position(|x| !x.is_finite() || (nonneg && *x < 0.0)) {
                return Err(Error::config(
                    format!("generation.{field}[{k}]"),
                    format!("must be finite{}, got {}", if nonneg { " and >= 0" } else { "" }, v[k]),
                ));
            }
            Ok(())
        };
        match self {
            GenerationKind::Constant { means } => check("means", means, true)?,
            GenerationKind::IidUniform { means, .. } => check("means", means, true)?,
            GenerationKind::PiecewiseStationary {
                change_points, levels, ..
            } => {
                if levels.len() != change_points.len() + 1 {
                    return Err(Error::config(
                        "generation.levels",
                        format!(
                            "need one more level than change points ({} levels, {} change points)",
                            levels.len(),
                            change_points.len()
                        ),
                    ));
                }
                if change_points.windows(2).any(|w| w[0] >= w[1]) || change_points.first().is_some_and(|&c| c < 2) {
                    return Err(Error::config(
                        "generation.change_points",
                        "must be strictly increasing and >= 2",
                    ));
                }
                for (k, lvl) in levels.iter().enumerate() {
                    check(&format!("levels[{k}]"), lvl, true)?;
                }
            }
            GenerationKind::DriftingMean {
                base, amplitude, period, ..
            } => {
                check("base", base, true)?;
                check("amplitude", amplitude, false)?;
                if !(period.is_finite() && *period > 0.0) {
                    return Err(Error::config("generation.period", "must be > 0"));
                }
            }
        }
        if let Some(w) = self.half_width() {
            check("half_width", w, true)?;
        }
        Ok(())
    }

    /// Expected generation `mu_{i,t}`.
    pub fn means_at(&self, t: u64) -> Vec<f64> {
        match self {
            GenerationKind::Constant { means } | GenerationKind::IidUniform { means, .. } => means.clone(),
            GenerationKind::PiecewiseStationary {
                change_points, levels, ..
            } => {
                let seg = change_points.partition_point(|&c| c <= t);
                levels[seg].clone()
            }
            GenerationKind::DriftingMean {
                base,
                amplitude,
                period,
                ..
            } => {
                let phase = (2.0 * PI * t as f64 / period).sin();
                base.iter()
                    .zip(amplitude)
                    .map(|(b, a)| (b + a * phase).max(0.0))
                    .collect()
            }
        }
    }

    /// Largest mean node `i` ever has, used as the default box side.
    pub fn peak_mean(&self, i: usize) -> f64 {
        match self {
            GenerationKind::Constant { means } | GenerationKind::IidUniform { means, .. } => means[i],
            GenerationKind::PiecewiseStationary { levels, .. } => {
                levels.iter().map(|l| l[i]).fold(0.0, f64::max)
            }
            GenerationKind::DriftingMean { base, amplitude, .. } => base[i] + amplitude[i].abs(),
        }
    }

    /// Smallest mean node total over rounds `1..=horizon`.
    fn min_total_mean(&self, horizon: u64) -> f64 {
        match self {
            GenerationKind::Constant { means } | GenerationKind::IidUniform { means, .. } => means.iter().sum(),
            GenerationKind::PiecewiseStationary {
                change_points, levels, ..
            } => {
                let active = 1 + change_points.iter().filter(|&&c| c <= horizon).count();
                levels[..active]
                    .iter()
                    .map(|l| l.iter().sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            }
            GenerationKind::DriftingMean { .. } => (1..=horizon)
                .map(|t| self.means_at(t).iter().sum::<f64>())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Stochastic generation process, deterministic in `(seed, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationProcess {
    pub kind: GenerationKind,
    pub seed: u64,
}

impl GenerationProcess {
    pub fn new(kind: GenerationKind, seed: u64) -> Self {
        GenerationProcess { kind, seed }
    }

    pub fn node_count(&self) -> usize {
        self.kind.node_count()
    }

    /// Draws `d_{.,t}`. Always nonnegative.
    pub fn sample(&self, t: u64) -> Vec<f64> {
        let means = self.kind.means_at(t);
        match self.kind.half_width() {
            None => means,
            Some(w) => {
                let mut rng = rng::stream(self.seed, rng::GENERATION_DOMAIN, t);
                means
                    .iter()
                    .zip(w)
                    .map(|(m, w)| (m + w * (2.0 * rng.random::<f64>() - 1.0)).max(0.0))
                    .collect()
            }
        }
    }
}

/// Per-node demand `l_{i,t}`.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    /// Every node demands an equal share of the total expected generation.
    Balanced,
    /// Step-function demand read from a `t,node,demand` table.
    Explicit(DemandTable),
}

/// Explicit demand schedule: each node's demand at `t` is its most recent
/// entry at or before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandTable {
    per_node: Vec<Vec<(u64, f64)>>,
}

impl DemandTable {
    pub fn from_rows(nodes: usize, rows: &[(u64, usize, f64)]) -> Result<Self> {
        let mut per_node = vec![Vec::new(); nodes];
        for &(t, node, demand) in rows {
            if node >= nodes {
                return Err(Error::NodeOutOfRange { node, nodes });
            }
            if !(demand.is_finite() && demand > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "demand for node {node} at t={t} must be > 0, got {demand}"
                )));
            }
            per_node[node].push((t, demand));
        }
        for (node, entries) in per_node.iter_mut().enumerate() {
            entries.sort_by_key(|e| e.0);
            if entries.first().is_none_or(|e| e.0 > 1) {
                return Err(Error::InvalidInput(format!("node {node} has no demand at t=1")));
            }
        }
        Ok(DemandTable { per_node })
    }

    pub fn node_count(&self) -> usize {
        self.per_node.len()
    }

    pub fn at(&self, t: u64) -> Vec<f64> {
        self.per_node
            .iter()
            .map(|entries| {
                let k = entries.partition_point(|e| e.0 <= t);
                entries[k.saturating_sub(1)].1
            })
            .collect()
    }

    fn min(&self) -> f64 {
        self.per_node
            .iter()
            .flatten()
            .map(|e| e.1)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Generation and demand drawn for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSample {
    pub generation: Vec<f64>,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub generation: GenerationProcess,
    pub demand: DemandModel,
}

impl Environment {
    pub fn new(generation: GenerationProcess, demand: DemandModel) -> Result<Self> {
        let n = generation.node_count();
        generation.kind.validate(n)?;
        if let DemandModel::Explicit(table) = &demand {
            if table.node_count() != n {
                return Err(Error::config(
                    "demand",
                    format!("table covers {} nodes, generation has {n}", table.node_count()),
                ));
            }
        }
        Ok(Environment { generation, demand })
    }

    pub fn node_count(&self) -> usize {
        self.generation.node_count()
    }

    fn demand_at(&self, t: u64) -> Vec<f64> {
        match &self.demand {
            DemandModel::Balanced => {
                let means = self.generation.kind.means_at(t);
                let share = means.iter().sum::<f64>() / means.len() as f64;
                vec![share; means.len()]
            }
            DemandModel::Explicit(table) => table.at(t),
        }
    }

    /// Samples round `t` (1-based). Deterministic in `(seed, t)`.
    pub fn sample_round(&self, t: u64) -> Result<RoundSample> {
        if t == 0 {
            return Err(Error::param("t", "rounds are numbered from 1"));
        }
        let demand = self.demand_at(t);
        if let Some(k) = demand.iter().position(|l| !(*l > 0.0)) {
            return Err(Error::InvalidInput(format!("demand of node {k} at t={t} is not positive")));
        }
        Ok(RoundSample {
            generation: self.generation.sample(t),
            demand,
        })
    }

    /// Smallest demand over rounds `1..=horizon`; sets the loss Lipschitz constant.
    pub fn min_demand(&self, horizon: u64) -> f64 {
        match &self.demand {
            DemandModel::Balanced => {
                self.generation.kind.min_total_mean(horizon) / self.node_count() as f64
            }
            DemandModel::Explicit(table) => table.min(),
        }
    }

    /// Largest possible generation of node `i`.
    pub fn peak_generation(&self, i: usize) -> f64 {
        let w = self.generation.kind.half_width().map_or(0.0, |w| w[i]);
        self.generation.kind.peak_mean(i) + w
    }
}

/// Transfer-loss discount `c(i,j) in (0, 1]` per edge; `c(i,i) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discounts {
    default: f64,
    overrides: HashMap<(usize, usize), f64>,
}

impl Discounts {
    pub fn uniform(default: f64) -> Result<Self> {
        check_discount(default)?;
        Ok(Discounts {
            default,
            overrides: HashMap::new(),
        })
    }

    pub fn with_edges(default: f64, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut d = Self::uniform(default)?;
        for &(i, j, c) in edges {
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            check_discount(c)?;
            d.overrides.insert((i.min(j), i.max(j)), c);
        }
        Ok(d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        *self.overrides.get(&(i.min(j), i.max(j))).unwrap_or(&self.default)
    }
}

fn check_discount(c: f64) -> Result<()> {
    if c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("discount", format!("must lie in (0, 1], got {c}")))
    }
}

/// Node `owner`'s allocation over its closed neighborhood (sorted member order).
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationVector {
    pub owner: usize,
    pub values: Vec<f64>,
}

impl AllocationVector {
    pub fn new(owner: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "allocation of node {owner} has invalid entry {v}"
            )));
        }
        Ok(AllocationVector { owner, values })
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_allocations(graph: &NetworkGraph, allocations: &[AllocationVector]) -> Result<()> {
    if allocations.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: allocations.len(),
        });
    }
    for (k, a) in allocations.iter().enumerate() {
        if a.owner != k || a.values.len() != graph.members(k).len() {
            return Err(Error::InvalidInput(format!(
                "allocation {k} does not match node {k}'s neighborhood"
            )));
        }
    }
    Ok(())
}

/// Energy arriving at node `j`, summed over senders in ascending order.
pub fn received(
    graph: &NetworkGraph,
    allocations: &[Vec<f64>],
    j: usize,
    discounts: Option<&Discounts>,
) -> f64 {
    graph
        .members(j)
        .iter()
        .map(|&k| {
            let sent = allocations[k][graph.slot(k, j).expect("adjacency is symmetric")];
            match discounts {
                Some(c) => c.get(j, k) * sent,
                None => sent,
            }
        })
        .sum()
}

/// `min(received / demand, 1)`.
pub fn satisfaction_from_received(received: f64, demand: f64) -> f64 {
    (received / demand).min(1.0)
}

fn raw(allocations: &[AllocationVector]) -> Vec<Vec<f64>> {
    allocations.iter().map(|a| a.values.clone()).collect()
}

/// Satisfaction level of node `i`.
pub fn satisfaction(
    graph: &NetworkGraph,
    i: usize,
    allocations: &[AllocationVector],
    demand: f64,
) -> Result<f64> {
    if !(demand > 0.0) {
        return Err(Error::param("demand", format!("must be > 0, got {demand}")));
    }
    if i >= graph.node_count() {
        return Err(Error::NodeOutOfRange {
            node: i,
            nodes: graph.node_count(),
        });
    }
    check_allocations(graph, allocations)?;
    Ok(satisfaction_from_received(received(graph, &raw(allocations), i, None), demand))
}

fn loss_with(
    graph: &NetworkGraph,
    i: usize,
    allocations: &[AllocationVector],
    demands: &[f64],
    discounts: Option<&Discounts>,
) -> Result<f64> {
    if i >= graph.node_count() {
        return Err(Error::NodeOutOfRange {
            node: i,
            nodes: graph.node_count(),
        });
    }
    check_allocations(graph, allocations)?;
    if demands.len() != graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.node_count(),
            got: demands.len(),
        });
    }
    if let Some(k) = demands.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::param("demand", format!("node {k} has non-positive demand")));
    }
    let x = raw(allocations);
    let sats: Vec<f64> = graph
        .members(i)
        .iter()
        .map(|&j| satisfaction_from_received(received(graph, &x, j, discounts), demands[j]))
        .collect();
    Ok(loss_from_satisfactions(&sats))
}

/// `1 - mean(satisfactions)` over a closed neighborhood.
pub fn loss_from_satisfactions(sats: &[f64]) -> f64 {
    1.0 - sats.iter().sum::<f64>() / sats.len() as f64
}

/// Loss of node `i`: shortfall averaged over its closed neighborhood.
pub fn loss(
    graph: &NetworkGraph,
    i: usize,
    allocations: &[AllocationVector],
    demands: &[f64],
) -> Result<f64> {
    loss_with(graph, i, allocations, demands, None)
}

/// Loss of node `i` when transfers over edge `(j,k)` arrive scaled by `c(j,k)`.
pub fn loss_discounted(
    graph: &NetworkGraph,
    i: usize,
    allocations: &[AllocationVector],
    demands: &[f64],
    discounts: &Discounts,
) -> Result<f64> {
    loss_with(graph, i, allocations, demands, Some(discounts))
}

/// Total sent minus generated; feasible when `<= 0`.
pub fn constraint(allocation: &AllocationVector, generation: f64) -> f64 {
    allocation.total() - generation
}
