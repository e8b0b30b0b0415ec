//! Run configuration: the JSON file format and the built-in workloads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drs::AdjustMode;
use crate::environment::{DemandModel, DemandTable, Discounts, Environment, GenerationKind, GenerationProcess};
use crate::error::{Error, Result};
use crate::io;
use crate::network::{synthetic_positions, NetworkGraph, Point};
use crate::oracle::{ComparatorRegion, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "drs")]
    Drs,
    #[serde(rename = "drs-adj")]
    DrsAdjusted,
    #[serde(rename = "mansdrs")]
    MaNsdrs,
    #[serde(rename = "mansdrs-adj")]
    MaNsdrsAdjusted,
    #[serde(rename = "bansap")]
    Bansap,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Drs,
        Algorithm::DrsAdjusted,
        Algorithm::MaNsdrs,
        Algorithm::MaNsdrsAdjusted,
        Algorithm::Bansap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Drs => "drs",
            Algorithm::DrsAdjusted => "drs-adj",
            Algorithm::MaNsdrs => "mansdrs",
            Algorithm::MaNsdrsAdjusted => "mansdrs-adj",
            Algorithm::Bansap => "bansap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithm.name", format!("unknown algorithm {s:?}")))
    }

    pub fn adjusts(self) -> bool {
        matches!(self, Algorithm::DrsAdjusted | Algorithm::MaNsdrsAdjusted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Edges { nodes: usize, edges: Vec<(usize, usize)> },
    EdgesFile { nodes: usize, path: PathBuf },
    Positions { positions: Vec<Point>, threshold: f64 },
    PositionsFile { path: PathBuf, threshold: f64 },
    Synthetic { nodes: usize, side: f64, threshold: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountConfig {
    pub default: f64,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    #[serde(flatten)]
    pub source: GraphSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discounts: Option<DiscountConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandConfig {
    Balanced,
    Table { rows: Vec<(u64, usize, f64)> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    #[default]
    Decaying,
    /// Ensemble only: hold the exploration radius at its end-of-horizon value.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Spread the expected first-round generation evenly over the neighborhood.
    #[default]
    EvenSplit,
    /// Start at the center of the action box.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: Algorithm,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub adjust_mode: AdjustMode,
    #[serde(default)]
    pub delta_mode: DeltaMode,
    #[serde(default)]
    pub init: InitMode,
}

/// Overrides for constants the harness otherwise derives from the workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Path-length budget used by the base learner's schedule.
    #[serde(default)]
    pub path_length: f64,
    /// Per-coordinate box side; defaults to each node's peak mean generation.
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "one")]
    pub loss_bound: f64,
    /// Defaults to `max(dim * x_max, peak generation)` per node.
    #[serde(default)]
    pub constraint_bound: Option<f64>,
    /// Defaults to `1 / min demand`.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Ensemble learning rate; defaults to the horizon-tuned value.
    #[serde(default)]
    pub meta_rate: Option<f64>,
    /// Ensemble size; defaults to the horizon-tuned count.
    #[serde(default)]
    pub experts: Option<usize>,
    /// Fraction of the horizon at which the baseline's schedule is frozen.
    #[serde(default = "half")]
    pub bansap_freeze: f64,
    /// Shrinkage used whenever the schedule's raw value reaches 1.
    #[serde(default = "half")]
    pub xi_clamp: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            path_length: 0.0,
            x_max: None,
            loss_bound: 1.0,
            constraint_bound: None,
            lipschitz: None,
            meta_rate: None,
            experts: None,
            bansap_freeze: 0.5,
            xi_clamp: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub with_oracle: bool,
    /// Per-round comparators are skipped when false; the fixed comparator is always computed.
    #[serde(default = "yes")]
    pub dynamic_oracle: bool,
    #[serde(default)]
    pub comparator: ComparatorRegion,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Rounds at the end of the run averaged by the satisfaction report.
    #[serde(default)]
    pub window: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            with_oracle: false,
            dynamic_oracle: true,
            comparator: ComparatorRegion::Box,
            solver: SolverSettings::default(),
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    pub generation: GenerationKind,
    pub demand: DemandConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Everything a run needs, with files loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: NetworkGraph,
    pub environment: Environment,
    pub discounts: Option<Discounts>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Resolves relative file references against `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.graph.source {
            GraphSource::EdgesFile { path, .. } | GraphSource::PositionsFile { path, .. } => fix(path),
            _ => {}
        }
        if let DemandConfig::File { path } = &mut self.demand {
            fix(path);
        }
    }

    /// Field-level checks that need no files.
    pub fn validate(&self) -> Result<()> {
        if self.algorithm.horizon == 0 {
            return Err(Error::config("algorithm.horizon", "must be >= 1"));
        }
        let c = &self.constants;
        if !(c.path_length >= 0.0 && c.path_length.is_finite()) {
            return Err(Error::config("constants.path_length", "must be finite and >= 0"));
        }
        let positive = [
            ("constants.x_max", c.x_max),
            ("constants.loss_bound", Some(c.loss_bound)),
            ("constants.constraint_bound", c.constraint_bound),
            ("constants.lipschitz", c.lipschitz),
        ];
        for (field, v) in positive {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(field, format!("must be finite and > 0, got {v}")));
                }
            }
        }
        if let Some(r) = c.meta_rate {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::config("constants.meta_rate", format!("must be finite and >= 0, got {r}")));
            }
        }
        if c.experts == Some(0) {
            return Err(Error::config("constants.experts", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&c.bansap_freeze) {
            return Err(Error::config("constants.bansap_freeze", "must lie in [0, 1]"));
        }
        if !(c.xi_clamp > 0.0 && c.xi_clamp < 1.0) {
            return Err(Error::config("constants.xi_clamp", "must lie in (0, 1)"));
        }
        if let Some(w) = self.output.window {
            if w == 0 || w as u64 > self.algorithm.horizon {
                return Err(Error::config("output.window", "must lie in 1..=horizon"));
            }
        }
        if self.output.solver.iterations == 0 || self.output.solver.grid_points < 2 {
            return Err(Error::config("output.solver", "needs >= 1 iteration and >= 2 grid points"));
        }
        Ok(())
    }

    /// Loads referenced files and builds the graph and environment.
    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let graph = match &self.graph.source {
            GraphSource::Edges { nodes, edges } => NetworkGraph::from_edges(*nodes, edges),
            GraphSource::EdgesFile { nodes, path } => NetworkGraph::from_edges(*nodes, &io::read_edges(path)?),
            GraphSource::Positions { positions, threshold } => NetworkGraph::from_positions(positions, *threshold),
            GraphSource::PositionsFile { path, threshold } => {
                NetworkGraph::from_positions(&io::read_positions(path)?, *threshold)
            }
            GraphSource::Synthetic {
                nodes,
                side,
                threshold,
                seed,
            } => NetworkGraph::from_positions(&synthetic_positions(*nodes, *side, *seed), *threshold),
        }
        .map_err(|e| Error::config("graph", e.to_string()))?;
        let n = graph.node_count();
        let gen_nodes = self.generation.node_count();
        if gen_nodes != n {
            return Err(Error::config(
                "generation",
                format!("describes {gen_nodes} nodes but the graph has {n}"),
            ));
        }
        let demand = match &self.demand {
            DemandConfig::Balanced => DemandModel::Balanced,
            DemandConfig::Table { rows } => DemandModel::Explicit(
                DemandTable::from_rows(n, rows).map_err(|e| Error::config("demand.rows", e.to_string()))?,
            ),
            DemandConfig::File { path } => DemandModel::Explicit(
                DemandTable::from_rows(n, &io::read_demand(path)?)
                    .map_err(|e| Error::config("demand.path", e.to_string()))?,
            ),
        };
        let environment = Environment::new(GenerationProcess::new(self.generation.clone(), self.algorithm.seed), demand)?;
        let discounts = match &self.graph.discounts {
            None => None,
            Some(d) => {
                for &(i, j, _) in &d.edges {
                    if i >= n || j >= n || !graph.adjacent(i, j) {
                        return Err(Error::config("graph.discounts", format!("({i}, {j}) is not an edge")));
                    }
                }
                Some(Discounts::with_edges(d.default, &d.edges).map_err(|e| Error::config("graph.discounts", e.to_string()))?)
            }
        };
        Ok(Scenario {
            graph,
            environment,
            discounts,
        })
    }
}

/// Six-node ring with one chord.
pub fn six_node_edges() -> Vec<(usize, usize)> {
    vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)]
}

/// Uneven mean generation on the six-node ring; balanced demand is 10 per node.
pub const SIX_NODE_MEANS: [f64; 6] = [6.0, 14.0, 12.0, 8.0, 4.0, 16.0];

/// The same total with the surplus and deficit nodes swapped.
pub const SIX_NODE_MEANS_SWAPPED: [f64; 6] = [14.0, 6.0, 8.0, 12.0, 16.0, 4.0];

fn base_config(nodes: usize, edges: Vec<(usize, usize)>, generation: GenerationKind, algorithm: Algorithm, horizon: u64, seed: u64) -> RunConfig {
    RunConfig {
        graph: GraphConfig {
            source: GraphSource::Edges { nodes, edges },
            discounts: None,
        },
        generation,
        demand: DemandConfig::Balanced,
        algorithm: AlgorithmConfig {
            name: algorithm,
            horizon,
            seed,
            adjust_mode: AdjustMode::Proportional,
            delta_mode: DeltaMode::Decaying,
            init: InitMode::EvenSplit,
        },
        constants: ConstantsConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Stationary six-node workload with noisy generation.
pub fn six_node_stationary(algorithm: Algorithm, horizon: u64, seed: u64) -> RunConfig {
    let generation = GenerationKind::IidUniform {
        means: SIX_NODE_MEANS.to_vec(),
        half_width: SIX_NODE_MEANS.iter().map(|m| 0.25 * m).collect(),
    };
    base_config(6, six_node_edges(), generation, algorithm, horizon, seed)
}

/// Six-node workload with constant generation.
pub fn six_node_constant(algorithm: Algorithm, horizon: u64, seed: u64) -> RunConfig {
    let generation = GenerationKind::Constant {
        means: SIX_NODE_MEANS.to_vec(),
    };
    base_config(6, six_node_edges(), generation, algorithm, horizon, seed)
}

/// Six-node workload whose means swap every `period` rounds.
pub fn six_node_switching(algorithm: Algorithm, horizon: u64, seed: u64, period: u64) -> RunConfig {
    let levels = vec![SIX_NODE_MEANS.to_vec(), SIX_NODE_MEANS_SWAPPED.to_vec()];
    let half_width = SIX_NODE_MEANS.iter().map(|_| 1.0).collect();
    let generation = GenerationKind::periodic(levels, period, horizon, Some(half_width));
    base_config(6, six_node_edges(), generation, algorithm, horizon, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::parse(a.name()).unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert!(Algorithm::parse("sgd").is_err());
    }

    #[test]
    fn presets_serialize_and_validate() {
        for cfg in [
            six_node_stationary(Algorithm::Drs, 100, 1),
            six_node_constant(Algorithm::Bansap, 100, 1),
            six_node_switching(Algorithm::MaNsdrs, 5000, 1, 1000),
        ] {
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back: RunConfig = serde_json::from_str(&text).unwrap();
            assert_eq!(back, cfg);
            let s = back.scenario().unwrap();
            assert_eq!(s.graph.node_count(), 6);
            assert_eq!(s.environment.min_demand(100), 10.0);
        }
    }

    #[test]
    fn field_level_errors() {
        let mut cfg = six_node_constant(Algorithm::Drs, 10, 1);
        cfg.algorithm.horizon = 0;
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "algorithm.horizon"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = six_node_constant(Algorithm::Drs, 10, 1);
        cfg.generation = GenerationKind::Constant { means: vec![1.0; 5] };
        match cfg.scenario() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "generation"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = six_node_constant(Algorithm::Drs, 10, 1);
        cfg.constants.xi_clamp = 1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"graph": {"source": "edges", "nodes": 2, "edges": [[0, 1]]},
            "generation": {"kind": "constant", "means": [1, 2]},
            "demand": {"model": "balanced"},
            "algorithm": {"name": "drs", "horizon": 5, "seed": 1, "typo": 3}}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }
}
