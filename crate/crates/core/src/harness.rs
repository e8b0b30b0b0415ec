//! Round-synchronous simulation.
//!
//! Each round the environment is sampled, every agent commits an allocation,
//! the harness computes what each node received, and each agent is handed its
//! own loss and constraint value for the next round. Agents see only those
//! two scalars; no generation or demand figures cross node boundaries.

use std::path::Path;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{bansap_agent, bansap_step};
use crate::config::{Algorithm, DeltaMode, InitMode, OutputConfig, RunConfig, Scenario};
use crate::drs::{AdjustMode, AgentSetup, DrsAgent, Observation, ProblemConstants, DrsSchedule};
use crate::environment::{received, satisfaction_from_received, Discounts};
use crate::error::{Error, Result};
use crate::feasible::{BoxSet, Region};
use crate::io;
use crate::meta::{default_meta_rate, MetaAgent, MetaSchedule};
use crate::metrics::{cumulative_loss, dynamic_regret, satisfaction_report, static_regret, violation_total, SatisfactionReport};
use crate::network::NetworkGraph;
use crate::oracle::{best_fixed_action, ComparatorRegion, per_round_minimizer, ComparatorKind, ComparatorSequence, NeighborhoodLoss};
use crate::record::{AgentRecord, RoundRecord};
use crate::rng::agent_stream;

/// A learner of any supported kind.
pub enum Learner {
    Drs(DrsAgent),
    Meta(MetaAgent),
}

impl Learner {
    pub fn act(&mut self, t: u64, observed: Option<Observation>, generation: f64) -> Result<Vec<f64>> {
        match self {
            Learner::Drs(a) => a.act(t, observed, generation).map(<[f64]>::to_vec),
            Learner::Meta(a) => a.act(t, observed, generation).map(<[f64]>::to_vec),
        }
    }

    pub fn dual(&self) -> f64 {
        match self {
            Learner::Drs(a) => a.dual(),
            Learner::Meta(a) => a.dual(),
        }
    }

    pub fn setup(&self) -> &AgentSetup {
        match self {
            Learner::Drs(a) => &a.setup,
            Learner::Meta(a) => &a.setup,
        }
    }

    /// Ensemble weights, for ensemble learners that have started.
    pub fn weights(&self) -> Option<&[f64]> {
        match self {
            Learner::Meta(a) => a.pool().map(|p| p.weights.as_slice()),
            Learner::Drs(_) => None,
        }
    }
}

/// Constants resolved for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSetup {
    pub node: usize,
    pub x_max: f64,
    pub constants: ProblemConstants,
}

/// Per-node constants derived from the workload, with config overrides applied.
pub fn node_setups(cfg: &RunConfig, scenario: &Scenario) -> Result<Vec<NodeSetup>> {
    let env = &scenario.environment;
    let horizon = cfg.algorithm.horizon;
    let c = &cfg.constants;
    let lipschitz = match c.lipschitz {
        Some(l) => l,
        None => {
            let l = env.min_demand(horizon);
            if !(l > 0.0) {
                return Err(Error::config("demand", "minimum demand must be > 0"));
            }
            1.0 / l
        }
    };
    (0..scenario.graph.node_count())
        .map(|i| {
            let dim = scenario.graph.members(i).len();
            let x_max = c.x_max.unwrap_or_else(|| env.generation.kind.peak_mean(i));
            if !(x_max > 0.0) {
                return Err(Error::config(
                    "constants.x_max",
                    format!("node {i} has no generation; set x_max explicitly"),
                ));
            }
            let constants = ProblemConstants {
                neighbors: scenario.graph.degree(i).max(1),
                dim,
                loss_bound: c.loss_bound,
                constraint_bound: c
                    .constraint_bound
                    .unwrap_or_else(|| (dim as f64 * x_max).max(env.peak_generation(i))),
                enclosing_radius: x_max * (dim as f64).sqrt(),
                inscribed_radius: x_max / 2.0,
                lipschitz,
            };
            constants.validate()?;
            Ok(NodeSetup { node: i, x_max, constants })
        })
        .collect()
}

fn start_point(cfg: &RunConfig, scenario: &Scenario, i: usize, bounds: &BoxSet) -> Vec<f64> {
    match cfg.algorithm.init {
        InitMode::Center => bounds.center(),
        InitMode::EvenSplit => {
            let mean = scenario.environment.generation.kind.means_at(1)[i];
            vec![mean / bounds.dim() as f64; bounds.dim()]
        }
    }
}

/// Builds one learner per node.
pub fn build_learners(cfg: &RunConfig, scenario: &Scenario, setups: &[NodeSetup]) -> Result<Vec<Learner>> {
    let alg = cfg.algorithm.name;
    let horizon = cfg.algorithm.horizon;
    let c = &cfg.constants;
    setups
        .iter()
        .map(|s| {
            let i = s.node;
            let bounds = BoxSet::cube(s.constants.dim, s.x_max)?;
            let start = start_point(cfg, scenario, i, &bounds);
            let setup = AgentSetup {
                self_slot: scenario.graph.slot(i, i).expect("a node is in its own neighborhood"),
                bounds,
                adjustment: alg.adjusts().then_some(cfg.algorithm.adjust_mode),
            };
            let rng = agent_stream(cfg.algorithm.seed, i);
            Ok(match alg {
                Algorithm::Drs | Algorithm::DrsAdjusted => {
                    let schedule = DrsSchedule {
                        constants: s.constants,
                        path_length: c.path_length,
                        xi_clamp: c.xi_clamp,
                    };
                    Learner::Drs(DrsAgent::new(setup, Box::new(schedule), start, rng))
                }
                Algorithm::Bansap => {
                    let step = bansap_step(&s.constants, horizon, c.bansap_freeze, c.path_length, c.xi_clamp)?;
                    Learner::Drs(bansap_agent(setup, step, start, rng))
                }
                Algorithm::MaNsdrs | Algorithm::MaNsdrsAdjusted => {
                    let constant_delta = cfg.algorithm.delta_mode == DeltaMode::Constant;
                    let schedule = MetaSchedule::new(s.constants, horizon, c.xi_clamp, constant_delta);
                    let rate = match c.meta_rate {
                        Some(r) => r,
                        None => default_meta_rate(horizon, &s.constants, c.xi_clamp)?,
                    };
                    let agent = MetaAgent::new(setup, Box::new(schedule), horizon, rate, start, rng);
                    Learner::Meta(match c.experts {
                        Some(k) => agent.with_pool_size(k),
                        None => agent,
                    })
                }
            })
        })
        .collect()
}

/// Nodes at which the round loop switches to parallel agent updates.
const PARALLEL_NODES: usize = 16;

/// Outcome of one round given every node's allocation.
pub fn evaluate_round(
    graph: &NetworkGraph,
    t: u64,
    allocations: &[Vec<f64>],
    generation: &[f64],
    demand: &[f64],
    duals: &[f64],
    discounts: Option<&Discounts>,
) -> RoundRecord {
    let n = graph.node_count();
    let recv: Vec<f64> = (0..n).map(|j| received(graph, allocations, j, discounts)).collect();
    let sat: Vec<f64> = recv.iter().zip(demand).map(|(r, l)| satisfaction_from_received(*r, *l)).collect();
    let agents = (0..n)
        .map(|i| {
            let sats: Vec<f64> = graph.members(i).iter().map(|&j| sat[j]).collect();
            let loss = 1.0 - sats.iter().sum::<f64>() / sats.len() as f64;
            let constraint = allocations[i].iter().sum::<f64>() - generation[i];
            AgentRecord {
                node: i,
                loss,
                constraint,
                violation: constraint.max(0.0),
                satisfaction: sat[i],
                received: Some(recv[i]),
                dual: duals[i],
                generation: generation[i],
                demand: demand[i],
                allocation: allocations[i].clone(),
            }
        })
        .collect();
    RoundRecord { t, agents }
}

/// Everything a run produces in memory.
pub struct RunOutput {
    pub records: Vec<RoundRecord>,
    pub setups: Vec<NodeSetup>,
    /// Per-node loss landscapes, kept when the oracle is enabled.
    pub landscapes: Option<Vec<Vec<NeighborhoodLoss>>>,
    pub comparators: Option<Vec<ComparatorSequence>>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    /// Cumulative loss averaged over nodes, per round.
    pub mean_cumulative_loss: Vec<f64>,
    /// Cumulative loss summed over nodes, per round.
    pub sum_cumulative_loss: Vec<f64>,
    /// Cumulative violation summed over nodes, per round.
    pub sum_cumulative_violation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub seed: u64,
    pub nodes: usize,
    pub cumulative_loss: Vec<f64>,
    pub violation: Vec<f64>,
    pub mean_cumulative_loss: f64,
    pub total_violation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamic_regret: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub static_regret: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_length: Option<Vec<f64>>,
    pub satisfaction: SatisfactionReport,
    pub series: Series,
    pub wall_clock_seconds: f64,
}

fn series(records: &[RoundRecord]) -> Series {
    let n = records.first().map_or(1, |r| r.agents.len()) as f64;
    let mut s = Series {
        mean_cumulative_loss: Vec::with_capacity(records.len()),
        sum_cumulative_loss: Vec::with_capacity(records.len()),
        sum_cumulative_violation: Vec::with_capacity(records.len()),
    };
    let (mut loss, mut viol) = (0.0, 0.0);
    for r in records {
        loss += r.agents.iter().map(|a| a.loss).sum::<f64>();
        viol += r.agents.iter().map(|a| a.violation).sum::<f64>();
        s.sum_cumulative_loss.push(loss);
        s.mean_cumulative_loss.push(loss / n);
        s.sum_cumulative_violation.push(viol);
    }
    s
}

/// Runs the configured simulation.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let scenario = cfg.scenario()?;
    let setups = node_setups(cfg, &scenario)?;
    let mut learners = build_learners(cfg, &scenario, &setups)?;
    let graph = &scenario.graph;
    let n = graph.node_count();
    let horizon = cfg.algorithm.horizon;
    let keep = cfg.output.with_oracle;
    let mut landscapes: Vec<Vec<NeighborhoodLoss>> = vec![Vec::new(); if keep { n } else { 0 }];
    let mut records = Vec::with_capacity(horizon as usize);
    let mut observed: Vec<Option<Observation>> = vec![None; n];
    info!("running {} for {horizon} rounds on {n} nodes", cfg.algorithm.name.name());
    for t in 1..=horizon {
        let sample = scenario.environment.sample_round(t)?;
        let act = |(k, l): (usize, &mut Learner)| l.act(t, observed[k], sample.generation[k]);
        let allocations: Vec<Vec<f64>> = if n >= PARALLEL_NODES {
            learners.par_iter_mut().enumerate().map(act).collect::<Result<_>>()?
        } else {
            learners.iter_mut().enumerate().map(act).collect::<Result<_>>()?
        };
        let duals: Vec<f64> = learners.iter().map(Learner::dual).collect();
        let record = evaluate_round(
            graph,
            t,
            &allocations,
            &sample.generation,
            &sample.demand,
            &duals,
            scenario.discounts.as_ref(),
        );
        for (o, a) in observed.iter_mut().zip(&record.agents) {
            *o = Some(Observation {
                loss: a.loss,
                constraint: a.constraint,
            });
        }
        if keep {
            for (i, store) in landscapes.iter_mut().enumerate() {
                store.push(NeighborhoodLoss::from_round(
                    graph,
                    i,
                    &allocations,
                    &sample.demand,
                    scenario.discounts.as_ref(),
                )?);
            }
        }
        records.push(record);
    }

    let window = cfg.output.window.unwrap_or((horizon as usize).min(1000));
    let mut summary = Summary {
        algorithm: cfg.algorithm.name,
        horizon,
        seed: cfg.algorithm.seed,
        nodes: n,
        cumulative_loss: cumulative_loss(&records),
        violation: violation_total(&records),
        mean_cumulative_loss: 0.0,
        total_violation: 0.0,
        dynamic_regret: None,
        static_regret: None,
        path_length: None,
        satisfaction: satisfaction_report(&records, window)?,
        series: series(&records),
        wall_clock_seconds: 0.0,
    };
    summary.mean_cumulative_loss = summary.cumulative_loss.iter().sum::<f64>() / n as f64;
    summary.total_violation = summary.violation.iter().sum();

    let mut comparators = None;
    let landscapes = if keep {
        let oracle = run_oracle(&records, &setups, &landscapes, &cfg.output)?;
        summary.static_regret = Some(static_regret(&records, &landscapes, &oracle.best_fixed)?);
        if let Some(dynamic) = oracle.dynamic {
            summary.dynamic_regret = Some(dynamic_regret(&records, &landscapes, &dynamic)?);
            summary.path_length = Some(dynamic.iter().map(ComparatorSequence::path_length).collect());
            comparators = Some(dynamic);
        }
        Some(landscapes)
    } else {
        None
    };
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        records,
        setups,
        landscapes,
        comparators,
        summary,
    })
}

pub struct OracleResult {
    pub best_fixed: Vec<Vec<f64>>,
    pub dynamic: Option<Vec<ComparatorSequence>>,
}

/// Comparators for every node: the best fixed action and, when asked, a
/// per-round minimizer.
pub fn run_oracle(
    records: &[RoundRecord],
    setups: &[NodeSetup],
    landscapes: &[Vec<NeighborhoodLoss>],
    output: &OutputConfig,
) -> Result<OracleResult> {
    let budgeted = output.comparator == ComparatorRegion::Budgeted;
    let best_fixed = setups
        .par_iter()
        .map(|s| {
            let bounds = BoxSet::cube(s.constants.dim, s.x_max)?;
            let budget = budgeted.then(|| {
                records.iter().map(|r| r.agents[s.node].generation).sum::<f64>() / records.len() as f64
            });
            let region = Region::new(bounds, budget)?;
            Ok(best_fixed_action(&landscapes[s.node], &region, &output.solver)?.point)
        })
        .collect::<Result<Vec<_>>>()?;
    let dynamic = if output.dynamic_oracle {
        Some(
            setups
                .iter()
                .map(|s| {
                    let bounds = BoxSet::cube(s.constants.dim, s.x_max)?;
                    let points = records
                        .par_iter()
                        .zip(&landscapes[s.node])
                        .map(|(r, f)| {
                            let budget = budgeted.then_some(r.agents[s.node].generation);
                            let region = Region::new(bounds.clone(), budget)?;
                            Ok(per_round_minimizer(f, &region, &output.solver)?.point)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(ComparatorSequence {
                        kind: ComparatorKind::Dynamic,
                        points,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(OracleResult { best_fixed, dynamic })
}

/// Widest allocation vector in the run.
pub fn allocation_width(records: &[RoundRecord]) -> usize {
    records
        .iter()
        .flat_map(|r| r.agents.iter().map(|a| a.allocation.len()))
        .max()
        .unwrap_or(0)
}

/// Writes `records.csv`, `summary.json`, the resolved `config.json` and,
/// with the oracle on, `comparators.csv`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    io::write_records_file(&dir.join("records.csv"), &out.records, allocation_width(&out.records))?;
    io::write_json(&dir.join("summary.json"), &out.summary)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    if let Some(c) = &out.comparators {
        let path = dir.join("comparators.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
        io::write_comparators(std::io::BufWriter::new(file), c)?;
    }
    Ok(())
}

/// Whether the run's adjustment mode guarantees zero violation.
pub fn guarantees_feasibility(cfg: &RunConfig) -> bool {
    cfg.algorithm.name.adjusts() && cfg.algorithm.adjust_mode == AdjustMode::Proportional
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{six_node_constant, six_node_stationary, six_node_switching};

    #[test]
    fn single_round_summary_matches_record() {
        let out = run(&six_node_stationary(Algorithm::Drs, 1, 3)).unwrap();
        assert_eq!(out.records.len(), 1);
        for (i, a) in out.records[0].agents.iter().enumerate() {
            assert_eq!(out.summary.cumulative_loss[i], a.loss);
            assert_eq!(out.summary.violation[i], a.violation);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        for alg in Algorithm::ALL {
            let cfg = six_node_switching(alg, 300, 9, 100);
            let a = run(&cfg).unwrap();
            let b = run(&cfg).unwrap();
            assert_eq!(a.records, b.records, "{alg:?}");
        }
    }

    #[test]
    fn adjusted_runs_never_violate() {
        for alg in [Algorithm::DrsAdjusted, Algorithm::MaNsdrsAdjusted] {
            let out = run(&six_node_stationary(alg, 2000, 4)).unwrap();
            assert!(out.records.iter().flat_map(|r| &r.agents).all(|a| a.violation == 0.0));
            assert_eq!(out.summary.total_violation, 0.0);
        }
    }

    #[test]
    fn records_respect_invariants() {
        let out = run(&six_node_stationary(Algorithm::Bansap, 500, 2)).unwrap();
        for r in &out.records {
            for a in &r.agents {
                assert_eq!(a.violation, a.constraint.max(0.0));
                assert!(a.dual >= 0.0);
                assert!((0.0..=1.0).contains(&a.loss));
                assert!(a.allocation.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn oracle_outputs_are_consistent() {
        let mut cfg = six_node_constant(Algorithm::Drs, 60, 1);
        cfg.output.with_oracle = true;
        let out = run(&cfg).unwrap();
        let s = &out.summary;
        let (dr, sr, pl) = (s.dynamic_regret.as_ref().unwrap(), s.static_regret.as_ref().unwrap(), s.path_length.as_ref().unwrap());
        for i in 0..6 {
            assert!(dr[i] >= sr[i] - 1e-9, "per-round comparators are at least as good");
            assert!(pl[i] >= 0.0);
        }
    }

    #[test]
    fn parallel_and_serial_paths_agree() {
        let cfg = crate::config::RunConfig {
            graph: crate::config::GraphConfig {
                source: crate::config::GraphSource::Synthetic {
                    nodes: 20,
                    side: 10.0,
                    threshold: 3.5,
                    seed: 2,
                },
                discounts: None,
            },
            generation: crate::environment::GenerationKind::Constant {
                means: (0..20).map(|k| 2.0 + (k % 5) as f64).collect(),
            },
            ..six_node_constant(Algorithm::MaNsdrsAdjusted, 50, 1)
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records[0].agents.len(), 20);
    }
}
