//! Command-line front end: run simulations, check configs, summarize record files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use dershare::config::{Algorithm, RunConfig};
use dershare::harness::{run, write_outputs};
use dershare::metrics::{cumulative_loss, violation_total};
use dershare::network::synthetic_positions;
use dershare::{io, Result};

#[derive(Parser)]
#[command(name = "dershare", version, about = "Distributed bandit energy sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configured run and write its records and summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// drs, drs-adj, mansdrs, mansdrs-adj or bansap
        #[arg(long, value_parser = parse_algorithm)]
        algo: Option<Algorithm>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Compute comparators and regret after the run.
        #[arg(long)]
        with_oracle: bool,
        /// Output directory; falls back to the config's, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a config and every file it references, then report problems.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-node totals from a records CSV.
    Report {
        #[arg(long)]
        records: PathBuf,
    },
    /// Write random facility positions as an `id,x,y` CSV.
    Synth {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 10.0)]
        side: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    Algorithm::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            algo,
            horizon,
            seed,
            with_oracle,
            out,
        } => {
            let mut cfg = RunConfig::from_path(&config)?;
            if let Some(a) = algo {
                cfg.algorithm.name = a;
            }
            if let Some(t) = horizon {
                cfg.algorithm.horizon = t;
            }
            if let Some(s) = seed {
                cfg.algorithm.seed = s;
            }
            cfg.output.with_oracle |= with_oracle;
            let dir = out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            cfg.output.dir = Some(dir.clone());
            cfg.validate()?;
            let result = run(&cfg)?;
            write_outputs(&dir, &cfg, &result)?;
            let s = &result.summary;
            info!("wrote {}", dir.display());
            println!(
                "{} T={} seed={} nodes={} mean cumulative loss {:.4} total violation {:.4} ({:.2}s)",
                s.algorithm.name(),
                s.horizon,
                s.seed,
                s.nodes,
                s.mean_cumulative_loss,
                s.total_violation,
                s.wall_clock_seconds
            );
            if let Some(r) = &s.static_regret {
                println!("static regret (sum over nodes) {:.4}", r.iter().sum::<f64>());
            }
            if let Some(r) = &s.dynamic_regret {
                println!("dynamic regret (sum over nodes) {:.4}", r.iter().sum::<f64>());
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = RunConfig::from_path(&config)?;
            cfg.validate()?;
            let scenario = cfg.scenario()?;
            println!(
                "ok: {} nodes, {} edges, {} for {} rounds",
                scenario.graph.node_count(),
                scenario.graph.edges().len(),
                cfg.algorithm.name.name(),
                cfg.algorithm.horizon
            );
            Ok(())
        }
        Command::Report { records } => {
            let recs = io::read_records(&records)?;
            let loss = cumulative_loss(&recs);
            let viol = violation_total(&recs);
            println!("rounds {}", recs.len());
            println!("node,cumulative_loss,violation");
            for (i, (l, v)) in loss.iter().zip(&viol).enumerate() {
                println!("{i},{l:.6},{v:.6}");
            }
            let n = loss.len().max(1) as f64;
            println!("mean,{:.6},{:.6}", loss.iter().sum::<f64>() / n, viol.iter().sum::<f64>() / n);
            Ok(())
        }
        Command::Synth { nodes, side, seed, out } => {
            io::write_positions(&out, &synthetic_positions(nodes, side, seed))?;
            println!("wrote {nodes} positions to {}", out.display());
            Ok(())
        }
    }
}
