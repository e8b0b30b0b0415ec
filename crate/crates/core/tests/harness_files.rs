//! End-to-end runs through the library: file formats, determinism, summary contents.

use std::fs;
use std::path::Path;

use dershare::config::{six_node_stationary, six_node_switching, Algorithm, DemandConfig, GraphSource, RunConfig};
use dershare::harness::{run, write_outputs};
use dershare::io::{read_records, write_records, RECORD_COLUMNS};
use dershare::metrics::{cumulative_loss, violation_total};
use dershare::Error;

fn summary_without_clock(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_seconds");
    v
}

#[test]
fn repeated_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    for alg in Algorithm::ALL {
        let mut cfg = six_node_switching(alg, 400, 11, 100);
        cfg.output.with_oracle = true;
        let (a, b) = (tmp.path().join(format!("{}-a", alg.name())), tmp.path().join(format!("{}-b", alg.name())));
        write_outputs(&a, &cfg, &run(&cfg).unwrap()).unwrap();
        write_outputs(&b, &cfg, &run(&cfg).unwrap()).unwrap();
        for file in ["records.csv", "comparators.csv", "config.json"] {
            assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
        }
        assert_eq!(summary_without_clock(&a), summary_without_clock(&b));
    }
}

#[test]
fn seeds_change_the_trajectory() {
    let a = run(&six_node_stationary(Algorithm::Drs, 200, 1)).unwrap();
    let b = run(&six_node_stationary(Algorithm::Drs, 200, 2)).unwrap();
    assert_ne!(a.records, b.records);
}

#[test]
fn records_round_trip_through_csv() {
    let out = run(&six_node_switching(Algorithm::MaNsdrsAdjusted, 300, 3, 50)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("records.csv");
    write_records(fs::File::create(&path).unwrap(), &out.records, 4).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, format!("{},alloc_0,alloc_1,alloc_2,alloc_3", RECORD_COLUMNS.join(",")));
    let back = read_records(&path).unwrap();
    assert_eq!(back.len(), out.records.len());
    for (r, s) in back.iter().zip(&out.records) {
        assert_eq!(r.t, s.t);
        for (a, b) in r.agents.iter().zip(&s.agents) {
            let mut b = b.clone();
            b.received = None;
            assert_eq!(*a, b);
        }
    }
    assert_eq!(cumulative_loss(&back), out.summary.cumulative_loss);
    assert_eq!(violation_total(&back), out.summary.violation);
}

#[test]
fn malformed_records_report_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    let mut text = format!("{},alloc_0\n", RECORD_COLUMNS.join(","));
    text += "1,0,0.5,-1,0,0.5,0,3,4,1.5\n";
    text += "1,1,oops,-1,0,0.5,0,3,4,1.5\n";
    fs::write(&path, text).unwrap();
    match read_records(&path) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("loss"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn summary_exposes_plot_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = six_node_stationary(Algorithm::DrsAdjusted, 500, 5);
    cfg.output.with_oracle = true;
    let out = run(&cfg).unwrap();
    write_outputs(tmp.path(), &cfg, &out).unwrap();
    let v = summary_without_clock(tmp.path());
    for key in ["cumulative_loss", "violation", "dynamic_regret", "static_regret", "path_length", "satisfaction", "series"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let series = &v["series"];
    assert_eq!(series["mean_cumulative_loss"].as_array().unwrap().len(), 500);
    assert!(series["sum_cumulative_violation"].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)));
    let last = series["sum_cumulative_loss"].as_array().unwrap().last().unwrap().as_f64().unwrap();
    let total: f64 = out.summary.cumulative_loss.iter().sum();
    assert!((last - total).abs() < 1e-9);
    let comparators = fs::read_to_string(tmp.path().join("comparators.csv")).unwrap();
    assert!(comparators.starts_with("t,node,coord_index,value\n"));
}

#[test]
fn file_backed_graph_and_demand_resolve_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("ring.txt"), "# ring with a chord\n0 1\n1 2\n2 3\n3 4\n4 5\n5 0\n1 4\n").unwrap();
    let mut demand = String::from("t,node,demand\n");
    for i in 0..6 {
        demand += &format!("1,{i},{}\n", 8.0 + i as f64);
    }
    fs::write(tmp.path().join("demand.csv"), demand).unwrap();
    let mut cfg = six_node_stationary(Algorithm::Drs, 50, 1);
    cfg.graph.source = GraphSource::EdgesFile {
        nodes: 6,
        path: "ring.txt".into(),
    };
    cfg.demand = DemandConfig::File {
        path: "demand.csv".into(),
    };
    let cfg_path = tmp.path().join("run.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let loaded = RunConfig::from_path(&cfg_path).unwrap();
    let inline = six_node_stationary(Algorithm::Drs, 50, 1);
    let a = run(&loaded).unwrap();
    let b = run(&inline).unwrap();
    assert_eq!(a.records[0].agents.len(), 6);
    assert!(a.records.iter().all(|r| r.agents.iter().enumerate().all(|(i, x)| x.demand == 8.0 + i as f64)));
    // same graph and generation, different demand
    assert_eq!(a.records[0].agents[0].generation, b.records[0].agents[0].generation);
}

#[test]
fn config_errors_name_the_field() {
    let mut cfg = six_node_stationary(Algorithm::Drs, 10, 1);
    cfg.algorithm.horizon = 0;
    assert!(matches!(run(&cfg), Err(Error::Config { field, .. }) if field == "algorithm.horizon"));
    let mut cfg = six_node_stationary(Algorithm::Drs, 10, 1);
    cfg.constants.xi_clamp = 1.0;
    assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "constants.xi_clamp"));
    let mut cfg = six_node_stationary(Algorithm::Drs, 10, 1);
    cfg.graph.source = GraphSource::Edges {
        nodes: 5,
        edges: vec![(0, 1)],
    };
    assert!(matches!(cfg.scenario(), Err(Error::Config { field, .. }) if field == "generation"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let cfg = six_node_stationary(Algorithm::Drs, 10, 1);
    let mut v = serde_json::to_value(&cfg).unwrap();
    v["algorithm"]["horizn"] = serde_json::json!(5);
    assert!(serde_json::from_value::<RunConfig>(v).is_err());
}

#[test]
fn average_loss_decays_on_a_stationary_workload() {
    let mean: Vec<f64> = [2_000u64, 8_000, 32_000]
        .iter()
        .map(|&t| run(&six_node_stationary(Algorithm::Drs, t, 1)).unwrap().summary.mean_cumulative_loss / t as f64)
        .collect();
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}
