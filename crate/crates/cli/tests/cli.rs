use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clustergraph::graph::Topology;
use clustergraph::harness::{replication_model, write_partition, ExperimentConfig};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustergraph")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_data(path: &Path, n: usize) -> clustergraph::LatentModel {
    let model = replication_model(&ExperimentConfig::new(30, 2, 6, Topology::Band3), 4).unwrap();
    let x = model.sample(n, 8).unwrap();
    let mut text = String::new();
    for row in x.data().row_iter() {
        text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
    model
}

#[test]
fn simulate_from_config_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "d = 30\nn = 300\nK = 6\ntopology = \"band3\"\nreplications = 2\nseed = 5\nalpha = [0.1]\n",
    )
    .unwrap();
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
        assert!(agg.starts_with("graph_kind,method,alpha,topology,K,m,mean_fdr,mean_power,n_fail"));
        assert_eq!(agg.lines().count(), 1 + 2 * 2);
        summaries.push(agg);
        let json = fs::read_to_string(out.join("summary.json")).unwrap();
        assert!(json.contains("\"version\""));
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn flags_override_and_sequential_matches() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "--d", "24", "--n", "200", "-K", "6", "--topology", "hub", "--replications", "2"];
    let mut outputs = Vec::new();
    for (name, extra) in [("p", vec![]), ("s", vec!["--sequential"])] {
        let out = dir.path().join(name);
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--method", "by", "--graph", "latent", "--alpha", "0.05,0.2", "--true-partition"]);
        args.extend(["--out", out.to_str().unwrap()]);
        args.extend(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read_to_string(out.join("aggregate.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].lines().count(), 3);
    assert!(outputs[0].lines().skip(1).all(|l| l.starts_with("latent,BY,")));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "d = 30\nn = 300\nK = 6\ntopology = \"band3\"\ncolour = 1\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["simulate", "--d", "30", "--n", "100", "-K", "6", "--topology", "ring"])), 2);
    assert_eq!(code(&run(&["simulate", "--d", "30", "--n", "100"])), 2);
    let cfg = dir.path().join("alpha.toml");
    fs::write(&cfg, "d = 30\nn = 300\nK = 6\ntopology = \"band3\"\nalpha = [1.5]\n").unwrap();
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blank = dir.path().join("blank.csv");
    fs::write(&blank, "1,2,3,4\n5,6,7,8\n\n9,1,2,3\n").unwrap();
    let o = run(&["cluster", blank.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2,3,4\n5,6,7\n").unwrap();
    assert_eq!(code(&run(&["infer", ragged.to_str().unwrap()])), 3);
    assert_eq!(code(&run(&["cluster", dir.path().join("missing.csv").to_str().unwrap()])), 3);
}

#[test]
fn cluster_then_infer() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let model = write_data(&data, 1500);

    let part = dir.path().join("part.csv");
    let o = run(&["cluster", data.to_str().unwrap(), "--out", part.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&part).unwrap();
    assert_eq!(text.lines().count(), 31);
    let got = clustergraph::harness::read_partition(&part).unwrap();
    assert_eq!(&got, model.partition());

    let out = dir.path().join("inferred");
    let o = run(&[
        "infer",
        data.to_str().unwrap(),
        "--alpha",
        "0.1",
        "--format",
        "dot",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["partition.csv", "latent_by_0.1.dot", "latent_bh_0.1.dot", "average_by_0.1.dot", "average_bh_0.1.dot"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let dot = fs::read_to_string(out.join("latent_bh_0.1.dot")).unwrap();
    assert!(dot.starts_with("graph clusters {"));
}

#[test]
fn infer_with_known_partition_and_cv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    let model = write_data(&data, 600);
    let part = dir.path().join("truth.csv");
    write_partition(model.partition(), &part).unwrap();
    let out = dir.path().join("o");
    let o = run(&[
        "infer",
        data.to_str().unwrap(),
        "--partition",
        part.to_str().unwrap(),
        "--graph",
        "latent",
        "--method",
        "bh",
        "--tuning",
        "cv",
        "--cv-folds",
        "3",
        "--cv-per-column",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let edges = fs::read_to_string(out.join("latent_bh_0.05.csv")).unwrap();
    assert!(edges.starts_with("t,k,estimate,stat\n"));
    assert!(!out.join("average_bh_0.05.csv").exists());

    let wrong = dir.path().join("wrong.csv");
    fs::write(&wrong, "variable,cluster\n1,1\n2,1\n").unwrap();
    let o = run(&["infer", data.to_str().unwrap(), "--partition", wrong.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}
