use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphformer"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out: Output = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn toy_config(dir: &Path, out: &Path, extra: &str) -> PathBuf {
    let path = dir.join(format!("{}.cfg", out.file_name().unwrap().to_string_lossy()));
    let text = format!(
        "# tiny regression run\n\
         task = regression\n\
         dataset = synthetic_regression\n\
         dataset.num_graphs = 12\n\
         dataset.max_nodes = 8\n\
         model.num_layers = 2\n\
         model.num_heads = 2\n\
         model.hidden_dim = 8\n\
         schedule.max_epochs = 5\n\
         seeds = 0,1\n\
         output_dir = {}\n\
         {extra}\n",
        out.display()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_a_parseable_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("toy");
    let cfg = toy_config(tmp.path(), &out, "");
    let stdout = run_ok(bin().args(["run", "--config"]).arg(&cfg));
    assert!(stdout.contains("#Param"), "{stdout}");
    let report = read_report(&out);
    assert_eq!(report["partial"], Value::Bool(false));
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert!(report["summary"]["test_mean"].as_f64().unwrap().is_finite());
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("Test Perf."));
}

#[test]
fn echoed_config_reproduces_metrics() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("echo");
    let cfg = toy_config(tmp.path(), &out, "");
    run_ok(bin().args(["run", "--jobs", "2", "--config"]).arg(&cfg));
    let first = read_report(&out);
    let echo = tmp.path().join("echo.txt");
    fs::copy(out.join("config.txt"), &echo).unwrap();
    run_ok(bin().args(["run", "--config"]).arg(&echo));
    let second = read_report(&out);
    for (a, b) in first["seeds"].as_array().unwrap().iter().zip(second["seeds"].as_array().unwrap()) {
        for key in ["seed", "epochs", "train_metric", "test_metric", "final_lr"] {
            assert_eq!(a[key], b[key], "{key}");
        }
    }
    assert_eq!(first["config"], second["config"]);
}

/// Paths at which two JSON values differ.
fn diff_paths(a: &Value, b: &Value, at: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for key in x.keys().chain(y.keys().filter(|k| !x.contains_key(*k))) {
                let null = Value::Null;
                diff_paths(x.get(key).unwrap_or(&null), y.get(key).unwrap_or(&null), format!("{at}.{key}"), out);
            }
        }
        _ if a != b => out.push(at),
        _ => {}
    }
}

#[test]
fn ablation_trio_differs_only_in_positional_encoding() {
    let tmp = TempDir::new().unwrap();
    let mut reports = Vec::new();
    for pe in ["none", "laplacian", "wl"] {
        let out = tmp.path().join(pe);
        let cfg = tmp.path().join(format!("{pe}.cfg"));
        fs::write(
            &cfg,
            format!(
                "task = node_classification\ndataset = sbm\ndataset.num_graphs = 6\ndataset.block_sizes = 6,6\n\
                 model.num_layers = 2\nmodel.num_heads = 2\nmodel.hidden_dim = 8\nmodel.pe = {pe}\n\
                 schedule.max_epochs = 3\nseeds = 0,1\noutput_dir = {}\n",
                out.display()
            ),
        )
        .unwrap();
        run_ok(bin().args(["run", "--config"]).arg(&cfg));
        reports.push(read_report(&out));
    }
    for other in &reports[1..] {
        let mut paths = Vec::new();
        diff_paths(&reports[0]["config"], &other["config"], String::new(), &mut paths);
        paths.retain(|p| p != ".output_dir");
        assert!(!paths.is_empty());
        assert!(paths.iter().all(|p| p.starts_with(".model.pe_kind")), "{paths:?}");
    }
    let labels: Vec<&str> = reports.iter().map(|r| r["pe_label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["none", "lap(k=4)", "wl"]);
}

#[test]
fn invalid_config_fails_listing_every_problem() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(
        &cfg,
        "task = node_classification\ndataset = sbm\nmodel.hidden_dim = 100\nfull_graph = true\nmodel.use_edge_features = true\nmystery = 3\n",
    )
    .unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["hidden_dim", "edge features", "mystery"] {
        assert!(err.contains(needle), "missing {needle:?} in {err}");
    }
}

#[test]
fn interrupted_run_leaves_a_partial_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("killed");
    let cfg = tmp.path().join("slow.cfg");
    // each seed takes a noticeable fraction of a second, so the poll below
    // sees the report after exactly two seeds
    fs::write(
        &cfg,
        format!(
            "task = regression\ndataset = synthetic_regression\ndataset.num_graphs = 40\n\
             model.num_layers = 4\nmodel.num_heads = 4\nmodel.hidden_dim = 32\n\
             schedule.max_epochs = 40\nseeds = 0,1,2,3\noutput_dir = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let mut child = bin()
        .args(["run", "--jobs", "1", "--config"])
        .arg(&cfg)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(600);
    loop {
        let done = fs::read_to_string(out.join("report.json"))
            .ok()
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .map_or(0, |r| r["seeds"].as_array().unwrap().len());
        if done >= 2 {
            child.kill().unwrap();
            break;
        }
        assert!(child.try_wait().unwrap().is_none(), "run exited before two seeds finished");
        assert!(Instant::now() < deadline);
        sleep(Duration::from_millis(5));
    }
    child.wait().unwrap();
    let report = read_report(&out);
    assert_eq!(report["partial"], Value::Bool(true));
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(report["seeds_requested"], 4);
}

fn write_graph(dir: &Path, name: &str, n: usize, undirected: &[(usize, usize)]) -> PathBuf {
    let edges: Vec<[usize; 2]> = undirected.iter().flat_map(|&(a, b)| [[a, b], [b, a]]).collect();
    let features: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0]).collect();
    let json = serde_json::json!({ "num_nodes": n, "edges": edges, "node_features": features });
    let path = dir.join(name);
    fs::write(&path, json.to_string()).unwrap();
    path
}

fn values_after(stdout: &str, prefix: &str) -> Vec<f64> {
    let line = stdout.lines().find(|l| l.starts_with(prefix)).unwrap();
    line[prefix.len()..].split(',').map(|v| v.trim().parse().unwrap()).collect()
}

#[test]
fn pe_inspect_path_graph() {
    let tmp = TempDir::new().unwrap();
    let path = write_graph(tmp.path(), "path.json", 3, &[(0, 1), (1, 2)]);
    let stdout = run_ok(bin().arg("pe-inspect").arg(&path).args(["--k", "1"]));
    // spectrum of the 3-path: 0, 1, 2
    let spectrum = values_after(&stdout, "eigenvalues: ");
    for (got, want) in spectrum.iter().zip([0.0, 1.0, 2.0]) {
        assert!((got - want).abs() < 1e-6, "{spectrum:?}");
    }
    assert_eq!(values_after(&stdout, "selected: "), [1.0]);
    // eigenvector for 1 is (1, 0, -1)/sqrt(2), sign fixed by the first entry
    let rows: Vec<&str> = stdout.lines().skip_while(|l| !l.starts_with("node,")).skip(1).collect();
    assert_eq!(rows, ["0,0.707107", "1,0.000000", "2,-0.707107"]);
}

#[test]
fn pe_inspect_pads_when_k_exceeds_spectrum() {
    let tmp = TempDir::new().unwrap();
    let path = write_graph(tmp.path(), "path.json", 3, &[(0, 1), (1, 2)]);
    let stdout = run_ok(bin().arg("pe-inspect").arg(&path).args(["--k", "4"]));
    assert!(stdout.contains("node,pe0,pe1,pe2,pe3"), "{stdout}");
    for row in stdout.lines().skip_while(|l| !l.starts_with("node,")).skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[3..], ["0.000000", "0.000000"], "{row}");
    }
}

#[test]
fn pe_inspect_complete_graph_has_flat_spectrum() {
    let tmp = TempDir::new().unwrap();
    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|a| ((a + 1)..4).map(move |b| (a, b))).collect();
    let path = write_graph(tmp.path(), "k4.json", 4, &pairs);
    let stdout = run_ok(bin().arg("pe-inspect").arg(&path).args(["--k", "3"]));
    let selected = values_after(&stdout, "selected: ");
    assert_eq!(selected.len(), 3);
    assert!(selected.iter().all(|v| (v - 4.0 / 3.0).abs() < 1e-6), "{selected:?}");
}

#[test]
fn pe_inspect_reports_parse_errors() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("broken.json");
    fs::write(&path, r#"{"num_nodes": 2, "node_features": [[0], [1]]}"#).unwrap();
    let out = bin().arg("pe-inspect").arg(&path).args(["--k", "1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("edges"));
}

#[test]
fn generated_sbm_data_trains_from_a_directory() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    run_ok(
        bin()
            .args(["generate-data", "--kind", "sbm", "--seed", "5", "--num-graphs", "6", "--block-sizes", "5,5", "--out"])
            .arg(&data),
    );
    assert_eq!(fs::read_dir(&data).unwrap().count(), 6);
    let out = tmp.path().join("fromdir");
    let cfg = tmp.path().join("dir.cfg");
    fs::write(
        &cfg,
        format!(
            "task = node_classification\ndataset = json_dir\ndataset.path = {}\nmodel.num_layers = 1\n\
             model.num_heads = 2\nmodel.hidden_dim = 8\nschedule.max_epochs = 3\nseeds = 0\noutput_dir = {}\n",
            data.display(),
            out.display()
        ),
    )
    .unwrap();
    run_ok(bin().args(["run", "--config"]).arg(&cfg));
    let report = read_report(&out);
    assert_eq!(report["metric"], "accuracy");
    assert_eq!(report["seeds"].as_array().unwrap().len(), 1);
}

#[test]
fn generated_regression_data_is_labelled() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("reg");
    run_ok(bin().args(["generate-data", "--kind", "regression", "--num-graphs", "3", "--out"]).arg(&data));
    let first: Value = serde_json::from_str(&fs::read_to_string(data.join("graph_0000.json")).unwrap()).unwrap();
    assert!(first["graph_label"].as_f64().is_some());
}
