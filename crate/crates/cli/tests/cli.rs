use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relaylift::lifting::{kappa, kappa_mimo};
use relaylift_cli::{cmd_bounds, cmd_quantize, config_hash, ExperimentConfig};

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo").join(name)
}

fn relaylift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaylift")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a copy of a shipped config with edits applied to its JSON.
fn edited_config(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(demo(name)).unwrap()).unwrap();
    let network = doc["network"].as_str().unwrap().to_string();
    doc["network"] = demo(&network).to_string_lossy().into_owned().into();
    doc["out"] = dir.join("out").to_string_lossy().into_owned().into();
    edit(&mut doc);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn quantize_diamond_table() {
    let out = relaylift(&["quantize", "--network", demo("diamond.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("bit depth n = 2\n"));
    let rows: Vec<&str> = text.lines().filter(|l| l.contains("->")).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].split_whitespace().eq(["0->1", "4.5", "0", "4", "0"]));
}

#[test]
fn quantize_integer_gains_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    fs::write(
        &net,
        r#"{"nodes": 3, "antenna_mode": "scalar", "edges": [
            {"from": 0, "to": 1, "gain": {"re": "6", "im": "-3"}},
            {"from": 1, "to": 2, "gain": {"re": "-2", "im": "5"}}]}"#,
    )
    .unwrap();
    let result = cmd_quantize(&net, Some(dir.path())).unwrap();
    assert_eq!(result.bit_depth, 2);
    for r in &result.rows {
        assert_eq!((r.re, r.im), (r.quantized_re as f64, r.quantized_im as f64));
    }
    let csv = fs::read_to_string(dir.path().join("quantized_gains.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn malformed_network_exits_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("bad.json");
    fs::write(&net, r#"{"nodes": 3, "antenna_mode": "scalar", "edges": [{"from": 0, "to": 1, "gain": {"re": "1e", "im": "0"}}]}"#)
        .unwrap();
    let out = relaylift(&["quantize", "--network", net.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gain component"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_flag_exits_2() {
    let out = relaylift(&["bounds", "--network", "x.json", "--verbose"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_rejects_unknown_fields_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let extra = edited_config(dir.path(), "line.config.json", |d| d["colour"] = "red".into());
    let out = relaylift(&["pipeline", "--config", extra.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = edited_config(dir.path(), "diamond.config.json", |d| d["network"] = "nowhere.json".into());
    assert_eq!(relaylift(&["pipeline", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn full_kappa_exits_4_with_explanation() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = relaylift(&[
        "pipeline",
        "--config",
        demo("diamond-full-kappa.config.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kappa_override") && err.contains("asymptotic"));
}

#[test]
fn impossible_rate_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), "line.config.json", |d| {
        d["base_code"] = serde_json::json!({"block_length": 1, "rate": 5.0, "attempts": 3});
    });
    let out = relaylift(&["pipeline", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pipeline_writes_hashed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), "line.config.json", |d| {
        d["trials"] = 500.into();
        d["bound_samples"] = 5000.into();
        d["batch_size"] = 200.into();
    });
    let out = relaylift(&["pipeline", "--config", config.to_str().unwrap(), "--method", "threshold"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let loaded = ExperimentConfig::load(&config).unwrap();
    let mut effective = loaded.clone();
    effective.method = relaylift_cli::MethodName::Threshold;
    let net_doc = relaylift::topology::save_network(&relaylift_cli::read_network(&loaded.network).unwrap());
    let hash = config_hash(&effective, &net_doc);
    assert!(stdout(&out).contains(&hash));
    let artifacts = dir.path().join("out");
    for name in ["config.json", "base_code.json", "product_code.json", "pruned_sets.json", "rate_report.json", "simulation.json", "bounds.json"] {
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(artifacts.join(name)).unwrap()).unwrap();
        assert_eq!(doc["config_hash"], hash.as_str(), "{name}");
    }
    let lifted: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(artifacts.join("lifted_code.json")).unwrap()).unwrap();
    assert_eq!(lifted["metadata"]["config_hash"], hash.as_str());
    let simulation: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(artifacts.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(simulation["method"]["kind"], "threshold");
    let csv = fs::read_to_string(artifacts.join("simulation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,batch,n_rep,trials,errors,config_hash"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(&hash)));
}

#[test]
fn seed_flag_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = edited_config(dir.path(), "line.config.json", |d| {
        d["trials"] = 100.into();
        d["bound_samples"] = 1000.into();
    });
    let a = relaylift(&["pipeline", "--config", config.to_str().unwrap()]);
    let b = relaylift(&["pipeline", "--config", config.to_str().unwrap(), "--seed", "99"]);
    let hash = |o: &Output| stdout(o).lines().next().unwrap().to_string();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(hash(&a), hash(&b));
}

#[test]
fn bounds_reports_kappa_references() {
    let dir = tempfile::tempdir().unwrap();
    let out = relaylift(&["bounds", "--network", demo("diamond.json").to_str().unwrap(), "--samples", "20000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    // The two-input node is held to kappa(2).
    assert!((kappa(2) - 15.459).abs() < 1e-3);
    assert!(text.lines().any(|l| l.starts_with("3 ") && l.contains("15.459") && l.contains("worked bound 16: ok")));
    assert!(dir.path().join("bounds.json").is_file());

    let mimo = cmd_bounds(&demo("mimo2x2.json"), 20_000, 1, dir.path()).unwrap();
    assert_eq!(mimo.report.kappa_network, kappa_mimo(2));
    assert!((kappa_mimo(2) - (2.0 * 46f64.log2() + 22.0)).abs() < 1e-12);
    assert!(mimo.report.all_within_kappa());
}

#[test]
fn million_sample_bounds_are_tight() {
    let dir = tempfile::tempdir().unwrap();
    let result = cmd_bounds(&demo("diamond.json"), 1_000_000, 7, dir.path()).unwrap();
    for node in &result.report.nodes {
        let z = &node.antennas[0].floor_z;
        assert!(z.half_width() < 0.05, "node {}: {}", node.node, z.half_width());
        assert!((z.estimate - 2.0 * result.report.cell_entropy_exact).abs() < 0.02);
    }
}
