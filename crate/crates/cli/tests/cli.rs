use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bergman_localize::output::{RunManifest, Table};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bergman-localize"))
        .args(args)
        .env_remove("BERGMAN_LOCALIZE_CACHE")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const DISC_KERNEL: &str = r#"{"format_version": 1, "command": "kernel",
  "domain": {"kind": "ball", "n": 1},
  "numeric": {"degree": 20, "quad_count": 200000, "seed": 1, "points": [[[0, 0]], [[0.5, 0]]]}}"#;

fn column(table: &Table, name: &str) -> Vec<f64> {
    let c = table.column(name).unwrap();
    table.rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

#[test]
fn kernel_on_the_disc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "disc.json", DISC_KERNEL);
    let out = dir.path().join("out");
    let o = bin(&["kernel", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&out.join("kernel.csv")).unwrap();
    let k = column(&t, "kernel");
    // 1/(π(1 − |z|²)²)
    let exact = [1.0 / std::f64::consts::PI, 1.0 / (std::f64::consts::PI * 0.5625)];
    for (a, b) in k.iter().zip(exact) {
        assert!((a - b).abs() < 1e-3 * b, "{a} vs {b}");
    }
    assert!((k[0] - 0.31831).abs() < 1e-3);
    let m = RunManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.outputs.len(), 1);
    assert_eq!(m.outputs[0].path, "kernel.csv");
    assert!(m.tasks.iter().all(|t| t.status == "ok"));
}

#[test]
fn missing_degree_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"format_version": 1, "command": "kernel", "domain": {"kind": "ball", "n": 1},
           "numeric": {"quad_count": 1000, "seed": 1, "points": [[[0, 0]]]}}"#,
    );
    let o = bin(&["kernel", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["class"], "config");
    assert!(err["message"].as_str().unwrap().contains("degree"));
}

#[test]
fn command_mismatch_and_missing_requirement_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "disc.json", DISC_KERNEL);
    assert_eq!(bin(&["metric", "--config", &cfg]).status.code(), Some(2));
    let cfg = write(
        dir.path(),
        "loc.json",
        r#"{"format_version": 1, "command": "localize", "domain": {"kind": "ball", "n": 1},
           "numeric": {"degree": 4, "quad_count": 1000, "seed": 1, "boundary_points": 2, "epsilons": [0.25]}}"#,
    );
    let o = bin(&["localize", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("numeric.radius"));
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // Offsets below the mesh scale of 2000 nodes make every sweep point unreliable.
    let cfg = write(
        dir.path(),
        "loc.json",
        r#"{"format_version": 1, "command": "localize", "domain": {"kind": "ball", "n": 1},
           "numeric": {"degree": 4, "quad_count": 2000, "seed": 1, "boundary_points": 1,
                       "radius": 0.8, "offsets": [1e-4, 2e-4, 3e-4], "epsilons": [0.25]}}"#,
    );
    let out = dir.path().join("out");
    let o = bin(&["localize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("ResolutionInsufficient"));
    // The failure is recorded, and the files written so far are listed.
    let m = RunManifest::load(&out.join("manifest.json")).unwrap();
    assert!(m.tasks.iter().any(|t| t.status != "ok"));
    assert!(m.outputs.iter().any(|f| f.path == "uniformity.json"));
}

fn hashes(m: &RunManifest) -> Vec<(String, String)> {
    m.outputs.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
}

#[test]
fn reruns_are_byte_identical_cold_and_warm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ext.json",
        r#"{"format_version": 1, "command": "extend", "domain": {"kind": "ball", "n": 1},
           "numeric": {"degree": 10, "quad_count": 20000, "seed": 7, "boundary_points": 4, "mu": 0.01},
           "problems": [{"zeta_index": 1, "radius": 0.4, "rho": 0.1, "delta": 0.05, "w_offset": 0.05,
                         "solver": "variational", "degree": 10}]}"#,
    );
    let cache = dir.path().join("cache");
    let mut manifests = Vec::new();
    for (i, jobs) in ["1", "3", "2"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let mut args = vec!["extend", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs];
        if i > 0 {
            args.extend(["--cache", cache.to_str().unwrap()]);
        }
        let o = bin(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        manifests.push(RunManifest::load(&out.join("manifest.json")).unwrap());
    }
    assert!(fs::read_dir(&cache).unwrap().count() > 0);
    assert_eq!(hashes(&manifests[0]), hashes(&manifests[1]));
    assert_eq!(hashes(&manifests[1]), hashes(&manifests[2]));
    assert_eq!(manifests[0].config_sha256, manifests[2].config_sha256);
}

#[test]
fn report_merges_and_checks_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let kcfg = write(dir.path(), "disc.json", DISC_KERNEL);
    for run in ["a", "b"] {
        let o = bin(&["kernel", "--config", &kcfg, "--out", dir.path().join(run).to_str().unwrap()]);
        assert!(o.status.success());
    }
    let rcfg = write(
        dir.path(),
        "report.json",
        r#"{"format_version": 1, "command": "report", "manifests": ["a/manifest.json", "b/manifest.json"], "output_dir": "rep"}"#,
    );
    let o = bin(&["report", "--config", &rcfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let merged = Table::read(&dir.path().join("rep/merged_kernel.csv")).unwrap();
    assert_eq!(merged.header[0], "run");
    assert_eq!(merged.rows.len(), 4);
    let html = fs::read_to_string(dir.path().join("rep/summary.html")).unwrap();
    assert!(html.contains("kernel.csv"));

    fs::remove_file(dir.path().join("b/kernel.csv")).unwrap();
    let o = bin(&["report", "--config", &rcfg]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel.csv"));
}

#[test]
fn empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", r#"{"format_version": 1, "command": "report", "manifests": []}"#);
    let o = bin(&["report", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let html = fs::read_to_string(dir.path().join("out/summary.html")).unwrap();
    assert!(html.contains("No runs."));
}

#[test]
fn localize_outputs_one_plot_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "loc.json",
        r#"{"format_version": 1, "command": "localize",
           "family": {"base": {"kind": "perturbed_disc", "m": 3}, "t_values": [0.0, 0.05]},
           "numeric": {"degree": 10, "quad_count": 40000, "seed": 2, "boundary_points": 2,
                       "radius": 0.8, "offsets": [0.4, 0.2, 0.1, 0.05], "epsilons": [0.25, 1.0]}}"#,
    );
    let out = dir.path().join("out");
    let o = bin(&["localize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for m in 0..2 {
        for z in 0..2 {
            assert!(out.join(format!("ratio_m{m}_z{z}.svg")).exists());
        }
    }
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("uniformity.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[0]["pairs"].as_array().unwrap().len(), 4);
    let t = Table::read(&out.join("localize.csv")).unwrap();
    // 4 pairs × 4 offsets × 2 directions.
    assert_eq!(t.rows.len(), 32);
}
