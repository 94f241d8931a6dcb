use std::path::Path;
use std::process::{Command, Output};

use isofisher::freeconv::{solve_three_layer, ThreeLayerParams};
use isofisher::specmeasure::SpectralMeasure;
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isofisher"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn measure(path: &Path) -> SpectralMeasure {
    serde_json::from_str(&read(path)).unwrap()
}

#[test]
fn theory_three_layer_matches_closed_form_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"theory": {"schedule": {"kind": "constant", "depth": 3, "q": 1, "sigma": 1, "alpha": 0.75, "gamma": 1}}}"#,
    );
    let out = dir.path().join("th");
    let o = run(&["theory", "--config", &cfg, "--out", out.to_str().unwrap(), "--grid", "1024"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mu3 = measure(&out.join("mu_03.json"));
    let closed = solve_three_layer(&ThreeLayerParams::unit(0.75, 0.75), 1024).unwrap();
    assert_eq!(mu3.atoms().len(), closed.atoms().len());
    for (a, b) in mu3.atoms().iter().zip(closed.atoms()) {
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-3, "{a:?} vs {b:?}");
    }
    let track = read(&out.join("atom_track.csv"));
    assert!(track.starts_with("layer,lambda,beta,mean,valid\n"));
    assert_eq!(track.lines().count(), 4);
    let asym: Value = serde_json::from_str(&read(&out.join("asymptotics.json"))).unwrap();
    assert_eq!(asym["depth"], 3);
    assert!(read(&out.join("spectrum.svg")).starts_with("<svg"));
    assert!(read(&out.join("version.txt")).starts_with("isofisher "));
}

#[test]
fn theory_depth_one_is_a_point_mass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"theory": {"schedule": {"kind": "tuned", "depth": 1, "q": 2.5, "eps1": 0.1, "eps2": 0.1}}}"#,
    );
    let out = dir.path().join("th");
    let o = run(&["theory", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("mu_"))
        .collect();
    assert_eq!(files, vec!["mu_01.json".to_string()]);
    assert_eq!(measure(&out.join("mu_01.json")), SpectralMeasure::delta(2.5));
}

#[test]
fn malformed_config_reports_location_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", "{\"seed\": 3,\n  \"grid\": ,\n}");
    let o = run(&["theory", "--config", &cfg, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");

    let cfg = write_config(dir.path(), "bad2.json", r#"{"sweep": {"depths": [4], "eta_min": "fast"}}"#);
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.eta_min"));
}

#[test]
fn tune_without_root_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"tune": {"family": {"kind": "hard_tanh", "s": 100}, "criterion": "sg2a"}}"#,
    );
    let o = run(&["tune", "--config", &cfg, "--out", dir.path().join("t").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["tune", "--out", dir.path().join("ok").to_str().unwrap()]);
    assert!(o.status.success());
    let t: Value = serde_json::from_str(&read(&dir.path().join("ok/tune.json"))).unwrap();
    assert!((t["criterion_value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

const LINEAR: &str = r#"{"grid": 256, "simulate": {"width": 40, "model": {"kind": "network", "depth": 4,
    "activation": {"kind": "linear", "g": 1}, "sigma": 1, "q0": 1}}}"#;

#[test]
fn linear_simulation_has_eigenvalues_equal_to_depth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lin.json", LINEAR);
    let out = dir.path().join("s");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("eigenvalues.csv"));
    assert!(csv.contains("# width: 40"));
    let values: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 40);
    assert!(values.iter().all(|v| (v - 4.0).abs() < 1e-9));
    let cmp: Value = serde_json::from_str(&read(&out.join("comparison.json"))).unwrap();
    assert!(cmp["l1"].as_f64().unwrap() < 1e-9);
}

#[test]
fn simulation_is_reproducible_from_its_recorded_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"grid": 256, "simulate": {"width": 60, "model": {"kind": "network", "depth": 3,
            "activation": {"kind": "hard_tanh", "s": 0.5, "g": 1.2}, "sigma": 1, "q0": 1}}}"#,
    );
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let recorded = a.join("config.json");
    let o = run(&["simulate", "--config", recorded.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    for f in ["eigenvalues.csv", "empirical.json", "theory.json", "comparison.json", "spectrum.svg", "config.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
        assert_eq!(read(&a.join(f)), read(&c.join(f)), "{f}");
    }
    let o = run(&["simulate", "--config", &cfg, "--seed", "10", "--out", dir.path().join("d").to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(read(&a.join("eigenvalues.csv")), read(&dir.path().join("d/eigenvalues.csv")));

    // compare reproduces the simulate report from the written files
    let cmp = dir.path().join("cmp");
    let o = run(&[
        "compare",
        "--config",
        recorded.to_str().unwrap(),
        "--eigenvalues",
        a.join("eigenvalues.csv").to_str().unwrap(),
        "--theory",
        a.join("theory.json").to_str().unwrap(),
        "--out",
        cmp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("comparison.json")), read(&cmp.join("comparison.json")));
}

#[test]
fn sweep_writes_csv_boundary_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"sweep": {"width": 16, "depths": [2, 3], "eta_min": 0.1, "eta_max": 100, "per_decade": 2,
            "n_train": 60, "n_test": 20, "data": {"kind": "synthetic", "classes": 4}}}"#,
    );
    let out = dir.path().join("sw");
    let o = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("sweep.csv"));
    assert!(csv.starts_with("L,eta,train_loss,test_loss,train_acc,test_acc,diverged,seed\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 7);
    let boundary: Value = serde_json::from_str(&read(&out.join("boundary.json"))).unwrap();
    assert_eq!(boundary.as_array().unwrap().len(), 2);
    assert_eq!(boundary[0]["two_over_l"], 1.0);
    let svg = read(&out.join("heatmap.svg"));
    assert!(svg.contains("id=\"two-over-l\"") && svg.contains("width=\"800\" height=\"600\""));
}

#[test]
fn all_diverged_sweep_exits_4_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"sweep": {"width": 16, "depths": [3], "eta_min": 100, "eta_max": 1000, "per_decade": 1,
            "n_train": 40, "n_test": 10, "data": {"kind": "synthetic", "classes": 4}}}"#,
    );
    let out = dir.path().join("sw");
    let o = run(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out.join("sweep.csv"));
    assert!(csv.lines().skip(1).all(|l| l.contains(",10.0,10.0,") && l.contains("true")), "{csv}");
}

#[test]
fn sweep_reads_idx_files() {
    use isofisher::trainlab::IdxTensor;
    let dir = tempfile::tempdir().unwrap();
    // 30 images of 4×4 pixels in two classes
    let n = 30;
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let data: Vec<u8> = (0..n * 16)
        .map(|k| {
            let (i, p) = (k / 16, k % 16);
            if (p < 8) == (labels[i] == 0) { 200 + (k % 7) as u8 } else { 10 + (k % 5) as u8 }
        })
        .collect();
    let images = IdxTensor { dims: vec![n, 4, 4], data };
    let labs = IdxTensor { dims: vec![n], data: labels };
    std::fs::write(dir.path().join("img.idx"), images.to_bytes()).unwrap();
    std::fs::write(dir.path().join("lab.idx"), labs.to_bytes()).unwrap();
    let json = format!(
        r#"{{"sweep": {{"width": 16, "depths": [2], "eta_min": 0.1, "eta_max": 1, "per_decade": 1,
            "n_train": 20, "n_test": 10, "data": {{"kind": "idx", "images": "{}", "labels": "{}"}}}}}}"#,
        dir.path().join("img.idx").display(),
        dir.path().join("lab.idx").display()
    );
    let cfg = write_config(dir.path(), "c.json", &json);
    let o = run(&["sweep", "--config", &cfg, "--out", dir.path().join("sw").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["sweep", "--config", &cfg, "--width", "8", "--out", dir.path().join("bad").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
