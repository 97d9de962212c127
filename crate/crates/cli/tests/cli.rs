use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eslab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse::<f64>().unwrap()))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn presets_are_listed() {
    let o = eslab(&["presets"]);
    assert_eq!(code(&o), 0);
    for name in ["ou-relaxation", "geodesic-gaussian", "double-well", "stationary", "coarse-ou"] {
        assert!(stdout(&o).contains(name), "{name}");
    }
}

#[test]
fn transport_between_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let g0 = write(d, "g0.json", r#"{"kind":"gaussian","mean":[0],"covariance":[[1]]}"#);
    let g3 = write(d, "g3.json", r#"{"kind":"gaussian","mean":[3],"covariance":[[1]]}"#);
    let o = eslab(&["transport", &g0, &g3, "--backend", "gaussian"]);
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "W2 ") - 3.0).abs() < 1e-12);

    let o = eslab(&["transport", &g0, &g0]);
    assert_eq!(field(&stdout(&o), "W2 "), 0.0);

    let p01 = write(d, "a.csv", "theta_1,weight\n0,0.5\n1,0.5\n");
    let p12 = write(d, "b.csv", "theta_1,weight\n1,0.5\n2,0.5\n");
    let out = d.join("plan");
    let o = eslab(&["transport", &p01, &p12, "--backend", "exact", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "W2 ") - 1.0).abs() < 1e-12);
    assert_eq!(fs::read_to_string(out.join("plan.csv")).unwrap(), "i,j,mass\n0,0,0.5\n1,1,0.5\n");

    // Incompatible representations.
    let o = eslab(&["transport", &g0, &p01, "--backend", "exact"]);
    assert_eq!(code(&o), 2);
    let o = eslab(&["transport", &g0, &p01]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = eslab(&["simulate", "--scenario", "ou-closed-form", "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["ledger.json", "manifest.toml", "snapshots.csv", "snapshots.json", "trajectory.csv"]);
    let header = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("s,F,H,E_phi,sigma\n"));

    let b = dir.path().join("b");
    let manifest = a.join("manifest.toml");
    let o = eslab(&["simulate", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn invalid_overrides_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    for args in [
        vec!["--steps", "0"],
        vec!["--horizon", "-1"],
        vec!["--temperature", "-0.5"],
        vec!["--particles", "10"],
        vec!["--steps", "5"],
    ] {
        let mut full = vec!["simulate", "--scenario", "ou-relaxation", "--out", out.to_str().unwrap()];
        full.extend(args.iter().copied());
        let o = eslab(&full);
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
        assert!(!out.exists(), "{args:?} created outputs");
    }
    let o = eslab(&["verify", "--scenario", "no-such-preset"]);
    assert_eq!(code(&o), 2);
    let o = eslab(&["verify"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stationary");
    let o = eslab(&["verify", "--scenario", "stationary", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["slack"].as_f64().unwrap().abs() < 1e-12);
    assert!(report["Sigma"].as_f64().unwrap().abs() < 1e-12);

    let out = dir.path().join("coarse");
    let o = eslab(&["verify", "--scenario", "coarse-ou", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"]["dissipation"], false);
    assert!(!report["resolution"].as_array().unwrap().is_empty());

    // Loosening the dissipation tolerance is honoured and recorded.
    let o = eslab(&["verify", "--scenario", "coarse-ou", "--tol-diss", "10"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("\"dissipation\": 10.0"));

    // Particle runs have no entropy-production estimate to check.
    let o = eslab(&["verify", "--scenario", "langevin-ou", "--particles", "200", "--steps", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_tables() {
    let o = eslab(&["sweep", "--scenario", "geodesic-gaussian", "--horizons", "1,2,4"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let products: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    for p in &products {
        assert!((p - products[0]).abs() <= 1e-6);
    }
    let o = eslab(&["sweep", "--scenario", "geodesic-gaussian", "--horizons", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = eslab(&["sweep", "--scenario", "geodesic-gaussian", "--horizons", "1,-2"]);
    assert_eq!(code(&o), 2);
}
