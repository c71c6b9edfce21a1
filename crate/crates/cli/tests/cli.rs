use std::path::Path;
use std::process::{Command, Output};

fn levylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levylab")).args(args).output().expect("binary runs")
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn rho_prints_exponents() {
    let out = levylab(&["rho", "--alpha", "0.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rho = 0.142857"), "{text}");
    assert!(text.contains("gamma = 0.4"), "{text}");
}

#[test]
fn limit_density_csv_is_even() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = levylab(&["--out", d, "limit-density", "--alpha", "1.5", "--emin", "-4", "--emax", "4", "--points", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "E,eta,f_estimate,extrapolated,residual");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 200);
    for (a, b) in rows.iter().zip(rows.iter().rev()) {
        assert!((a[0] + b[0]).abs() < 1e-12);
        assert!((a[2] - b[2]).abs() < 1e-6 && (a[3] - b[3]).abs() < 1e-6);
    }
    assert!(dir.path().join("timings.json").exists());
}

#[test]
fn same_seed_gives_identical_reports() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let args = ["rde", "--alpha", "0.5", "--re", "10", "--im-list", "0.2,0.1", "--pool", "3000", "--trunc", "50", "--gens", "5", "--seed", "7"];
    for (k, d) in dirs.iter().enumerate() {
        let mut a = vec!["--out", d.path().to_str().unwrap()];
        if k == 1 {
            a.extend(["--workers", "1"]);
        }
        a.extend(args);
        assert!(levylab(&a).status.success());
    }
    let r0 = std::fs::read(dirs[0].path().join("report.json")).unwrap();
    let r1 = std::fs::read(dirs[1].path().join("report.json")).unwrap();
    assert_eq!(r0, r1);
    let v = read_json(&dirs[0].path().join("report.json"));
    for key in ["slope", "generations", "diagnostics", "results"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["config"]["seed"], 7);
}

#[test]
fn invalid_config_exits_2_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = levylab(&["--out", dir.path().to_str().unwrap(), "spectrum", "--alpha", "2.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = read_json(&dir.path().join("error.json"));
    assert_eq!(err["error"], "parameter");
    assert_eq!(err["exit_code"], 2);
    let out = levylab(&["--out", dir.path().to_str().unwrap(), "wegner", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = levylab(&["rho"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_regime_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = levylab(&["--out", d, "deloc", "--alpha", "0.8"]);
    assert_eq!(out.status.code(), Some(4));
    let out = levylab(&["--out", d, "wegner", "--set", "n=100", "--set", "trials=2", "--set", "eta_list=[0.0001,0.2]"]);
    assert_eq!(out.status.code(), Some(4));
    let rep = read_json(&dir.path().join("report.json"));
    assert_eq!(rep["out_of_regime"].as_array().unwrap().len(), 1);
    assert!(rep["records"].as_array().unwrap().iter().all(|r| r.get("seed").is_some()));
}

#[test]
fn env_var_sets_output_dir_and_hex_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_levylab"))
        .env("LEVYLAB_OUTPUT_DIR", dir.path())
        .args(["--hex", "limit-density", "--alpha", "1.2", "--emin", "0.5", "--emax", "1", "--points", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    assert!(csv.lines().next().unwrap().ends_with("residual_hex"));
}

#[test]
fn spectrum_writes_archival_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = levylab(&["--out", dir.path().to_str().unwrap(), "spectrum", "--alpha", "1.2", "--n", "40", "--seed", "3"]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "3");
    let rep = read_json(&dir.path().join("report.json"));
    assert_eq!(rep["config"]["n"], 40);
}
