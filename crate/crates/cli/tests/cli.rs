use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fidelity_line(text: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix("fidelity "))
        .unwrap()
        .parse()
        .unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].to_string())
        .collect()
}

#[test]
fn generate_ideal_single_photon() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "g.toml", "[protocol]\nvertices = 1\nqubits = 1\n");
    let out = stdout(&rss(&["generate", "--config", arg(&cfg)]));
    assert_eq!(fidelity_line(&out), 1.0);
}

#[test]
fn generate_with_loss() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "g.toml",
        "[protocol]\nvertices = 2\n[errors]\nloss = 0.05\n",
    );
    let out = stdout(&rss(&["generate", "--config", arg(&cfg)]));
    assert!((fidelity_line(&out) - 0.9025).abs() < 1e-10);
    let json: serde_json::Value = serde_json::from_str(&stdout(&rss(&[
        "generate",
        "--config",
        arg(&cfg),
        "--format",
        "json",
    ])))
    .unwrap();
    assert!((json["fidelity"].as_f64().unwrap() - 0.9025).abs() < 1e-10);
}

#[test]
fn malformed_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", "[protocol\nvertices = 2\n");
    assert_eq!(
        rss(&["generate", "--config", arg(&cfg)]).status.code(),
        Some(2)
    );
    let cfg = write(&dir, "range.toml", "[errors]\nloss = 2.0\n");
    assert_eq!(
        rss(&["generate", "--config", arg(&cfg)]).status.code(),
        Some(2)
    );
    assert_eq!(rss(&["sweep"]).status.code(), Some(2));
    assert_eq!(rss(&["boost-scan", "--eta", "1.5"]).status.code(), Some(2));
}

#[test]
fn spin_prep_sweep_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.toml", "[sweep]\nmechanism = \"spin_prep\"\nfs = [1.0]\ndz = [0.0]\ndy = [0.0, 1.5707963267948966]\n");
    let out = stdout(&rss(&["sweep", "--config", arg(&cfg)]));
    assert_eq!(column(&out, "closed_form"), vec!["1", "0.5"]);
    for d in column(&out, "abs_diff") {
        assert!(d.parse::<f64>().unwrap() < 1e-9);
    }
}

#[test]
fn loss_scaling_to_sixty_photons() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.toml",
        "[sweep]\nmechanism = \"loss\"\nvalues = [0.01]\nphotons = { start = 1, stop = 60 }\n",
    );
    let path = dir.path().join("out.csv");
    let o = rss(&[
        "sweep",
        "--config",
        arg(&cfg),
        "--out",
        arg(&path),
        "--closed-form-only",
    ]);
    stdout(&o);
    let text = std::fs::read_to_string(&path).unwrap();
    let values: Vec<f64> = column(&text, "closed_form")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 60);
    for (k, v) in values.iter().enumerate() {
        assert!((v - 0.99f64.powi(k as i32 + 1)).abs() < 1e-11);
        if k > 0 {
            assert!(*v <= values[k - 1]);
        }
    }
    assert!(column(&text, "simulated").iter().all(String::is_empty));
}

#[test]
fn step3_sweep_is_symmetric_and_self_consistent() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.toml",
        "[protocol]\nblocks = [[1, 1], [2]]\nstep5b_mode = \"consistent\"\ninitial_sign = \"minus\"\n[sweep]\nmechanism = \"step3\"\ndy = { start = -1.5, stop = 1.5, steps = 7 }\n",
    );
    let out = stdout(&rss(&["sweep", "--config", arg(&cfg)]));
    let f = column(&out, "closed_form");
    let rev: Vec<String> = f.iter().rev().cloned().collect();
    assert_eq!(f, rev);
    assert!(column(&out, "simulated").iter().all(|s| !s.is_empty()));
}

#[test]
fn outputs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.toml", "[protocol]\nvertices = 2\nqubits = 2\n[sweep]\nmechanism = \"cyclicity\"\nvalues = { start = 0.5, stop = 1.0, steps = 6 }\n");
    let a = rss(&["sweep", "--config", arg(&cfg), "--format", "json"]);
    let b = rss(&["sweep", "--config", arg(&cfg), "--format", "json"]);
    assert_eq!(stdout(&a), stdout(&b));
    let a = rss(&[
        "boost-scan",
        "--eta",
        "0.9",
        "--m-max",
        "3",
        "--trials",
        "5000",
        "--seed",
        "11",
    ]);
    let b = rss(&[
        "boost-scan",
        "--eta",
        "0.9",
        "--m-max",
        "3",
        "--trials",
        "5000",
        "--seed",
        "11",
    ]);
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn fusion_scenarios() {
    let dir = TempDir::new().unwrap();
    let ideal = write(
        &dir,
        "f.toml",
        "[protocol]\nqubits = 2\n[boost]\nm = 3\neta = 0.95\n",
    );
    let records = dir.path().join("trials.jsonl");
    let out = stdout(&rss(&[
        "fusion",
        "--config",
        arg(&ideal),
        "--trials",
        "20000",
        "--records",
        arg(&records),
    ]));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((report["success_probability"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    let rate = report["boost"]["monte_carlo"].as_f64().unwrap();
    assert!((rate - 0.6432).abs() < 4.0 / (20000f64).sqrt() + 5e-4);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 20000);
    for key in [
        "trial",
        "attempts_used",
        "lost_photons",
        "pattern",
        "classification",
    ] {
        assert!(lines[0].get(key).is_some(), "{key}");
    }

    let flipped = write(
        &dir,
        "g.toml",
        "[protocol]\nqubits = 2\n[errors_a]\nstep3 = { dy = 3.141592653589793 }\n",
    );
    let out = stdout(&rss(&["fusion", "--config", arg(&flipped)]));
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(report["success_probability"].as_f64().unwrap() < 1e-12);
    let csv_out = stdout(&rss(&[
        "fusion",
        "--config",
        arg(&flipped),
        "--format",
        "csv",
    ]));
    assert!(column(&csv_out, "classification")
        .iter()
        .all(|c| !c.starts_with("success")));
}

#[test]
fn boost_scan_optimum() {
    let out = stdout(&rss(&[
        "boost-scan",
        "--eta",
        "0.8,0.95",
        "--m-max",
        "6",
        "--trials",
        "0",
    ]));
    let eta = column(&out, "eta");
    let opt = column(&out, "optimal_m");
    for (e, m) in eta.iter().zip(&opt) {
        assert_eq!(m, if e == "0.8" { "1" } else { "3" });
    }
    let closed: Vec<f64> = column(&out, "closed_form")
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert!((closed[8] - 0.643205404297).abs() < 1e-12);
    assert!(column(&out, "monte_carlo").iter().all(String::is_empty));
}
