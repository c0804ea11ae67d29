use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const NET_A: &str = r#"{"activation": "relu", "layers": [
  {"W": [[1, -1], [0, 1]], "b": [0, 0]},
  {"W": [[1, 1]], "b": [0]}
]}"#;

fn qc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qc-certify"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let f = Fixture { dir };
        f.put("net.json", NET_A);
        f.put("box.json", r#"{"type": "box", "lo": [0, 0], "hi": [1, 1]}"#);
        f.put("ok.json", r#"{"type": "polytope", "C": [[1]], "d": [1.5]}"#);
        f.put("tight.json", r#"{"type": "polytope", "C": [[1]], "d": [0.5]}"#);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn put(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn get(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        qc(self.dir.path(), args)
    }
}

fn parse_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn verify_satisfiable_spec_exits_zero() {
    let f = Fixture::new();
    let out = f.run(&["verify", "--net", "net.json", "--input", "box.json", "--spec", "ok.json", "--out", "r.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("verify: certified"));
    let v: Value = serde_json::from_str(&f.get("r.json")).unwrap();
    assert_eq!(v["result"]["status"], "certified");
    assert_eq!(v["config"]["command"]["verify"]["spec"], "ok.json");
    assert_eq!(v["config"]["command"]["verify"]["common"]["coupling"], "layerwise");
    assert_eq!(v["exit_code"], 0);
}

#[test]
fn verify_violated_spec_exits_one() {
    // max f = 1 at (1, 0), so f ≤ 0.5 is false.
    let f = Fixture::new();
    let out = f.run(&["verify", "--net", "net.json", "--input", "box.json", "--spec", "tight.json"]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["status"], "unknown");
}

#[test]
fn input_errors_exit_two() {
    let f = Fixture::new();
    let out = f.run(&["verify", "--net", "missing.json", "--input", "box.json", "--spec", "ok.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    f.put("bad.json", "{ not json");
    let out = f.run(&["verify", "--net", "bad.json", "--input", "box.json", "--spec", "ok.json"]);
    assert_eq!(code(&out), 2);

    f.put("flipped.json", r#"{"type": "box", "lo": [1, 0], "hi": [0, 1]}"#);
    let out = f.run(&["verify", "--net", "net.json", "--input", "flipped.json", "--spec", "ok.json"]);
    assert_eq!(code(&out), 2);

    let out = f.run(&["bound", "--net", "net.json", "--input", "box.json", "--c", "1,2"]);
    assert_eq!(code(&out), 2);

    let out = f.run(&["verify", "--net", "net.json"]);
    assert_eq!(code(&out), 2);

    let out = f.run(&["robust", "--net", "net.json", "--x-star", "0.5,0.5", "--eps", "0.1", "--label", "3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bound_covers_net_a_maximum() {
    let f = Fixture::new();
    let out = f.run(&["bound", "--net", "net.json", "--input", "box.json", "--c", "1", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let rows = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    let d = rows[0][1];
    assert!((1.0 - 1e-6..1.5).contains(&d), "{d}");

    // f ≥ 0 on the box with equality at the origin.
    let out = f.run(&["bound", "--net", "net.json", "--input", "box.json", "--c=-1", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let d = parse_csv(&String::from_utf8(out.stdout).unwrap())[0][1];
    assert!(d >= -1e-6 && d < 0.1, "{d}");
}

#[test]
fn randnet_is_reproducible() {
    let f = Fixture::new();
    for (name, seed) in [("a.json", "7"), ("b.json", "7"), ("c.json", "8")] {
        let out = f.run(&["randnet", "--dims", "2,100,2", "--seed", seed, "--out", name]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(f.get("a.json"), f.get("b.json"));
    assert_ne!(f.get("a.json"), f.get("c.json"));
    let out = f.run(&["randnet", "--dims", "2,100,2", "--seed", "7"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), f.get("a.json"));
    let v: Value = serde_json::from_str(&f.get("a.json")).unwrap();
    assert_eq!(v["layers"][0]["W"].as_array().unwrap().len(), 100);
}

#[test]
fn reach_polytope_contains_grid_images() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["randnet", "--dims", "2,10,2", "--seed", "3", "--out", "n.json"])), 0);
    f.put("ball.json", r#"{"type": "box_inf", "center": [1, 1], "eps": 0.1}"#);
    let out = f.run(&[
        "reach", "--net", "n.json", "--input", "ball.json", "--directions", "8", "--grid", "30", "--out", "poly.csv",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let poly = f.get("poly.csv");
    assert!(poly.starts_with("c1,c2,h\n"));
    let rows = parse_csv(&poly);
    assert_eq!(rows.len(), 8);
    let points = parse_csv(&f.get("poly.points.csv"));
    assert_eq!(points.len(), 900);
    for r in &rows {
        assert!((r[0].hypot(r[1]) - 1.0).abs() < 1e-12);
        for p in &points {
            assert!(r[0] * p[0] + r[1] * p[1] <= r[2] + 1e-6);
        }
    }
}

#[test]
fn reach_accepts_a_direction_file() {
    let f = Fixture::new();
    f.put("dirs.json", "[[1], [-1]]");
    let out = f.run(&["reach", "--net", "net.json", "--input", "box.json", "--directions", "dirs.json", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let rows = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    assert!(rows[0][1] >= 1.0 - 1e-6);
    assert!(rows[1][1] >= -1e-6);
}

#[test]
fn identical_runs_write_identical_files() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["randnet", "--dims", "2,6,6,2", "--seed", "5", "--out", "n.json"])), 0);
    let args = ["reach", "--net", "n.json", "--input", "box.json", "--directions", "6", "--out", "r.json"];
    assert_eq!(code(&f.run(&args)), 0);
    let first = f.get("r.json");
    assert_eq!(code(&f.run(&args)), 0);
    assert_eq!(first, f.get("r.json"));
    assert!(!first.contains("time_s"));

    let timed = f.run(&["bound", "--net", "net.json", "--input", "box.json", "--c", "1", "--timing"]);
    assert!(String::from_utf8(timed.stdout).unwrap().contains("time_s"));
}

#[test]
fn full_coupling_is_no_looser_than_none() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["randnet", "--dims", "2,5,5,5,1", "--seed", "11", "--out", "n.json"])), 0);
    let bound = |mode: &str| {
        let out = f.run(&[
            "bound", "--net", "n.json", "--input", "box.json", "--c", "1", "--coupling", mode, "--format", "csv",
        ]);
        assert_eq!(code(&out), 0);
        parse_csv(&String::from_utf8(out.stdout).unwrap())[0][1]
    };
    let full = bound("full");
    let none = bound("none");
    assert!(full <= none + 1e-6, "full {full} none {none}");
}

#[test]
fn oracle_modes_agree_with_net_a() {
    let f = Fixture::new();
    let value = |mode: &str| {
        let out = f.run(&["oracle", "--net", "net.json", "--input", "box.json", "--mode", mode, "--c", "1"]);
        assert_eq!(code(&out), 0);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["result"]["value"].as_f64().unwrap()
    };
    assert!((value("exact") - 1.0).abs() < 1e-9);
    let sampled = value("sample");
    assert!(sampled <= 1.0 + 1e-9 && sampled > 0.99);

    let out = f.run(&["oracle", "--net", "net.json", "--input", "box.json", "--mode", "grid", "--grid", "3", "--format", "csv"]);
    let pts = parse_csv(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(pts.len(), 9);
}

#[test]
fn robustness_of_a_clear_margin() {
    let f = Fixture::new();
    f.put(
        "id.json",
        r#"{"activation": "relu", "layers": [
          {"W": [[1, 0], [0, 1]], "b": [0, 0]},
          {"W": [[1, 0], [0, 1]], "b": [0, 0]}
        ]}"#,
    );
    let out = f.run(&["robust", "--net", "id.json", "--x-star", "1,0", "--eps", "0.1", "--label", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = f.run(&["robust", "--net", "id.json", "--x-star", "1,0.9", "--eps", "0.1", "--label", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn invariance_of_a_contracting_loop() {
    // x⁺ = 0.5 x + 0.5 sat(−x) keeps every centered box.
    let f = Fixture::new();
    f.put(
        "k.json",
        r#"{"activation": "relu", "layers": [
          {"W": [[1], [-1]], "b": [0, 0]},
          {"W": [[-1, 1]], "b": [0]}
        ]}"#,
    );
    let out = f.run(&["invariant", "--net", "k.json", "--A", "0.5", "--B", "0.5", "--u-bounds=-1:1", "--eps", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = f.run(&["invariant", "--net", "k.json", "--A", "2", "--B", "0", "--u-bounds=-1:1", "--eps", "0.5"]);
    assert_eq!(code(&out), 1);
}
