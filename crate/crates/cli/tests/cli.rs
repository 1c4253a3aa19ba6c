use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn krotov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krotov")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(mode: &str, config: &Path, out: &Path) -> String {
    let o = krotov(&[mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{mode} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Self {
        let mut r = csv::Reader::from_path(path).unwrap();
        let header = r.headers().unwrap().iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
        Self { header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    fn get(&self, row: usize, name: &str) -> f64 {
        self.rows[row][self.col(name)].parse().unwrap()
    }
}

const QUBIT: &str = r#"
[model]
kind = "qubit"
u_per_s = 0.01

[grid]
t_final_s = 1.0
n_steps = 200

[functional]
kind = "hs"

[krotov]
lambda = [0.5]
max_iters = 200
j_tol = 1e-12

[target]
source = "diagonal"
diagonal = [0.6, 0.4]

[noise]
epsilons = [0.0, 0.01, -0.01]

[switchback]
extension_s = 0.5
extension_steps = 50
"#;

#[test]
fn qubit_optimization_reaches_target() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUBIT);
    let out = dir.path().join("out");
    run_ok("optimize", &cfg, &out);

    let it = Table::read(&out.join("iterations.csv"));
    let last = it.rows.len() - 1;
    assert!(it.get(last, "d_trace") < 1e-3);
    let alpha = it.get(last, "alpha_T");
    assert!((0.59..=0.61).contains(&alpha), "alpha_T {alpha}");
    assert!(it.get(last, "J") < it.get(0, "J"));

    let tr = Table::read(&out.join("trajectory.csv"));
    assert_eq!(tr.rows.len(), 201);
    assert_eq!(tr.header[..2], ["t_s", "u"]);
    assert!((tr.get(200, "alpha") - alpha).abs() < 1e-12);
    let ctl = Table::read(&out.join("controls.csv"));
    assert_eq!(ctl.rows.len(), 200);
    assert!(ctl.rows.iter().all(|r| r[ctl.col("u_guess")].parse::<f64>().unwrap() == 0.01));
    assert!(out.join("trajectory_guess.csv").exists());
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUBIT);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok("optimize", &cfg, &a);
    run_ok("optimize", &cfg, &b);
    for f in ["trajectory.csv", "trajectory_guess.csv", "controls.csv", "iterations.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn noise_scan_without_perturbation_matches_optimization() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUBIT);
    let out = dir.path().join("out");
    run_ok("optimize", &cfg, &out);
    let it = Table::read(&out.join("iterations.csv"));
    let d_opt = it.rows.last().unwrap()[it.col("d_trace")].clone();

    // fresh optimization and controls read back from the table agree
    run_ok("noise-scan", &cfg, &out);
    let fresh = Table::read(&out.join("noise.csv"));
    let from_file = write_config(
        dir.path(),
        "q_file.toml",
        &format!("{QUBIT}\n").replace("[noise]", "[noise]\ncontrols = \"out/controls.csv\""),
    );
    let out2 = dir.path().join("out2");
    run_ok("noise-scan", &from_file, &out2);
    let read = Table::read(&out2.join("noise.csv"));

    assert_eq!(fresh.rows.len(), 3);
    assert_eq!(fresh.rows[0][fresh.col("d_trace_final")], d_opt);
    assert_eq!(read.rows[0][read.col("d_trace_final")], d_opt);
    for r in 1..3 {
        assert!(fresh.get(r, "d_trace_final") > fresh.get(0, "d_trace_final"));
    }
}

#[test]
fn switchback_continues_from_optimized_state() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUBIT);
    let out = dir.path().join("out");
    run_ok("optimize", &cfg, &out);
    run_ok("switchback", &cfg, &out);
    let opt = Table::read(&out.join("trajectory.csv"));
    let sb = Table::read(&out.join("switchback.csv"));
    assert_eq!(sb.rows.len(), 201 + 50);
    assert_eq!(opt.rows[200][opt.col("alpha")], sb.rows[200][sb.col("alpha")]);
    assert!((sb.get(250, "t_s") - 1.5).abs() < 1e-12);
    // weak constant decay keeps pulling the qubit towards the ground state
    assert!(sb.get(250, "alpha") > sb.get(200, "alpha"));
    assert_eq!(sb.get(250, "u"), 0.01);
}

#[test]
fn steady_state_file_round_trips_as_target() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "ss.toml",
        r#"
[model]
kind = "optomech"
n_cav = 3
n_res = 10

[grid]
t_final_s = 1e-5
n_steps = 10

[target]
source = "file"
file = "out/state.json"
"#,
    );
    let out = dir.path().join("out");
    let stdout = run_ok("steady-state", &cfg, &out);
    assert!(stdout.contains("squeezing_db"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("state.json")).unwrap()).unwrap();
    assert_eq!(json["dims"], serde_json::json!([3, 10]));
    assert_eq!(json["re"].as_array().unwrap().len(), 900);

    run_ok("propagate", &cfg, &out);
    let tr = Table::read(&out.join("trajectory.csv"));
    assert_eq!(tr.header[1..3], ["g_minus", "g_plus"]);
    // the vacuum start is far from the squeezed thermal steady state
    assert!(tr.get(0, "d_trace_to_target") > 0.1);
    assert!(tr.get(10, "d_trace_to_target") < tr.get(0, "d_trace_to_target"));
}

#[test]
fn shorter_durations_need_stronger_drives() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.toml",
        r#"
[model]
kind = "optomech"

[grid]
t_final_s = 1e-4
n_steps = 100

[krotov]
max_iters = 40

[scan]
t_final_s = [2e-4, 1e-4, 5e-5]
threshold = 2e-2
constant_cooperativities = [10.0, 40.0]
"#,
    );
    let out = dir.path().join("out");
    run_ok("scan-time-cooperativity", &cfg, &out);
    let scan = Table::read(&out.join("scan.csv"));
    assert_eq!(scan.rows.len(), 3);
    for r in 0..3 {
        assert_eq!(scan.get(r, "reached"), 1.0);
        assert!(scan.get(r, "d_trace_final") < 2e-2);
    }
    assert!(scan.get(1, "peak_cooperativity") > scan.get(0, "peak_cooperativity"));
    assert!(scan.get(2, "peak_cooperativity") > scan.get(1, "peak_cooperativity"));

    let fit = Table::read(&out.join("scan_fit.csv"));
    assert!(fit.get(0, "exponent") < 0.0);
    let constant = Table::read(&out.join("scan_constant.csv"));
    assert!(constant.get(1, "min_time_s") < constant.get(0, "min_time_s"));
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let bad = [
        ("unknown.toml", "[model]\nkind = \"qubit\"\nbogus = 1\n"),
        ("kind.toml", "[model]\nkind = \"transmon\"\n"),
        ("nogrid.toml", "[model]\nkind = \"qubit\"\n"),
        ("functional.toml", "[model]\nkind = \"qubit\"\n[grid]\nt_final_s = 1.0\nn_steps = 10\n[functional]\nkind = \"fidelity\"\n"),
        ("lambda.toml", "[model]\nkind = \"qubit\"\n[grid]\nt_final_s = 1.0\nn_steps = 10\n[krotov]\nlambda = [-1.0]\n"),
    ];
    for (name, body) in bad {
        let cfg = write_config(dir.path(), name, body);
        let o = krotov(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
    let o = krotov(&["optimize", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(dir.path(), "q.toml", QUBIT);
    let o = krotov(&["optimize", "--config", cfg.to_str().unwrap(), "--paper-scale"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "ss.toml",
        "[model]\nkind = \"optomech\"\nn_cav = 3\nn_res = 10\n[steady_state]\nhorizon_s = 1e-7\n",
    );
    let o = krotov(&["steady-state", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
