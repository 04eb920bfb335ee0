use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const HEAT: &str = r#"
seed = 4

[manifold]
kind = "euclidean"
dimension = 1

[equation]
p = 2.0
q = 1.0

[grid]
radius = 1.0
cells = 50

[time]
dt = 2e-5
t_end = 1e-3

[initial]
kind = "bump"
width = 0.5
amplitude = 1.0
"#;

const SLOW: &str = r#"
seed = 2

[manifold]
kind = "euclidean"
dimension = 1

[equation]
p = 3.0
q = 1.0

[grid]
radius = 2.0
cells = 100

[time]
t_end = 2.0
dt_growth = 0.02

[initial]
kind = "annulus"
inner = 1.0
outer = 1.5
amplitude = 1.0
"#;

const RATE: &str = r#"
[manifold]
kind = "euclidean"
dimension = 1

[equation]
p = 3.0
q = 1.0
sigma = 1.0

[grid]
radius = 1.0
cells = 200

[time]
dt_scale = 0.01
dt_growth = 0.01
t_end = 50.0

[continuation]
enabled = false

[initial]
kind = "bump"
width = 0.05
amplitude = 1.0

[diagnostics]
rate_tolerance = 0.1
"#;

struct Run {
    dir: TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }
}

fn leibenson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leibenson")).args(args).output().unwrap()
}

fn run(command: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let mut args = vec![command, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let output = leibenson(&args);
    Run { dir, out, output }
}

fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn solve_writes_outputs_and_passes() {
    let r = run("solve", HEAT, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    for name in ["manifest.toml", "trajectory.csv", "norms.csv", "barriers.csv", "plot_trajectory.py", "plot_norms.py"] {
        assert!(r.out.join(name).is_file(), "{name} missing");
    }
    let (header, rows) = table(&r.read("trajectory.csv"));
    assert_eq!(header, ["time", "r", "u"]);
    assert_eq!(rows.len(), 51 * 51);
    // No temporary files survive the atomic writes.
    assert!(fs::read_dir(&r.out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn norms_never_increase() {
    let r = run("solve", SLOW, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (header, rows) = table(&r.read("norms.csv"));
    assert_eq!(header, ["time", "L1", "L2", "Lq+1", "Linf"]);
    let t = column(&rows, 0);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    for (k, name) in header.iter().enumerate().skip(1) {
        let v = column(&rows, k);
        for w in v.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{name} rose from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn barrier_table_lists_every_level() {
    let r = run("solve", HEAT, &[]);
    let (header, rows) = table(&r.read("barriers.csv"));
    assert_eq!(header[0], "N");
    let levels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(levels, ["10.0", "100.0", "1000.0", "10000.0", "inf"]);
    for row in &rows[..4] {
        assert_eq!(row[5], "true");
        assert_eq!(row[6], "true");
    }
}

#[test]
fn runs_are_bit_identical() {
    let a = run("verify", SLOW, &["--seed", "9"]);
    let b = run("verify", SLOW, &["--seed", "9"]);
    assert_eq!(a.code(), 0, "{}", a.stderr());
    for name in ["trajectory.csv", "norms.csv", "barriers.csv", "verify.csv", "ladder.csv"] {
        assert_eq!(a.read(name), b.read(name), "{name} differs");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let first = run("solve", HEAT, &["--snapshot-every", "5"]);
    assert_eq!(first.code(), 0, "{}", first.stderr());
    let manifest = first.out.join("manifest.toml");
    let again = first.dir.path().join("again");
    let out = leibenson(&["solve", "--config", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let reread = fs::read_to_string(again.join("trajectory.csv")).unwrap();
    assert_eq!(first.read("trajectory.csv"), reread);
    // 50 steps, every fifth kept, plus the initial state.
    assert_eq!(table(&reread).1.len(), 11 * 51);
}

#[test]
fn zero_data_stay_zero() {
    let r = run("solve", &HEAT.replace("amplitude = 1.0", "amplitude = 0.0"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (_, rows) = table(&r.read("trajectory.csv"));
    assert!(column(&rows, 2).iter().all(|&u| u == 0.0));
}

#[test]
fn verify_reports_every_monitor() {
    let r = run("verify", SLOW, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (header, rows) = table(&r.read("verify.csv"));
    assert_eq!(header[..3], ["monitor", "passed", "skipped"]);
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r[1] == "true"), "{rows:?}");
    let (header, rows) = table(&r.read("ladder.csv"));
    assert_eq!(header, ["k", "r_k", "theta_k", "J_k", "bound_rhs"]);
    assert_eq!(rows.len(), 9);
    let j = column(&rows, 3);
    assert!(j.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn flipped_flux_is_caught() {
    let r = run("verify", &format!("{HEAT}\n[diagnostics]\nmutation = \"flipped-flux\"\n"), &[]);
    assert_eq!(r.code(), 1, "{}", r.stderr());
    let (_, rows) = table(&r.read("verify.csv"));
    assert!(rows.iter().any(|r| r[1] == "false"));
}

#[test]
fn missing_field_names_its_path() {
    let r = run("solve", &HEAT.replace("q = 1.0\n", ""), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("equation.q"), "{}", r.stderr());
}

#[test]
fn unknown_field_is_a_config_error() {
    let r = run("solve", &HEAT.replace("cells = 50", "cells = 50\nspacing = 2"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("grid"), "{}", r.stderr());
}

#[test]
fn unreadable_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let out = leibenson(&["solve", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_jobs_is_rejected() {
    let r = run("solve", HEAT, &["--jobs", "0"]);
    assert_eq!(r.code(), 2);
}

#[test]
fn solver_failure_exits_3() {
    // Backward nonlinear diffusion with one huge fixed step.
    let cfg = HEAT
        .replace("q = 1.0", "q = 2.0")
        .replace("dt = 2e-5\nt_end = 1e-3", "dt = 1.0\nt_end = 2.0\nstepping = \"fixed\"\nnewton_max = 5")
        + "\n[continuation]\nenabled = false\n\n[diagnostics]\nmutation = \"flipped-flux\"\n";
    let r = run("solve", &cfg, &[]);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    assert!(r.read("solver_failure.txt").contains("nonlinear solve failed"));
}

#[test]
fn fit_rate_table() {
    let r = run("fit-rate", RATE, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (header, rows) = table(&r.read("rate_fit.csv"));
    assert_eq!(
        header,
        ["p", "q", "n", "sigma", "beta_theory", "beta_hat", "rel_err", "window_lo", "window_hi"]
    );
    assert_eq!(rows.len(), 1);
    let rel: f64 = rows[0][6].parse().unwrap();
    assert!(rel <= 0.1, "{rel}");
    let (header, _) = table(&r.read("support.csv"));
    assert_eq!(header[0], "time");
}

#[test]
fn fit_rate_needs_slow_regime() {
    let r = run("fit-rate", &RATE.replace("p = 3.0", "p = 2.0"), &[]);
    assert_eq!(r.code(), 2, "{}", r.stderr());
}

#[test]
fn dead_core_sweep_recovers_scalings() {
    let cfg = format!("{RATE}\n[sweep]\namplitudes = [1.0, 2.0]\ndead_core_radii = [1.0, 2.0]\ndead_core_t_end = 0.5\n")
        .replace("cells = 200", "cells = 100");
    let r = run("fit-rate", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let (header, rows) = table(&r.read("dead_core_fit.csv"));
    assert_eq!(header, ["sweep", "slope", "expected", "rel_err"]);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let rel: f64 = row[3].parse().unwrap();
        assert!(rel < 0.15, "{row:?}");
    }
}

#[test]
fn sweep_needs_points() {
    let r = run("sweep", HEAT, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("sweep.points"), "{}", r.stderr());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let cfg = format!("{SLOW}\n[sweep]\npoints = [[3.0, 1.0], [2.0, 1.0], [1.8, 0.9]]\n");
    let r = run("sweep", &cfg, &["--jobs", "2"]);
    assert_eq!(r.code(), 0, "{}\n{}", r.stderr(), String::from_utf8_lossy(&r.output.stdout));
    let (header, rows) = table(&r.read("sweep.csv"));
    assert_eq!(header, ["p", "q", "delta", "regime", "passed", "failed_monitors"]);
    let regimes: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    assert_eq!(regimes, ["slow", "critical", "fast"]);
    assert!(Path::new(&r.out.join("p3_q1").join("verify.csv")).is_file());
}
