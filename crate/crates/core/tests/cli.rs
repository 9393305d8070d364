use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bucketopt::model::Solution;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bucketopt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn single_opt_prints_closed_form() {
    let o = run(&["single-opt", "--eps", "0.4", "--d", "5", "--p", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("K*\t3\n"), "{text}");
    assert!(text.contains("d(p)\t5.77350269"), "{text}");
    let inf = stdout(&run(&["single-opt", "--eps", "0.4", "--d", "5", "--p", "inf"]));
    assert!(inf.contains("K*\t1\n"), "{inf}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["single-opt", "--eps", "1.0", "--d", "5"]).status.code(), Some(2));
    assert_eq!(run(&["single-opt", "--eps", "0.4", "--d", "5", "--p", "0.5"]).status.code(), Some(2));
    assert_eq!(run(&["gp-solve"]).status.code(), Some(2));
    assert_eq!(run(&["--config", "/nonexistent.json", "gp-solve"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn infeasible_instances_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("five_receivers.json")).unwrap().replace("\"delay_bound\": 50", "\"delay_bound\": 0.1");
    let path = dir.path().join("tight.json");
    std::fs::write(&path, text).unwrap();
    let p = path.display().to_string();
    assert_eq!(run(&["--config", &p, "gp-solve"]).status.code(), Some(3));
    assert_eq!(run(&["--config", &p, "validate", "--packets", "1000"]).status.code(), Some(3));
}

#[test]
fn tradeoff_csv_is_deterministic() {
    let a = run(&["tradeoff", "--d", "2,5", "--k-max", "20"]);
    let b = run(&["tradeoff", "--d", "2,5", "--k-max", "20"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "D,K,d1,dinf,dp,p,d1_asymptote");
    assert_eq!(lines.count(), 40);
}

#[test]
fn solve_then_simulate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let five = cfg("five_receivers.json");
    let o = run(&["--config", &five, "--out", &out, "gp-solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sol_path = dir.path().join("solution.json");
    let sol: Solution = serde_json::from_str(&std::fs::read_to_string(&sol_path).unwrap()).unwrap();
    assert_eq!(sol.bucket_sizes.len(), 5);
    assert!(dir.path().join("gp_trace.csv").exists());

    let sim = |seed: &str| {
        let o = run(&["--config", &five, "--out", &out, "--seed", seed, "--reps", "2", "simulate", "--solution", &sol_path.display().to_string(), "--packets", "2000"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join("sim_summary.csv")).unwrap()
    };
    let first = sim("9");
    assert!(first.starts_with("flow,label,p,empirical,ci_half_width,analytic_rounded,analytic_continuous,rel_gap"));
    assert_eq!(first, sim("9"));
    assert!(dir.path().join("trace_flow1.csv").exists());
}

#[test]
fn sp_solve_writes_convergence_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&["--config", &cfg("two_aps.json"), "--out", &out, "sp-solve", "--max-outer", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("outer_iterations\t4\t"));
    let trace = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let rows: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn experiment_sweep_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&["--out", &out, "experiment", "adaptive-vs-fixed", "--p1-min", "1", "--p1-max", "2", "--p1-step", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("adaptive_vs_fixed.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "p1,scheme,min_rate,K1,a1,feasible");
    // Three p1 values times three schemes.
    assert_eq!(csv.lines().count(), 1 + 9);
}
