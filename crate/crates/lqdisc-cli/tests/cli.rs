//! End-to-end checks of the command line interface against the bundled
//! cement mill files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn lqdisc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqdisc"))
}

fn temp_path(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lqdisc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn validate_passes_on_benchmark_problem() {
    let output = lqdisc()
        .args(["validate", "--problem"])
        .arg(data("cement_mill_problem.toml"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "{stdout}");
    assert!(stdout.contains("all checks passed"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn validate_fails_on_missing_file() {
    let output = lqdisc()
        .args(["validate", "--problem", "/nonexistent/problem.toml"])
        .output()
        .unwrap();
    assert!(!output.status.success());
}

#[test]
fn bench_emits_table_shaped_csv() {
    // A small exponent keeps the run quick; the shape is what matters here.
    let out = temp_path("bench.csv");
    let status = lqdisc()
        .args(["bench", "--problem"])
        .arg(data("cement_mill_problem.toml"))
        .args(["--n-exp", "8", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "quantity,expm,ode,doubling");
    let quantities: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        quantities,
        vec!["e(A)", "e(B_o)", "e(R_ww)", "e(M)", "e(Q)", "cpu_time_s"]
    );
    // The exponential column is the reference, so its errors are zero.
    for line in &lines[1..6] {
        let expm_col: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(expm_col, 0.0);
    }
    // Fixed-step and step-doubling agree to floating-point reassociation, so
    // their error columns coincide at the displayed precision scale.
    for line in &lines[1..6] {
        let ode: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        let dbl: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((ode - dbl).abs() <= 1e-11, "{line}");
    }
}

#[test]
fn bench_respects_thread_count() {
    let out = temp_path("bench_single.csv");
    let status = lqdisc()
        .env("LQDISC_BENCH_THREADS", "1")
        .args(["bench", "--problem"])
        .arg(data("cement_mill_problem.toml"))
        .args(["--n-exp", "6", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn discretize_writes_readable_result() {
    let out = temp_path("result.toml");
    let status = lqdisc()
        .args(["discretize", "--problem"])
        .arg(data("cement_mill_problem.toml"))
        .args(["--method", "doubling", "--j", "10", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let result = lqdisc::io::load_result(&out).unwrap();
    assert_eq!(result.method, "doubling");
    assert_eq!(result.n_steps, 1024);
    assert_eq!(result.a.len(), 8);
    assert_eq!(result.q.len(), 18);
    assert_eq!(result.q_lin.len(), 100);
    assert!(result.rho_s.is_some());
}

#[test]
fn simulate_completes_the_benchmark_scenario() {
    let out = temp_path("equilibrium.csv");
    let output = lqdisc()
        .args(["simulate", "--scenario"])
        .arg(data("equilibrium.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("steps: 360"), "{stdout}");
    assert!(stdout.contains("peak output deviation: 0.0"), "{stdout}");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 361);
    assert!(csv.lines().next().unwrap().starts_with("t,u1,u2,z1,z2,y1,y2,zref1,zref2,d1"));
}

#[test]
fn simulate_is_byte_reproducible_for_a_fixed_seed() {
    let out_a = temp_path("run_a.csv");
    let out_b = temp_path("run_b.csv");
    for out in [&out_a, &out_b] {
        let status = lqdisc()
            .args(["simulate", "--scenario"])
            .arg(data("cement_mill_rejection.toml"))
            .args(["--seed", "777", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn loaded_control_model_matches_builtin_constructor() {
    // The bundled system file and the in-code constructor must describe the
    // same model; compare their discretizations entry by entry.
    let loaded = lqdisc::io::load_system(&data("cement_mill_control.toml")).unwrap();
    let built = lqdisc::mpc::cement_mill_control_model().unwrap();
    let q_c = nalgebra::DMatrix::identity(2, 2);
    let a =
        lqdisc::solve_matrix_exp(&lqdisc::stack_mimo(&loaded).unwrap(), &q_c, &loaded.noise_gain_or_empty(), 2.0)
            .unwrap();
    let b =
        lqdisc::solve_matrix_exp(&lqdisc::stack_mimo(&built).unwrap(), &q_c, &built.noise_gain_or_empty(), 2.0)
            .unwrap();
    assert_eq!(a.a, b.a);
    assert_eq!(a.b_o, b.b_o);
    assert_eq!(a.q, b.q);
    assert_eq!(a.r_ww, b.r_ww);
}
