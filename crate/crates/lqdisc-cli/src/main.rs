//! Command line front end: discretize problems, validate them against
//! reference oracles, benchmark the three solvers, and run closed-loop
//! scenarios.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use lqdisc::io::{format_full, load_problem, load_scenario, save_result, LoadedProblem};
use lqdisc::mpc::run_closed_loop;
use lqdisc::{
    dense_reference_sim, discretize, stack_mimo, ButcherTableau, DiscretizationResult,
    DiscretizeOptions, Method,
};

#[derive(Parser)]
#[command(
    name = "lqdisc",
    about = "Discretization of linear-quadratic optimal control problems with input time delays",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discretize a problem file and write the full-precision result.
    Discretize(DiscretizeArgs),
    /// Check a problem against the built-in reference oracles.
    Validate(ValidateArgs),
    /// Compare the three solvers on one problem (errors and timings).
    Bench(BenchArgs),
    /// Run a closed-loop scenario and write the trajectory.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodFlag {
    /// Fixed-step Runge-Kutta.
    Ode,
    /// Block matrix exponentials.
    Expm,
    /// Step doubling.
    Doubling,
}

#[derive(Args)]
struct DiscretizeArgs {
    /// Problem file (TOML).
    #[arg(long)]
    problem: PathBuf,
    /// Output path for the result dump.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "expm")]
    method: MethodFlag,
    /// Step count for the fixed-step method.
    #[arg(long, default_value_t = 1 << 14)]
    n: usize,
    /// Doubling count for the step-doubling method (N = 2^j).
    #[arg(long, default_value_t = 14)]
    j: u32,
    #[arg(long, default_value = "rk4")]
    tableau: String,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Seed for the randomized input sequence.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Fixed-step count exponent: the solvers run with N = 2^n_exp.
    #[arg(long, default_value_t = 14)]
    n_exp: u32,
    #[arg(long, default_value = "rk4")]
    tableau: String,
    /// Output CSV; written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Trajectory CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Discretize(args) => run_discretize(args),
        Command::Validate(args) => run_validate(args),
        Command::Bench(args) => run_bench(args),
        Command::Simulate(args) => run_simulate(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn tableau(name: &str) -> Result<ButcherTableau<f64>> {
    ButcherTableau::by_name(name).with_context(|| {
        format!(
            "unknown tableau {name:?}; available: {}",
            ButcherTableau::<f64>::NAMES.join(", ")
        )
    })
}

fn run_discretize(args: DiscretizeArgs) -> Result<()> {
    let loaded = load_problem(&args.problem)?;
    let method = match args.method {
        MethodFlag::Ode => Method::FixedStep { steps: args.n },
        MethodFlag::Expm => Method::MatrixExponential,
        MethodFlag::Doubling => Method::StepDoubling { doublings: args.j },
    };
    let mut options = DiscretizeOptions::new(method).with_tableau(tableau(&args.tableau)?);
    options.stochastic = loaded.stochastic;
    let dp = discretize(&loaded.problem, &options)?;
    save_result(&args.out, &dp)?;
    println!(
        "discretized with {} in {:.3} ms -> {}",
        dp.discretization.method,
        dp.discretization.wall_time.as_secs_f64() * 1e3,
        args.out.display()
    );
    Ok(())
}

fn run_validate(args: ValidateArgs) -> Result<()> {
    let LoadedProblem { problem, .. } = load_problem(&args.problem)?;
    let sys = &problem.system;
    let coeffs = stack_mimo(sys)?;
    let g_c = sys.noise_gain_or_empty();
    let ts = sys.sample_time();
    let tab = ButcherTableau::classic_rk4();
    let mut failures = 0usize;
    let mut check = |name: &str, err: f64, bound: f64| {
        let ok = err <= bound;
        println!(
            "check {name}: {} (error {err:.3e}, bound {bound:.0e})",
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures += 1;
        }
    };

    // Realization equivalence against the dense delayed-ODE reference.
    let truth = lqdisc::solve_matrix_exp(&coeffs, &problem.weight, &g_c, ts)?;
    let aug = lqdisc::augment_discrete(
        &truth.a,
        &truth.b_o,
        &coeffs.d_o,
        &coeffs.c,
        coeffs.m_bar,
        coeffs.n_u,
    )?;
    let mut rng = StdRng::seed_from_u64(args.seed);
    let inputs: Vec<DVector<f64>> = (0..50)
        .map(|_| DVector::from_fn(coeffs.n_u, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let reference = dense_reference_sim(sys, &inputs, 400)?;
    let simulated = aug.simulate(&DVector::zeros(aug.n_x), &[], &inputs);
    let realization_err = reference
        .iter()
        .zip(&simulated)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    check("realization vs dense oracle", realization_err, 1e-6);

    // Cross-method agreement at N = 2^12.
    let fixed = lqdisc::solve_fixed_step(&coeffs, &problem.weight, &g_c, ts, 1 << 12, &tab)?;
    let doubling = lqdisc::solve_step_doubling(&coeffs, &problem.weight, &g_c, ts, 12, &tab)?;
    for (label, r) in [("ode", &fixed), ("doubling", &doubling)] {
        check(
            &format!("{label} transition agreement"),
            rel_inf(&r.a, &truth.a).max(rel_inf(&r.b_o, &truth.b_o)),
            1e-10,
        );
        check(
            &format!("{label} weight agreement"),
            rel_inf(&r.q, &truth.q).max(rel_inf(&r.m, &truth.m)),
            1e-6,
        );
    }
    check(
        "doubling equals fixed step",
        rel_inf(&doubling.q, &fixed.q),
        1e-12,
    );

    // Symmetry and positive semidefiniteness.
    check("q symmetry", asymmetry(&truth.q), 1e-12);
    check("r_ww symmetry", asymmetry(&truth.r_ww), 1e-12);
    check("q min eigenvalue", (-min_eig(&truth.q)).max(0.0), 1e-12);
    check("r_ww min eigenvalue", (-min_eig(&truth.r_ww)).max(0.0), 1e-12);

    if failures > 0 {
        bail!("{failures} check(s) failed");
    }
    println!("all checks passed");
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let LoadedProblem { problem, .. } = load_problem(&args.problem)?;
    let coeffs = stack_mimo(&problem.system)?;
    let g_c = problem.system.noise_gain_or_empty();
    let ts = problem.system.sample_time();
    let tab = tableau(&args.tableau)?;
    let methods = [
        Method::MatrixExponential,
        Method::FixedStep {
            steps: 1usize << args.n_exp,
        },
        Method::StepDoubling {
            doublings: args.n_exp,
        },
    ];

    let threads = std::env::var("LQDISC_BENCH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(methods.len())
        .max(1);

    // Median wall time of five runs per method.
    let run_one = |method: Method| -> lqdisc::Result<(DiscretizationResult<f64>, Duration)> {
        let mut times = Vec::with_capacity(5);
        let mut result = None;
        for _ in 0..5 {
            let r = lqdisc::solve(&coeffs, &problem.weight, &g_c, ts, method, &tab)?;
            times.push(r.wall_time);
            result = Some(r);
        }
        times.sort();
        Ok((result.expect("five runs"), times[2]))
    };

    let results: Vec<(DiscretizationResult<f64>, Duration)> = if threads > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = methods
                .iter()
                .map(|&m| scope.spawn(move || run_one(m)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("bench thread"))
                .collect::<lqdisc::Result<Vec<_>>>()
        })?
    } else {
        methods
            .iter()
            .map(|&m| run_one(m))
            .collect::<lqdisc::Result<Vec<_>>>()?
    };

    let truth = &results[0].0;
    let mut csv = String::from("quantity,expm,ode,doubling\n");
    type Field = fn(&DiscretizationResult<f64>) -> &DMatrix<f64>;
    let rows: [(&str, Field); 5] = [
        ("e(A)", |r| &r.a),
        ("e(B_o)", |r| &r.b_o),
        ("e(R_ww)", |r| &r.r_ww),
        ("e(M)", |r| &r.m),
        ("e(Q)", |r| &r.q),
    ];
    for (name, field) in rows {
        csv.push_str(name);
        for (r, _) in &results {
            csv.push(',');
            csv.push_str(&format_full(inf_norm(&(field(r) - field(truth)))));
        }
        csv.push('\n');
    }
    csv.push_str("cpu_time_s");
    for (_, median) in &results {
        csv.push(',');
        csv.push_str(&format_full(median.as_secs_f64()));
    }
    csv.push('\n');

    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let (record, summary) = run_closed_loop(&scenario)?;
    lqdisc::io::write_trajectory_csv(&args.out, &record)?;
    println!("steps: {}", summary.steps);
    println!("peak output deviation: {:.6e}", summary.peak_output_deviation);
    println!(
        "max constraint violation: {:.6e}",
        summary.max_constraint_violation
    );
    for event in &summary.settling {
        match event.settled_within {
            Some(minutes) => println!(
                "event at {:.0} min: peak {:.3}, settled within {minutes:.0} min",
                event.event_time, event.peak
            ),
            None => println!(
                "event at {:.0} min: peak {:.3}, not settled before the next event",
                event.event_time, event.peak
            ),
        }
    }
    println!("trajectory -> {}", args.out.display());
    Ok(())
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn rel_inf(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    inf_norm(&(x - reference)) / inf_norm(reference).max(1e-300)
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
