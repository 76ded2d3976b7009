//! `ensemble-sysid`: simulate datasets, fit ensembles, evaluate fits and run
//! the Monte Carlo comparison.
//!
//! Exit codes: 0 success, 1 runtime or solver failure, 2 configuration or
//! validation error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ensemble_sysid::bcd::{multi_start, BcdOptions, SolutionRecord};
use ensemble_sysid::dynamics::{cost_matrix, AffineModel, ModelKind};
use ensemble_sysid::eval::evaluate;
use ensemble_sysid::measures::{describe, fmt_f64, load_dataset, save_dataset};
use ensemble_sysid::synth::{
    aggregate, default_sigma2_grid, gmm_example, monte_carlo_sweep, sample_instance, write_aggregate_csv,
    write_sweep_csv, GmmConfig, Method, SimConfig, SweepConfig,
};
use ensemble_sysid::transport::solve_classic_ot;

#[derive(Parser)]
#[command(name = "ensemble-sysid", version, about = "Ensemble separation and affine system identification from snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a multi-ensemble dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Separate ensembles and fit their dynamics (best of several restarts).
    Fit(FitArgs),
    /// Compare a fitted solution with ground truth; prints one CSV row.
    Evaluate(EvaluateArgs),
    /// Monte Carlo comparison with the oracle and semi-oracle baselines.
    Sweep(SweepArgs),
    /// Two-mode Gaussian-mixture shift example, with transport plans for plotting.
    ExampleGmm(GmmArgs),
}

#[derive(Args, Clone)]
struct SimArgs {
    /// State dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Particles per ensemble, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,12,15")]
    sizes: Vec<usize>,
    /// Number of snapshots.
    #[arg(long, default_value_t = 7)]
    horizon: usize,
    /// Standard deviation of the entries of A and b.
    #[arg(long, default_value_t = 1.0)]
    dynamics_scale: f64,
    /// Standard deviation of the initial states.
    #[arg(long, default_value_t = 1.0)]
    state_scale: f64,
}

impl SimArgs {
    fn config(&self, sigma2: f64, seed: u64) -> SimConfig {
        SimConfig {
            dim: self.dim,
            sizes: self.sizes.clone(),
            horizon: self.horizon,
            sigma2,
            dynamics_scale: self.dynamics_scale,
            init_scale: self.state_scale,
            seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Process noise variance.
    #[arg(long, default_value_t = 1e-3)]
    sigma2: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Ground-truth JSON; defaults to the output path with extension `.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct BcdArgs {
    /// Random restarts.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative objective decrease below which descent stops.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

impl BcdArgs {
    fn options(&self, init_scale: f64) -> BcdOptions {
        BcdOptions {
            max_iters: self.max_iters,
            rel_tol: self.tol,
            restarts: self.restarts,
            init_scale,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Solution JSON to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Number of ensembles.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value = "affine")]
    kind: ModelKind,
    #[command(flatten)]
    bcd: BcdArgs,
    /// Standard deviation of the random initial parameters.
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    /// Include the transport plans in the solution file.
    #[arg(long)]
    plans: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Solution JSON written by `fit`.
    #[arg(long)]
    solution: PathBuf,
    /// Ground-truth JSON written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Noise variances, comma separated; default 8 log-spaced values in [1e-6, 1e-1].
    #[arg(long, value_delimiter = ',')]
    sigma2: Option<Vec<f64>>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Comma separated subset of proposed, oracle, semi-oracle.
    #[arg(long, value_delimiter = ',', default_value = "proposed,oracle,semi-oracle")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Standard deviation of the random initial parameters.
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    /// k-means restarts of the semi-oracle.
    #[arg(long, default_value_t = 100)]
    kmeans_restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Raw records CSV to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write median and 5th/95th percentiles per (σ², method).
    #[arg(long)]
    aggregate: Option<PathBuf>,
    /// Leave wall_ms empty so that repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GmmArgs {
    #[arg(long, default_value_t = 0.4)]
    p: f64,
    #[arg(long, default_value_t = 0.6)]
    p_prime: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    a_prime: f64,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0.3)]
    sigma_prime: f64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 7.0, allow_negative_numbers = true)]
    hi: f64,
    /// Grid points.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Number of ensembles; 1 gives plain optimal transport under the fitted shift.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[command(flatten)]
    bcd: BcdArgs,
    /// Standard deviation of the initial shifts; defaults to half the grid width.
    #[arg(long)]
    init_scale: Option<f64>,
    /// Directory for data.csv, solution.json, plan_support.csv and classic_plan.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Ground truth written next to a simulated dataset.
#[derive(Serialize, Deserialize)]
struct TruthFile {
    config: SimConfig,
    models: Vec<AffineModel>,
    /// `labels[t][i]`, in dataset row order.
    labels: Vec<Vec<usize>>,
    /// Ensemble of every trajectory.
    trajectory_labels: Vec<usize>,
    /// `trajectories[p][t]`.
    trajectories: Vec<Vec<Vec<f64>>>,
}

/// Full effective configuration, echoed on standard error by every command.
fn echo<T: Serialize>(command: &str, config: &T) -> Result<()> {
    eprintln!("{command}: {}", serde_json::to_string(config)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(ensemble_sysid::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn truth_path(output: &Path) -> PathBuf {
    output.with_extension("truth.json")
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.sim.config(args.sigma2, args.seed);
    let truth = args.truth.clone().unwrap_or_else(|| truth_path(&args.output));
    echo(
        "simulate",
        &serde_json::json!({"config": cfg, "output": args.output, "truth": truth}),
    )?;
    let inst = sample_instance(&cfg)?;
    save_dataset(&inst.observations, &args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    let record = TruthFile {
        config: cfg,
        models: inst.trajectories.models.clone().unwrap_or_default(),
        labels: inst.observations.labels().unwrap_or_default().to_vec(),
        trajectory_labels: inst.trajectories.labels.clone().unwrap_or_default(),
        trajectories: inst
            .trajectories
            .trajectories()
            .iter()
            .map(|tr| tr.iter().map(|p| p.0.clone()).collect())
            .collect(),
    };
    write_json(&truth, &record)?;
    eprintln!("wrote {} ({})", args.output.display(), describe(&inst.observations));
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let opts = args.bcd.options(args.init_scale);
    echo(
        "fit",
        &serde_json::json!({
            "input": args.input, "output": args.output, "k": args.k,
            "kind": args.kind.to_string(), "bcd": opts, "plans": args.plans,
        }),
    )?;
    let seq = load_dataset(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    let sol = multi_start(&seq, args.k, args.kind, &opts)?;
    write_json(&args.output, &sol.to_record(args.plans))?;
    println!(
        "objective={} iterations={} converged={} restart={}",
        fmt_f64(sol.objective()),
        sol.iterations(),
        sol.converged,
        sol.restart_index
    );
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    echo(
        "evaluate",
        &serde_json::json!({"solution": args.solution, "truth": args.truth}),
    )?;
    let sol: SolutionRecord = read_json(&args.solution)?;
    let truth: TruthFile = read_json(&args.truth)?;
    let report = evaluate(&sol.models, &sol.labels, &truth.models, &truth.labels)?;
    println!("{}", ensemble_sysid::eval::EvalReport::CSV_HEADER);
    println!("{}", report.csv_row());
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = SweepConfig {
        base: args.sim.config(0.0, 0),
        sigma2_grid: args.sigma2.clone().unwrap_or_else(default_sigma2_grid),
        trials: args.trials,
        methods: args.methods.clone(),
        bcd: BcdOptions {
            max_iters: args.max_iters,
            rel_tol: args.tol,
            restarts: args.restarts,
            init_scale: args.init_scale,
            seed: 0,
        },
        kmeans_restarts: args.kmeans_restarts,
        seed: args.seed,
        threads: args.threads,
    };
    echo(
        "sweep",
        &serde_json::json!({
            "config": cfg, "output": args.output, "aggregate": args.aggregate, "no_timing": args.no_timing,
        }),
    )?;
    let mut records = monte_carlo_sweep(&cfg)?;
    if args.no_timing {
        records.iter_mut().for_each(|r| r.wall_ms = None);
    }
    write_sweep_csv(&records, create(&args.output)?)?;
    if let Some(path) = &args.aggregate {
        write_aggregate_csv(&aggregate(&records), create(path)?)?;
    }
    eprintln!("wrote {} records to {}", records.len(), args.output.display());
    Ok(())
}

fn example_gmm(args: GmmArgs) -> Result<()> {
    let gmm = GmmConfig {
        p: args.p,
        p_prime: args.p_prime,
        a: args.a,
        a_prime: args.a_prime,
        sigma: args.sigma,
        sigma_prime: args.sigma_prime,
        lo: args.lo,
        hi: args.hi,
        points: args.points,
    };
    let init_scale = args.init_scale.unwrap_or(0.5 * (args.hi - args.lo).abs());
    let opts = args.bcd.options(init_scale);
    echo(
        "example-gmm",
        &serde_json::json!({"gmm": gmm, "k": args.k, "bcd": opts, "out_dir": args.out_dir}),
    )?;
    let seq = gmm_example(&gmm)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    save_dataset(&seq, args.out_dir.join("data.csv"))?;

    let sol = multi_start(&seq, args.k, ModelKind::Shift, &opts)?;
    write_json(&args.out_dir.join("solution.json"), &sol.to_record(true))?;

    let xs = seq.measure(0).points();
    let ys = seq.measure(1).points();
    let mut w = create(&args.out_dir.join("plan_support.csv"))?;
    writeln!(w, "k,i,j,x,y,mass")?;
    for (k, pk) in sol.plans.plans.iter().enumerate() {
        for (i, j, m) in pk[0].support(0.0) {
            writeln!(w, "{k},{i},{j},{},{},{}", fmt_f64(xs[i][0]), fmt_f64(ys[j][0]), fmt_f64(m))?;
        }
    }
    w.flush()?;

    // plain optimal transport with squared-distance cost
    let classic = solve_classic_ot(
        &cost_matrix(&AffineModel::identity(ModelKind::Shift, 1), seq.measure(0), seq.measure(1))?,
        seq.measure(0),
        seq.measure(1),
    )?;
    let mut w = create(&args.out_dir.join("classic_plan.csv"))?;
    writeln!(w, "i,j,x,y,mass")?;
    for (i, j, m) in classic.plan.support(0.0) {
        writeln!(w, "{i},{j},{},{},{}", fmt_f64(xs[i][0]), fmt_f64(ys[j][0]), fmt_f64(m))?;
    }
    w.flush()?;

    let [s1, s2] = gmm.true_shifts();
    println!("true_shifts={} {}", fmt_f64(s1), fmt_f64(s2));
    println!(
        "fitted_shifts={}",
        sol.models.iter().map(|m| fmt_f64(m.b()[0])).collect::<Vec<_>>().join(" ")
    );
    println!("objective={}", fmt_f64(sol.objective()));
    println!("classic_objective={}", fmt_f64(classic.objective));
    println!("grid_spacing={}", fmt_f64(gmm.spacing()));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::ExampleGmm(a) => example_gmm(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ensemble_sysid::Error>() {
            return if e.is_config() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
