//! Command-line surface tying training, evaluation and simulation together.
//!
//! Exit codes: 0 success, 1 domain failure (bad inputs, failed runs),
//! 2 usage errors (argument parsing, empty grids).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use helireg::net::{MlpParams, Normalization, DEFAULT_LAYER_DIMS};
use helireg::regeq::{solve_trim, ExoState};
use helireg::sim::{error_stats, grid_experiment, read_grid_csv, simulate, write_grid_csv, write_trajectory_csv};
use helireg::train::{residual_landscape, train, write_history_csv, write_landscape_csv, LandscapeSpec};
use helireg::RunConfig;

#[derive(Parser)]
#[command(name = "helireg", version, about = "Physics-informed steady-state solver for helicopter vertical tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the steady-state operator from a run configuration.
    Train(TrainArgs),
    /// Evaluate the total-residual landscape of a trained model on a grid.
    Landscape(LandscapeArgs),
    /// Run one closed-loop tracking experiment and write the trajectory.
    Simulate(SimulateArgs),
    /// Run the grid of tracking experiments from the configuration.
    Grid(GridArgs),
    /// Summarize a grid CSV: mean, median, divergence count, histogram.
    Stats(StatsArgs),
    /// Compare the model output at w = 0 against the trim condition.
    TrimCheck(TrimCheckArgs),
    /// Configuration helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Override the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = -6.0)]
    w1_min: f64,
    #[arg(long, default_value_t = 6.0)]
    w1_max: f64,
    #[arg(long, default_value_t = 61)]
    n_w1: usize,
    #[arg(long, default_value_t = -6.0)]
    w2_min: f64,
    #[arg(long, default_value_t = 6.0)]
    w2_max: f64,
    #[arg(long, default_value_t = 61)]
    n_w2: usize,
    /// Exosystem frequency at which the residuals are evaluated.
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    /// Optional run configuration (physical parameters, lambda).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Initial vertical reference displacement w1(0); w2(0) = 0.
    #[arg(long)]
    w1: f64,
    /// Exosystem frequency (rad/s).
    #[arg(long)]
    omega: f64,
    /// Trajectory CSV output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    /// Grid CSV produced by the grid subcommand.
    #[arg(long)]
    grid: PathBuf,
}

#[derive(Args)]
struct TrimCheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum allowed per-component deviation from the trim condition.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Print the canonical form of a configuration file.
    Dump {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Domain failure (exit 1) or usage failure (exit 2) with a message.
struct AppError {
    code: u8,
    message: String,
}

impl AppError {
    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, AppError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| AppError::domain(e.to_string())),
    }
}

fn load_model(path: &Path) -> Result<MlpParams, AppError> {
    MlpParams::load(path).map_err(|e| AppError::domain(e.to_string()))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Stats(args) => cmd_stats(args),
        Command::TrimCheck(args) => cmd_trim_check(args),
        Command::Config(ConfigCommand::Dump { config }) => {
            let cfg = RunConfig::load(&config).map_err(|e| AppError::domain(e.to_string()))?;
            print!("{}", cfg.dump());
            Ok(())
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), AppError> {
    let mut cfg = load_config(Some(&args.config))?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    cfg.heli
        .validate()
        .map_err(AppError::domain)?;
    let w_scale = cfg
        .train
        .radii
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let omega_scale = cfg
        .train
        .omega_set
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .max(1e-9);
    let init = MlpParams::init_with(
        &DEFAULT_LAYER_DIMS,
        Normalization {
            w_scale,
            omega_scale,
        },
        cfg.train.seed,
    );
    let result = train(&cfg.train, init, &cfg.heli).map_err(|e| AppError::domain(e.to_string()))?;
    result
        .params
        .save(&args.out)
        .map_err(|e| AppError::domain(e.to_string()))?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| AppError::domain(format!("creating {}: {e}", cfg.output_dir)))?;
    let history_path = Path::new(&cfg.output_dir).join("loss_history.csv");
    write_history_csv(&history_path, &result.history)
        .map_err(|e| AppError::domain(format!("writing {}: {e}", history_path.display())))?;
    if let Some(last) = result.history.last() {
        println!(
            "trained {} epochs, final mean loss {:.6e}, model {}",
            result.history.len(),
            last.total,
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_landscape(args: LandscapeArgs) -> Result<(), AppError> {
    if args.n_w1 == 0 || args.n_w2 == 0 {
        return Err(AppError::usage("landscape grid must be nonempty (n_w1, n_w2 > 0)"));
    }
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let spec = LandscapeSpec {
        w1_min: args.w1_min,
        w1_max: args.w1_max,
        n_w1: args.n_w1,
        w2_min: args.w2_min,
        w2_max: args.w2_max,
        n_w2: args.n_w2,
        omega: args.omega,
        lambda: cfg.train.lambda,
    };
    let rows = residual_landscape(&model, &spec, &cfg.heli);
    write_landscape_csv(&args.out, &rows)
        .map_err(|e| AppError::domain(format!("writing {}: {e}", args.out.display())))?;
    println!("landscape: {} rows -> {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let result = simulate(
        ExoState {
            w1: args.w1,
            w2: 0.0,
        },
        args.omega,
        &cfg.sim,
        &model,
        &cfg.gains,
        &cfg.heli,
    )
    .map_err(|e| AppError::domain(e.to_string()))?;
    write_trajectory_csv(&args.out, &result)
        .map_err(|e| AppError::domain(format!("writing {}: {e}", args.out.display())))?;
    println!(
        "mean_abs_ez={:.6e} max_abs_ez={:.6e} diverged={}",
        result.mean_abs_ez, result.max_abs_ez, result.diverged
    );
    if let Some(t) = result.diverge_time {
        println!("diverge_time={t:.2}");
    }
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<(), AppError> {
    let cfg = load_config(Some(&args.config))?;
    if cfg.grid_w1.is_empty() || cfg.grid_omega.is_empty() {
        return Err(AppError::usage("sim.grid_w1 and sim.grid_omega must be nonempty"));
    }
    let model = load_model(&args.model)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let cells = grid_experiment(
        &cfg.grid_w1,
        &cfg.grid_omega,
        &cfg.sim,
        &model,
        &cfg.gains,
        &cfg.heli,
        &cfg.train.radii,
        &cfg.train.omega_set,
        workers,
    );
    write_grid_csv(&args.out, &cells)
        .map_err(|e| AppError::domain(format!("writing {}: {e}", args.out.display())))?;
    let diverged = cells.iter().filter(|c| c.diverged).count();
    println!(
        "grid: {} cells ({} diverged) -> {}",
        cells.len(),
        diverged,
        args.out.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), AppError> {
    let cells = read_grid_csv(&args.grid).map_err(|e| AppError::domain(e.to_string()))?;
    let stats = error_stats(&cells).map_err(|e| AppError::domain(e.to_string()))?;
    println!(
        "mean={:.6e} median={:.6e} diverged={} total={}",
        stats.mean, stats.median, stats.n_diverged, stats.n_total
    );
    for (lo, hi, count) in &stats.histogram {
        println!("hist,{lo:.6e},{hi:.6e},{count}");
    }
    Ok(())
}

fn cmd_trim_check(args: TrimCheckArgs) -> Result<(), AppError> {
    let cfg = load_config(args.config.as_deref())?;
    let model = load_model(&args.model)?;
    let trim = solve_trim(&cfg.heli).map_err(|e| AppError::domain(e.to_string()))?;
    let target = [trim.pi_phi, trim.pi_theta, trim.c_b];
    println!(
        "trim target: pi_phi={:.4} pi_theta={:.4} c_b={:.4}",
        target[0], target[1], target[2]
    );
    let mut worst = 0.0_f64;
    for &omega in &cfg.train.omega_set {
        let out = model.forward(0.0, 0.0, omega).to_array();
        let dev = [
            (out[0] - target[0]).abs(),
            (out[1] - target[1]).abs(),
            (out[2] - target[2]).abs(),
        ];
        worst = worst.max(dev[0]).max(dev[1]).max(dev[2]);
        println!(
            "omega={omega}: pi_phi={:.4} pi_theta={:.4} c_b={:.4} max_dev={:.4}",
            out[0],
            out[1],
            out[2],
            dev[0].max(dev[1]).max(dev[2])
        );
    }
    if worst <= args.tolerance {
        println!("trim check passed: worst deviation {worst:.4} <= {}", args.tolerance);
        Ok(())
    } else {
        Err(AppError::domain(format!(
            "trim check failed: worst deviation {worst:.4} > {}",
            args.tolerance
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
