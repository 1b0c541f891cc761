//! `tobs`: command-line driver exposing the targeted-observability
//! experiments as subcommands that emit CSV/JSON artifacts under a run
//! directory, each with a manifest for bit-exact regeneration.

mod experiment;
mod pipelines;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "tobs",
    about = "Targeted-observability analysis and estimation for discrete-time systems",
    version
)]
struct Cli {
    /// JSON experiment file (keys L, T, kappa, Nx, Nt, sensors, plus
    /// optional gramian/ukf/datagen/train/table1 blocks).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory (runs/, csv/, datasets/, models/ live below it).
    #[arg(long, global = true, default_value = "tobs-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitKind {
    Zero,
    Fourier,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleKind {
    Training,
    Validation,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a trajectory and emit state/output CSVs.
    Simulate {
        #[arg(long, value_enum, default_value_t = InitKind::Fourier)]
        init: InitKind,
        /// Number of steps; defaults to Nt.
        #[arg(long)]
        steps: Option<usize>,
        /// Measurement noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1)]
        case: u8,
    },
    /// Survey Gramian eigenvalues and indexes over sampled initial states.
    Observability {
        #[arg(long)]
        target: Option<usize>,
        /// Window length K+1.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        case: u8,
    },
    /// Unobservability index of one targeted variable on one sampled
    /// trajectory.
    Index {
        #[arg(long)]
        target: Option<usize>,
        /// Window length K+1.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1)]
        case: u8,
    },
    /// UKF baseline run; emits truth/estimate/error CSV for the target.
    Ukf {
        #[arg(long)]
        target: Option<usize>,
        /// Number of filter steps; defaults to Nt.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0.028)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1)]
        case: u8,
    },
    /// Generate a deep-filter dataset file.
    Datagen {
        #[arg(long, default_value_t = 10000)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, value_enum, default_value_t = RoleKind::Training)]
        role: RoleKind,
        #[arg(long, default_value_t = 1)]
        case: u8,
        /// Also export the samples as CSV for inspection.
        #[arg(long, default_value_t = false)]
        csv: bool,
    },
    /// Train a deep filter (on a dataset file or freshly generated data).
    Train {
        /// Dataset file; generated from the other flags when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10000)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1)]
        case: u8,
        /// Override the optimizer iteration cap.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a model's RMSE on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// Dataset file; generated from the other flags when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10000)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = 1)]
        case: u8,
    },
    /// Predict the targeted variable from one output window CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Output-window CSV (header `k,y_1,...,y_m`, K+1 rows).
        #[arg(long)]
        window: PathBuf,
    },
    /// Regenerate a figure or table pipeline: fig1, fig2, fig3-4, fig5,
    /// fig6, table1.
    Reproduce { what: String },
}

fn init_thread_pool() {
    if let Ok(value) = std::env::var("TOBS_THREADS") {
        if let Ok(threads) = value.trim().parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();

    let outcome = run(&cli);
    match outcome {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "status": "ok",
                    "run_id": summary.run_id,
                    "artifacts": summary.artifacts,
                    "results": summary.results,
                }))
                .expect("summary serializes")
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            let violations = match err.downcast_ref::<tobs::Error>() {
                Some(tobs::Error::InvalidConfig { violations }) => violations.clone(),
                _ => Vec::new(),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({
                    "status": "error",
                    "message": format!("{err:#}"),
                    "violations": violations,
                }))
                .expect("error serializes")
            );
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<pipelines::RunSummary> {
    let file = experiment::ExperimentFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate {
            init,
            steps,
            noise_sd,
            case,
        } => {
            let setup = file.resolve(Some(*case), None, None)?;
            pipelines::simulate(
                &setup,
                cli.seed,
                &cli.out,
                matches!(init, InitKind::Zero),
                *steps,
                *noise_sd,
            )
        }
        Command::Observability {
            target,
            horizon,
            samples,
            case,
        } => {
            let setup = file.resolve(Some(*case), *target, *horizon)?;
            pipelines::observability(&setup, cli.seed, &cli.out, *samples)
        }
        Command::Index {
            target,
            horizon,
            case,
        } => {
            let setup = file.resolve(Some(*case), *target, *horizon)?;
            pipelines::index(&setup, cli.seed, &cli.out)
        }
        Command::Ukf {
            target,
            steps,
            noise_sd,
            case,
        } => {
            let setup = file.resolve(Some(*case), *target, None)?;
            pipelines::ukf(&setup, cli.seed, &cli.out, *steps, *noise_sd)
        }
        Command::Datagen {
            count,
            noise_sd,
            role,
            case,
            csv,
        } => {
            let setup = file.resolve(Some(*case), None, None)?;
            pipelines::datagen(
                &setup,
                cli.seed,
                &cli.out,
                *count,
                *noise_sd,
                matches!(role, RoleKind::Training),
                *csv,
                *case,
            )
        }
        Command::Train {
            data,
            count,
            noise_sd,
            case,
            iterations,
        } => {
            let setup = file.resolve(Some(*case), None, None)?;
            pipelines::train_command(
                &setup,
                cli.seed,
                &cli.out,
                data.as_deref(),
                *count,
                *noise_sd,
                *iterations,
                *case,
            )
        }
        Command::Evaluate {
            model,
            data,
            count,
            noise_sd,
            case,
        } => {
            let setup = file.resolve(Some(*case), None, None)?;
            pipelines::evaluate(
                &setup,
                cli.seed,
                &cli.out,
                model,
                data.as_deref(),
                *count,
                *noise_sd,
                *case,
            )
        }
        Command::Predict { model, window } => pipelines::predict(&cli.out, model, window),
        Command::Reproduce { what } => {
            let setup = file.resolve(None, None, None)?;
            pipelines::reproduce(&setup, cli.seed, &cli.out, what)
        }
    }
}
