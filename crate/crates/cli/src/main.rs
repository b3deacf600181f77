use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use mlamc_cli::commands::{self, Which};
use mlamc_cli::{CliError, Context, Overrides};

#[derive(Parser)]
#[command(name = "mlamc", version, about = "Machine-learning-aided Monte Carlo slope reliability")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(short, long, global = true, default_value = "mlamc.json")]
    config: PathBuf,
    /// Output directory; overrides `report.output_dir`.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Base seed; overrides `campaign.base_seed`.
    #[arg(short, long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(short, long, global = true)]
    workers: Option<usize>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every configured campaign and write the dataset files.
    Generate,
    /// Train surrogates on small subsets and estimate the probability of failure.
    Mlamc,
    /// Run a validation study on the generated datasets.
    Experiment {
        #[arg(value_enum)]
        which: Which,
    },
    /// Aggregate results into summary, timing and plot-data tables.
    Report,
    /// Export datasets and field statistics as CSV.
    ExportCsv,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Runtime { message: e.to_string(), seed: None })?;
    }
    let ov = Overrides { output: cli.output.clone(), seed: cli.seed, overwrite: cli.overwrite };
    let ctx = Context::load(&cli.config, &ov)?;
    match cli.command {
        Command::Generate => commands::generate(&ctx).map(drop),
        Command::Mlamc => commands::mlamc(&ctx).map(drop),
        Command::Experiment { which } => commands::experiment(&ctx, which),
        Command::Report => commands::report(&ctx),
        Command::ExportCsv => commands::export_csv(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.seed() {
                Some(seed) => error!("{e} (repro seed {seed})"),
                None => error!("{e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
