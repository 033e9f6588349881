use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdht::commands::{self, error_line, Report};
use fdht::config::RunConfig;
use fdht::Result;

/// HT-decomposed LSTM layers: parameter accounting, checks and training.
#[derive(Parser, Debug)]
#[command(name = "fdht", version)]
struct Cli {
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the model and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Prints the effective configuration as TOML and exits.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// HT parameter count, dense equivalent and compression ratio.
    Params,
    /// TT/TR/BT/HT parameter counts over a rank range, as CSV.
    Compare,
    /// Analytic gradients against central finite differences.
    Gradcheck,
    /// Fast HT forward against the reconstructed dense matrix.
    Verify,
    /// Train on the synthetic task; prints the metrics CSV.
    Train,
    /// Test accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.override_seed(seed);
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Option<Report>> {
    let config = load(cli)?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(None);
    }
    let report = match &cli.command {
        Some(Command::Params) => commands::cmd_params(&config)?,
        Some(Command::Compare) => commands::cmd_compare(&config)?,
        Some(Command::Gradcheck) => commands::cmd_gradcheck(&config)?,
        Some(Command::Verify) => commands::cmd_verify(&config)?,
        Some(Command::Train) => commands::cmd_train(&config)?,
        Some(Command::Eval { checkpoint }) => commands::cmd_eval(&config, checkpoint.as_deref())?,
        None => return Err(fdht::Error::Argument("no subcommand given (try --help)".into())),
    };
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error kind=usage exit=1 message={first:?}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(report)) => {
            print!("{}", report.text);
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
