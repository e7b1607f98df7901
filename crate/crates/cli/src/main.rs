use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use oil_cli::report::reanalyze;
use oil_cli::{run_grid, CliError, ExperimentConfig, ExperimentGrid, Preset, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "oil", version, about = "Online imitation learning rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every (level, seed) cell of a config and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Concurrent cells; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
        /// Exit with status 3 if any cell aborts or fails a check.
        #[arg(long)]
        check: bool,
    },
    /// Print the normalized config, or the list of errors.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
    },
    /// Recompute the analysis of a stored ledger CSV (its JSON must sit
    /// beside it) and print it as JSON.
    Analyze {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        check: bool,
    },
}

fn load_config(path: &Path, preset: Option<PresetArg>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::parse(&text, preset.map(Preset::from), base).map_err(CliError::Config)
}

fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Run {
            config,
            out,
            preset,
            workers,
            check,
        } => {
            let config = load_config(&config, preset)?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let grid = ExperimentGrid { config, out_dir: out };
            let outcome = run_grid(&grid, workers)?;
            println!("wrote {} files to {}", outcome.files.len(), grid.out_dir.display());
            for c in &outcome.cells {
                if let Some(reason) = &c.aborted {
                    eprintln!("{}: aborted at {reason}", oil_cli::grid::cell_stem(c.level, c.seed));
                }
                if c.violations() > 0 {
                    eprintln!(
                        "{}: {} check(s) failed",
                        oil_cli::grid::cell_stem(c.level, c.seed),
                        c.violations()
                    );
                }
            }
            if outcome.any_failed() {
                Ok(2)
            } else if check && !outcome.all_checks_pass() {
                Ok(3)
            } else {
                Ok(0)
            }
        }
        Command::Validate { config, preset } => {
            let config = load_config(&config, preset)?;
            print!("{}", config.to_text());
            Ok(0)
        }
        Command::Analyze { ledger, check } => {
            let analysis = reanalyze(&ledger)?;
            let text = serde_json::to_string_pretty(&analysis).map_err(|e| CliError::Format(e.to_string()))?;
            println!("{text}");
            Ok(if check && analysis.violations > 0 { 3 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
