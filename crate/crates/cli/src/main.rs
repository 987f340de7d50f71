//! `elicit`: simulate studies, host the session API, and analyze logs.

mod decide;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elicit_core::config::{ConfigError, StudyConfig};
use elicit_core::study::{analyze, load_condition, run_simulated_study, ConditionData, StudyError};
use elicit_server::{ApiError, AppState};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Server(#[from] ApiError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Scenario { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "elicit", version, about = "Preference elicitation for adaptive toolbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured condition with simulated respondents and write
    /// one JSONL log per respondent under `<out>/<label>/`.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides the study seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Host the session API (and, optionally, static UI assets).
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where session logs and snapshots are kept.
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// Directory of static files served for non-API paths.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Compare two conditions: per-outcome t, Hotelling's T², significance flags.
    Analyze {
        #[command(flatten)]
        conditions: Conditions,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also write the results table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write each condition's respondent × outcome midpoint matrix as CSV.
    Export {
        #[command(flatten)]
        conditions: Conditions,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate decision scenarios (JSON) and print one JSON result per line.
    Decide {
        scenarios: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Study config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<StudyConfig, CliError> {
        match &self.config {
            Some(path) => Ok(StudyConfig::load(path)?),
            None => Ok(StudyConfig::default()),
        }
    }
}

/// Condition directories, given directly or as labels inside a study
/// directory written by `simulate`.
#[derive(Debug, Args)]
struct Conditions {
    /// Condition directories holding `*.jsonl` logs.
    dirs: Vec<PathBuf>,
    /// Study directory; conditions are its subdirectories.
    #[arg(long)]
    study: Option<PathBuf>,
    /// Comma-separated condition labels inside `--study`; defaults to the
    /// conditions listed in its `study.toml`, in order.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
}

impl Conditions {
    fn resolve(&self) -> Result<Vec<PathBuf>, CliError> {
        match &self.study {
            None if self.dirs.is_empty() => Err(CliError::Usage("give condition directories or --study".into())),
            None if !self.labels.is_empty() => Err(CliError::Usage("--labels needs --study".into())),
            None => Ok(self.dirs.clone()),
            Some(_) if !self.dirs.is_empty() => {
                Err(CliError::Usage("give either condition directories or --study, not both".into()))
            }
            Some(study) => {
                let labels = if self.labels.is_empty() {
                    StudyConfig::load(&study.join("study.toml"))?.condition.into_iter().map(|c| c.label).collect()
                } else {
                    self.labels.clone()
                };
                Ok(labels.iter().map(|l| study.join(l)).collect())
            }
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<ConditionData>, CliError> {
    Ok(dirs.iter().map(|d| load_condition(d)).collect::<Result<_, _>>()?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = config.load()?;
            if let Some(seed) = seed {
                cfg.study.seed = seed;
            }
            for c in run_simulated_study(&cfg, &out)? {
                println!("{}: {} logs in {}", c.label, c.logs.len(), c.directory.display());
            }
        }
        Command::Serve { config, addr, log_dir, ui } => {
            let mut state = AppState::new(config.load()?)?;
            if let Some(dir) = log_dir {
                state = state.with_log_dir(dir)?;
            }
            if let Some(dir) = ui {
                state = state.with_ui_dir(dir);
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: "runtime".into(), source })?;
            eprintln!("listening on http://{addr}");
            runtime
                .block_on(elicit_server::serve(addr, state))
                .map_err(|source| CliError::Io { path: addr.to_string().into(), source })?;
        }
        Command::Analyze { conditions, alpha, csv } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
            }
            let dirs = conditions.resolve()?;
            if dirs.len() != 2 {
                return Err(CliError::Usage(format!("analyze compares exactly two conditions, got {}", dirs.len())));
            }
            let data = load_all(&dirs)?;
            let analysis = analyze(&data[0], &data[1], alpha)?;
            print!("{}", analysis.to_text());
            if let Some(path) = csv {
                write(&path, &analysis.to_csv())?;
            }
        }
        Command::Export { conditions, out } => {
            for data in load_all(&conditions.resolve()?)? {
                let path = out.join(format!("{}.csv", data.label));
                write(&path, &data.matrix.to_csv())?;
                println!("{}: {} respondents -> {}", data.label, data.matrix.rows(), path.display());
            }
        }
        Command::Decide { scenarios, config, out } => {
            let results = decide::evaluate(&scenarios, &config.load()?)?;
            let text: String = results
                .iter()
                .map(|r| serde_json::to_string(r).expect("results serialize") + "\n")
                .collect();
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("elicit: {e}");
            ExitCode::FAILURE
        }
    }
}
