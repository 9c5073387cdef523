use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use cocreate_core::evaluation::AblationConfig;
use cocreate_server::commands::{self, AblateOptions, CliError, CliResult, ServeOptions};

#[derive(Parser)]
#[command(name = "cocreate", version, about = "Image co-creation studio: service and research tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Data directory (session logs and image blobs).
        #[arg(long, default_value = "data")]
        data: PathBuf,
        /// Use deterministic offline providers.
        #[arg(long)]
        mock: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// How long a request waits for a generation before returning a job handle.
        #[arg(long, default_value_t = 10_000)]
        wait_ms: u64,
    },
    /// Run the ideation ablation (associative vs plain instructions).
    Ablate {
        /// Prompt file, one prompt per line.
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, default_value_t = 3)]
        runs: u32,
        #[arg(long, default_value_t = 9)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        /// Output directory for cells.csv, scores.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mock: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Behavioral metrics CSV from an event log or a store.
    Metrics {
        /// JSON Lines event log; `-` reads stdin.
        #[arg(long, conflicts_with = "data")]
        log: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Limit to one session of the store.
        #[arg(long, requires = "data")]
        session: Option<String>,
    },
    /// Write a session's event log as JSON Lines to stdout.
    Export {
        #[arg(long)]
        session: String,
        #[arg(long, default_value = "data")]
        data: PathBuf,
    },
    /// Add an exported event log to a store.
    Import {
        /// JSON Lines event log; `-` reads stdin.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "data")]
        data: PathBuf,
    },
    /// Run the scripted offline session with mock providers.
    Demo {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Persist the session into this store.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also write the event log here.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Questionnaire comparison CSV (and optional external ratings).
    Survey {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    #[command(hide = true)]
    StressAppend {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        count: Option<u64>,
    },
}

fn run(command: Command) -> CliResult {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Serve {
            addr,
            data,
            mock,
            seed,
            wait_ms,
        } => commands::serve(ServeOptions {
            addr,
            data,
            mock,
            seed,
            wait: Duration::from_millis(wait_ms),
        }),
        Command::Ablate {
            prompts,
            runs,
            count,
            parallelism,
            out: dir,
            mock,
            seed,
        } => commands::ablate(
            &AblateOptions {
                prompts,
                out: dir,
                mock,
                seed,
                config: AblationConfig {
                    runs,
                    count,
                    parallelism,
                },
            },
            &mut out,
        ),
        Command::Metrics { log, data, session } => match (log, data) {
            (Some(log), _) => commands::metrics_from_log(&log, &mut out),
            (None, Some(data)) => commands::metrics_from_store(&data, session.as_deref(), &mut out),
            (None, None) => Err(CliError::Usage("metrics needs --log or --data".into())),
        },
        Command::Export { session, data } => commands::export(&data, &session, &mut out),
        Command::Import { log, data } => {
            let id = commands::import(&data, &log)?;
            writeln!(out, "{id}").map_err(|e| CliError::Data(e.into()))
        }
        Command::Demo {
            seed,
            data,
            log_out,
        } => {
            let id = commands::demo(seed, data.as_deref(), log_out.as_deref())?;
            writeln!(out, "{id}").map_err(|e| CliError::Data(e.into()))
        }
        Command::Survey { scores, ratings } => {
            commands::survey(&scores, ratings.as_deref(), &mut out)
        }
        Command::StressAppend { data, count } => commands::stress_append(&data, count),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
