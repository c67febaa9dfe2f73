use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sotif_cli::commands::{self, SimulateArgs};
use sotif_cli::serve::{self, ServeOptions};
use sotif_cli::{exit, CliError};
use sotif_core::scenario::SimConfig;
use sotif_core::testmanager::{parse_sim_config, ReportFormat, Verdict};

/// Simulate take-over episodes, run test-case series, evaluate misuse
/// metrics and serve interactive driver sessions.
///
/// Exit codes: 0 success (series PASS), 1 series FAIL, 2 invalid input or
/// configuration, 3 episode error, 4 output or socket error.
#[derive(Parser)]
#[command(name = "sotif", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Md,
    Jsonl,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Md => ReportFormat::Md,
            Format::Jsonl => ReportFormat::Jsonl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write trace.csv, events.jsonl, record.csv and
    /// labels.json.
    Simulate {
        /// Simulation configuration (JSON, partial; missing keys use defaults).
        #[arg(long)]
        config: PathBuf,
        /// Driver specification (JSON).
        #[arg(long)]
        driver: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Seed of the detector noise; defaults to --seed.
        #[arg(long)]
        detector_seed: Option<u64>,
        /// Test-case number written to the record.
        #[arg(long, default_value_t = 1)]
        tc: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a test-case series and write records.csv, report.json, report.md
    /// and results.jsonl.
    RunSeries {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compute the probability report from a record table and label lines.
    Evaluate {
        #[arg(long)]
        records: PathBuf,
        /// JSON lines with TC and labels, e.g. results.jsonl.
        #[arg(long)]
        labels: PathBuf,
        /// JSON output; Markdown goes next to it with an .md extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a saved report.json in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve interactive sessions at ws://127.0.0.1:PORT/session.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// Base simulation configuration for every session.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory that accumulates records, labels and session logs.
        #[arg(long)]
        out: PathBuf,
        /// Directory with console assets served at /.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Wall-clock speed-up of the simulation.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate {
            config,
            driver,
            seed,
            detector_seed,
            tc,
            out,
        } => {
            commands::simulate(&SimulateArgs {
                config,
                driver,
                seed,
                detector_seed,
                tc,
                out,
            })?;
            Ok(exit::OK)
        }
        Command::RunSeries { series, out, jobs } => {
            match commands::run_series(&series, &out, jobs)? {
                Verdict::Pass => Ok(exit::OK),
                Verdict::Fail => Ok(exit::SERIES_FAIL),
            }
        }
        Command::Evaluate {
            records,
            labels,
            out,
        } => {
            commands::evaluate(&records, &labels, &out)?;
            Ok(exit::OK)
        }
        Command::Report { input, format, out } => {
            commands::report(&input, format.into(), out.as_deref())?;
            Ok(exit::OK)
        }
        Command::Serve {
            port,
            config,
            out,
            static_dir,
            time_scale,
        } => {
            if !(time_scale.is_finite() && time_scale > 0.0) {
                return Err(CliError::Invalid("--time-scale must be > 0".into()));
            }
            let base = match config {
                Some(path) => parse_sim_config(&std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Invalid(format!("cannot read {}: {e}", path.display()))
                })?)
                .map_err(|e| CliError::Invalid(e.to_string()))?,
                None => SimConfig::default(),
            };
            let options = ServeOptions {
                base,
                out,
                static_dir,
                time_scale,
            };
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::Invalid(format!("cannot start runtime: {e}")))?;
            runtime.block_on(async {
                let address = format!("127.0.0.1:{port}");
                let listener =
                    tokio::net::TcpListener::bind(&address)
                        .await
                        .map_err(|e| CliError::Io {
                            path: address.clone().into(),
                            source: e,
                        })?;
                eprintln!("serving sessions at ws://{address}/session");
                serve::serve(listener, options)
                    .await
                    .map_err(|e| CliError::Io {
                        path: address.into(),
                        source: e,
                    })
            })?;
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
