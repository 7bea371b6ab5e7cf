//! Command-line entry point.
//!
//! Output goes to stdout as JSON (or a text table where asked). Failures
//! print one JSON line on stderr and exit with 1, or 2 for configuration
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kudos::config::{ConfigError, ServiceConfig};
use kudos::insights::{deployment_summary, package_stats, render_deployment_summary, render_package_stats};
use kudos::ledger::Ledger;
use kudos::notify::DispatchMode;
use kudos::pipeline::{self, PipelineError};
use kudos::scanner::{Scanner, SourceDocument, UsageAnchor};
use kudos::window::{parse_instant, TimeWindow};
use kudos::{Ecosystem, Language};

const WINDOW_FILE: &str = "window.json";

#[derive(Parser)]
#[command(name = "kudos", version, about = "Thank the people behind the packages you use")]
struct Cli {
    /// TOML configuration file
    #[arg(long, short, global = true, env = "KUDOS_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the thankable lines of source files
    Scan {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Override the language inferred from the extension
        #[arg(long)]
        language: Option<String>,
    },
    /// Run the HTTP service
    Serve,
    /// Group ledger events into thanked objects
    Aggregate(WindowArgs),
    /// Resolve repositories and recent contributors for aggregated objects
    Attribute {
        /// Only list objects that need manual review
        #[arg(long)]
        review: bool,
    },
    /// Build digests and write them to the outbox or send them
    Notify {
        #[arg(long, conflicts_with = "send", required_unless_present = "send")]
        dry_run: bool,
        #[arg(long)]
        send: bool,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Thanks statistics for one package (`name`, `pypi:name`, or `npm:name`)
    Stats {
        package: String,
        #[arg(long)]
        ecosystem: Option<String>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Usage panels for the whole deployment
    Summary {
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Args, Default)]
struct WindowArgs {
    /// End of the window (RFC 3339 or YYYY-MM-DD); defaults to now
    #[arg(long)]
    window_end: Option<String>,
    /// Window length in days; defaults to the configured length
    #[arg(long)]
    window_days: Option<u32>,
    /// Ignore the window and use every event
    #[arg(long, conflicts_with_all = ["window_end", "window_days"])]
    all: bool,
}

impl WindowArgs {
    fn given(&self) -> bool {
        self.all || self.window_end.is_some() || self.window_days.is_some()
    }

    fn resolve(&self, config: &ServiceConfig) -> Result<TimeWindow, ConfigError> {
        if self.all {
            return Ok(TimeWindow::all());
        }
        let end = match &self.window_end {
            Some(s) => parse_instant(s).ok_or_else(|| ConfigError::Invalid(format!("cannot parse --window-end {s:?}")))?,
            None => Utc::now(),
        };
        let days = self.window_days.unwrap_or(config.window_days);
        if days == 0 {
            return Err(ConfigError::Invalid("--window-days must be greater than 0".into()));
        }
        Ok(TimeWindow::ending_at(end, days))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Serialize)]
struct ScannedFile<'a> {
    path: String,
    language: Language,
    anchors: &'a [UsageAnchor],
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Artifact {
        path: "stdout".into(),
        message: e.to_string(),
    })?;
    println!("{text}");
    Ok(())
}

fn io_error(path: PathBuf) -> impl FnOnce(std::io::Error) -> PipelineError {
    move |source| PipelineError::Io { path, source }
}

fn scan(config: &ServiceConfig, files: &[PathBuf], language: Option<&str>) -> Result<(), PipelineError> {
    let forced = language
        .map(|l| l.parse::<Language>().map_err(|e| ConfigError::Invalid(e.to_string())))
        .transpose()?;
    let scanner = Scanner::with_deny_list(pipeline::deny_list(config)?);
    for path in files {
        let language = forced.or_else(|| Language::from_path(path)).ok_or_else(|| {
            ConfigError::Invalid(format!("{}: unsupported file type", path.display()))
        })?;
        let text = std::fs::read(path).map_err(io_error(path.clone()))?;
        let mut doc = SourceDocument::new(language, String::from_utf8_lossy(&text).into_owned());
        doc.path_hint = Some(path.display().to_string());
        let anchors = scanner.scan(&doc);
        let line = serde_json::to_string(&ScannedFile {
            path: path.display().to_string(),
            language,
            anchors: &anchors,
        })
        .map_err(|e| PipelineError::Artifact {
            path: path.clone(),
            message: e.to_string(),
        })?;
        println!("{line}");
    }
    Ok(())
}

fn serve(config: &ServiceConfig) -> Result<(), PipelineError> {
    let addr = config.listen_addr().map_err(ConfigError::Invalid)?;
    let ledger = Arc::new(Ledger::open(&config.ledger_path)?);
    let scanner = Scanner::with_deny_list(pipeline::deny_list(config)?);
    let state = kudos::server::AppState::new(ledger, scanner, config.public_url.clone());
    let app = kudos::server::router(state, config.body_limit_bytes);
    let runtime = tokio::runtime::Runtime::new().map_err(io_error("tokio runtime".into()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(io_error(PathBuf::from(addr.to_string())))?;
        tracing::info!(%addr, "listening");
        kudos::server::serve(listener, app)
            .await
            .map_err(io_error(PathBuf::from(addr.to_string())))
    })
}

/// Window for `notify`: explicit flags win, otherwise the one `aggregate`
/// recorded, so both stages agree without repeating flags.
fn notify_window(config: &ServiceConfig, args: &WindowArgs) -> Result<TimeWindow, PipelineError> {
    if args.given() {
        return Ok(args.resolve(config)?);
    }
    let path = config.state_dir.join(WINDOW_FILE);
    if path.exists() {
        return pipeline::read_json(&path);
    }
    Ok(args.resolve(config)?)
}

fn split_package(spec: &str, flag: Option<&str>) -> Result<(Ecosystem, String), ConfigError> {
    let (eco, name) = match (flag, spec.split_once(':')) {
        (Some(f), _) => (f.to_string(), spec.to_string()),
        (None, Some((e, n))) => (e.to_string(), n.to_string()),
        (None, None) if spec.starts_with('@') => ("npm".into(), spec.to_string()),
        (None, None) => ("pypi".into(), spec.to_string()),
    };
    let eco = eco.parse::<Ecosystem>().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok((eco, name))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = ServiceConfig::load(cli.config.as_deref(), std::env::vars())?;
    config.prepare_dirs()?;
    match cli.command {
        Command::Scan { files, language } => scan(&config, &files, language.as_deref()),
        Command::Serve => serve(&config),
        Command::Aggregate(args) => {
            let window = args.resolve(&config)?;
            let objects = pipeline::aggregate(&config, &window)?;
            pipeline::write_json(&config.state_dir.join(WINDOW_FILE), &window)?;
            print_json(&objects)
        }
        Command::Attribute { review } => {
            let results = pipeline::attribute(&config)?;
            if review {
                let pending: Vec<_> = results.iter().filter(|r| r.needs_review()).collect();
                print_json(&pending)
            } else {
                print_json(&results)
            }
        }
        Command::Notify { dry_run, send, window } => {
            let mode = match (dry_run, send) {
                (_, true) => DispatchMode::Send,
                _ => DispatchMode::DryRun,
            };
            let window = notify_window(&config, &window)?;
            let outcome = pipeline::notify(&config, window, mode)?;
            print_json(&outcome.summary)?;
            if outcome.summary.failed.is_empty() {
                Ok(())
            } else {
                Err(PipelineError::Artifact {
                    path: pipeline::dispatch_ledger_path(&config, mode),
                    message: format!("{} message(s) failed; rerun to retry them", outcome.summary.failed.len()),
                })
            }
        }
        Command::Stats {
            package,
            ecosystem,
            window,
            format,
        } => {
            let (eco, name) = split_package(&package, ecosystem.as_deref())?;
            let window = if window.given() { window.resolve(&config)? } else { TimeWindow::all() };
            let ledger = Ledger::open(&config.ledger_path)?;
            let stats = package_stats(&ledger.snapshot(), eco, &name, &window);
            match format {
                Format::Json => print_json(&stats),
                Format::Text => {
                    print!("{}", render_package_stats(&stats));
                    Ok(())
                }
            }
        }
        Command::Summary { window, format } => {
            let window = if window.given() { window.resolve(&config)? } else { TimeWindow::all() };
            let ledger = Ledger::open(&config.ledger_path)?;
            let summary = deployment_summary(&ledger.snapshot(), &window);
            match format {
                Format::Json => print_json(&summary),
                Format::Text => {
                    print!("{}", render_deployment_summary(&summary));
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("KUDOS_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let line = serde_json::json!({"error": "usage", "message": e.kind().to_string(), "detail": e.to_string()});
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
