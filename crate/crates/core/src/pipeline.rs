//! Batch stages and their on-disk artifacts.
//!
//! `aggregate` reads the ledger and writes `objects.json`; `attribute` reads
//! that and writes `attributions.json`; `notify` reads both, writes
//! `reports.json`, and hands the reports to a dispatcher. All artifacts live
//! in the configured state directory and are pretty-printed JSON so two runs
//! over the same inputs produce identical bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::attribution::{
    AttributionCache, AttributionResult, Attributor, FixtureHistorySource, FixtureRegistry,
    GitCloneSource, HistorySource, HttpRegistry, MetadataSource, OverrideMap, RetryPolicy,
};
use crate::config::{ConfigError, ServiceConfig};
use crate::ledger::{Ledger, LedgerError, ThankedObject};
use crate::notify::{
    build_reports, DispatchLedger, DispatchMode, DispatchSummary, Dispatcher, HugReport, Mailbox,
    MessageSink, NotifyError, OutboxSink, Renderer, SmtpSink, Templates, DEFAULT_PREAMBLE,
};
use crate::scanner::DenyList;
use crate::window::TimeWindow;

pub const OBJECTS_FILE: &str = "objects.json";
pub const ATTRIBUTIONS_FILE: &str = "attributions.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const CACHE_FILE: &str = "attribution-cache.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Notify(#[from] NotifyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

impl PipelineError {
    /// Configuration problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Notify(NotifyError::Config(_) | NotifyError::Template(_)) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            _ => "runtime",
        }
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_data()?;
    }
    std::fs::rename(&tmp, path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn deny_list(config: &ServiceConfig) -> Result<DenyList, ConfigError> {
    match &config.deny_list_path {
        Some(p) => Ok(DenyList::parse(&read_text(p)?)),
        None => Ok(DenyList::default()),
    }
}

pub fn overrides(config: &ServiceConfig) -> Result<OverrideMap, ConfigError> {
    match &config.overrides_path {
        Some(p) => Ok(OverrideMap::parse(&read_text(p)?)),
        None => Ok(OverrideMap::default()),
    }
}

pub fn templates(config: &ServiceConfig) -> Result<Templates, NotifyError> {
    match &config.templates_dir {
        Some(dir) => Ok(Templates::load_dir(dir, config.mail_subject.clone())?),
        None => {
            let mut t = Templates::builtin();
            if let Some(s) = &config.mail_subject {
                t.subject = s.clone();
            }
            Ok(t)
        }
    }
}

pub fn preamble(config: &ServiceConfig) -> Result<String, ConfigError> {
    match &config.preamble_path {
        Some(p) => read_text(p),
        None => Ok(DEFAULT_PREAMBLE.to_string()),
    }
}

/// Builds an attributor from configuration, preferring fixture sources when
/// they are configured so the whole pipeline can run offline.
pub fn attributor(config: &ServiceConfig) -> Result<Attributor, PipelineError> {
    let registry: Box<dyn MetadataSource> = match &config.registry_fixture_dir {
        Some(dir) => Box::new(FixtureRegistry::new(dir)),
        None => Box::new(
            HttpRegistry::new(&config.pypi_url_template, &config.npm_url_template)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
        ),
    };
    let history: Box<dyn HistorySource> = match &config.history_fixture_dir {
        Some(dir) => Box::new(FixtureHistorySource::new(dir)),
        None => Box::new(GitCloneSource::new(&config.clone_cache_dir, config.clone_missing)),
    };
    let cache_path = config.state_dir.join(CACHE_FILE);
    let cache = AttributionCache::load(&cache_path).map_err(|source| PipelineError::Io {
        path: cache_path,
        source,
    })?;
    let retry = RetryPolicy {
        attempts: config.retry_attempts.max(1),
        ..RetryPolicy::default()
    };
    Ok(Attributor::new(registry, history)
        .with_overrides(overrides(config)?)
        .with_cache(cache)
        .with_retry(retry)
        .with_parallelism(config.attribute_parallelism))
}

pub fn aggregate(config: &ServiceConfig, window: &TimeWindow) -> Result<Vec<ThankedObject>, PipelineError> {
    let ledger = Ledger::open(&config.ledger_path)?;
    let objects = ledger.aggregate_objects(window);
    write_json(&config.state_dir.join(OBJECTS_FILE), &objects)?;
    Ok(objects)
}

pub fn attribute(config: &ServiceConfig) -> Result<Vec<AttributionResult>, PipelineError> {
    let objects: Vec<ThankedObject> = read_json(&config.state_dir.join(OBJECTS_FILE))?;
    let attributor = attributor(config)?;
    let results = attributor.attribute_all(&objects);
    let cache_path = config.state_dir.join(CACHE_FILE);
    attributor.cache().save(&cache_path).map_err(|source| PipelineError::Io {
        path: cache_path,
        source,
    })?;
    write_json(&config.state_dir.join(ATTRIBUTIONS_FILE), &results)?;
    Ok(results)
}

pub fn dispatch_ledger_path(config: &ServiceConfig, mode: DispatchMode) -> PathBuf {
    config.state_dir.join(match mode {
        DispatchMode::DryRun => "dispatch-dry-run.jsonl",
        DispatchMode::Send => "dispatch-send.jsonl",
    })
}

/// Builds the sink for `mode`. Send without mail settings is a
/// configuration error.
pub fn sink(config: &ServiceConfig, mode: DispatchMode) -> Result<Box<dyn MessageSink>, NotifyError> {
    match mode {
        DispatchMode::DryRun => Ok(Box::new(OutboxSink::new(&config.outbox_dir))),
        DispatchMode::Send => {
            let settings = config
                .mail
                .as_ref()
                .ok_or_else(|| NotifyError::Config("send mode needs a mail transport ([mail] or KUDOS_MAIL_HOST)".into()))?;
            Ok(Box::new(SmtpSink::new(settings, &config.mail_from)?))
        }
    }
}

pub struct NotifyOutcome {
    pub reports: Vec<HugReport>,
    pub summary: DispatchSummary,
}

/// Builds reports from the stored artifacts and dispatches them. Templates
/// and transport are validated before anything is written.
pub fn notify(config: &ServiceConfig, window: TimeWindow, mode: DispatchMode) -> Result<NotifyOutcome, PipelineError> {
    let templates = templates(config)?;
    let preamble = preamble(config)?;
    let sink = sink(config, mode)?;
    let objects: Vec<ThankedObject> = read_json(&config.state_dir.join(OBJECTS_FILE))?;
    let attributions: Vec<AttributionResult> = read_json(&config.state_dir.join(ATTRIBUTIONS_FILE))?;

    let reports = build_reports(&attributions, &objects, window, &preamble);
    write_json(&config.state_dir.join(REPORTS_FILE), &reports)?;

    let ledger_path = dispatch_ledger_path(config, mode);
    let ledger = DispatchLedger::open(&ledger_path).map_err(|source| PipelineError::Io {
        path: ledger_path,
        source,
    })?;
    let renderer = Renderer::new(templates, Mailbox::new("", config.mail_from.clone()));
    let summary = Dispatcher::new(renderer, sink, ledger)
        .with_parallelism(config.dispatch_parallelism)
        .dispatch(&reports)?;
    Ok(NotifyOutcome { reports, summary })
}
