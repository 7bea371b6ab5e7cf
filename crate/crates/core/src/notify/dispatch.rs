use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{outbox_file_name, RenderedEmail, Renderer};
use super::report::HugReport;
use super::NotifyError;
use crate::attribution::history::normalize_email;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchMode {
    DryRun,
    Send,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchStatus {
    Delivered,
    Failed,
}

/// One line of the idempotency ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub contributor_email: String,
    pub window: String,
    pub status: DispatchStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Append-only JSONL record of delivery attempts, keyed by
/// (normalized email, window stamp). The last record for a key wins.
pub struct DispatchLedger {
    file: Mutex<File>,
    state: Mutex<HashMap<(String, String), DispatchStatus>>,
}

impl DispatchLedger {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut state = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                // a torn last line from a crash is an attempt we never finished
                let Ok(record) = serde_json::from_str::<DispatchRecord>(&line) else {
                    continue;
                };
                state.insert((record.contributor_email, record.window), record.status);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(DispatchLedger {
            file: Mutex::new(file),
            state: Mutex::new(state),
        })
    }

    pub fn is_delivered(&self, email: &str, window: &str) -> bool {
        self.state.lock().get(&(normalize_email(email), window.to_string()))
            == Some(&DispatchStatus::Delivered)
    }

    pub fn record(&self, record: DispatchRecord) -> std::io::Result<()> {
        let mut record = record;
        record.contributor_email = normalize_email(&record.contributor_email);
        let mut line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock();
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        self.state
            .lock()
            .insert((record.contributor_email, record.window), record.status);
        Ok(())
    }
}

/// Where rendered messages go.
pub trait MessageSink: Send + Sync {
    fn mode(&self) -> DispatchMode;
    /// Checked once before anything is rendered; errors abort the batch.
    fn prepare(&self) -> Result<(), NotifyError> {
        Ok(())
    }
    fn deliver(&self, file_name: &str, email: &RenderedEmail) -> Result<(), String>;
}

/// Writes each message as an `.eml` file and sends nothing.
pub struct OutboxSink {
    dir: PathBuf,
}

impl OutboxSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutboxSink { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl MessageSink for OutboxSink {
    fn mode(&self) -> DispatchMode {
        DispatchMode::DryRun
    }

    fn prepare(&self) -> Result<(), NotifyError> {
        let unwritable = |source| NotifyError::OutboxUnwritable {
            path: self.dir.clone(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(unwritable)?;
        let probe = self.dir.join(".write-probe");
        fs::write(&probe, b"").map_err(unwritable)?;
        fs::remove_file(&probe).map_err(unwritable)
    }

    fn deliver(&self, file_name: &str, email: &RenderedEmail) -> Result<(), String> {
        crate::pipeline::write_atomic(&self.dir.join(file_name), email.raw.as_bytes())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MailSecurity {
    /// Implicit TLS, usually port 465.
    Tls,
    #[default]
    StartTls,
    /// Plain text. Only for local relays and tests.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MailSettings {
    pub host: String,
    #[serde(default)]
    pub port: Option<u16>,
    #[serde(default)]
    pub security: MailSecurity,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
}

/// Submits messages to an SMTP server.
pub struct SmtpSink {
    transport: lettre::SmtpTransport,
    from: lettre::Address,
}

impl SmtpSink {
    pub fn new(settings: &MailSettings, from: &str) -> Result<Self, NotifyError> {
        use lettre::transport::smtp::authentication::Credentials;
        use lettre::SmtpTransport;

        if settings.host.trim().is_empty() {
            return Err(NotifyError::Config("mail host is empty".into()));
        }
        let config = |e: lettre::transport::smtp::Error| NotifyError::Config(e.to_string());
        let mut builder = match settings.security {
            MailSecurity::Tls => SmtpTransport::relay(&settings.host).map_err(config)?,
            MailSecurity::StartTls => SmtpTransport::starttls_relay(&settings.host).map_err(config)?,
            MailSecurity::None => SmtpTransport::builder_dangerous(&settings.host),
        };
        if let Some(port) = settings.port {
            builder = builder.port(port);
        }
        match (&settings.username, &settings.password) {
            (Some(u), Some(p)) => builder = builder.credentials(Credentials::new(u.clone(), p.clone())),
            (None, None) => {}
            _ => return Err(NotifyError::Config("mail username and password must be set together".into())),
        }
        let from = from
            .parse()
            .map_err(|e| NotifyError::Config(format!("sender address {from:?}: {e}")))?;
        Ok(SmtpSink {
            transport: builder.build(),
            from,
        })
    }
}

impl MessageSink for SmtpSink {
    fn mode(&self) -> DispatchMode {
        DispatchMode::Send
    }

    fn deliver(&self, _file_name: &str, email: &RenderedEmail) -> Result<(), String> {
        use lettre::Transport;

        let to: lettre::Address = email.recipient.email.parse().map_err(|e| format!("{e}"))?;
        let envelope = lettre::address::Envelope::new(Some(self.from.clone()), vec![to])
            .map_err(|e| e.to_string())?;
        self.transport
            .send_raw(&envelope, email.raw.as_bytes())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedMessage {
    pub contributor_email: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchSummary {
    pub mode: DispatchMode,
    pub written: usize,
    pub sent: usize,
    /// Recipients already delivered for this window by an earlier run.
    pub skipped: usize,
    pub failed: Vec<FailedMessage>,
}

pub struct Dispatcher {
    renderer: Renderer,
    sink: Box<dyn MessageSink>,
    ledger: DispatchLedger,
    parallelism: usize,
}

impl Dispatcher {
    pub fn new(renderer: Renderer, sink: Box<dyn MessageSink>, ledger: DispatchLedger) -> Self {
        Dispatcher {
            renderer,
            sink,
            ledger,
            parallelism: 2,
        }
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn ledger(&self) -> &DispatchLedger {
        &self.ledger
    }

    /// Renders and delivers every report not yet delivered for its window.
    ///
    /// A failing message is recorded and the batch moves on. Only setup
    /// problems, such as an unwritable outbox or ledger, are returned as
    /// errors.
    pub fn dispatch(&self, reports: &[HugReport]) -> Result<DispatchSummary, NotifyError> {
        self.sink.prepare()?;
        let mode = self.sink.mode();
        let mut seen = std::collections::HashSet::new();
        for r in reports {
            if !seen.insert((r.recipient_key(), r.window.stamp())) {
                return Err(NotifyError::Config(format!(
                    "two reports for {} in one window",
                    r.contributor_email
                )));
            }
        }

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| NotifyError::Config(e.to_string()))?;
        let outcomes: Vec<Result<Outcome, std::io::Error>> = pool.install(|| {
            reports
                .par_iter()
                .map(|report| self.dispatch_one(report))
                .collect()
        });

        let mut summary = DispatchSummary {
            mode,
            written: 0,
            sent: 0,
            skipped: 0,
            failed: Vec::new(),
        };
        for outcome in outcomes {
            match outcome? {
                Outcome::Skipped => summary.skipped += 1,
                Outcome::Delivered => match mode {
                    DispatchMode::DryRun => summary.written += 1,
                    DispatchMode::Send => summary.sent += 1,
                },
                Outcome::Failed(f) => summary.failed.push(f),
            }
        }
        summary.failed.sort_by(|a, b| a.contributor_email.cmp(&b.contributor_email));
        Ok(summary)
    }

    fn dispatch_one(&self, report: &HugReport) -> Result<Outcome, std::io::Error> {
        let window = report.window.stamp();
        if self.ledger.is_delivered(&report.contributor_email, &window) {
            return Ok(Outcome::Skipped);
        }
        let email = self.renderer.render_email(report);
        let result = self.sink.deliver(&outbox_file_name(report), &email);
        let (status, error) = match &result {
            Ok(()) => (DispatchStatus::Delivered, None),
            Err(e) => (DispatchStatus::Failed, Some(e.clone())),
        };
        self.ledger.record(DispatchRecord {
            contributor_email: report.contributor_email.clone(),
            window,
            status,
            error,
        })?;
        Ok(match result {
            Ok(()) => Outcome::Delivered,
            Err(error) => {
                tracing::warn!(recipient = %report.contributor_email, %error, "delivery failed");
                Outcome::Failed(FailedMessage {
                    contributor_email: report.contributor_email.clone(),
                    error,
                })
            }
        })
    }
}

enum Outcome {
    Skipped,
    Delivered,
    Failed(FailedMessage),
}
