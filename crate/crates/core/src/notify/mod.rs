//! Per-contributor digests: building, rendering, and delivery.

mod dispatch;
pub(crate) mod render;
mod report;

pub use dispatch::{
    DispatchLedger, DispatchMode, DispatchRecord, DispatchStatus, DispatchSummary, Dispatcher,
    FailedMessage, MailSecurity, MailSettings, MessageSink, OutboxSink, SmtpSink,
};
pub use render::{
    outbox_file_name, recipient_hash, Mailbox, MessageTemplate, RenderedEmail, Renderer,
    TemplateError, Templates, DEFAULT_PREAMBLE, DEFAULT_SUBJECT,
};
pub use report::{build_reports, HugReport, ReportSegment};

#[derive(Debug, thiserror::Error)]
pub enum NotifyError {
    #[error("notification configuration error: {0}")]
    Config(String),
    #[error("outbox {path} is not writable: {source}")]
    OutboxUnwritable {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("dispatch ledger error: {0}")]
    Ledger(#[from] std::io::Error),
    #[error(transparent)]
    Template(#[from] TemplateError),
}
