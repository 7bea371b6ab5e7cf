//! Append-only record of thanks events.
//!
//! Events are stored one JSON document per line. A note attached after the
//! fact is persisted by appending the same event again with its `note` set;
//! readers keep the last record per `event_id`. Nothing is ever rewritten.

mod aggregate;
mod store;

pub use aggregate::{
    aggregate_objects, usage_summary, InstallationCounts, LineBucket, ObjectKey, ScopeSplit,
    ThankedObject, UsageSummary, DEFAULT_LINE_BUCKET,
};
pub use store::{Durability, Ledger};

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::language::{Language, Scope, Target};

pub const MAX_NOTE_CHARS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub String);

impl EventId {
    pub fn generate() -> Self {
        EventId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One recorded thanks. Field order here is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThanksEvent {
    pub event_id: EventId,
    pub installation_id: String,
    pub timestamp: DateTime<Utc>,
    pub language: Language,
    pub line_number: u32,
    pub line_text: String,
    pub scope: Scope,
    pub targets: Vec<Target>,
    pub note: Option<String>,
}

/// A thanks that has not been assigned an id yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThanksDraft {
    pub installation_id: String,
    pub timestamp: DateTime<Utc>,
    pub language: Language,
    pub line_number: u32,
    pub line_text: String,
    pub scope: Scope,
    pub targets: Vec<Target>,
    #[serde(default)]
    pub note: Option<String>,
}

impl ThanksDraft {
    pub fn into_event(self, event_id: EventId) -> ThanksEvent {
        ThanksEvent {
            event_id,
            installation_id: self.installation_id,
            timestamp: self.timestamp,
            language: self.language,
            line_number: self.line_number,
            line_text: self.line_text,
            scope: self.scope,
            targets: self.targets,
            note: self.note,
        }
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        if self.installation_id.trim().is_empty() {
            errors.push(FieldError::new("installation_id", "must not be empty"));
        }
        if self.line_number == 0 {
            errors.push(FieldError::new("line_number", "must be 1 or greater"));
        }
        if self.line_text.trim().is_empty() {
            errors.push(FieldError::new("line_text", "must not be empty"));
        }
        if self.targets.is_empty() {
            errors.push(FieldError::new("targets", "must name at least one package"));
        } else if self.targets.iter().any(|t| t.package.trim().is_empty()) {
            errors.push(FieldError::new("targets", "package names must not be empty"));
        }
        if let Some(note) = &self.note {
            if let Err(e) = validate_note(note) {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

pub fn validate_note(note: &str) -> Result<(), FieldError> {
    if note.trim().is_empty() {
        return Err(FieldError::new("note", "must not be empty"));
    }
    if note.chars().count() > MAX_NOTE_CHARS {
        return Err(FieldError::new(
            "note",
            format!("must be at most {MAX_NOTE_CHARS} characters"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid event: {}", join_fields(.0))]
    Invalid(Vec<FieldError>),
    #[error("event {0} not found")]
    NotFound(EventId),
    #[error("event {0} already has a note")]
    Conflict(EventId),
    #[error("ledger storage unavailable: {0}")]
    Storage(#[from] std::io::Error),
    #[error("ledger record {line} is malformed: {reason}")]
    Corrupt { line: usize, reason: String },
}

impl LedgerError {
    /// Storage failures may succeed on retry; everything else will not.
    pub fn is_retriable(&self) -> bool {
        matches!(self, LedgerError::Storage(_))
    }
}

fn join_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
