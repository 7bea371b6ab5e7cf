use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};

use super::{
    aggregate_objects, usage_summary, validate_note, EventId, LedgerError, ThankedObject,
    ThanksDraft, ThanksEvent, UsageSummary,
};
use crate::window::TimeWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fsync` after every record.
    #[default]
    Sync,
    /// Leave flushing to the OS.
    Buffered,
}

#[derive(Default)]
struct State {
    events: Vec<ThanksEvent>,
    index: HashMap<EventId, usize>,
}

type IdSource = Box<dyn Fn() -> EventId + Send + Sync>;

/// Thanks ledger backed by a newline-delimited record file, or by memory only.
///
/// Writers serialize on the append point; readers work from a cloned
/// snapshot of the event list.
pub struct Ledger {
    path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    state: RwLock<State>,
    durability: Durability,
    ids: IdSource,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .field("events", &self.state.read().events.len())
            .finish()
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            path: None,
            writer: Mutex::new(None),
            state: RwLock::new(State::default()),
            durability: Durability::Buffered,
            ids: Box::new(EventId::generate),
        }
    }

    /// Opens or creates the record file at `path` and replays it.
    ///
    /// A trailing record without its newline (a write interrupted by a crash)
    /// is truncated away before new records are appended.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < raw.len() {
            tracing::warn!(path = %path.display(), "dropping incomplete trailing ledger record");
            file.set_len(complete as u64)?;
            file.seek(SeekFrom::End(0))?;
        }
        let text = std::str::from_utf8(&raw[..complete]).map_err(|e| LedgerError::Corrupt {
            line: 0,
            reason: e.to_string(),
        })?;
        let events = replay(text)?;
        let mut state = State::default();
        for e in events {
            state.index.insert(e.event_id.clone(), state.events.len());
            state.events.push(e);
        }
        Ok(Ledger {
            path: Some(path),
            writer: Mutex::new(Some(file)),
            state: RwLock::new(state),
            durability: Durability::Sync,
            ids: Box::new(EventId::generate),
        })
    }

    pub fn with_durability(mut self, durability: Durability) -> Self {
        self.durability = durability;
        self
    }

    /// Replaces the id generator, e.g. with a counter for reproducible runs.
    pub fn with_id_source(mut self, ids: impl Fn() -> EventId + Send + Sync + 'static) -> Self {
        self.ids = Box::new(ids);
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn append(&self, writer: &mut Option<File>, event: &ThanksEvent) -> Result<(), LedgerError> {
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_vec(event).map_err(std::io::Error::other)?;
            line.push(b'\n');
            file.write_all(&line)?;
            if self.durability == Durability::Sync {
                file.sync_data()?;
            }
        }
        Ok(())
    }

    /// Validates and durably appends a new event, returning its id.
    pub fn record_thanks(&self, draft: ThanksDraft) -> Result<EventId, LedgerError> {
        draft.validate().map_err(LedgerError::Invalid)?;
        let mut writer = self.writer.lock();
        let mut id = (self.ids)();
        while self.state.read().index.contains_key(&id) {
            id = (self.ids)();
        }
        let event = draft.into_event(id.clone());
        self.append(&mut writer, &event)?;
        let mut state = self.state.write();
        let idx = state.events.len();
        state.index.insert(id.clone(), idx);
        state.events.push(event);
        Ok(id)
    }

    /// Attaches a personal note to an event that has none yet.
    pub fn attach_note(&self, id: &EventId, note: &str) -> Result<ThanksEvent, LedgerError> {
        validate_note(note).map_err(|e| LedgerError::Invalid(vec![e]))?;
        let mut writer = self.writer.lock();
        let mut updated = {
            let state = self.state.read();
            let idx = *state
                .index
                .get(id)
                .ok_or_else(|| LedgerError::NotFound(id.clone()))?;
            state.events[idx].clone()
        };
        if updated.note.is_some() {
            return Err(LedgerError::Conflict(id.clone()));
        }
        updated.note = Some(note.to_string());
        self.append(&mut writer, &updated)?;
        let mut state = self.state.write();
        let idx = state.index[id];
        state.events[idx] = updated.clone();
        Ok(updated)
    }

    pub fn get(&self, id: &EventId) -> Option<ThanksEvent> {
        let state = self.state.read();
        state.index.get(id).map(|&i| state.events[i].clone())
    }

    /// Consistent copy of every event, in append order.
    pub fn snapshot(&self) -> Vec<ThanksEvent> {
        self.state.read().events.clone()
    }

    pub fn len(&self) -> usize {
        self.state.read().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn events_in(&self, window: &TimeWindow) -> Vec<ThanksEvent> {
        self.state
            .read()
            .events
            .iter()
            .filter(|e| window.contains(e.timestamp))
            .cloned()
            .collect()
    }

    pub fn aggregate_objects(&self, window: &TimeWindow) -> Vec<ThankedObject> {
        aggregate_objects(&self.snapshot(), window)
    }

    pub fn usage_summary(&self, window: &TimeWindow) -> UsageSummary {
        usage_summary(&self.snapshot(), window, super::DEFAULT_LINE_BUCKET)
    }
}

/// Rebuilds the event list from record-file text.
pub fn replay(text: &str) -> Result<Vec<ThanksEvent>, LedgerError> {
    let mut events: Vec<ThanksEvent> = Vec::new();
    let mut index: HashMap<EventId, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: ThanksEvent = serde_json::from_str(line).map_err(|e| LedgerError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        match index.get(&event.event_id) {
            None => {
                index.insert(event.event_id.clone(), events.len());
                events.push(event);
            }
            Some(&idx) => {
                let existing = &mut events[idx];
                let same_body = ThanksEvent {
                    note: None,
                    ..event.clone()
                } == ThanksEvent {
                    note: None,
                    ..existing.clone()
                };
                if existing.note.is_some() || event.note.is_none() || !same_body {
                    return Err(LedgerError::Corrupt {
                        line: i + 1,
                        reason: format!("event {} repeated without a note enrichment", event.event_id),
                    });
                }
                existing.note = event.note;
            }
        }
    }
    Ok(events)
}
