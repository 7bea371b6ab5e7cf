use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ThanksEvent;
use crate::language::{Language, Scope, Target};
use crate::window::TimeWindow;

pub const DEFAULT_LINE_BUCKET: u32 = 10;

/// Identity of a thanked object: the language plus the trimmed line text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectKey {
    pub language: Language,
    pub line: String,
}

impl ObjectKey {
    pub fn of(event: &ThanksEvent) -> Self {
        ObjectKey {
            language: event.language,
            line: normalize_line(&event.line_text),
        }
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.language, self.line)
    }
}

pub fn normalize_line(text: &str) -> String {
    text.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThankedObject {
    pub object_key: ObjectKey,
    pub display_line: String,
    /// Scope of the earliest event for this line.
    pub scope: Scope,
    pub count: u32,
    pub notes: Vec<String>,
    pub targets: Vec<Target>,
}

fn replay_order(events: &[ThanksEvent], window: &TimeWindow) -> Vec<ThanksEvent> {
    let mut in_window: Vec<ThanksEvent> = events
        .iter()
        .filter(|e| window.contains(e.timestamp))
        .cloned()
        .collect();
    in_window.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.event_id.cmp(&b.event_id))
    });
    in_window
}

/// Partitions the in-window events by [`ObjectKey`].
///
/// Output is independent of the order of `events`: objects are sorted by key
/// and notes and targets follow `(timestamp, event_id)` order.
pub fn aggregate_objects(events: &[ThanksEvent], window: &TimeWindow) -> Vec<ThankedObject> {
    let mut objects: BTreeMap<ObjectKey, ThankedObject> = BTreeMap::new();
    for event in replay_order(events, window) {
        let key = ObjectKey::of(&event);
        let obj = objects.entry(key.clone()).or_insert_with(|| ThankedObject {
            display_line: key.line.clone(),
            object_key: key,
            scope: event.scope,
            count: 0,
            notes: Vec::new(),
            targets: Vec::new(),
        });
        obj.count += 1;
        if let Some(note) = event.note {
            obj.notes.push(note);
        }
        for t in event.targets {
            if !obj.targets.contains(&t) {
                obj.targets.push(t);
            }
        }
    }
    objects.into_values().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallationCounts {
    pub thanks: u32,
    pub notes: u32,
}

/// Import-line thanks (package or member scope) versus everything else.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeSplit {
    pub import: u32,
    pub other: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineBucket {
    pub first_line: u32,
    pub last_line: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub window: TimeWindow,
    pub total_thanks: u32,
    pub noted_thanks: u32,
    pub per_installation: BTreeMap<String, InstallationCounts>,
    pub split: ScopeSplit,
    /// Thanks by line number, in contiguous buckets starting at line 1.
    pub line_histogram: Vec<LineBucket>,
}

pub fn usage_summary(events: &[ThanksEvent], window: &TimeWindow, bucket: u32) -> UsageSummary {
    let bucket = bucket.max(1);
    let mut summary = UsageSummary {
        window: *window,
        total_thanks: 0,
        noted_thanks: 0,
        per_installation: BTreeMap::new(),
        split: ScopeSplit::default(),
        line_histogram: Vec::new(),
    };
    let mut counts: Vec<u32> = Vec::new();
    for e in events.iter().filter(|e| window.contains(e.timestamp)) {
        summary.total_thanks += 1;
        let inst = summary
            .per_installation
            .entry(e.installation_id.clone())
            .or_default();
        inst.thanks += 1;
        if e.note.is_some() {
            summary.noted_thanks += 1;
            inst.notes += 1;
        }
        if e.scope.is_import() {
            summary.split.import += 1;
        } else {
            summary.split.other += 1;
        }
        let idx = ((e.line_number.max(1) - 1) / bucket) as usize;
        if counts.len() <= idx {
            counts.resize(idx + 1, 0);
        }
        counts[idx] += 1;
    }
    summary.line_histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| LineBucket {
            first_line: i as u32 * bucket + 1,
            last_line: (i as u32 + 1) * bucket,
            count,
        })
        .collect();
    summary
}
