use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::attribution::history::normalize_email;
use crate::attribution::AttributionResult;
use crate::ledger::{ObjectKey, ThankedObject};
use crate::window::TimeWindow;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSegment {
    pub object_key: ObjectKey,
    pub display_line: String,
    pub thanks_count: u32,
    pub notes: Vec<String>,
}

/// One digest for one contributor and one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HugReport {
    pub contributor_email: String,
    pub contributor_name: String,
    pub segments: Vec<ReportSegment>,
    pub window: TimeWindow,
    pub context_preamble: String,
}

impl HugReport {
    pub fn recipient_key(&self) -> String {
        normalize_email(&self.contributor_email)
    }
}

struct Pending<'a> {
    email: &'a str,
    name: &'a str,
    latest: chrono::DateTime<chrono::Utc>,
    objects: BTreeMap<&'a ObjectKey, &'a ThankedObject>,
}

/// Inverts object → contributors into contributor → objects.
///
/// Each contributor gets exactly one report holding one segment per distinct
/// object credited to them. Segments are ordered by descending count, then
/// by line text; reports by normalized email. Attributions whose object is
/// missing from `objects` are ignored.
pub fn build_reports(
    attributions: &[AttributionResult],
    objects: &[ThankedObject],
    window: TimeWindow,
    preamble: &str,
) -> Vec<HugReport> {
    let by_key: HashMap<&ObjectKey, &ThankedObject> =
        objects.iter().map(|o| (&o.object_key, o)).collect();
    let mut pending: BTreeMap<String, Pending<'_>> = BTreeMap::new();

    for attribution in attributions {
        let Some(object) = by_key.get(&attribution.object_key) else {
            tracing::warn!(key = %attribution.object_key, "attribution for unknown object");
            continue;
        };
        for c in &attribution.contributors {
            let entry = pending.entry(normalize_email(&c.email)).or_insert_with(|| Pending {
                email: &c.email,
                name: &c.display_name,
                latest: c.latest_commit_time,
                objects: BTreeMap::new(),
            });
            // the newest commit decides how the contributor is addressed
            if (c.latest_commit_time, std::cmp::Reverse(c.display_name.as_str()))
                > (entry.latest, std::cmp::Reverse(entry.name))
            {
                entry.email = &c.email;
                entry.name = &c.display_name;
                entry.latest = c.latest_commit_time;
            }
            entry.objects.insert(&object.object_key, object);
        }
    }

    pending
        .into_values()
        .map(|p| {
            let mut segments: Vec<ReportSegment> = p
                .objects
                .into_values()
                .map(|o| ReportSegment {
                    object_key: o.object_key.clone(),
                    display_line: o.display_line.clone(),
                    thanks_count: o.count,
                    notes: o.notes.clone(),
                })
                .collect();
            segments.sort_by(|a, b| {
                b.thanks_count
                    .cmp(&a.thanks_count)
                    .then_with(|| a.display_line.cmp(&b.display_line))
                    .then_with(|| a.object_key.cmp(&b.object_key))
            });
            HugReport {
                contributor_email: p.email.to_string(),
                contributor_name: p.name.to_string(),
                segments,
                window,
                context_preamble: preamble.to_string(),
            }
        })
        .collect()
}
