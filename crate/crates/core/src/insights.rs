//! Aggregate statistics, badge documents, and deployment summaries.
//!
//! Everything here is recomputed from a slice of ledger events. Nothing
//! published at package level identifies an installation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attribution::registry::distribution_name;
use crate::language::{Ecosystem, Scope, Target};
use crate::ledger::{usage_summary, LineBucket, ObjectKey, ScopeSplit, ThanksEvent, DEFAULT_LINE_BUCKET};
use crate::window::TimeWindow;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeBreakdown {
    pub package: u32,
    pub member: u32,
    pub call_site: u32,
}

impl ScopeBreakdown {
    pub fn total(&self) -> u32 {
        self.package + self.member + self.call_site
    }

    fn bump(&mut self, scope: Scope) {
        match scope {
            Scope::Package => self.package += 1,
            Scope::Member => self.member += 1,
            Scope::CallSite => self.call_site += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageStats {
    pub ecosystem: Ecosystem,
    pub package_name: String,
    pub total_thanks: u32,
    pub unique_objects: u32,
    pub noted_thanks: u32,
    pub scope_breakdown: ScopeBreakdown,
    pub window: TimeWindow,
}

/// Whether `target` names `package`. PyPI names also match through their
/// normalized distribution name, so `cv2` and `opencv-python` agree.
pub fn target_matches(ecosystem: Ecosystem, target: &Target, package: &str) -> bool {
    match ecosystem {
        Ecosystem::Npm => target.package == package,
        Ecosystem::PyPI => {
            target.package == package || distribution_name(&target.package) == distribution_name(package)
        }
    }
}

/// Counts the in-window events whose language belongs to `ecosystem` and
/// whose targets name `package`. Unknown packages give zeroed stats.
pub fn package_stats(
    events: &[ThanksEvent],
    ecosystem: Ecosystem,
    package: &str,
    window: &TimeWindow,
) -> PackageStats {
    let mut stats = PackageStats {
        ecosystem,
        package_name: package.to_string(),
        total_thanks: 0,
        unique_objects: 0,
        noted_thanks: 0,
        scope_breakdown: ScopeBreakdown::default(),
        window: *window,
    };
    let mut objects = BTreeSet::new();
    let relevant = events.iter().filter(|e| {
        window.contains(e.timestamp)
            && ecosystem.includes(e.language)
            && e.targets.iter().any(|t| target_matches(ecosystem, t, package))
    });
    for e in relevant {
        stats.total_thanks += 1;
        stats.scope_breakdown.bump(e.scope);
        if e.note.is_some() {
            stats.noted_thanks += 1;
        }
        objects.insert(ObjectKey::of(e));
    }
    stats.unique_objects = objects.len() as u32;
    stats
}

/// Endpoint document understood by shields-style badge renderers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BadgePayload {
    #[serde(rename = "schemaVersion")]
    pub schema_version: u32,
    pub label: String,
    pub message: String,
}

pub fn badge_payload(events: &[ThanksEvent], ecosystem: Ecosystem, package: &str) -> BadgePayload {
    let total = package_stats(events, ecosystem, package, &TimeWindow::all()).total_thanks;
    BadgePayload {
        schema_version: 1,
        label: "thanks".into(),
        message: total.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallationPanel {
    /// Ordinal label such as `installation-01`; never the real id.
    pub label: String,
    pub thanks: u32,
    pub notes: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub window: TimeWindow,
    pub total_thanks: u32,
    pub noted_thanks: u32,
    pub installations: Vec<InstallationPanel>,
    pub split: ScopeSplit,
    pub line_histogram: Vec<LineBucket>,
}

/// Usage panels for a window: thanks and notes per installation, the
/// import/other split, and a line-position histogram.
///
/// Installations are ranked by thanks, then notes, and relabelled by rank.
/// Ties are broken by a hash of the id so the ranking stays stable without
/// ordering by the id itself.
pub fn deployment_summary(events: &[ThanksEvent], window: &TimeWindow) -> DeploymentSummary {
    use sha2::{Digest, Sha256};

    let usage = usage_summary(events, window, DEFAULT_LINE_BUCKET);
    let mut ranked: Vec<(u32, u32, Vec<u8>)> = usage
        .per_installation
        .iter()
        .map(|(id, c)| (c.thanks, c.notes, Sha256::digest(id.as_bytes()).to_vec()))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    let width = ranked.len().to_string().len().max(2);
    let installations = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (thanks, notes, _))| InstallationPanel {
            label: format!("installation-{:0width$}", i + 1),
            thanks,
            notes,
        })
        .collect();
    DeploymentSummary {
        window: usage.window,
        total_thanks: usage.total_thanks,
        noted_thanks: usage.noted_thanks,
        installations,
        split: usage.split,
        line_histogram: usage.line_histogram,
    }
}

fn window_label(w: &TimeWindow) -> String {
    if *w == TimeWindow::all() {
        return "all time".into();
    }
    format!("{} .. {}", w.start.to_rfc3339(), w.end.to_rfc3339())
}

fn table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<width$}  {v}");
    }
    out
}

pub fn render_package_stats(stats: &PackageStats) -> String {
    table(&[
        ("package".into(), format!("{}:{}", stats.ecosystem, stats.package_name)),
        ("window".into(), window_label(&stats.window)),
        ("thanks".into(), stats.total_thanks.to_string()),
        ("objects".into(), stats.unique_objects.to_string()),
        ("with notes".into(), stats.noted_thanks.to_string()),
        ("package scope".into(), stats.scope_breakdown.package.to_string()),
        ("member scope".into(), stats.scope_breakdown.member.to_string()),
        ("call-site scope".into(), stats.scope_breakdown.call_site.to_string()),
    ])
}

pub fn render_deployment_summary(summary: &DeploymentSummary) -> String {
    let mut out = table(&[
        ("window".into(), window_label(&summary.window)),
        ("thanks".into(), summary.total_thanks.to_string()),
        ("with notes".into(), summary.noted_thanks.to_string()),
        ("installations".into(), summary.installations.len().to_string()),
        ("import lines".into(), summary.split.import.to_string()),
        ("other lines".into(), summary.split.other.to_string()),
    ]);
    out.push_str("\ninstallation      thanks  notes\n");
    for p in &summary.installations {
        let _ = writeln!(out, "{:<16}  {:>6}  {:>5}", p.label, p.thanks, p.notes);
    }
    out.push_str("\nlines       thanks\n");
    let peak = summary.line_histogram.iter().map(|b| b.count).max().unwrap_or(0).max(1);
    for b in &summary.line_histogram {
        let bar = "#".repeat((b.count * 40).div_ceil(peak) as usize);
        let _ = writeln!(out, "{:>4}-{:<5}  {:>6}  {bar}", b.first_line, b.last_line, b.count);
    }
    out
}

/// Per-object thanks grouped by package, for reports that want more detail
/// than [`PackageStats`].
pub fn objects_by_package(events: &[ThanksEvent], window: &TimeWindow) -> BTreeMap<String, BTreeMap<String, u32>> {
    let mut out: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for e in events.iter().filter(|e| window.contains(e.timestamp)) {
        let packages: BTreeSet<&str> = e.targets.iter().map(|t| t.package.as_str()).collect();
        let key = ObjectKey::of(e).to_string();
        for p in packages {
            *out.entry(p.to_string()).or_default().entry(key.clone()).or_default() += 1;
        }
    }
    out
}
