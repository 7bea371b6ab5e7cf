//! One function per acceptance criterion. Each returns a short detail line
//! on success and a reason on failure.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use kudos::scanner::{scan, SourceDocument};
use kudos::{Language, Scope};

use super::oracle::{corpus_files, oracle_anchors, OracleAnchor, OracleScope};
use super::{check, check_eq};

pub type Outcome = Result<String, String>;

fn scanner_anchor_set(language: Language, text: &str) -> BTreeSet<OracleAnchor> {
    scan(&SourceDocument::new(language, text))
        .into_iter()
        .map(|a| OracleAnchor {
            line: a.line,
            scope: match a.scope {
                Scope::Package => OracleScope::Package,
                Scope::Member => OracleScope::Member,
                Scope::CallSite => OracleScope::CallSite,
            },
        })
        .collect()
}

pub const REFERENCE_LINES: [(&str, &str); 9] = [
    ("javascript", "import Quill from \"quill\";"),
    ("python", "from matplotlib import pyplot as plt"),
    ("python", "img = cv2.imread('watch.jpg',cv2.IMREAD_GRAYSCALE)"),
    ("python", "import pandas as pd"),
    ("python", "from numba import njit"),
    ("python", "from scipy import sparse as sps"),
    ("python", "from ultralytics import YOLO"),
    ("python", "import cv2"),
    ("typescript", "import * as ts from 'typescript';"),
];

pub fn scanner_oracle() -> Outcome {
    let started = Instant::now();
    let files = corpus_files();
    let mut per_language = std::collections::BTreeMap::new();
    for (lang, _) in &files {
        *per_language.entry(lang.clone()).or_insert(0) += 1;
    }
    for lang in ["python", "javascript", "typescript"] {
        check_eq(&format!("{lang} corpus size"), per_language.get(lang).copied(), Some(10))?;
    }
    let mut mismatches = Vec::new();
    let mut anchors = 0;
    let mut seen_reference_lines = BTreeSet::new();
    for (lang, path) in &files {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (i, (l, line)) in REFERENCE_LINES.iter().enumerate() {
            if l == lang && text.lines().any(|t| t == *line) {
                seen_reference_lines.insert(i);
            }
        }
        let language: Language = lang.parse().unwrap();
        let ours = scanner_anchor_set(language, &text);
        let theirs = oracle_anchors(lang, &text);
        anchors += ours.len();
        if ours != theirs {
            let only_ours: Vec<_> = ours.difference(&theirs).collect();
            let only_theirs: Vec<_> = theirs.difference(&ours).collect();
            mismatches.push(format!(
                "{}: scanner-only {only_ours:?}, oracle-only {only_theirs:?}",
                path.file_name().unwrap().to_string_lossy()
            ));
        }
    }
    check_eq("reference lines present in corpus", seen_reference_lines.len(), REFERENCE_LINES.len())?;
    if !mismatches.is_empty() {
        return Err(mismatches.join("; "));
    }
    let elapsed = started.elapsed();
    check(&format!("runtime {elapsed:?} over 5 s"), elapsed.as_secs_f64() < 5.0)?;
    Ok(format!("{} files, {anchors} anchors, 0 mismatches, {elapsed:.2?}", files.len()))
}

#[derive(Debug, serde::Deserialize)]
pub struct ScopeRow {
    pub language: String,
    pub context: Vec<String>,
    pub line: String,
    pub scope: Scope,
    pub targets: Vec<kudos::Target>,
    pub rule: String,
}

pub fn scope_rows() -> Vec<ScopeRow> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scope_table.json");
    serde_json::from_str(&std::fs::read_to_string(path).expect("scope table")).expect("scope table json")
}

pub fn scope_classification() -> Outcome {
    let rows = scope_rows();
    check_eq("scope table rows", rows.len(), REFERENCE_LINES.len())?;
    for row in &rows {
        check(
            &format!("{:?} is not a reference line", row.line),
            REFERENCE_LINES.iter().any(|(l, t)| *l == row.language && *t == row.line),
        )?;
        let mut text = row.context.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&row.line);
        let line_no = row.context.len() as u32 + 1;
        let anchors = scan(&SourceDocument::new(row.language.parse().unwrap(), text));
        let anchor = anchors
            .iter()
            .find(|a| a.line == line_no)
            .ok_or_else(|| format!("{:?}: no anchor", row.line))?;
        check_eq(&format!("scope of {:?}", row.line), anchor.scope, row.scope)?;
        check_eq(&format!("targets of {:?}", row.line), &anchor.targets, &row.targets)?;
    }
    let count = |s| rows.iter().filter(|r| r.scope == s).count();
    Ok(format!(
        "{} lines: {} package, {} member, {} call-site",
        rows.len(),
        count(Scope::Package),
        count(Scope::Member),
        count(Scope::CallSite)
    ))
}

fn synthetic_object(package: &str, scope: Scope, member: &[&str]) -> kudos::ledger::ThankedObject {
    let line = match scope {
        Scope::Package => format!("import {package}"),
        _ => format!("from {package} import {}", member.join(".")),
    };
    kudos::ledger::ThankedObject {
        object_key: kudos::ledger::ObjectKey {
            language: Language::Python,
            line: line.clone(),
        },
        display_line: line,
        scope,
        count: 1,
        notes: Vec::new(),
        targets: vec![kudos::Target::new(package, member)],
    }
}

pub fn attribution_oracle() -> Outcome {
    use kudos::attribution::{
        Attributor, FixtureBundle, FixtureHistorySource, FixtureRegistry, OverrideMap, RetryPolicy,
        MAX_CONTRIBUTORS,
    };
    use rand::SeedableRng;

    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7e57_a77b);
    let mut overrides = OverrideMap::default();
    let mut repos = Vec::new();
    for i in 0..100 {
        let repo = super::history::random_repo(&mut rng);
        let url = format!("https://github.com/synthetic/pkg{i}");
        overrides.insert(None, &format!("pkg{i}"), &url);
        FixtureBundle::from_commits(repo.commits.clone(), Some(repo.files.clone()))
            .write(&dir.path().join(format!("github.com/synthetic/pkg{i}")))
            .map_err(|e| e.to_string())?;
        repos.push(repo);
    }
    let attributor = Attributor::new(
        Box::new(FixtureRegistry::new(dir.path().join("no-registry"))),
        Box::new(FixtureHistorySource::new(dir.path())),
    )
    .with_overrides(overrides)
    .with_retry(RetryPolicy::none());

    let mut under_cap = 0;
    let mut capped = 0;
    let mut max_authors = 0;
    let mut max_commits = 0;
    for (i, repo) in repos.iter().enumerate() {
        max_authors = max_authors.max(repo.authors);
        max_commits = max_commits.max(repo.commits.len());
        let package = format!("pkg{i}");
        for (scope, member, expected_path) in [
            (Scope::Package, &[][..], None),
            (Scope::Member, &["io"][..], Some("src/io")),
        ] {
            let result = attributor.attribute(&synthetic_object(&package, scope, member));
            check(
                &format!("{package}: unexpected review {:?}", result.review_reason),
                result.review_reason.is_none(),
            )?;
            check_eq(&format!("{package} path"), result.resolved_path.as_deref(), expected_path)?;
            let (expected, unique) =
                super::history::brute_force_recent(&repo.commits, expected_path, MAX_CONTRIBUTORS);
            let got: Vec<(String, String, String, u32)> = result
                .contributors
                .iter()
                .map(|c| (c.email.to_lowercase(), c.display_name.clone(), c.latest_commit_id.clone(), c.rank))
                .collect();
            let want: Vec<(String, String, String, u32)> = expected
                .iter()
                .enumerate()
                .map(|(r, e)| (e.email_key.clone(), e.name.clone(), e.commit_id.clone(), r as u32 + 1))
                .collect();
            check_eq(&format!("{package} {scope:?} contributors"), &got, &want)?;
            check(&format!("{package}: cap exceeded"), got.len() <= MAX_CONTRIBUTORS)?;
            check(
                &format!("{package}: noreply address kept"),
                result.contributors.iter().all(|c| !c.email.to_lowercase().ends_with(super::history::NOREPLY)),
            )?;
            if scope == Scope::Package {
                if unique < MAX_CONTRIBUTORS {
                    check_eq(&format!("{package}: fewer than 20 keeps all"), got.len(), unique)?;
                    under_cap += 1;
                } else {
                    check_eq(&format!("{package}: capped"), got.len(), MAX_CONTRIBUTORS)?;
                    capped += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    check(&format!("runtime {elapsed:?} over 30 s"), elapsed.as_secs_f64() < 30.0)?;
    Ok(format!(
        "100 repos (≤{max_authors} authors, ≤{max_commits} commits): {under_cap} under the cap, {capped} capped, {elapsed:.2?}"
    ))
}

#[derive(Debug, Clone)]
struct EventSpec {
    language: Language,
    line: usize,
    padding: (usize, usize),
    scope: Scope,
    minute: i64,
    note: Option<String>,
    note_later: bool,
}

fn event_spec() -> impl proptest::strategy::Strategy<Value = EventSpec> {
    use proptest::prelude::*;
    (
        prop_oneof![
            Just(Language::Python),
            Just(Language::JavaScript),
            Just(Language::TypeScript)
        ],
        0usize..60,
        (0usize..3, 0usize..3),
        prop_oneof![Just(Scope::Package), Just(Scope::Member), Just(Scope::CallSite)],
        0i64..20_000,
        proptest::option::weighted(0.2, "[a-z ]{1,12}|\\PC{1,8}"),
        any::<bool>(),
    )
        .prop_map(|(language, line, padding, scope, minute, note, note_later)| EventSpec {
            language,
            line,
            padding,
            scope,
            minute,
            note: note.filter(|n| !n.trim().is_empty()),
            note_later,
        })
}

fn spec_line(spec: &EventSpec) -> String {
    format!(
        "{}import pkg{}{}",
        " ".repeat(spec.padding.0),
        spec.line,
        "\t".repeat(spec.padding.1)
    )
}

fn spec_time(spec: &EventSpec) -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::from_timestamp(1_700_000_000 + spec.minute * 60, 0).unwrap()
}

fn check_conservation(specs: &[EventSpec], window_split: i64) -> Result<(), String> {
    use kudos::ledger::{Durability, Ledger, ThanksDraft};
    use std::collections::BTreeMap;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("ledger.jsonl");
    let ledger = Ledger::open(&path)
        .map_err(|e| e.to_string())?
        .with_durability(Durability::Buffered);
    for spec in specs {
        let draft = ThanksDraft {
            installation_id: format!("inst-{}", spec.line % 7),
            timestamp: spec_time(spec),
            language: spec.language,
            line_number: spec.line as u32 + 1,
            line_text: spec_line(spec),
            scope: spec.scope,
            targets: vec![kudos::Target::package(format!("pkg{}", spec.line))],
            note: spec.note.clone().filter(|_| !spec.note_later),
        };
        let id = ledger.record_thanks(draft).map_err(|e| e.to_string())?;
        if let (Some(note), true) = (&spec.note, spec.note_later) {
            ledger.attach_note(&id, note).map_err(|e| e.to_string())?;
        }
    }

    let window = kudos::TimeWindow::new(
        chrono::DateTime::from_timestamp(1_700_000_000 + window_split * 60, 0).unwrap(),
        chrono::DateTime::from_timestamp(1_700_000_000 + 15_000 * 60, 0).unwrap(),
    )
    .unwrap();
    for window in [kudos::TimeWindow::all(), window] {
        let inside: Vec<&EventSpec> = specs
            .iter()
            .filter(|s| window.contains(spec_time(s)))
            .collect();
        let objects = ledger.aggregate_objects(&window);

        let total: u64 = objects.iter().map(|o| u64::from(o.count)).sum();
        check_eq("sum of object counts", total, inside.len() as u64)?;

        let mut expected_counts: BTreeMap<(Language, String), u32> = BTreeMap::new();
        for s in &inside {
            *expected_counts
                .entry((s.language, format!("import pkg{}", s.line)))
                .or_default() += 1;
        }
        let got_counts: BTreeMap<(Language, String), u32> = objects
            .iter()
            .map(|o| ((o.object_key.language, o.object_key.line.clone()), o.count))
            .collect();
        check_eq("per-object counts", &got_counts, &expected_counts)?;

        let mut expected_notes: Vec<&str> = inside.iter().filter_map(|s| s.note.as_deref()).collect();
        let mut got_notes: Vec<&str> = objects
            .iter()
            .flat_map(|o| o.notes.iter().map(String::as_str))
            .collect();
        expected_notes.sort_unstable();
        got_notes.sort_unstable();
        check_eq("notes", &got_notes, &expected_notes)?;

        let reopened = Ledger::open(&path).map_err(|e| e.to_string())?;
        check_eq("replayed aggregate", &reopened.aggregate_objects(&window), &objects)?;
        let mut shuffled = ledger.snapshot();
        shuffled.reverse();
        let mid = shuffled.len() / 2;
        shuffled.rotate_left(mid);
        check_eq(
            "aggregate of reordered events",
            &kudos::ledger::aggregate_objects(&shuffled, &window),
            &objects,
        )?;
    }
    Ok(())
}

pub fn ledger_conservation() -> Outcome {
    use proptest::collection::vec;
    use proptest::strategy::{Strategy, ValueTree};
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

    let started = Instant::now();
    let config = Config {
        cases: 24,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner
        .run(&(vec(event_spec(), 0..2_000), 0i64..15_000), |(specs, split)| {
            check_conservation(&specs, split)
                .map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;

    let full = vec(event_spec(), 10_000)
        .new_tree(&mut runner)
        .map_err(|e| e.to_string())?
        .current();
    check_conservation(&full, 5_000)?;

    let elapsed = started.elapsed();
    check(&format!("runtime {elapsed:?} over 10 s"), elapsed.as_secs_f64() < 10.0)?;
    Ok(format!("24 random streams up to 2000 events plus one of 10000, {elapsed:.2?}"))
}

fn read_artifact<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn check_fleet_outputs(fleet: &super::fleet::Fleet) -> Result<String, String> {
    use super::fleet::*;
    use kudos::attribution::AttributionResult;
    use kudos::insights::DeploymentSummary;
    use kudos::ledger::ThankedObject;
    use kudos::notify::HugReport;
    use std::collections::{BTreeMap, BTreeSet};

    let expected = &fleet.expected;
    let objects: Vec<ThankedObject> = read_artifact(&fleet.state().join("objects.json"))?;
    check_eq("thanked objects", objects.len(), OBJECTS)?;
    let want: BTreeMap<(Language, String), u32> = expected
        .objects
        .iter()
        .map(|o| ((o.language, o.line.clone()), o.events as u32))
        .collect();
    let got: BTreeMap<(Language, String), u32> = objects
        .iter()
        .map(|o| ((o.object_key.language, o.object_key.line.clone()), o.count))
        .collect();
    check_eq("object counts", &got, &want)?;
    let mut notes: Vec<&String> = objects.iter().flat_map(|o| &o.notes).collect();
    let mut want_notes: Vec<&String> = expected.notes.iter().collect();
    notes.sort();
    want_notes.sort();
    check_eq("notes carried into objects", &notes, &want_notes)?;

    let summary: DeploymentSummary = serde_json::from_str(&kudos(fleet, &["summary"])?)
        .map_err(|e| format!("summary output: {e}"))?;
    check_eq("total thanks", summary.total_thanks as usize, EVENTS)?;
    check_eq("noted thanks", summary.noted_thanks as usize, NOTES)?;
    check_eq("import split", summary.split.import as usize, IMPORT_EVENTS)?;
    check_eq("other split", summary.split.other as usize, OTHER_EVENTS)?;
    check_eq("installations", summary.installations.len(), INSTALLATIONS)?;

    let attributions: Vec<AttributionResult> = read_artifact(&fleet.state().join("attributions.json"))?;
    if let Some(r) = attributions.iter().find(|r| r.review_reason.is_some()) {
        return Err(format!("{} needs review: {:?}", r.object_key, r.review_reason));
    }

    let line_of: BTreeMap<&str, usize> = expected
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.line.as_str(), i))
        .collect();
    let reports: Vec<HugReport> = read_artifact(&fleet.state().join("reports.json"))?;
    let credits: BTreeMap<String, BTreeSet<usize>> = reports
        .iter()
        .map(|r| {
            let objs = r.segments.iter().map(|s| line_of[s.object_key.line.as_str()]).collect();
            (r.recipient_key(), objs)
        })
        .collect();
    check_eq("reports", reports.len(), CONTRIBUTORS)?;
    check_eq("credits per contributor", &credits, &expected.credits)?;
    let single = reports.iter().filter(|r| r.segments.len() == 1).count();
    check_eq("single-object contributors", single, SINGLE_OBJECT_CONTRIBUTORS)?;
    let sizes: BTreeSet<usize> = reports.iter().map(|r| r.segments.len()).filter(|&n| n > 1).collect();
    check_eq("multi-object sizes", sizes, (2..=8).collect())?;

    let outbox = snapshot_dir(&fleet.outbox())?;
    check(
        "outbox holds only .eml files",
        outbox.keys().all(|k| k.ends_with(".eml")),
    )?;
    check_eq("outbox files", outbox.len(), CONTRIBUTORS)?;
    let mut recipients = BTreeSet::new();
    for (name, bytes) in &outbox {
        let to = recipient(&String::from_utf8_lossy(bytes)).ok_or(format!("{name}: no To header"))?;
        check(&format!("{to} notified twice"), recipients.insert(to.to_lowercase()))?;
    }
    check_eq(
        "recipients",
        recipients,
        expected.credits.keys().cloned().collect::<BTreeSet<_>>(),
    )?;
    Ok(format!(
        "{OBJECTS} objects, {EVENTS}/{NOTES} thanks/notes, split {IMPORT_EVENTS}/{OTHER_EVENTS}, {INSTALLATIONS} installations, {} outbox files for {CONTRIBUTORS} contributors",
        outbox.len()
    ))
}

pub fn fleet_pipeline() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fleet = super::fleet::build(dir.path())?;
    super::fleet::run_pipeline(&fleet)?;
    let detail = check_fleet_outputs(&fleet)?;
    Ok(format!("{detail}, {:.2?}", started.elapsed()))
}

pub fn determinism() -> Outcome {
    use super::fleet::{build, run_pipeline, snapshot_dir};
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let fleet = build(dir.path())?;
        run_pipeline(&fleet)?;
        let outbox = snapshot_dir(&fleet.outbox())?;
        let mut state = BTreeMap::new();
        for name in ["objects.json", "attributions.json", "reports.json"] {
            let bytes = std::fs::read(fleet.state().join(name)).map_err(|e| e.to_string())?;
            state.insert(name, bytes);
        }
        runs.push((outbox, state));
    }
    let (a, b) = (&runs[0], &runs[1]);
    check_eq("outbox file names", a.0.keys().collect::<Vec<_>>(), b.0.keys().collect::<Vec<_>>())?;
    for (name, bytes) in &a.0 {
        check(&format!("outbox {name} differs"), b.0.get(name) == Some(bytes))?;
    }
    for (name, bytes) in &a.1 {
        check(&format!("{name} differs"), b.1.get(name) == Some(bytes))?;
    }
    check("outbox is empty", !a.0.is_empty())?;
    Ok(format!(
        "two runs: {} outbox files and {} state documents byte-identical",
        a.0.len(),
        a.1.len()
    ))
}

#[derive(Debug, Clone)]
struct NotifyCase {
    /// Per object: thanks with an optional note and whether it is attached later.
    objects: Vec<Vec<(Option<String>, bool)>>,
    /// Per object: indices into the contributor pool.
    credits: Vec<BTreeSet<usize>>,
    contributors: usize,
    /// Contributors whose first delivery fails.
    failing: BTreeSet<usize>,
    /// Randomizes the case of credited emails.
    casing: Vec<bool>,
}

fn notify_case() -> impl proptest::strategy::Strategy<Value = NotifyCase> {
    use proptest::collection::{btree_set, vec};
    use proptest::prelude::*;
    let note = proptest::option::weighted(
        0.4,
        prop_oneof!["[a-zA-Z ,.!]{1,30}", "\\PC{1,12}", "[a-z]{1,8}\n[a-z \t]{0,8}\r\n[<>&\"']{1,4}"],
    );
    (1usize..25, 1usize..40).prop_flat_map(move |(n_objects, n_people)| {
        (
            vec(vec((note.clone(), any::<bool>()), 1..5), n_objects),
            vec(btree_set(0..n_people, 0..n_people.min(20) + 1), n_objects),
            Just(n_people),
            btree_set(0..n_people, 0..n_people + 1),
            vec(any::<bool>(), n_objects * n_people),
        )
            .prop_map(|(objects, credits, contributors, failing, casing)| NotifyCase {
                objects: objects
                    .into_iter()
                    .map(|evs| {
                        evs.into_iter()
                            .map(|(n, later)| (n.filter(|n| !n.trim().is_empty()), later))
                            .collect()
                    })
                    .collect(),
                credits,
                contributors,
                failing,
                casing,
            })
    })
}

struct RecordingSink {
    inner: kudos::notify::OutboxSink,
    fail: BTreeSet<String>,
    attempts: std::sync::Arc<std::sync::Mutex<Vec<String>>>,
}

impl kudos::notify::MessageSink for RecordingSink {
    fn mode(&self) -> kudos::notify::DispatchMode {
        kudos::notify::DispatchMode::DryRun
    }

    fn prepare(&self) -> Result<(), kudos::notify::NotifyError> {
        self.inner.prepare()
    }

    fn deliver(&self, name: &str, email: &kudos::notify::RenderedEmail) -> Result<(), String> {
        let key = email.recipient.email.to_lowercase();
        self.attempts.lock().unwrap().push(key.clone());
        if self.fail.contains(&key) {
            return Err("injected failure".into());
        }
        self.inner.deliver(name, email)
    }
}

fn check_notify_case(case: &NotifyCase) -> Result<(), String> {
    use kudos::attribution::{
        AttributionResult, ContributorRecord, PackageCoordinates, PathConfidence, ResolutionSource,
    };
    use kudos::ledger::{Ledger, ThanksDraft};
    use kudos::notify::{build_reports, DispatchLedger, Dispatcher, Mailbox, OutboxSink, Renderer, Templates};
    use kudos::{Ecosystem, Target};
    use std::collections::BTreeMap;
    use std::sync::{Arc, Mutex};

    let base = chrono::DateTime::from_timestamp(1_710_000_000, 0).unwrap();
    let ledger = Ledger::in_memory();
    let mut expected_notes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut tick = 0i64;
    for (o, events) in case.objects.iter().enumerate() {
        let line = format!("import pkg{o}");
        for (note, later) in events {
            tick += 1;
            let id = ledger
                .record_thanks(ThanksDraft {
                    installation_id: format!("i{}", tick % 3),
                    timestamp: base + chrono::Duration::seconds(tick),
                    language: Language::Python,
                    line_number: 1,
                    line_text: line.clone(),
                    scope: Scope::Package,
                    targets: vec![Target::package(format!("pkg{o}"))],
                    note: note.clone().filter(|_| !later),
                })
                .map_err(|e| e.to_string())?;
            if let (Some(n), true) = (note, later) {
                ledger.attach_note(&id, n).map_err(|e| e.to_string())?;
            }
            if let Some(n) = note {
                expected_notes.entry(line.clone()).or_default().push(n.clone());
            }
        }
    }
    let window = kudos::TimeWindow::all();
    let objects = ledger.aggregate_objects(&window);

    let email = |c: usize, upper: bool| {
        let e = format!("person{c}@example.net");
        if upper {
            e.to_uppercase()
        } else {
            e
        }
    };
    let mut expected_credits: BTreeSet<(String, String)> = BTreeSet::new();
    let attributions: Vec<AttributionResult> = objects
        .iter()
        .enumerate()
        .map(|(o, obj)| {
            let contributors = case.credits[o]
                .iter()
                .enumerate()
                .map(|(rank, &c)| {
                    expected_credits.insert((email(c, false), obj.object_key.line.clone()));
                    ContributorRecord {
                        display_name: format!("Person {c}"),
                        email: email(c, case.casing[o * case.contributors + c]),
                        latest_commit_id: format!("{o:x}{c:x}"),
                        latest_commit_time: base - chrono::Duration::hours((o * 31 + c) as i64),
                        rank: rank as u32 + 1,
                    }
                })
                .collect();
            AttributionResult {
                object_key: obj.object_key.clone(),
                coordinates: PackageCoordinates {
                    ecosystem: Ecosystem::PyPI,
                    package_name: format!("pkg{o}"),
                    repository_url: Some(format!("https://github.com/p/pkg{o}")),
                    resolution_source: ResolutionSource::OverrideMap,
                },
                resolved_path: None,
                path_confidence: PathConfidence::RepoFallback,
                contributors,
                head_commit: Some("head".into()),
                additional_targets: vec![],
                review_reason: None,
            }
        })
        .collect();

    let reports = build_reports(&attributions, &objects, window, "preamble");

    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut recipients = BTreeSet::new();
    for r in &reports {
        check(&format!("{} has two reports", r.recipient_key()), recipients.insert(r.recipient_key()))?;
        check("empty report", !r.segments.is_empty())?;
        for s in &r.segments {
            *seen.entry((r.recipient_key(), s.object_key.line.clone())).or_default() += 1;
            let want = expected_notes.get(&s.object_key.line).cloned().unwrap_or_default();
            check_eq(&format!("notes for {}", s.object_key.line), &s.notes, &want)?;
        }
    }
    if let Some((k, n)) = seen.iter().find(|(_, &n)| n != 1) {
        return Err(format!("credit {k:?} appears in {n} segments"));
    }
    check_eq(
        "credited pairs",
        seen.into_keys().collect::<BTreeSet<_>>(),
        expected_credits,
    )?;

    let renderer = || Renderer::new(Templates::builtin(), Mailbox::new("Kudos", "kudos@example.net"));
    for r in reports.iter().take(3) {
        let text = renderer().render_email(r).text_body;
        for note in r.segments.iter().flat_map(|s| &s.notes) {
            for line in note.lines() {
                check(&format!("note line {line:?} missing from text body"), text.contains(&format!("> {line}")))?;
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ledger_path = dir.path().join("dispatch.jsonl");
    let failing: BTreeSet<String> = case.failing.iter().map(|&c| email(c, false)).collect();
    let run = |fail: BTreeSet<String>| -> Result<(Vec<String>, kudos::notify::DispatchSummary), String> {
        let attempts = Arc::new(Mutex::new(Vec::new()));
        let sink = RecordingSink {
            inner: OutboxSink::new(dir.path().join("outbox")),
            fail,
            attempts: attempts.clone(),
        };
        let dispatch_ledger = DispatchLedger::open(&ledger_path).map_err(|e| e.to_string())?;
        let summary = Dispatcher::new(renderer(), Box::new(sink), dispatch_ledger)
            .dispatch(&reports)
            .map_err(|e| e.to_string())?;
        let mut attempts = attempts.lock().unwrap().clone();
        attempts.sort();
        Ok((attempts, summary))
    };

    let (first, summary) = run(failing.clone())?;
    check_eq("first pass attempts everyone", first, recipients.iter().cloned().collect::<Vec<_>>())?;
    let failed_now: BTreeSet<String> = recipients.intersection(&failing).cloned().collect();
    let reported: BTreeSet<String> = summary.failed.iter().map(|f| f.contributor_email.to_lowercase()).collect();
    check_eq("reported failures", &reported, &failed_now)?;
    check_eq("written on first pass", summary.written, recipients.len() - failed_now.len())?;

    let (second, summary) = run(BTreeSet::new())?;
    check_eq(
        "re-dispatch touches only failed recipients",
        second,
        failed_now.iter().cloned().collect::<Vec<_>>(),
    )?;
    check_eq("skipped on re-dispatch", summary.skipped, recipients.len() - failed_now.len())?;
    check("failures after re-dispatch", summary.failed.is_empty())?;

    let (third, _) = run(BTreeSet::new())?;
    check("third pass touched someone", third.is_empty())?;
    let files = std::fs::read_dir(dir.path().join("outbox")).map_or(0, |d| d.count());
    check_eq("outbox files", files, recipients.len())?;
    Ok(())
}

pub fn notification_invariants() -> Outcome {
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let started = Instant::now();
    let config = Config {
        cases: 96,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[11; 32]));
    runner
        .run(&notify_case(), |case| {
            check_notify_case(&case).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("96 random deployments, {:.2?}", started.elapsed()))
}

pub fn contract_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/api_contract.json")
}

/// Body limit the contract suite runs under, small enough to test 413 cheaply.
pub const CONTRACT_BODY_LIMIT: usize = 64 * 1024;

/// Replays every recorded exchange against a fresh service. With `record`
/// set, responses are captured into the fixture instead of compared.
pub fn api_contract(record: bool) -> Outcome {
    use super::api::{counting_ids, Api};
    use axum::http::Method;
    use serde_json::{json, Value};

    let started = Instant::now();
    let path = contract_path();
    let mut fixture: Value = read_artifact(&path)?;
    let api = Api::with_limit(counting_ids(kudos::ledger::Ledger::in_memory()), CONTRACT_BODY_LIMIT);
    let exchanges = fixture["exchanges"].as_array_mut().ok_or("fixture has no exchanges")?;
    let mut failures = Vec::new();
    for ex in exchanges.iter_mut() {
        let name = ex["name"].as_str().unwrap_or("?").to_string();
        let req = &ex["request"];
        let method = Method::from_bytes(req["method"].as_str().unwrap_or("GET").as_bytes()).map_err(|e| e.to_string())?;
        let body = if let Some(j) = req.get("json") {
            serde_json::to_vec(j).unwrap()
        } else if let Some(t) = req.get("text").and_then(Value::as_str) {
            t.as_bytes().to_vec()
        } else if let Some(r) = req.get("repeat") {
            r["text"].as_str().unwrap_or("").repeat(r["count"].as_u64().unwrap_or(0) as usize).into_bytes()
        } else {
            Vec::new()
        };
        let reply = api.call(
            method,
            req["uri"].as_str().unwrap_or("/"),
            req.get("content_type").and_then(Value::as_str),
            body,
        );
        let header = |h: &str| reply.headers.get(h).and_then(|v| v.to_str().ok()).map(str::to_string);
        let is_json = header("content-type").is_some_and(|c| c.starts_with("application/json"));
        let text = reply.text();

        // validation errors may name the field, but nothing may echo a value
        let leaks_key = reply.status.is_success() && text.contains("installation_id");
        if leaks_key || text.contains("lab-seven-42") || text.contains("lab-nine") {
            failures.push(format!("{name}: response exposes an installation"));
        }
        if record {
            let expected = &mut ex["response"];
            expected["status"] = json!(reply.status.as_u16());
            let mut headers = serde_json::Map::new();
            for h in ["content-type", "cache-control"] {
                if let Some(v) = header(h) {
                    headers.insert(h.into(), json!(v));
                }
            }
            expected["headers"] = Value::Object(headers);
            if is_json {
                expected["json"] = reply.json();
            } else if expected.get("contains").is_none() {
                expected["text"] = json!(text);
            }
            continue;
        }

        let expected = &ex["response"];
        if expected["status"].as_u64() != Some(u64::from(reply.status.as_u16())) {
            failures.push(format!("{name}: status {} != {}", reply.status, expected["status"]));
        }
        for (h, v) in expected["headers"].as_object().into_iter().flatten() {
            if header(h).as_deref() != v.as_str() {
                failures.push(format!("{name}: header {h} {:?} != {v}", header(h)));
            }
        }
        if let Some(want) = expected.get("json") {
            if !is_json || &reply.json() != want {
                failures.push(format!("{name}: body {text}"));
            }
        }
        if let Some(want) = expected.get("text").and_then(Value::as_str) {
            if text != want {
                failures.push(format!("{name}: body {text:?} != {want:?}"));
            }
        }
        for want in expected.get("contains").and_then(Value::as_array).into_iter().flatten() {
            let want = want.as_str().unwrap_or_default();
            if !text.contains(want) {
                failures.push(format!("{name}: body lacks {want:?}"));
            }
        }
    }
    let count = exchanges.len();
    if record && failures.is_empty() {
        let mut bytes = serde_json::to_vec_pretty(&fixture).map_err(|e| e.to_string())?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| e.to_string())?;
        return Ok(format!("recorded {count} exchanges"));
    }
    if !failures.is_empty() {
        return Err(failures.join("\n"));
    }
    Ok(format!("{count} recorded exchanges replayed, {:.2?}", started.elapsed()))
}
