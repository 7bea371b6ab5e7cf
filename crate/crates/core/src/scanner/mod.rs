//! Line-oriented detection of package-interfacing source lines.
//!
//! Import lines are recognised with the patterns in [`grammar`]; every name an
//! import binds is then looked for in call or attribute position on the
//! remaining lines. The scanner is pattern based on purpose: strings and
//! comments that look like code are reported like code.

pub mod grammar;
mod javascript;
mod python;

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use regex::bytes::Regex;
use serde::{Deserialize, Serialize};

use crate::language::{Ecosystem, Language, Scope, Target};

/// A file handed to the scanner.
#[derive(Debug, Clone)]
pub struct SourceDocument {
    pub language: Language,
    pub text: String,
    pub path_hint: Option<String>,
}

impl SourceDocument {
    pub fn new(language: Language, text: impl Into<String>) -> Self {
        SourceDocument {
            language,
            text: text.into(),
            path_hint: None,
        }
    }

    /// Iterates `(line_number, line_text)` with 1-based numbering and any
    /// trailing `\r` removed.
    pub fn lines(&self) -> impl Iterator<Item = (u32, &str)> {
        self.text
            .split('\n')
            .enumerate()
            .map(|(i, l)| (i as u32 + 1, l.strip_suffix('\r').unwrap_or(l)))
    }
}

/// A local name introduced by an import line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportBinding {
    pub local_name: String,
    pub package: String,
    pub member_path: Vec<String>,
    pub line: u32,
}

impl ImportBinding {
    pub fn target(&self) -> Target {
        Target {
            package: self.package.clone(),
            member_path: self.member_path.clone(),
        }
    }
}

/// A line eligible for a thanks gesture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageAnchor {
    pub line: u32,
    pub line_text: String,
    pub scope: Scope,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Import,
    Usage,
}

/// Scope of a thanks on a line, from the kind of line and the shape of what
/// it binds or references.
pub fn classify_scope(kind: LineKind, member_path: &[String]) -> Scope {
    match kind {
        LineKind::Import if member_path.is_empty() => Scope::Package,
        LineKind::Import => Scope::Member,
        LineKind::Usage => Scope::CallSite,
    }
}

/// Packages whose imports should not produce anchors, e.g. a standard library.
#[derive(Debug, Clone, Default)]
pub struct DenyList {
    entries: HashSet<(Option<Ecosystem>, String)>,
}

impl DenyList {
    /// Parses one entry per line: `name` applies to every ecosystem,
    /// `pypi:name` or `npm:name` to one. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Self {
        let mut entries = HashSet::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once(':') {
                Some((eco, name)) => {
                    if let Ok(eco) = eco.trim().parse::<Ecosystem>() {
                        entries.insert((Some(eco), name.trim().to_string()));
                    }
                }
                None => {
                    entries.insert((None, line.to_string()));
                }
            }
        }
        DenyList { entries }
    }

    pub fn insert(&mut self, ecosystem: Option<Ecosystem>, package: impl Into<String>) {
        self.entries.insert((ecosystem, package.into()));
    }

    pub fn denies(&self, ecosystem: Ecosystem, package: &str) -> bool {
        self.entries.contains(&(None, package.to_string()))
            || self.entries.contains(&(Some(ecosystem), package.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of parsing one import line.
#[derive(Debug, Default)]
pub(crate) struct ParsedImport {
    /// Bindings to external packages.
    pub bindings: Vec<(String, Target)>,
    /// The package the line imports from when no name could be bound.
    pub package: Option<String>,
    /// Relative or path-based: the user's own code.
    pub local: bool,
}

struct Compiled {
    python_import: Regex,
    js_import_from: Regex,
    js_require: Regex,
}

fn compiled() -> &'static Compiled {
    static CELL: OnceLock<Compiled> = OnceLock::new();
    CELL.get_or_init(|| Compiled {
        python_import: grammar::compile(grammar::literal_body(grammar::PYTHON_IMPORT)),
        js_import_from: grammar::compile(grammar::literal_body(grammar::JS_IMPORT_FROM)),
        js_require: grammar::compile(grammar::literal_body(grammar::JS_REQUIRE)),
    })
}

/// Per-line import analysis for a whole document.
struct ImportLine {
    line: u32,
    text_index: usize,
    parsed: ParsedImport,
}

#[derive(Debug, Clone, Default)]
pub struct Scanner {
    deny: DenyList,
}

impl Scanner {
    pub fn new() -> Self {
        Scanner::default()
    }

    pub fn with_deny_list(deny: DenyList) -> Self {
        Scanner { deny }
    }

    fn import_lines<'d>(&self, doc: &'d SourceDocument) -> (Vec<&'d str>, Vec<ImportLine>) {
        let re = compiled();
        let lines: Vec<&str> = doc.lines().map(|(_, l)| l).collect();
        let mut out = Vec::new();
        for (idx, text) in lines.iter().enumerate() {
            let bytes = text.as_bytes();
            let parsed = match doc.language {
                Language::Python => re
                    .python_import
                    .captures(bytes)
                    .and_then(|c| c.get(1))
                    .map(|m| python::parse(&text[m.start()..m.end()])),
                Language::JavaScript | Language::TypeScript => {
                    let from = re.js_import_from.is_match(bytes);
                    let require = re.js_require.is_match(bytes);
                    if from || require {
                        Some(javascript::parse(text, from, require))
                    } else {
                        None
                    }
                }
            };
            if let Some(mut parsed) = parsed {
                let eco = doc.language.ecosystem();
                parsed.bindings.retain(|(_, t)| !self.deny.denies(eco, &t.package));
                if parsed
                    .package
                    .as_deref()
                    .is_some_and(|p| self.deny.denies(eco, p))
                {
                    parsed.package = None;
                }
                out.push(ImportLine {
                    line: idx as u32 + 1,
                    text_index: idx,
                    parsed,
                });
            }
        }
        (lines, out)
    }

    /// Every binding introduced by an import line, in file order.
    pub fn extract_imports(&self, doc: &SourceDocument) -> Vec<ImportBinding> {
        let (_, imports) = self.import_lines(doc);
        imports
            .into_iter()
            .filter(|l| !l.parsed.local)
            .flat_map(|l| {
                let line = l.line;
                l.parsed
                    .bindings
                    .into_iter()
                    .map(move |(local_name, t)| ImportBinding {
                        local_name,
                        package: t.package,
                        member_path: t.member_path,
                        line,
                    })
            })
            .collect()
    }

    /// Anchors for every import line and every line that uses an imported
    /// name, sorted by line.
    pub fn scan(&self, doc: &SourceDocument) -> Vec<UsageAnchor> {
        let (lines, imports) = self.import_lines(doc);
        let mut anchors = Vec::new();
        let mut is_import = vec![false; lines.len()];
        // later bindings of the same name shadow earlier ones
        let mut names: BTreeMap<String, Target> = BTreeMap::new();

        for imp in &imports {
            is_import[imp.text_index] = true;
            if imp.parsed.local {
                continue;
            }
            let mut targets: Vec<Target> = Vec::new();
            let mut scope = None;
            for (name, target) in &imp.parsed.bindings {
                names.insert(name.clone(), target.clone());
                let s = classify_scope(LineKind::Import, &target.member_path);
                scope = Some(match (scope, s) {
                    (Some(Scope::Package), _) | (_, Scope::Package) => Scope::Package,
                    _ => s,
                });
                push_unique(&mut targets, target.clone());
            }
            if targets.is_empty() {
                match &imp.parsed.package {
                    Some(p) => {
                        targets.push(Target::package(p.clone()));
                        scope = Some(Scope::Package);
                    }
                    None => continue,
                }
            }
            anchors.push(UsageAnchor {
                line: imp.line,
                line_text: lines[imp.text_index].to_string(),
                scope: scope.unwrap_or(Scope::Package),
                targets,
            });
        }

        if !names.is_empty() {
            let usage = UsageMatcher::new(&names);
            for (idx, text) in lines.iter().enumerate() {
                if is_import[idx] {
                    continue;
                }
                if let Some(targets) = usage.targets(text) {
                    anchors.push(UsageAnchor {
                        line: idx as u32 + 1,
                        line_text: text.to_string(),
                        scope: classify_scope(LineKind::Usage, &[]),
                        targets,
                    });
                }
            }
        }

        anchors.sort_by_key(|a| a.line);
        anchors
    }
}

fn push_unique(targets: &mut Vec<Target>, t: Target) {
    if !targets.contains(&t) {
        targets.push(t);
    }
}

/// Usage patterns instantiated for one document's names.
struct UsageMatcher<'a> {
    names: &'a BTreeMap<String, Target>,
    call: Regex,
    attribute: Regex,
    call_capture: Regex,
    attribute_capture: Regex,
}

impl<'a> UsageMatcher<'a> {
    fn new(names: &'a BTreeMap<String, Target>) -> Self {
        let list: Vec<String> = names.keys().cloned().collect();
        let mut by_len = list.clone();
        by_len.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        let alt = by_len
            .iter()
            .map(|n| regex::escape(n))
            .collect::<Vec<_>>()
            .join("|");
        UsageMatcher {
            names,
            call: grammar::compile(&grammar::usage_call_body(&list)),
            attribute: grammar::compile(&grammar::usage_attribute_body(&list)),
            call_capture: grammar::compile(&format!(r"\b({alt})\(")),
            attribute_capture: grammar::compile(&format!(r"\b({alt})\.(\w+)")),
        }
    }

    fn targets(&self, line: &str) -> Option<Vec<Target>> {
        let bytes = line.as_bytes();
        if !self.call.is_match(bytes) && !self.attribute.is_match(bytes) {
            return None;
        }
        let mut found: Vec<(usize, Target)> = Vec::new();
        for c in self.attribute_capture.captures_iter(bytes) {
            let (name, attr) = (&c[1], &c[2]);
            let base = &self.names[std::str::from_utf8(name).unwrap_or_default()];
            let mut t = base.clone();
            t.member_path.push(String::from_utf8_lossy(attr).into_owned());
            found.push((c.get(0).map_or(0, |m| m.start()), t));
        }
        for c in self.call_capture.captures_iter(bytes) {
            let name = std::str::from_utf8(&c[1]).unwrap_or_default();
            found.push((c.get(0).map_or(0, |m| m.start()), self.names[name].clone()));
        }
        found.sort_by_key(|(pos, _)| *pos);
        let mut targets = Vec::new();
        for (_, t) in found {
            push_unique(&mut targets, t);
        }
        Some(targets)
    }
}

/// Convenience wrapper using an empty deny-list.
pub fn scan(doc: &SourceDocument) -> Vec<UsageAnchor> {
    Scanner::new().scan(doc)
}

/// Convenience wrapper using an empty deny-list.
pub fn extract_imports(doc: &SourceDocument) -> Vec<ImportBinding> {
    Scanner::new().extract_imports(doc)
}

pub(crate) fn is_identifier(s: &str, allow_dollar: bool) -> bool {
    let mut chars = s.chars();
    let ok = |c: char| c.is_ascii_alphanumeric() || c == '_' || (allow_dollar && c == '$');
    match chars.next() {
        Some(c) if ok(c) && !c.is_ascii_digit() => chars.all(ok),
        _ => false,
    }
}
