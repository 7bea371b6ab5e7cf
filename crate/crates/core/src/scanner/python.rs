use std::sync::OnceLock;

use regex::bytes::Regex;

use super::{is_identifier, ParsedImport};
use crate::language::Target;

fn statement() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // same shape as the grammar's import pattern, with the pieces captured
    RE.get_or_init(|| {
        super::grammar::compile(r"^\s*(?:from\s+([\w.]+))?\s*import\s+(.+)$")
    })
}

/// Parses the text the grammar matched, e.g. `from a.b import c as d, e`.
pub(super) fn parse(matched: &str) -> ParsedImport {
    let mut out = ParsedImport::default();
    let Some(caps) = statement().captures(matched.as_bytes()) else {
        return out;
    };
    let text = |i: usize| caps.get(i).map(|m| &matched[m.start()..m.end()]);
    let module = text(1);
    let names = text(2).unwrap_or("");

    let (package, prefix): (Option<String>, Vec<String>) = match module {
        Some(m) if m.starts_with('.') => {
            out.local = true;
            return out;
        }
        Some(m) => {
            let mut segs = m.split('.').filter(|s| !s.is_empty()).map(str::to_string);
            (segs.next(), segs.collect())
        }
        None => (None, Vec::new()),
    };
    out.package = package.clone();

    for item in names.split(',') {
        let tokens: Vec<&str> = item.split_whitespace().collect();
        let (name, alias) = match tokens.as_slice() {
            [] => continue,
            [n] => (*n, *n),
            [n, "as", a] => (*n, *a),
            [n, ..] => (*n, *n),
        };
        if !is_identifier(name, false) || !is_identifier(alias, false) {
            continue;
        }
        let target = match &package {
            Some(p) => {
                let mut member_path = prefix.clone();
                member_path.push(name.to_string());
                Target {
                    package: p.clone(),
                    member_path,
                }
            }
            None => Target::package(name),
        };
        if out.package.is_none() {
            out.package = Some(target.package.clone());
        }
        out.bindings.push((alias.to_string(), target));
    }
    out
}
