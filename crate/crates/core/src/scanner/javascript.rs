use std::sync::OnceLock;

use regex::bytes::Regex;

use super::{is_identifier, ParsedImport};
use crate::language::Target;

fn from_clause() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| super::grammar::compile(r#"^import\s+(.*?)\s+from\s+(['"])"#))
}

fn require_call() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // the grammar's require pattern with the optional brace captured
    RE.get_or_init(|| {
        super::grammar::compile(
            r#"(const|let)\s+(\{)?\s*([\w,\s]+)\s*\}?\s*=\s*require\s*\(\s*['"]([^'"]+)['"]\s*\)[^;]*;"#,
        )
    })
}

/// Splits a module specifier into package and sub-path, or `None` for
/// relative, absolute, and URL specifiers.
pub(super) fn split_specifier(spec: &str) -> Option<(String, Vec<String>)> {
    let spec = spec.strip_prefix("node:").unwrap_or(spec).trim();
    if spec.is_empty() || spec.starts_with('.') || spec.starts_with('/') || spec.contains(':') {
        return None;
    }
    let mut segs = spec.split('/').filter(|s| !s.is_empty());
    let first = segs.next()?;
    let package = if first.starts_with('@') {
        format!("{first}/{}", segs.next()?)
    } else {
        first.to_string()
    };
    Some((package, segs.map(str::to_string).collect()))
}

fn member(package: &str, sub: &[String], name: Option<&str>) -> Target {
    let mut member_path = sub.to_vec();
    if let Some(n) = name {
        member_path.push(n.to_string());
    }
    Target {
        package: package.to_string(),
        member_path,
    }
}

fn parse_clause(clause: &str, package: &str, sub: &[String], out: &mut ParsedImport) {
    let clause = clause.trim();
    let clause = clause.strip_prefix("type ").unwrap_or(clause).trim();
    let (head, named) = match (clause.find('{'), clause.rfind('}')) {
        (Some(open), Some(close)) if open < close => {
            (&clause[..open], Some(&clause[open + 1..close]))
        }
        _ => (clause, None),
    };
    for part in head.split(',') {
        let tokens: Vec<&str> = part.split_whitespace().collect();
        let local = match tokens.as_slice() {
            ["*", "as", ns] => *ns,
            [name] => *name,
            _ => continue,
        };
        if is_identifier(local, true) {
            out.bindings.push((local.to_string(), member(package, sub, None)));
        }
    }
    for item in named.into_iter().flat_map(|n| n.split(',')) {
        let item = item.trim();
        let item = item.strip_prefix("type ").unwrap_or(item);
        let tokens: Vec<&str> = item.split_whitespace().collect();
        let (name, local) = match tokens.as_slice() {
            [n] => (*n, *n),
            [n, "as", l] => (*n, *l),
            _ => continue,
        };
        if !is_identifier(local, true) {
            continue;
        }
        let target = if name == "default" {
            member(package, sub, None)
        } else {
            member(package, sub, Some(name))
        };
        out.bindings.push((local.to_string(), target));
    }
}

/// Parses a line that matched at least one of the module patterns.
pub(super) fn parse(line: &str, import_from: bool, require: bool) -> ParsedImport {
    let mut out = ParsedImport::default();
    let mut saw_package = false;
    let mut saw_local = false;

    if import_from {
        if let Some(c) = from_clause().captures(line.as_bytes()) {
            let after = c.get(0).map_or(line.len(), |m| m.end());
            let quote = char::from(c[2][0]);
            let spec = line[after..].split(quote).next().unwrap_or("");
            let clause = String::from_utf8_lossy(&c[1]);
            match split_specifier(spec) {
                Some((package, sub)) => {
                    saw_package = true;
                    out.package.get_or_insert_with(|| package.clone());
                    parse_clause(&clause, &package, &sub, &mut out);
                }
                None => saw_local = true,
            }
        }
    }

    if require {
        for c in require_call().captures_iter(line.as_bytes()) {
            let destructured = c.get(2).is_some();
            let names = String::from_utf8_lossy(&c[3]);
            match split_specifier(&String::from_utf8_lossy(&c[4])) {
                Some((package, sub)) => {
                    saw_package = true;
                    out.package.get_or_insert_with(|| package.clone());
                    for name in names.split(|ch: char| ch == ',' || ch.is_ascii_whitespace()) {
                        if !is_identifier(name, false) {
                            continue;
                        }
                        let t = if destructured {
                            member(&package, &sub, Some(name))
                        } else {
                            member(&package, &sub, None)
                        };
                        out.bindings.push((name.to_string(), t));
                    }
                }
                None => saw_local = true,
            }
        }
    }

    out.local = saw_local && !saw_package;
    out
}
