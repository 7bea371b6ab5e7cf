//! The normative line grammar.
//!
//! The constants below are the import and usage patterns exactly as written
//! for the original JavaScript engine, delimiters and flags included. The
//! compiled forms are derived from these strings, never retyped, so the
//! published grammar and the one that runs cannot drift apart.
//!
//! Matching uses ASCII semantics for `\w`, `\s`, and `\b` and is applied one
//! line at a time, mirroring a `RegExp` with the `m` flag over a document.

use regex::bytes::{Regex, RegexBuilder};

/// Python `import` / `from … import` lines.
pub const PYTHON_IMPORT: &str =
    r"^(\s*(?:from\s+[\w\.]+)?\s*import\s+[\w\*\, ]+(?:\s+as\s+[\w]+)?)\b/gm";

/// JavaScript/TypeScript ES module `import … from '…'` lines.
pub const JS_IMPORT_FROM: &str = r#"/^import\s+.*\s+from\s+['"](.*)['"]/gm"#;

/// JavaScript/TypeScript CommonJS `const|let … = require('…');` lines.
pub const JS_REQUIRE: &str =
    r#"/(const|let)\s+\{?\s*([\w,\s]+)\s*\}?\s*=\s*require\s*\(\s*['"]([^'"]+)['"]\s*\)[^;]*;/g"#;

/// Template for `name.function()` and `name()` usages.
pub const USAGE_CALL_TEMPLATE: &str =
    r"new RegExp(`\\b(?:${names.map(name => `(?:(?:${name})\\.\\w+|${name})`).join('|')})\\(`)";

/// Template for `name.attribute` usages.
pub const USAGE_ATTRIBUTE_TEMPLATE: &str =
    r"new RegExp(`\\b(?:${names.map(name => `(?:(?:${name})\\.\\w+)`).join('|')})`)";

/// Strips JavaScript literal delimiters: an optional leading `/` and a
/// trailing `/flags` suffix.
pub fn literal_body(literal: &str) -> &str {
    let body = literal.strip_prefix('/').unwrap_or(literal);
    match body.rfind('/') {
        Some(i) if body[i + 1..].chars().all(|c| c.is_ascii_alphabetic()) => &body[..i],
        _ => body,
    }
}

/// Compiles a pattern body with JavaScript-compatible ASCII classes.
pub fn compile(body: &str) -> Regex {
    RegexBuilder::new(body)
        .unicode(false)
        .build()
        .unwrap_or_else(|e| panic!("grammar pattern failed to compile: {e}"))
}

/// Expands the call template for a concrete name list, exactly as the
/// template's `map`/`join` would.
pub fn usage_call_body(names: &[String]) -> String {
    let alts: Vec<String> = names
        .iter()
        .map(|n| {
            let n = regex::escape(n);
            format!(r"(?:(?:{n})\.\w+|{n})")
        })
        .collect();
    format!(r"\b(?:{})\(", alts.join("|"))
}

/// Expands the attribute template for a concrete name list.
pub fn usage_attribute_body(names: &[String]) -> String {
    let alts: Vec<String> = names
        .iter()
        .map(|n| format!(r"(?:(?:{})\.\w+)", regex::escape(n)))
        .collect();
    format!(r"\b(?:{})", alts.join("|"))
}
