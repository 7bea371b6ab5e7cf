//! Template-driven rendering of digests into internet messages.
//!
//! A template file holds the message body, then a line reading exactly
//! `%% segment`, then the block repeated for every segment. The body must use
//! `{preamble}` and `{segments}` and may use `{name}`, `{window_start}`, and
//! `{window_end}`; the segment block must use `{count}`, `{line}`, and
//! `{notes}`. `{{` and `}}` produce literal braces.

use std::fmt::Write as _;
use std::path::Path;

use base64::Engine as _;
use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};

use super::report::{HugReport, ReportSegment};
use crate::attribution::history::normalize_email;

pub const DEFAULT_PLAIN_TEMPLATE: &str = include_str!("../../templates/digest.txt");
pub const DEFAULT_HTML_TEMPLATE: &str = include_str!("../../templates/digest.html");
pub const DEFAULT_PREAMBLE: &str = include_str!("../../templates/preamble.txt");
pub const DEFAULT_SUBJECT: &str = "People thanked you for your open-source work";

const SEGMENT_MARKER: &str = "%% segment";
const BODY_REQUIRED: &[&str] = &["preamble", "segments"];
const BODY_OPTIONAL: &[&str] = &["name", "window_start", "window_end"];
const SEGMENT_REQUIRED: &[&str] = &["count", "line", "notes"];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: missing `{SEGMENT_MARKER}` line")]
    MissingSegment { template: String },
    #[error("template {template}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {template}: missing placeholder {{{name}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template}: unbalanced brace at byte {offset}")]
    Unbalanced { template: String, offset: usize },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Compiled(Vec<Piece>);

impl Compiled {
    fn parse(name: &str, text: &str, required: &[&str], optional: &[&str]) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < text.len() {
            let c = bytes[i];
            if c == b'{' && bytes.get(i + 1) == Some(&b'{') {
                literal.push('{');
                i += 2;
            } else if c == b'}' && bytes.get(i + 1) == Some(&b'}') {
                literal.push('}');
                i += 2;
            } else if c == b'{' {
                let end = text[i..].find('}').map(|e| i + e).ok_or_else(|| TemplateError::Unbalanced {
                    template: name.to_string(),
                    offset: i,
                })?;
                let slot = &text[i + 1..end];
                if !required.contains(&slot) && !optional.contains(&slot) {
                    return Err(TemplateError::UnknownPlaceholder {
                        template: name.to_string(),
                        name: slot.to_string(),
                    });
                }
                if !literal.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(slot.to_string()));
                i = end + 1;
            } else if c == b'}' {
                return Err(TemplateError::Unbalanced {
                    template: name.to_string(),
                    offset: i,
                });
            } else {
                let ch = text[i..].chars().next().unwrap_or_default();
                literal.push(ch);
                i += ch.len_utf8();
            }
        }
        if !literal.is_empty() {
            pieces.push(Piece::Text(literal));
        }
        for r in required {
            if !pieces.iter().any(|p| matches!(p, Piece::Slot(s) if s == r)) {
                return Err(TemplateError::MissingPlaceholder {
                    template: name.to_string(),
                    name: r.to_string(),
                });
            }
        }
        Ok(Compiled(pieces))
    }

    fn fill(&self, value: impl Fn(&str) -> String) -> String {
        let mut out = String::new();
        for p in &self.0 {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(&value(s)),
            }
        }
        out
    }
}

/// A parsed template: message body plus per-segment block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageTemplate {
    body: Compiled,
    segment: Compiled,
}

impl MessageTemplate {
    pub fn parse(name: &str, text: &str) -> Result<Self, TemplateError> {
        let text = text.replace("\r\n", "\n");
        let mut body = None;
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            if line.trim_end() == SEGMENT_MARKER {
                body = Some((&text[..offset], &text[offset + line.len()..]));
                break;
            }
            offset += line.len();
        }
        let (body, segment) = body.ok_or_else(|| TemplateError::MissingSegment {
            template: name.to_string(),
        })?;
        Ok(MessageTemplate {
            body: Compiled::parse(name, body, BODY_REQUIRED, BODY_OPTIONAL)?,
            segment: Compiled::parse(name, segment, SEGMENT_REQUIRED, &[])?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&path.display().to_string(), &text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub plain: MessageTemplate,
    pub html: MessageTemplate,
    pub subject: String,
}

impl Templates {
    pub fn builtin() -> Self {
        Templates {
            plain: MessageTemplate::parse("digest.txt", DEFAULT_PLAIN_TEMPLATE)
                .expect("built-in plain template"),
            html: MessageTemplate::parse("digest.html", DEFAULT_HTML_TEMPLATE)
                .expect("built-in html template"),
            subject: DEFAULT_SUBJECT.to_string(),
        }
    }

    /// Loads `digest.txt` and `digest.html` from `dir`.
    pub fn load_dir(dir: &Path, subject: Option<String>) -> Result<Self, TemplateError> {
        Ok(Templates {
            plain: MessageTemplate::load(&dir.join("digest.txt"))?,
            html: MessageTemplate::load(&dir.join("digest.html"))?,
            subject: subject.unwrap_or_else(|| DEFAULT_SUBJECT.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mailbox {
    pub name: String,
    pub email: String,
}

impl Mailbox {
    pub fn new(name: impl Into<String>, email: impl Into<String>) -> Self {
        Mailbox {
            name: name.into(),
            email: email.into(),
        }
    }

    fn header_value(&self) -> String {
        if self.name.is_empty() {
            return format!("<{}>", self.email);
        }
        format!("{} <{}>", encode_phrase(&self.name), self.email)
    }
}

/// A fully rendered digest, ready for the outbox or a mail server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedEmail {
    pub recipient: Mailbox,
    pub subject: String,
    pub text_body: String,
    pub html_body: String,
    /// The complete RFC 5322 message with CRLF line endings.
    pub raw: String,
}

pub struct Renderer {
    templates: Templates,
    from: Mailbox,
    message_domain: String,
}

impl Renderer {
    pub fn new(templates: Templates, from: Mailbox) -> Self {
        let message_domain = from
            .email
            .rsplit_once('@')
            .map_or("localhost", |(_, d)| d)
            .to_string();
        Renderer {
            templates,
            from,
            message_domain,
        }
    }

    pub fn from(&self) -> &Mailbox {
        &self.from
    }

    /// Renders a report. The `Date` header is the window end, so identical
    /// inputs give byte-identical messages.
    pub fn render_email(&self, report: &HugReport) -> RenderedEmail {
        let text_body = self.render_part(report, false);
        let html_body = self.render_part(report, true);
        let recipient = Mailbox::new(report.contributor_name.clone(), report.contributor_email.clone());
        let tag = &recipient_hash(&report.contributor_email)[..16];
        let stamp = report.window.stamp();
        let boundary = format!("=_kudos_{tag}_{stamp}");
        let date = clamp_date(report.window.end).to_rfc2822();

        let mut raw = String::new();
        let mut header = |k: &str, v: &str| {
            let _ = write!(raw, "{k}: {v}\r\n");
        };
        header("From", &self.from.header_value());
        header("To", &recipient.header_value());
        header("Subject", &encode_phrase_unquoted(&self.templates.subject));
        header("Date", &date);
        header("Message-ID", &format!("<{stamp}.{tag}@{}>", self.message_domain));
        header("MIME-Version", "1.0");
        header(
            "Content-Type",
            &format!("multipart/alternative; boundary=\"{boundary}\""),
        );
        raw.push_str("\r\n");
        for (ctype, body) in [("text/plain", &text_body), ("text/html", &html_body)] {
            let _ = write!(
                raw,
                "--{boundary}\r\nContent-Type: {ctype}; charset=utf-8\r\nContent-Transfer-Encoding: base64\r\n\r\n"
            );
            let encoded = base64::engine::general_purpose::STANDARD.encode(body.as_bytes());
            for chunk in encoded.as_bytes().chunks(76) {
                raw.push_str(std::str::from_utf8(chunk).unwrap_or_default());
                raw.push_str("\r\n");
            }
        }
        let _ = write!(raw, "--{boundary}--\r\n");

        RenderedEmail {
            recipient,
            subject: self.templates.subject.clone(),
            text_body,
            html_body,
            raw,
        }
    }

    fn render_part(&self, report: &HugReport, html: bool) -> String {
        let template = if html { &self.templates.html } else { &self.templates.plain };
        let segments: String = report
            .segments
            .iter()
            .map(|s| render_segment(template, s, html))
            .collect();
        let date = |t: DateTime<Utc>| clamp_date(t).format("%Y-%m-%d").to_string();
        template.body.fill(|slot| match slot {
            "preamble" if html => html_paragraphs(&report.context_preamble),
            "preamble" => report.context_preamble.trim_end().to_string(),
            "segments" => segments.clone(),
            "name" if html => escape_html(&display_name(report)),
            "name" => display_name(report),
            "window_start" => date(report.window.start),
            "window_end" => date(report.window.end),
            _ => String::new(),
        })
    }
}

fn display_name(report: &HugReport) -> String {
    if report.contributor_name.trim().is_empty() {
        "there".to_string()
    } else {
        report.contributor_name.clone()
    }
}

fn clamp_date(t: DateTime<Utc>) -> DateTime<Utc> {
    // the open-ended window bounds are not representable in RFC 2822
    let lo = DateTime::<Utc>::from_timestamp(0, 0).unwrap_or_default();
    let hi = DateTime::<Utc>::from_timestamp(253_402_300_799, 0).unwrap_or_default();
    t.clamp(lo, hi)
}

fn render_segment(template: &MessageTemplate, segment: &ReportSegment, html: bool) -> String {
    template.segment.fill(|slot| match slot {
        "count" => segment.thanks_count.to_string(),
        "line" if html => escape_html(&segment.display_line),
        "line" => segment.display_line.clone(),
        "notes" if html => segment
            .notes
            .iter()
            .map(|n| format!("<blockquote>{}</blockquote>\n", escape_html(n).replace('\n', "<br>\n")))
            .collect(),
        "notes" => segment
            .notes
            .iter()
            .map(|n| {
                let mut quoted: String = n.lines().map(|l| format!("> {l}\n")).collect();
                quoted.push('\n');
                quoted
            })
            .collect(),
        _ => String::new(),
    })
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn html_paragraphs(text: &str) -> String {
    text.split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| format!("<p>{}</p>", escape_html(p)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn encoded_word(s: &str) -> String {
    format!(
        "=?utf-8?B?{}?=",
        base64::engine::general_purpose::STANDARD.encode(s.as_bytes())
    )
}

fn encode_phrase(name: &str) -> String {
    if !name.is_ascii() || name.chars().any(char::is_control) {
        return encoded_word(name);
    }
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

fn encode_phrase_unquoted(text: &str) -> String {
    if !text.is_ascii() || text.chars().any(char::is_control) {
        encoded_word(text)
    } else {
        text.to_string()
    }
}

/// Hex SHA-256 of the normalized email.
pub fn recipient_hash(email: &str) -> String {
    hex::encode(Sha256::digest(normalize_email(email).as_bytes()))
}

/// `<window stamp>-<first 16 hex of the recipient hash>.eml`.
pub fn outbox_file_name(report: &HugReport) -> String {
    format!(
        "{}-{}.eml",
        report.window.stamp(),
        &recipient_hash(&report.contributor_email)[..16]
    )
}
