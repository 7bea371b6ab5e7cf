//! HTTP surface: scanning for editors, thanks and note ingestion, and
//! public package statistics.
//!
//! Every error body is `{"error": <kind>, "message": <text>}` plus a
//! `fields` list for validation failures. Responses never carry an
//! installation id.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::insights::{badge_payload, package_stats};
use crate::language::{Ecosystem, Language};
use crate::ledger::{EventId, FieldError, Ledger, LedgerError, ThanksDraft};
use crate::notify::render::escape_html;
use crate::scanner::{Scanner, SourceDocument, UsageAnchor};
use crate::window::{parse_instant, TimeWindow};

pub const BADGE_CACHE_CONTROL: &str = "public, max-age=300";

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    ledger: Arc<Ledger>,
    scanner: Arc<Scanner>,
    public_url: String,
    clock: Clock,
}

impl AppState {
    pub fn new(ledger: Arc<Ledger>, scanner: Scanner, public_url: impl Into<String>) -> Self {
        AppState {
            ledger,
            scanner: Arc::new(scanner),
            public_url: public_url.into().trim_end_matches('/').to_string(),
            clock: Arc::new(Utc::now),
        }
    }

    /// Replaces the clock used for events posted without a timestamp.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    fn note_url(&self, id: &EventId) -> String {
        format!("{}/v1/note-form/{id}", self.public_url)
    }
}

pub fn router(state: AppState, body_limit: usize) -> Router {
    Router::new()
        .route("/v1/scan", post(scan))
        .route("/v1/thanks", post(thanks))
        .route("/v1/thanks/:event_id/note", post(note))
        .route("/v1/note-form/:event_id", get(note_form))
        .route("/v1/stats/:ecosystem/*package", get(stats))
        .route("/v1/badge/:ecosystem/*package", get(badge))
        .route("/healthz", get(|| async { "ok" }))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn invalid(fields: Vec<FieldError>) -> Self {
        let message = fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        ApiError {
            fields,
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
        }
    }

    fn body(rejection: BytesRejection) -> Self {
        let status = rejection.status();
        let kind = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "payload_too_large"
        } else {
            "bad_request"
        };
        ApiError::new(status, kind, rejection.body_text())
    }
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Invalid(fields) => ApiError::invalid(fields),
            LedgerError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            LedgerError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            LedgerError::Storage(_) | LedgerError::Corrupt { .. } => {
                tracing::error!(error = %e, "ledger failure");
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "ledger unavailable")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

fn parse_json(body: &[u8]) -> Result<Value, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("malformed JSON: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRequest {
    language: String,
    text: String,
    #[serde(default)]
    path_hint: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScanResponse {
    pub anchors: Vec<UsageAnchor>,
}

async fn scan(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Json<ScanResponse>, ApiError> {
    let body = body.map_err(ApiError::body)?;
    let request: ScanRequest = serde_json::from_value(parse_json(&body)?)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", e.to_string()))?;
    let language: Language = request.language.parse().map_err(|e: crate::language::UnsupportedLanguage| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unsupported_language", e.to_string())
    })?;
    let mut doc = SourceDocument::new(language, request.text);
    doc.path_hint = request.path_hint;
    Ok(Json(ScanResponse {
        anchors: state.scanner.scan(&doc),
    }))
}

const DRAFT_FIELDS: &[&str] = &[
    "installation_id",
    "timestamp",
    "language",
    "line_number",
    "line_text",
    "scope",
    "targets",
    "note",
];

/// Checks each field on its own so the caller hears about every problem at
/// once, then validates the assembled draft.
fn parse_draft(value: Value, now: DateTime<Utc>) -> Result<ThanksDraft, Vec<FieldError>> {
    let Value::Object(mut map) = value else {
        return Err(vec![FieldError::new("body", "must be a JSON object")]);
    };
    let mut errors: Vec<FieldError> = map
        .keys()
        .filter(|k| !DRAFT_FIELDS.contains(&k.as_str()))
        .map(|k| FieldError::new(k.clone(), "unknown field"))
        .collect();
    if map.get("timestamp").map_or(true, Value::is_null) {
        map.insert("timestamp".into(), json!(now));
    }
    for field in DRAFT_FIELDS {
        let v = map.get(*field).cloned().unwrap_or(Value::Null);
        let ok = match *field {
            "note" => true,
            _ if v.is_null() => {
                errors.push(FieldError::new(*field, "is required"));
                continue;
            }
            "installation_id" | "line_text" => v.is_string(),
            "timestamp" => serde_json::from_value::<DateTime<Utc>>(v).is_ok(),
            "language" => serde_json::from_value::<Language>(v).is_ok(),
            "line_number" => serde_json::from_value::<u32>(v).is_ok(),
            "scope" => serde_json::from_value::<crate::language::Scope>(v).is_ok(),
            "targets" => serde_json::from_value::<Vec<crate::language::Target>>(v).is_ok(),
            _ => true,
        };
        if !ok {
            errors.push(FieldError::new(*field, "has the wrong type or an unknown value"));
        }
    }
    if map.get("note").is_some_and(|n| !n.is_null() && !n.is_string()) {
        errors.push(FieldError::new("note", "must be a string"));
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let draft: ThanksDraft = serde_json::from_value(Value::Object(map))
        .map_err(|e| vec![FieldError::new("body", e.to_string())])?;
    draft.validate()?;
    Ok(draft)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThanksResponse {
    pub event_id: EventId,
    pub note_url: String,
}

async fn thanks(State(state): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Response, ApiError> {
    let body = body.map_err(ApiError::body)?;
    let draft = parse_draft(parse_json(&body)?, (state.clock)()).map_err(ApiError::invalid)?;
    let ledger = state.ledger.clone();
    let id = tokio::task::spawn_blocking(move || ledger.record_thanks(draft))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let response = ThanksResponse {
        note_url: state.note_url(&id),
        event_id: id,
    };
    Ok((StatusCode::CREATED, Json(response)).into_response())
}

#[derive(Debug, Deserialize)]
struct NoteBody {
    note: String,
}

fn is_form(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/x-www-form-urlencoded"))
}

async fn note(
    State(state): State<AppState>,
    Path(event_id): Path<String>,
    headers: HeaderMap,
    body: Result<Bytes, BytesRejection>,
) -> Response {
    let form = is_form(&headers);
    let result = async {
        let body = body.map_err(ApiError::body)?;
        let parsed: NoteBody = if form {
            form_note(&body)?
        } else {
            serde_json::from_value(parse_json(&body)?)
                .map_err(|_| ApiError::invalid(vec![FieldError::new("note", "is required")]))?
        };
        let ledger = state.ledger.clone();
        let id = EventId(event_id.clone());
        tokio::task::spawn_blocking(move || ledger.attach_note(&id, &parsed.note))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
        Ok::<_, ApiError>(())
    }
    .await;
    match (result, form) {
        (Ok(()), false) => Json(json!({"event_id": event_id, "note_attached": true})).into_response(),
        (Ok(()), true) => Html(page("Note sent", "<p>Thank you. Your note will reach the people behind this code.</p>"))
            .into_response(),
        (Err(e), false) => e.into_response(),
        (Err(e), true) => (
            e.status,
            Html(page("Note not sent", &format!("<p>{}</p>", escape_html(&e.message)))),
        )
            .into_response(),
    }
}

fn form_note(body: &[u8]) -> Result<NoteBody, ApiError> {
    serde_urlencoded::from_bytes(body)
        .map_err(|_| ApiError::invalid(vec![FieldError::new("note", "is required")]))
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>{title}</title>\n\
<style>body{{font-family:sans-serif;max-width:40em;margin:2em auto}}textarea{{width:100%}}</style></head>\n\
<body>\n<h1>{title}</h1>\n{body}\n</body>\n</html>\n"
    )
}

async fn note_form(State(state): State<AppState>, Path(event_id): Path<String>) -> Response {
    let id = EventId(event_id);
    let Some(event) = state.ledger.get(&id) else {
        return (StatusCode::NOT_FOUND, Html(page("Unknown thanks", "<p>This link does not match a recorded thanks.</p>")))
            .into_response();
    };
    if event.note.is_some() {
        return (StatusCode::CONFLICT, Html(page("Note already sent", "<p>This thanks already carries a note.</p>")))
            .into_response();
    }
    let action = format!("/v1/thanks/{}/note", escape_html(id.as_str()));
    let body = format!(
        "<p>You thanked the people behind this line:</p>\n<pre><code>{}</code></pre>\n\
<form method=\"post\" action=\"{action}\">\n<p><label for=\"note\">Add a personal note (optional):</label></p>\n\
<textarea id=\"note\" name=\"note\" rows=\"8\" maxlength=\"{}\" required></textarea>\n\
<p><button type=\"submit\">Send note</button></p>\n</form>",
        escape_html(event.line_text.trim()),
        crate::ledger::MAX_NOTE_CHARS,
    );
    Html(page("Say more", &body)).into_response()
}

#[derive(Debug, Deserialize)]
struct WindowQuery {
    start: Option<String>,
    end: Option<String>,
}

fn window_from(q: &WindowQuery) -> Result<TimeWindow, ApiError> {
    let bad = |s: &str| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("cannot parse instant {s:?}"));
    let all = TimeWindow::all();
    let start = match &q.start {
        Some(s) => parse_instant(s).ok_or_else(|| bad(s))?,
        None => all.start,
    };
    let end = match &q.end {
        Some(s) => parse_instant(s).ok_or_else(|| bad(s))?,
        None => all.end,
    };
    TimeWindow::new(start, end).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

fn ecosystem(s: &str) -> Result<Ecosystem, ApiError> {
    s.parse()
        .map_err(|e: crate::language::UnknownEcosystem| ApiError::new(StatusCode::NOT_FOUND, "unknown_ecosystem", e.to_string()))
}

async fn stats(
    State(state): State<AppState>,
    Path((eco, package)): Path<(String, String)>,
    Query(q): Query<WindowQuery>,
) -> Result<Response, ApiError> {
    let eco = ecosystem(&eco)?;
    let window = window_from(&q)?;
    let stats = package_stats(&state.ledger.snapshot(), eco, package.trim_start_matches('/'), &window);
    Ok(Json(stats).into_response())
}

async fn badge(State(state): State<AppState>, Path((eco, package)): Path<(String, String)>) -> Result<Response, ApiError> {
    let eco = ecosystem(&eco)?;
    let payload = badge_payload(&state.ledger.snapshot(), eco, package.trim_start_matches('/'));
    Ok(([(header::CACHE_CONTROL, BADGE_CACHE_CONTROL)], Json(payload)).into_response())
}
