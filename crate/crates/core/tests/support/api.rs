//! Drives the HTTP router in-process, without a socket.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kudos::ledger::{EventId, Ledger};
use kudos::scanner::Scanner;
use kudos::server::{router, AppState};
use tower::ServiceExt;

pub const PUBLIC_URL: &str = "https://kudos.test";

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub struct Api {
    rt: tokio::runtime::Runtime,
    router: Router,
    pub ledger: Arc<Ledger>,
}

/// Event ids `evt-000001`, `evt-000002`, ... so runs are reproducible.
pub fn counting_ids(ledger: Ledger) -> Ledger {
    let next = std::sync::atomic::AtomicU64::new(1);
    ledger.with_id_source(move || {
        EventId(format!(
            "evt-{:06}",
            next.fetch_add(1, std::sync::atomic::Ordering::Relaxed)
        ))
    })
}

impl Api {
    pub fn new(ledger: Ledger) -> Self {
        Self::with_limit(ledger, kudos::config::DEFAULT_BODY_LIMIT)
    }

    pub fn with_limit(ledger: Ledger, body_limit: usize) -> Self {
        let ledger = Arc::new(ledger);
        let clock = || chrono::DateTime::parse_from_rfc3339("2024-03-10T12:00:00Z").unwrap().to_utc();
        let state = AppState::new(ledger.clone(), Scanner::new(), PUBLIC_URL).with_clock(clock);
        Api {
            rt: tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .expect("runtime"),
            router: router(state, body_limit),
            ledger,
        }
    }

    pub fn call(&self, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        let req = req.body(Body::from(body)).expect("request");
        self.rt.block_on(async {
            let resp = self.router.clone().oneshot(req).await.expect("infallible");
            let status = resp.status();
            let headers = resp.headers().clone();
            let body = resp.into_body().collect().await.expect("body").to_bytes().to_vec();
            Reply { status, headers, body }
        })
    }

    pub fn post_json(&self, uri: &str, body: &serde_json::Value) -> Reply {
        self.call(Method::POST, uri, Some("application/json"), serde_json::to_vec(body).unwrap())
    }

    pub fn post_form(&self, uri: &str, body: &str) -> Reply {
        self.call(
            Method::POST,
            uri,
            Some("application/x-www-form-urlencoded"),
            body.as_bytes().to_vec(),
        )
    }

    pub fn get(&self, uri: &str) -> Reply {
        self.call(Method::GET, uri, None, Vec::new())
    }
}
