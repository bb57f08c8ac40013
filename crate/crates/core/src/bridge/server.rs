use std::convert::Infallible;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use super::backchannel::send_line_async;
use super::{Bridge, PageRequest, PageUpdate, Tablet};
use crate::http::HttpServer;

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>tablet</title></head>\n<body><p>No tablet UI installed. Protocol: GET /page, GET /events, POST /input, POST /confirm.</p></body></html>\n";

#[derive(Clone)]
struct AppState {
    bridge: Bridge,
    static_dir: Option<PathBuf>,
}

fn bad_request(detail: impl std::fmt::Display) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({"error": "bad_request", "detail": detail.to_string()})),
    )
        .into_response()
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(bad_request)
}

async fn index(State(app): State<AppState>) -> Response {
    if let Some(dir) = &app.static_dir {
        if let Ok(html) = tokio::fs::read_to_string(dir.join("index.html")).await {
            return Html(html).into_response();
        }
    }
    Html(PLACEHOLDER).into_response()
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(app): State<AppState>, UrlPath(rel): UrlPath<String>) -> Response {
    let rel = PathBuf::from(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return bad_request("invalid path");
    }
    let Some(dir) = &app.static_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let path = dir.join(&rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn get_page(State(app): State<AppState>) -> Response {
    Json(app.bridge.snapshot().page).into_response()
}

async fn events(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    // subscribe before the snapshot so nothing falls between them
    let rx = app.bridge.subscribe();
    let first = app.bridge.snapshot();
    let floor = first.seq;
    let to_event = |u: &PageUpdate| Event::default().data(serde_json::to_string(u).unwrap_or_default());
    let head = tokio_stream::once(Ok(to_event(&first)));
    let tail = BroadcastStream::new(rx).filter_map(move |r| match r {
        Ok(u) if u.seq > floor => Some(Ok(to_event(&u))),
        // lagged receivers skip ahead
        _ => None,
    });
    Sse::new(head.chain(tail)).keep_alive(KeepAlive::default())
}

#[derive(Deserialize)]
struct InputBody {
    value: String,
}

async fn post_input(State(app): State<AppState>, body: Bytes) -> Response {
    match parse::<InputBody>(&body) {
        Ok(b) => {
            app.bridge.set_pending(b.value);
            Json(json!({"ok": true})).into_response()
        }
        Err(r) => r,
    }
}

async fn post_confirm(State(app): State<AppState>) -> Response {
    let Some((addr, msg)) = app.bridge.take_confirmation() else {
        return (
            StatusCode::CONFLICT,
            Json(json!({"error": "no_backchannel", "detail": "no input request is waiting"})),
        )
            .into_response();
    };
    match send_line_async(addr, &msg).await {
        Ok(()) => Json(json!({"sent": true})).into_response(),
        Err(e) => (
            StatusCode::BAD_GATEWAY,
            Json(json!({"error": "backchannel", "detail": e.to_string()})),
        )
            .into_response(),
    }
}

async fn session_page(State(app): State<AppState>, body: Bytes) -> Response {
    match parse::<PageRequest>(&body) {
        Ok(req) => match app.bridge.request(req) {
            Ok(p) => Json(p).into_response(),
            Err(e) => bad_request(e),
        },
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct ClockBody {
    t: f64,
}

async fn session_clock_get(State(app): State<AppState>) -> Response {
    Json(json!({"t": app.bridge.snapshot().at})).into_response()
}

async fn session_clock_set(State(app): State<AppState>, body: Bytes) -> Response {
    match parse::<ClockBody>(&body) {
        Ok(b) if b.t.is_finite() => match app.bridge.advance_to(b.t) {
            Ok(p) => Json(p).into_response(),
            Err(e) => bad_request(e),
        },
        Ok(_) => bad_request("t must be finite"),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct BackchannelBody {
    addr: Option<String>,
}

async fn session_backchannel(State(app): State<AppState>, body: Bytes) -> Response {
    let b = match parse::<BackchannelBody>(&body) {
        Ok(b) => b,
        Err(r) => return r,
    };
    let addr = match b.addr {
        None => None,
        Some(s) => match s.parse::<SocketAddr>() {
            Ok(a) => Some(a),
            Err(e) => return bad_request(format!("addr: {e}")),
        },
    };
    let _ = app.bridge.set_backchannel(addr);
    Json(json!({"ok": true})).into_response()
}

/// UI endpoints plus the `/session/*` control surface used by a remote
/// session.
pub fn router(bridge: Bridge, static_dir: Option<PathBuf>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/static/{*path}", get(static_file))
        .route("/page", get(get_page))
        .route("/events", get(events))
        .route("/input", post(post_input))
        .route("/confirm", post(post_confirm))
        .route("/session/page", post(session_page))
        .route("/session/clock", get(session_clock_get).post(session_clock_set))
        .route("/session/backchannel", post(session_backchannel))
        .with_state(AppState { bridge, static_dir })
}

pub struct BridgeServer {
    pub bridge: Bridge,
    http: HttpServer,
}

impl BridgeServer {
    pub fn addr(&self) -> SocketAddr {
        self.http.addr()
    }

    pub fn url(&self) -> String {
        self.http.url()
    }

    pub fn wait(self) {
        self.http.wait()
    }

    pub fn shutdown(self) {
        self.http.shutdown()
    }
}

pub fn serve_bridge<A: ToSocketAddrs>(bridge: Bridge, listen: A, static_dir: Option<PathBuf>) -> std::io::Result<BridgeServer> {
    let http = HttpServer::spawn(router(bridge.clone(), static_dir), listen)?;
    Ok(BridgeServer { bridge, http })
}
