use std::net::{SocketAddr, ToSocketAddrs};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::gallery::{confidences, FaceRecognizer, FaceService};
use super::{FaceError, Image};
use crate::http::HttpServer;

pub struct FacesServer {
    http: HttpServer,
    recognizer: FaceRecognizer,
}

impl FacesServer {
    pub fn addr(&self) -> SocketAddr {
        self.http.addr()
    }

    pub fn url(&self) -> String {
        self.http.url()
    }

    pub fn recognizer(&self) -> &FaceRecognizer {
        &self.recognizer
    }

    pub fn wait(self) {
        self.http.wait()
    }

    pub fn shutdown(self) {
        self.http.shutdown()
    }
}

fn error_response(e: FaceError) -> Response {
    let (status, code) = match &e {
        FaceError::NoFace => (StatusCode::UNPROCESSABLE_ENTITY, "no_face"),
        FaceError::InvalidInput(_) => (StatusCode::BAD_REQUEST, "invalid_input"),
        FaceError::Storage(_) | FaceError::Transport(_) => {
            (StatusCode::INTERNAL_SERVER_ERROR, "storage")
        }
    };
    (status, Json(json!({"error": code, "detail": e.to_string()}))).into_response()
}

#[derive(Deserialize)]
struct EnrollParams {
    label: Option<String>,
}

async fn run_blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, FaceError> + Send + 'static,
) -> Result<T, FaceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| FaceError::Storage(e.to_string()))?
}

async fn enroll(
    State(r): State<FaceRecognizer>,
    Query(p): Query<EnrollParams>,
    body: Bytes,
) -> Response {
    let label = p.label.unwrap_or_default();
    let result = run_blocking(move || {
        let img = Image::from_pgm(&body)?;
        r.enroll(&img, &label)
    })
    .await;
    match result {
        Ok(id) => Json(json!({ "entry_id": id })).into_response(),
        Err(e) => error_response(e),
    }
}

async fn query(State(r): State<FaceRecognizer>, body: Bytes) -> Response {
    let result = run_blocking(move || {
        let img = Image::from_pgm(&body)?;
        r.query(&img)
    })
    .await;
    match result {
        Ok(scores) => Json(json!({ "confidences": confidences(&scores) })).into_response(),
        Err(e) => error_response(e),
    }
}

async fn gallery(State(r): State<FaceRecognizer>) -> Response {
    match r.listing() {
        Ok(l) => Json(l).into_response(),
        Err(e) => error_response(e),
    }
}

pub fn router(recognizer: FaceRecognizer) -> Router {
    Router::new()
        .route("/enroll", post(enroll))
        .route("/query", post(query))
        .route("/gallery", get(gallery))
        .with_state(recognizer)
}

pub fn serve_faces<A: ToSocketAddrs>(
    recognizer: FaceRecognizer,
    listen: A,
) -> std::io::Result<FacesServer> {
    let http = HttpServer::spawn(router(recognizer.clone()), listen)?;
    Ok(FacesServer { http, recognizer })
}
