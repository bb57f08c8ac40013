use indexmap::IndexMap;
use serde::Deserialize;

use super::gallery::{FaceService, GalleryListing, ScoredEntry};
use super::{FaceError, Image};

/// Blocking client for the face HTTP service.
#[derive(Clone)]
pub struct FaceClient {
    base: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EnrollReply {
    entry_id: String,
}

#[derive(Deserialize)]
struct QueryReply {
    confidences: IndexMap<String, f64>,
}

#[derive(Deserialize)]
struct ErrorReply {
    error: String,
    #[serde(default)]
    detail: String,
}

fn transport(e: impl std::fmt::Display) -> FaceError {
    FaceError::Transport(e.to_string())
}

fn read_reply<T: serde::de::DeserializeOwned>(
    mut resp: ureq::http::Response<ureq::Body>,
) -> Result<T, FaceError> {
    let status = resp.status();
    let body = resp.body_mut().read_to_string().map_err(transport)?;
    if status.is_success() {
        return serde_json::from_str(&body).map_err(transport);
    }
    let err: ErrorReply = serde_json::from_str(&body)
        .map_err(|_| FaceError::Transport(format!("HTTP {status}: {body}")))?;
    Err(match err.error.as_str() {
        "no_face" => FaceError::NoFace,
        "invalid_input" => FaceError::InvalidInput(err.detail),
        _ => FaceError::Transport(format!("HTTP {status}: {}", err.detail)),
    })
}

impl FaceClient {
    /// `base` is like `http://127.0.0.1:8080` (a bare `host:port` also works).
    pub fn new(base: &str) -> Self {
        let base = if base.starts_with("http://") || base.starts_with("https://") {
            base.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", base.trim_end_matches('/'))
        };
        FaceClient {
            base,
            agent: crate::http::agent(),
        }
    }

    pub fn enroll_pgm(&self, pgm: &[u8], label: &str) -> Result<String, FaceError> {
        let resp = self
            .agent
            .post(&format!("{}/enroll", self.base))
            .query("label", label)
            .content_type("image/x-portable-graymap")
            .send(pgm)
            .map_err(transport)?;
        read_reply::<EnrollReply>(resp).map(|r| r.entry_id)
    }

    pub fn query_pgm(&self, pgm: &[u8]) -> Result<IndexMap<String, f64>, FaceError> {
        let resp = self
            .agent
            .post(&format!("{}/query", self.base))
            .content_type("image/x-portable-graymap")
            .send(pgm)
            .map_err(transport)?;
        read_reply::<QueryReply>(resp).map(|r| r.confidences)
    }
}

impl FaceService for FaceClient {
    fn enroll(&self, img: &Image, label: &str) -> Result<String, FaceError> {
        self.enroll_pgm(&img.to_pgm(), label)
    }

    /// Confidences come back keyed by entry id; labels and enrollment order
    /// come from the gallery listing.
    fn query(&self, img: &Image) -> Result<Vec<ScoredEntry>, FaceError> {
        let conf = self.query_pgm(&img.to_pgm())?;
        let listing = self.listing()?;
        Ok(listing
            .into_iter()
            .filter_map(|l| {
                conf.get(&l.entry_id).map(|c| ScoredEntry {
                    entry_id: l.entry_id,
                    label: l.label,
                    confidence: *c,
                })
            })
            .collect())
    }

    fn listing(&self) -> Result<Vec<GalleryListing>, FaceError> {
        let resp = self
            .agent
            .get(&format!("{}/gallery", self.base))
            .call()
            .map_err(transport)?;
        read_reply(resp)
    }
}
