//! Speech recognition: a streaming client and whole-file client for the
//! `ASR1` wire protocol, a fixture-backed mock recognizer, the pipeline
//! latency model comparing both upload modes, and keyword intent matching.

mod client;
mod intent;
mod latency;
pub mod protocol;
mod server;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use client::{chunk_queue, stream_transcribe, transcribe_whole, AsrStream, ChunkSender};
pub use intent::{match_intent, Intent, IntentKind, IntentRule, IntentTable, RuleIntent};
pub use latency::{simulate_latency, LatencyParams, UploadMode};
pub use server::{serve_mock, FaultInjection, FixtureTable, MockConfig, MockDelays, MockServer};

/// Confidence reported for every word of a fixture hit.
pub const FIXTURE_WORD_CONFIDENCE: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum AsrError {
    #[error("transport error after {acknowledged} acknowledged chunks: {message}")]
    Transport { acknowledged: u32, message: String },
    #[error("recognizer reported an error: {0}")]
    Remote(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("fixture table: {0}")]
    Fixtures(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub words: Vec<(String, f64)>,
    #[serde(rename = "final")]
    pub is_final: bool,
}

impl Transcript {
    pub fn empty() -> Self {
        Transcript {
            text: String::new(),
            words: Vec::new(),
            is_final: true,
        }
    }

    /// Final transcript whose words all carry `confidence`.
    pub fn from_text(text: &str, confidence: f64) -> Self {
        let words: Vec<(String, f64)> = text
            .split_whitespace()
            .map(|w| (w.to_string(), confidence.clamp(0.0, 1.0)))
            .collect();
        Transcript {
            text: words
                .iter()
                .map(|(w, _)| w.as_str())
                .collect::<Vec<_>>()
                .join(" "),
            words,
            is_final: true,
        }
    }
}

/// Hex SHA-256 of the audio payload, the mock recognizer's lookup key.
pub fn fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transcript_json_shape() {
        let t = Transcript::from_text("give  me a hug", 0.9);
        assert_eq!(t.text, "give me a hug");
        let j = serde_json::to_value(&t).unwrap();
        assert_eq!(
            j,
            serde_json::json!({"text":"give me a hug","words":[["give",0.9],["me",0.9],["a",0.9],["hug",0.9]],"final":true})
        );
        let back: Transcript = serde_json::from_value(j).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn fingerprint_of_empty() {
        assert_eq!(
            fingerprint(&[]),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
