use std::collections::HashMap;
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};

use super::protocol::{read_frame, read_magic, write_frame, Frame, FrameError, FrameType};
use super::{fingerprint, AsrError, Transcript, FIXTURE_WORD_CONFIDENCE};

/// Hex digest of the audio bytes -> transcript text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureTable {
    entries: HashMap<String, String>,
}

impl FixtureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_audio(&mut self, pcm: &[u8], text: &str) -> String {
        let key = fingerprint(pcm);
        self.entries.insert(key.clone(), text.to_string());
        key
    }

    pub fn insert_digest(&mut self, digest: &str, text: &str) {
        self.entries
            .insert(digest.to_ascii_lowercase(), text.to_string());
    }

    pub fn lookup(&self, digest: &str) -> Option<&str> {
        self.entries.get(digest).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(s: &str) -> Result<Self, AsrError> {
        let entries: HashMap<String, String> =
            serde_json::from_str(s).map_err(|e| AsrError::Fixtures(e.to_string()))?;
        let mut table = FixtureTable::new();
        for (k, v) in entries {
            if k.len() != 64 || !k.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(AsrError::Fixtures(format!("not a SHA-256 hex digest: {k}")));
            }
            table.insert_digest(&k, &v);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, AsrError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| AsrError::Fixtures(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        let sorted: std::collections::BTreeMap<_, _> = self.entries.iter().collect();
        serde_json::to_string_pretty(&sorted).expect("string map serializes")
    }

    pub fn transcript_for(&self, pcm: &[u8]) -> Transcript {
        match self.lookup(&fingerprint(pcm)) {
            Some(text) => Transcript::from_text(text, FIXTURE_WORD_CONFIDENCE),
            None => Transcript::empty(),
        }
    }
}

/// Artificial service delays, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockDelays {
    /// Per received message, serialized on the receive path.
    pub message_overhead: f64,
    /// Per `chunk_bytes` of audio, serialized on the decode path.
    pub chunk_processing: f64,
    /// Once, after the final marker and all decoding.
    pub finalization: f64,
    pub chunk_bytes: usize,
}

impl Default for MockDelays {
    fn default() -> Self {
        MockDelays {
            message_overhead: 0.0,
            chunk_processing: 0.0,
            finalization: 0.0,
            // 0.5 s of 16 kHz mono 16-bit audio
            chunk_bytes: 16_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FaultInjection {
    /// Drop the connection after acknowledging this many audio frames.
    pub close_after_chunks: Option<u32>,
}

#[derive(Debug, Clone, Default)]
pub struct MockConfig {
    pub fixtures: FixtureTable,
    pub delays: MockDelays,
    pub fault: FaultInjection,
}

/// Running mock recognizer. Dropping the handle stops accepting connections.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sessions: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Number of sessions that reached the final marker.
    pub fn completed_sessions(&self) -> u64 {
        self.sessions.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Starts the mock recognizer on `listen` (use port 0 for an ephemeral port).
pub fn serve_mock<A: ToSocketAddrs>(config: MockConfig, listen: A) -> io::Result<MockServer> {
    let listener = TcpListener::bind(listen)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let sessions = Arc::new(AtomicU64::new(0));
    let config = Arc::new(config);
    let thread = {
        let stop = stop.clone();
        let sessions = sessions.clone();
        thread::Builder::new()
            .name("asr-mock-accept".into())
            .spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            debug!("asr session from {peer}");
                            let config = config.clone();
                            let sessions = sessions.clone();
                            thread::spawn(move || {
                                if let Err(e) = handle_session(stream, &config, &sessions) {
                                    debug!("asr session ended: {e}");
                                }
                            });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(e) => {
                            warn!("asr accept failed: {e}");
                            thread::sleep(Duration::from_millis(10));
                        }
                    }
                }
            })?
    };
    Ok(MockServer {
        addr,
        stop,
        sessions,
        thread: Some(thread),
    })
}

fn sleep_secs(s: f64) {
    if s > 0.0 {
        thread::sleep(Duration::from_secs_f64(s));
    }
}

enum Work {
    Audio(Vec<u8>),
    Final,
}

fn send_error(writer: &Mutex<TcpStream>, seq: u32, msg: &str) {
    let mut w = writer.lock().unwrap();
    let _ = write_frame(&mut *w, &Frame::new(FrameType::Error, seq, msg.as_bytes().to_vec()));
    let _ = w.shutdown(Shutdown::Both);
}

fn handle_session(
    stream: TcpStream,
    config: &MockConfig,
    sessions: &Arc<AtomicU64>,
) -> Result<(), FrameError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = BufReader::new(stream);

    if let Err(e) = read_magic(&mut reader) {
        send_error(&writer, 0, &format!("malformed stream: {e}"));
        return Err(e);
    }

    // Decoding runs on its own thread so receive overhead and per-chunk
    // processing overlap the way a pipelined recognizer would.
    let (tx, rx) = mpsc::channel::<Work>();
    let decoder = {
        let writer = writer.clone();
        let delays = config.delays;
        let fixtures = config.fixtures.clone();
        let sessions = sessions.clone();
        thread::spawn(move || {
            let mut audio = Vec::new();
            for work in rx {
                match work {
                    Work::Audio(bytes) => {
                        let units = bytes.len().div_ceil(delays.chunk_bytes.max(1));
                        sleep_secs(delays.chunk_processing * units as f64);
                        audio.extend_from_slice(&bytes);
                    }
                    Work::Final => {
                        sleep_secs(delays.finalization);
                        let t = fixtures.transcript_for(&audio);
                        let payload = serde_json::to_vec(&t).expect("transcript serializes");
                        sessions.fetch_add(1, Ordering::SeqCst);
                        let mut w = writer.lock().unwrap();
                        let _ = write_frame(&mut *w, &Frame::new(FrameType::Transcript, 0, payload));
                        return;
                    }
                }
            }
        })
    };

    let mut expected_seq = 0u32;
    let result = loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break Err(FrameError::Truncated),
            Err(e) => {
                send_error(&writer, expected_seq, &format!("malformed frame: {e}"));
                break Err(e);
            }
        };
        match frame.kind {
            FrameType::Audio if frame.seq == expected_seq => {
                {
                    let mut w = writer.lock().unwrap();
                    write_frame(&mut *w, &Frame::new(FrameType::Ack, frame.seq, Vec::new()))?;
                }
                sleep_secs(config.delays.message_overhead);
                let _ = tx.send(Work::Audio(frame.payload));
                expected_seq += 1;
                if config.fault.close_after_chunks == Some(expected_seq) {
                    let w = writer.lock().unwrap();
                    let _ = w.shutdown(Shutdown::Both);
                    break Err(FrameError::Truncated);
                }
            }
            FrameType::Final if frame.seq == expected_seq => {
                let _ = tx.send(Work::Final);
                break Ok(());
            }
            FrameType::Audio | FrameType::Final => {
                let msg = format!("out-of-order seq {} (expected {expected_seq})", frame.seq);
                send_error(&writer, frame.seq, &msg);
                break Err(FrameError::Io(io::Error::new(io::ErrorKind::InvalidData, msg)));
            }
            other => {
                let msg = format!("unexpected {other:?} frame from client");
                send_error(&writer, frame.seq, &msg);
                break Err(FrameError::Io(io::Error::new(io::ErrorKind::InvalidData, msg)));
            }
        }
    };
    drop(tx);
    let _ = decoder.join();
    result
}
