//! `ASR1` framing. Big-endian throughout:
//!
//! ```text
//! "ASR1"                      once per connection, client -> server
//! [type u8][seq u32][len u32][payload; len]
//! ```
//!
//! Types: 1 audio (raw PCM), 2 final marker, 3 transcript (UTF-8 JSON),
//! 4 error (UTF-8 message), 5 receipt acknowledgement (server -> client,
//! echoes the audio frame's seq, empty payload).

use std::io::{self, Read, Write};

pub const MAGIC: &[u8; 4] = b"ASR1";
pub const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Audio = 1,
    Final = 2,
    Transcript = 3,
    Error = 4,
    Ack = 5,
}

impl FrameType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => FrameType::Audio,
            2 => FrameType::Final,
            3 => FrameType::Transcript,
            4 => FrameType::Error,
            5 => FrameType::Ack,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub seq: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, seq: u32, payload: Vec<u8>) -> Self {
        Frame { kind, seq, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + self.payload.len());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unknown frame type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds limit")]
    TooLarge(u32),
    #[error("connection closed mid-frame")]
    Truncated,
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

pub fn read_magic<R: Read>(r: &mut R) -> Result<(), FrameError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    if &m != MAGIC {
        return Err(FrameError::BadMagic(m));
    }
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, FrameError> {
    let mut header = [0u8; 9];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let kind = FrameType::from_u8(header[0]).ok_or(FrameError::UnknownType(header[0]))?;
    let seq = u32::from_be_bytes(header[1..5].try_into().unwrap());
    let len = u32::from_be_bytes(header[5..9].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(len));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(Some(Frame { kind, seq, payload }))
}
