use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::protocol::{read_frame, write_frame, Frame, FrameType, MAGIC};
use super::{AsrError, Transcript};
use crate::endpointer::AudioChunk;

enum ReadOutcome {
    Transcript(Transcript),
    Remote(String),
    Closed(String),
}

/// One recognition session. Chunks go out as soon as they are handed to
/// [`AsrStream::send`]; a reader thread collects acknowledgements and the
/// final transcript concurrently.
pub struct AsrStream {
    writer: BufWriter<TcpStream>,
    seq: u32,
    acked: Arc<AtomicU32>,
    reader: Option<JoinHandle<ReadOutcome>>,
}

impl AsrStream {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, AsrError> {
        let transport = |e: std::io::Error| AsrError::Transport {
            acknowledged: 0,
            message: e.to_string(),
        };
        let stream = TcpStream::connect(addr).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        let read_half = stream.try_clone().map_err(transport)?;
        let acked = Arc::new(AtomicU32::new(0));
        let reader = {
            let acked = acked.clone();
            thread::spawn(move || read_responses(read_half, &acked))
        };
        let mut writer = BufWriter::new(stream);
        writer
            .write_all(MAGIC)
            .and_then(|_| writer.flush())
            .map_err(transport)?;
        Ok(AsrStream {
            writer,
            seq: 0,
            acked,
            reader: Some(reader),
        })
    }

    pub fn chunks_sent(&self) -> u32 {
        self.seq
    }

    pub fn acknowledged(&self) -> u32 {
        self.acked.load(Ordering::SeqCst)
    }

    pub fn send(&mut self, chunk: &AudioChunk) -> Result<(), AsrError> {
        self.send_bytes(chunk.pcm_bytes())
    }

    pub fn send_bytes(&mut self, pcm: Vec<u8>) -> Result<(), AsrError> {
        let frame = Frame::new(FrameType::Audio, self.seq, pcm);
        match write_frame(&mut self.writer, &frame) {
            Ok(()) => {
                self.seq += 1;
                Ok(())
            }
            Err(e) => Err(self.fail(e.to_string())),
        }
    }

    /// Sends the final marker and waits for the transcript.
    pub fn finish(mut self) -> Result<Transcript, AsrError> {
        let frame = Frame::new(FrameType::Final, self.seq, Vec::new());
        if let Err(e) = write_frame(&mut self.writer, &frame) {
            return Err(self.fail(e.to_string()));
        }
        match self.join_reader() {
            ReadOutcome::Transcript(t) => Ok(t),
            ReadOutcome::Remote(m) => Err(AsrError::Remote(m)),
            ReadOutcome::Closed(m) => Err(AsrError::Transport {
                acknowledged: self.acknowledged(),
                message: m,
            }),
        }
    }

    fn join_reader(&mut self) -> ReadOutcome {
        match self.reader.take() {
            Some(h) => h
                .join()
                .unwrap_or_else(|_| ReadOutcome::Closed("reader panicked".into())),
            None => ReadOutcome::Closed("session already finished".into()),
        }
    }

    /// Turns a write failure into the most informative error: a server
    /// error frame if one arrived, otherwise a transport error with the
    /// final acknowledgement count.
    fn fail(&mut self, write_error: String) -> AsrError {
        let _ = self.writer.get_ref().shutdown(Shutdown::Write);
        match self.join_reader() {
            ReadOutcome::Remote(m) => AsrError::Remote(m),
            ReadOutcome::Transcript(_) => AsrError::Protocol("transcript before final marker".into()),
            ReadOutcome::Closed(_) => AsrError::Transport {
                acknowledged: self.acknowledged(),
                message: write_error,
            },
        }
    }
}

impl Drop for AsrStream {
    fn drop(&mut self) {
        let _ = self.writer.get_ref().shutdown(Shutdown::Both);
    }
}

fn read_responses(stream: TcpStream, acked: &AtomicU32) -> ReadOutcome {
    let mut r = BufReader::new(stream);
    loop {
        match read_frame(&mut r) {
            Ok(Some(f)) => match f.kind {
                FrameType::Ack => {
                    acked.fetch_add(1, Ordering::SeqCst);
                }
                FrameType::Transcript => {
                    return match serde_json::from_slice::<Transcript>(&f.payload) {
                        Ok(t) => ReadOutcome::Transcript(t),
                        Err(e) => ReadOutcome::Remote(format!("unparseable transcript: {e}")),
                    }
                }
                FrameType::Error => {
                    return ReadOutcome::Remote(String::from_utf8_lossy(&f.payload).into_owned())
                }
                other => return ReadOutcome::Remote(format!("unexpected {other:?} frame from server")),
            },
            Ok(None) => return ReadOutcome::Closed("connection closed by server".into()),
            Err(e) => return ReadOutcome::Closed(e.to_string()),
        }
    }
}

/// Producer side of a bounded chunk queue. `finish` sends the final marker.
pub struct ChunkSender {
    tx: SyncSender<Option<AudioChunk>>,
}

impl ChunkSender {
    /// Blocks while the queue is full.
    pub fn send(&self, chunk: AudioChunk) -> bool {
        self.tx.send(Some(chunk)).is_ok()
    }

    pub fn finish(self) {
        let _ = self.tx.send(None);
    }
}

/// Bounded queue between the recorder and the streaming sender.
pub fn chunk_queue(capacity: usize) -> (ChunkSender, Receiver<Option<AudioChunk>>) {
    let (tx, rx) = mpsc::sync_channel(capacity.max(1));
    (ChunkSender { tx }, rx)
}

/// Streams chunks as they arrive. `None` (or the source ending) is the final
/// marker.
pub fn stream_transcribe<I, A>(chunks: I, server: A) -> Result<Transcript, AsrError>
where
    I: IntoIterator<Item = Option<AudioChunk>>,
    A: ToSocketAddrs,
{
    let mut session = AsrStream::connect(server)?;
    for chunk in chunks {
        match chunk {
            Some(c) => session.send(&c)?,
            None => break,
        }
    }
    session.finish()
}

/// Uploads a complete recording as one message.
pub fn transcribe_whole<A: ToSocketAddrs>(pcm: &[u8], server: A) -> Result<Transcript, AsrError> {
    let mut session = AsrStream::connect(server)?;
    if !pcm.is_empty() {
        session.send_bytes(pcm.to_vec())?;
    }
    session.finish()
}
