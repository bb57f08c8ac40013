use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::time::{Duration, Instant};

use tokio::io::AsyncWriteExt;

use super::{BackchannelMessage, BridgeError, PageRequest, Tablet, TabletPage};

fn io_err(e: impl std::fmt::Display) -> BridgeError {
    BridgeError::Transport(e.to_string())
}

fn encode(msg: &BackchannelMessage) -> Vec<u8> {
    let mut line = serde_json::to_vec(msg).expect("message serializes");
    line.push(b'\n');
    line
}

pub(crate) async fn send_line_async(addr: SocketAddr, msg: &BackchannelMessage) -> Result<(), BridgeError> {
    let mut s = tokio::net::TcpStream::connect(addr).await.map_err(io_err)?;
    s.write_all(&encode(msg)).await.map_err(io_err)?;
    s.shutdown().await.map_err(io_err)
}

/// Blocking sender, for tests and tools.
pub fn send_line(addr: SocketAddr, msg: &BackchannelMessage) -> Result<(), BridgeError> {
    let mut s = TcpStream::connect(addr).map_err(io_err)?;
    s.write_all(&encode(msg)).map_err(io_err)
}

/// Session end of the back-channel: a loopback listener receiving one JSON
/// line per connection.
pub struct Backchannel {
    listener: TcpListener,
}

impl Backchannel {
    pub fn open() -> Result<Self, BridgeError> {
        let listener = TcpListener::bind("127.0.0.1:0").map_err(io_err)?;
        listener.set_nonblocking(true).map_err(io_err)?;
        Ok(Backchannel { listener })
    }

    pub fn addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Next message if a connection is waiting.
    pub fn try_recv(&self) -> Result<Option<BackchannelMessage>, BridgeError> {
        match self.listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false).map_err(io_err)?;
                stream.set_read_timeout(Some(Duration::from_secs(5))).map_err(io_err)?;
                let mut line = String::new();
                BufReader::new(stream).read_line(&mut line).map_err(io_err)?;
                let msg = serde_json::from_str(line.trim_end_matches('\n')).map_err(io_err)?;
                Ok(Some(msg))
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => Ok(None),
            Err(e) => Err(io_err(e)),
        }
    }

    /// Waits up to `wall` of real time.
    pub fn recv_timeout(&self, wall: Duration) -> Result<Option<BackchannelMessage>, BridgeError> {
        let deadline = Instant::now() + wall;
        loop {
            if let Some(m) = self.try_recv()? {
                return Ok(Some(m));
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputOutcome {
    Value(String),
    Timeout,
}

/// Shows the input page, registers a fresh back-channel, and waits for a
/// confirmation until the tablet clock passes `timeout` simulated seconds.
/// The previous page is restored either way.
pub fn request_text_input(tablet: &dyn Tablet, prompt: &str, timeout: f64) -> Result<InputOutcome, BridgeError> {
    let previous = tablet.page()?;
    let start = tablet.now()?;
    let bc = Backchannel::open()?;
    tablet.set_backchannel(Some(bc.addr()))?;
    tablet.show_input(prompt)?;
    let result = loop {
        match bc.try_recv() {
            Ok(Some(m)) => break Ok(InputOutcome::Value(m.value)),
            Ok(None) => {}
            Err(e) => break Err(e),
        }
        match tablet.now() {
            Ok(t) if t - start >= timeout => break Ok(InputOutcome::Timeout),
            Ok(_) => {}
            Err(e) => break Err(e),
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    tablet.set_backchannel(None)?;
    restore(tablet, previous)?;
    result
}

fn restore(tablet: &dyn Tablet, previous: TabletPage) -> Result<(), BridgeError> {
    tablet.request(PageRequest::Restore { page: previous }).map(|_| ())
}
