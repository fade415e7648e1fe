//! Length-prefixed message channel between Alice and Bob.
//!
//! Every message travels as a little-endian u16 payload length followed by
//! the payload. The same framing runs over an in-memory pipe (both parties in
//! one process) or a TCP connection (two processes), so the protocol layer
//! cannot tell the two apart.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::protocol::MAX_PAYLOAD;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("session closed by peer")]
    SessionClosed,
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversized(usize),
    #[error("stream ended inside a message ({got} of {expected} bytes)")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reliable, ordered message delivery.
pub trait Transport {
    /// Queues one message. Oversized payloads are rejected before anything
    /// is written.
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError>;

    /// Blocks for the next message; `Ok(None)` on a clean end of session.
    /// Pending sends are flushed first so a request/response exchange cannot
    /// deadlock on buffered output.
    fn receive(&mut self) -> Result<Option<Vec<u8>>, TransportError>;
}

/// Framing over any byte stream pair.
#[derive(Debug)]
pub struct StreamTransport<R: Read, W: Write> {
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        StreamTransport { reader, writer }
    }

    pub fn flush(&mut self) -> Result<(), TransportError> {
        self.writer.flush().map_err(map_write_error)
    }
}

fn map_write_error(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::BrokenPipe | io::ErrorKind::ConnectionReset | io::ErrorKind::ConnectionAborted => {
            TransportError::SessionClosed
        }
        _ => TransportError::Io(e),
    }
}

/// Fills `buf`, returning how many bytes arrived before end of stream.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Reads one framed message from `r`.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, TransportError> {
    let mut len = [0u8; 2];
    match read_full(r, &mut len)? {
        0 => return Ok(None),
        2 => {}
        got => return Err(TransportError::Truncated { expected: 2, got }),
    }
    let n = u16::from_le_bytes(len) as usize;
    let mut payload = vec![0u8; n];
    let got = read_full(r, &mut payload)?;
    if got < n {
        return Err(TransportError::Truncated { expected: n, got });
    }
    Ok(Some(payload))
}

/// Writes one framed message to `w`.
pub fn write_message<W: Write>(w: &mut W, payload: &[u8]) -> Result<(), TransportError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(TransportError::Oversized(payload.len()));
    }
    w.write_all(&(payload.len() as u16).to_le_bytes())
        .and_then(|_| w.write_all(payload))
        .map_err(map_write_error)
}

impl<R: Read, W: Write> Transport for StreamTransport<R, W> {
    fn send(&mut self, payload: &[u8]) -> Result<(), TransportError> {
        write_message(&mut self.writer, payload)
    }

    fn receive(&mut self) -> Result<Option<Vec<u8>>, TransportError> {
        self.flush()?;
        read_message(&mut self.reader)
    }
}

/// Sending half of an in-memory byte pipe.
#[derive(Debug)]
pub struct PipeWriter(Sender<Vec<u8>>);

/// Receiving half of an in-memory byte pipe.
#[derive(Debug)]
pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    chunk: Vec<u8>,
    pos: usize,
}

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0
            .send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for PipeReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.chunk.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.chunk = chunk;
                    self.pos = 0;
                }
                // writer dropped: end of stream
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.chunk.len() - self.pos);
        buf[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = channel();
    (
        PipeWriter(tx),
        PipeReader {
            rx,
            chunk: Vec::new(),
            pos: 0,
        },
    )
}

pub type MemoryTransport = StreamTransport<PipeReader, BufWriter<PipeWriter>>;

/// Two connected in-memory endpoints.
pub fn memory_pair() -> (MemoryTransport, MemoryTransport) {
    let (w_ab, r_ab) = pipe();
    let (w_ba, r_ba) = pipe();
    (
        StreamTransport::new(r_ba, BufWriter::with_capacity(1 << 16, w_ab)),
        StreamTransport::new(r_ab, BufWriter::with_capacity(1 << 16, w_ba)),
    )
}

pub type TcpTransport = StreamTransport<BufReader<TcpStream>, BufWriter<TcpStream>>;

fn tcp_transport(stream: TcpStream) -> io::Result<TcpTransport> {
    stream.set_nodelay(true)?;
    let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
    Ok(StreamTransport::new(reader, BufWriter::with_capacity(1 << 16, stream)))
}

/// Which side of the link an endpoint plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

/// How an endpoint reaches its peer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    InProcess,
    /// Accept one connection on `host:port`.
    Listen(String),
    /// Dial `host:port`.
    Connect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub role: Role,
    pub mode: Mode,
}

/// Binds a listener; use [`accept`] to wait for the peer.
pub fn listen(addr: &str) -> Result<TcpListener, TransportError> {
    Ok(TcpListener::bind(addr)?)
}

pub fn accept(listener: &TcpListener) -> Result<(TcpTransport, SocketAddr), TransportError> {
    let (stream, peer) = listener.accept()?;
    Ok((tcp_transport(stream)?, peer))
}

/// Dials `addr`, retrying refused connections until `patience` runs out so
/// the two processes may start in either order.
pub fn connect(addr: &str, patience: Duration) -> Result<TcpTransport, TransportError> {
    let deadline = Instant::now() + patience;
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
    loop {
        match TcpStream::connect(&addrs[..]) {
            Ok(s) => return Ok(tcp_transport(s)?),
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused && Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{DetectionReport, Message};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn cursor_transport(bytes: Vec<u8>) -> StreamTransport<Cursor<Vec<u8>>, Vec<u8>> {
        StreamTransport::new(Cursor::new(bytes), Vec::new())
    }

    #[test]
    fn loopback_bytes() {
        let (mut a, mut b) = memory_pair();
        a.send(b"hello").unwrap();
        a.send(b"").unwrap();
        a.flush().unwrap();
        assert_eq!(b.receive().unwrap().unwrap(), b"hello");
        assert_eq!(b.receive().unwrap().unwrap(), b"");
        drop(a);
        assert!(b.receive().unwrap().is_none());
    }

    #[test]
    fn many_reports_stay_in_order() {
        let (mut a, mut b) = memory_pair();
        let sender = std::thread::spawn(move || {
            for i in 0..100_000u32 {
                let m = Message::Report(DetectionReport {
                    frame_number: i,
                    bit_position: (i % 2048) as u16,
                    basis_bit: false,
                    detector_id: i % 3 == 0,
                });
                a.send(&m.encode().unwrap()).unwrap();
            }
        });
        let mut n = 0u32;
        while let Some(p) = b.receive().unwrap() {
            match Message::decode(&p).unwrap() {
                Message::Report(r) => assert_eq!(r.frame_number, n),
                other => panic!("{other:?}"),
            }
            n += 1;
        }
        sender.join().unwrap();
        assert_eq!(n, 100_000);
    }

    #[test]
    fn oversized_rejected_before_writing() {
        let mut t = cursor_transport(Vec::new());
        assert!(matches!(t.send(&vec![0; MAX_PAYLOAD + 1]), Err(TransportError::Oversized(_))));
        assert!(t.writer.is_empty());
        t.send(&vec![0; MAX_PAYLOAD]).unwrap();
        assert_eq!(t.writer.len(), MAX_PAYLOAD + 2);
    }

    #[test]
    fn truncated_streams() {
        assert!(cursor_transport(vec![]).receive().unwrap().is_none());
        assert!(matches!(
            cursor_transport(vec![5]).receive(),
            Err(TransportError::Truncated { expected: 2, got: 1 })
        ));
        assert!(matches!(
            cursor_transport(vec![5, 0, 1, 2]).receive(),
            Err(TransportError::Truncated { expected: 5, got: 2 })
        ));
    }

    #[test]
    fn closed_peer_is_reported() {
        let (mut a, b) = memory_pair();
        drop(b);
        a.send(b"x").unwrap();
        assert!(matches!(a.flush(), Err(TransportError::SessionClosed)));
    }

    #[test]
    fn tcp_loopback() {
        let listener = listen("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let client = std::thread::spawn(move || {
            let mut t = connect(&addr, Duration::from_secs(5)).unwrap();
            t.send(b"ping").unwrap();
            t.receive().unwrap()
        });
        let (mut server, _) = accept(&listener).unwrap();
        assert_eq!(server.receive().unwrap().unwrap(), b"ping");
        server.send(b"pong").unwrap();
        drop(server);
        assert_eq!(client.join().unwrap().unwrap(), b"pong");
    }

    proptest! {
        #[test]
        fn message_sequences_round_trip(
            msgs in prop::collection::vec(crate::protocol::message_tests::arb_message(), 0..50)
        ) {
            let mut wire = Vec::new();
            for m in &msgs {
                write_message(&mut wire, &m.encode().unwrap()).unwrap();
            }
            let mut t = cursor_transport(wire);
            let mut got = Vec::new();
            while let Some(p) = t.receive().unwrap() {
                got.push(Message::decode(&p).unwrap());
            }
            prop_assert_eq!(got, msgs);
        }

        #[test]
        fn corrupted_streams_never_panic(
            msgs in prop::collection::vec(crate::protocol::message_tests::arb_message(), 1..10),
            at in any::<prop::sample::Index>(),
            byte in any::<u8>(),
            cut in any::<prop::sample::Index>(),
        ) {
            let mut wire = Vec::new();
            for m in &msgs {
                write_message(&mut wire, &m.encode().unwrap()).unwrap();
            }
            let i = at.index(wire.len());
            wire[i] = byte;
            wire.truncate(cut.index(wire.len() + 1).max(1));
            let mut t = cursor_transport(wire);
            loop {
                match t.receive() {
                    Ok(Some(p)) => { let _ = Message::decode(&p); }
                    Ok(None) => break,
                    Err(TransportError::Truncated { .. }) => break,
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
            }
        }
    }
}
