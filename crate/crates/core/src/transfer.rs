//! One-file-per-connection transfer over TCP/IPv4.
//!
//! Frame layout (integers big-endian):
//!
//! ```text
//! "ETEAXFER" | version u8 | name_len u16 | name | body_len u64 | body | crc32
//! ```
//!
//! The CRC-32 covers every byte before it. The server answers every frame
//! with a single byte, [`ACK_ACCEPTED`] or [`ACK_REJECTED`], then closes the
//! connection. Bodies are opaque: the server stores what it receives and
//! never decrypts or extracts anything.

use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::net::{Ipv4Addr, Shutdown, SocketAddr, SocketAddrV4, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{info, warn};
use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"ETEAXFER";
pub const VERSION: u8 = 1;
pub const ACK_ACCEPTED: u8 = 0x06;
pub const ACK_REJECTED: u8 = 0x15;
pub const DEFAULT_PORT: u16 = 7474;
pub const MAX_NAME_LEN: usize = 255;
pub const DEFAULT_READ_TIMEOUT: Duration = Duration::from_secs(30);

const TEMP_PREFIX: &str = ".etea-recv-";
const COPY_BUF: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("could not connect to {addr}: {source}")]
    ConnectFailed {
        addr: SocketAddrV4,
        source: io::Error,
    },
    #[error("could not bind {addr}: {source}")]
    BindFailed {
        addr: SocketAddrV4,
        source: io::Error,
    },
    #[error("server rejected the file")]
    Rejected,
    #[error("server sent unexpected ack byte {0:#04x}")]
    UnexpectedAck(u8),
    #[error("invalid file name {0:?}")]
    InvalidName(String),
    #[error("not a transfer frame (bad magic)")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("frame checksum mismatch")]
    BadChecksum,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Accepted,
    Rejected,
}

impl Ack {
    pub fn byte(self) -> u8 {
        match self {
            Ack::Accepted => ACK_ACCEPTED,
            Ack::Rejected => ACK_REJECTED,
        }
    }

    pub fn from_byte(b: u8) -> Option<Ack> {
        match b {
            ACK_ACCEPTED => Some(Ack::Accepted),
            ACK_REJECTED => Some(Ack::Rejected),
            _ => None,
        }
    }
}

/// A stored file name must be a single plain path component.
pub fn validate_filename(name: &str) -> Result<(), TransferError> {
    let bad = name.is_empty()
        || name.len() > MAX_NAME_LEN
        || name == "."
        || name == ".."
        || name.starts_with(TEMP_PREFIX)
        || name.contains(['/', '\\', '\0']);
    if bad {
        return Err(TransferError::InvalidName(name.to_owned()));
    }
    Ok(())
}

/// Header bytes up to and including `body_len`.
pub fn encode_header(name: &str, body_len: u64) -> Result<Vec<u8>, TransferError> {
    validate_filename(name)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 1 + 2 + name.len() + 8);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(name.len() as u16).to_be_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&body_len.to_be_bytes());
    Ok(out)
}

/// A complete frame, checksum included.
pub fn encode_frame(name: &str, body: &[u8]) -> Result<Vec<u8>, TransferError> {
    let mut out = encode_header(name, body.len() as u64)?;
    out.reserve(body.len() + 4);
    out.extend_from_slice(body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

// ---- client ----

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub connect_timeout: Duration,
    pub ack_timeout: Duration,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            connect_timeout: Duration::from_secs(10),
            ack_timeout: DEFAULT_READ_TIMEOUT,
        }
    }
}

/// Writes pre-built frame bytes and waits for the ack. No validation is
/// done on `frame`, which makes this the fault-injection entry point.
pub fn send_frame_bytes(
    addr: SocketAddrV4,
    frame: &[u8],
    opts: &ClientOptions,
) -> Result<Ack, TransferError> {
    let stream = TcpStream::connect_timeout(&SocketAddr::V4(addr), opts.connect_timeout)
        .map_err(|source| TransferError::ConnectFailed { addr, source })?;
    stream.set_read_timeout(Some(opts.ack_timeout))?;
    let write_result = (&stream).write_all(frame).and_then(|_| (&stream).flush());
    // A server that rejects early may stop reading; its ack is still worth
    // collecting before reporting the write failure.
    let mut ack = [0u8; 1];
    match (&stream).read_exact(&mut ack) {
        Ok(()) => Ack::from_byte(ack[0]).ok_or(TransferError::UnexpectedAck(ack[0])),
        Err(e) => Err(write_result.err().unwrap_or(e).into()),
    }
}

/// Sends `body` under `name`. A rejection comes back as
/// [`TransferError::Rejected`].
pub fn send_bytes(
    addr: SocketAddrV4,
    name: &str,
    body: &[u8],
    opts: &ClientOptions,
) -> Result<Ack, TransferError> {
    let frame = encode_frame(name, body)?;
    match send_frame_bytes(addr, &frame, opts)? {
        Ack::Accepted => Ok(Ack::Accepted),
        Ack::Rejected => Err(TransferError::Rejected),
    }
}

/// Sends the file at `path`, stored remotely under its file name.
pub fn send_file(
    addr: SocketAddrV4,
    path: &Path,
    opts: &ClientOptions,
) -> Result<Ack, TransferError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| TransferError::InvalidName(path.display().to_string()))?;
    let body = fs::read(path)?;
    send_bytes(addr, name, &body, opts)
}

// ---- server ----

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddrV4,
    pub out_dir: PathBuf,
    pub read_timeout: Duration,
}

impl ServerConfig {
    pub fn new(bind: SocketAddrV4, out_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            bind,
            out_dir: out_dir.into(),
            read_timeout: DEFAULT_READ_TIMEOUT,
        }
    }
}

pub struct Server {
    listener: TcpListener,
    addr: SocketAddrV4,
    out_dir: Arc<PathBuf>,
    read_timeout: Duration,
    stop: Arc<AtomicBool>,
}

impl Server {
    pub fn bind(config: ServerConfig) -> Result<Server, TransferError> {
        let bind_err = |source| TransferError::BindFailed {
            addr: config.bind,
            source,
        };
        if !config.out_dir.is_dir() {
            return Err(bind_err(io::Error::new(
                io::ErrorKind::NotFound,
                format!(
                    "output directory {} does not exist",
                    config.out_dir.display()
                ),
            )));
        }
        let listener = TcpListener::bind(config.bind).map_err(bind_err)?;
        let addr = match listener.local_addr().map_err(bind_err)? {
            SocketAddr::V4(a) => a,
            SocketAddr::V6(_) => unreachable!("bound an IPv4 address"),
        };
        Ok(Server {
            listener,
            addr,
            out_dir: Arc::new(config.out_dir),
            read_timeout: config.read_timeout,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> SocketAddrV4 {
        self.addr
    }

    /// Accepts connections until stopped, one handler thread per connection.
    pub fn run(self) {
        info!("listening on {}", self.addr);
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match conn {
                Ok(s) => s,
                Err(e) => {
                    warn!("accept failed: {e}");
                    continue;
                }
            };
            let out_dir = Arc::clone(&self.out_dir);
            let timeout = self.read_timeout;
            thread::spawn(move || handle_connection(stream, &out_dir, timeout));
        }
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> ServerHandle {
        let addr = self.addr;
        let stop = Arc::clone(&self.stop);
        let thread = thread::spawn(move || self.run());
        ServerHandle { addr, stop, thread }
    }
}

pub struct ServerHandle {
    addr: SocketAddrV4,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddrV4 {
        self.addr
    }

    /// Stops accepting new connections. Handlers already running finish on
    /// their own.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        let ip = if self.addr.ip().is_unspecified() {
            Ipv4Addr::LOCALHOST
        } else {
            *self.addr.ip()
        };
        // Wake the blocking accept.
        let _ = TcpStream::connect(SocketAddrV4::new(ip, self.addr.port()));
        let _ = self.thread.join();
    }
}

/// Binds and serves forever.
pub fn serve(bind: Ipv4Addr, port: u16, out_dir: &Path) -> Result<(), TransferError> {
    let server = Server::bind(ServerConfig::new(SocketAddrV4::new(bind, port), out_dir))?;
    server.run();
    Ok(())
}

fn handle_connection(stream: TcpStream, out_dir: &Path, timeout: Duration) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    let _ = stream.set_read_timeout(Some(timeout));
    let _ = stream.set_write_timeout(Some(timeout));
    let ack = match receive_frame(&stream, out_dir) {
        Ok(path) => {
            info!("{peer}: stored {}", path.display());
            Ack::Accepted
        }
        Err(e) => {
            warn!("{peer}: rejected: {e}");
            Ack::Rejected
        }
    };
    let _ = (&stream).write_all(&[ack.byte()]);
    let _ = stream.shutdown(Shutdown::Both);
}

fn read_array<const N: usize>(
    r: &mut impl Read,
    crc: &mut crc32fast::Hasher,
) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    crc.update(&buf);
    Ok(buf)
}

/// Reads `len` bytes into `sink` while feeding the CRC.
fn copy_exact(
    r: &mut impl Read,
    sink: &mut impl Write,
    len: u64,
    crc: &mut crc32fast::Hasher,
) -> io::Result<()> {
    let mut buf = vec![0u8; COPY_BUF];
    let mut left = len;
    while left > 0 {
        let want = left.min(COPY_BUF as u64) as usize;
        let n = r.read(&mut buf[..want])?;
        if n == 0 {
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("connection closed with {left} body bytes outstanding"),
            ));
        }
        crc.update(&buf[..n]);
        sink.write_all(&buf[..n])?;
        left -= n as u64;
    }
    Ok(())
}

/// Parses one frame from `stream` and stores its body in `out_dir`.
/// Nothing is left in `out_dir` unless the whole frame checks out.
fn receive_frame(stream: &TcpStream, out_dir: &Path) -> Result<PathBuf, TransferError> {
    let mut r = BufReader::new(stream);
    let mut crc = crc32fast::Hasher::new();

    if read_array::<8>(&mut r, &mut crc)? != MAGIC {
        return Err(TransferError::BadMagic);
    }
    let [version] = read_array::<1>(&mut r, &mut crc)?;
    if version != VERSION {
        return Err(TransferError::UnsupportedVersion(version));
    }
    let name_len = u16::from_be_bytes(read_array::<2>(&mut r, &mut crc)?) as usize;
    if name_len > MAX_NAME_LEN {
        return Err(TransferError::InvalidName(format!("<{name_len} bytes>")));
    }
    let mut name_buf = vec![0u8; name_len];
    r.read_exact(&mut name_buf)?;
    crc.update(&name_buf);
    let body_len = u64::from_be_bytes(read_array::<8>(&mut r, &mut crc)?);

    let name = String::from_utf8(name_buf)
        .map_err(|e| TransferError::InvalidName(String::from_utf8_lossy(e.as_bytes()).into_owned()))
        .and_then(|n| validate_filename(&n).map(|_| n));
    let name = match name {
        Ok(n) => n,
        Err(e) => {
            // Drain the rest so the client is reading when the ack arrives.
            copy_exact(
                &mut r,
                &mut io::sink(),
                body_len.saturating_add(4),
                &mut crc,
            )?;
            return Err(e);
        }
    };

    // Dropped (and deleted) on every early return.
    let mut tmp = tempfile::Builder::new()
        .prefix(TEMP_PREFIX)
        .tempfile_in(out_dir)?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        copy_exact(&mut r, &mut w, body_len, &mut crc)?;
        w.flush()?;
    }
    let mut stored = [0u8; 4];
    r.read_exact(&mut stored)?;
    if u32::from_be_bytes(stored) != crc.finalize() {
        return Err(TransferError::BadChecksum);
    }
    tmp.as_file().sync_all()?;
    persist_unique(tmp, out_dir, &name)
}

/// `name`, then `stem-1.ext`, `stem-2.ext`, ... until one is free.
fn candidate_name(name: &str, n: u32) -> String {
    if n == 0 {
        return name.to_owned();
    }
    match name.rfind('.') {
        Some(dot) if dot > 0 => format!("{}-{n}{}", &name[..dot], &name[dot..]),
        _ => format!("{name}-{n}"),
    }
}

fn persist_unique(
    mut tmp: tempfile::NamedTempFile,
    dir: &Path,
    name: &str,
) -> Result<PathBuf, TransferError> {
    for n in 0.. {
        let path = dir.join(candidate_name(name, n));
        // No-clobber rename fails atomically if the target exists, so two
        // handlers can never claim the same name.
        match tmp.persist_noclobber(&path) {
            Ok(_) => return Ok(path),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => tmp = e.file,
            Err(e) => return Err(e.error.into()),
        }
    }
    unreachable!()
}
