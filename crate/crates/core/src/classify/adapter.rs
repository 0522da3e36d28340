//! Byte-stream protocol for attaching external inference runtimes.
//!
//! Request:  `FMODTNSR` | u32 height | u32 width | u32 channels | u8 layout | f32 payload
//! Response: `FMODSCRS` | u32 count | count × (u16 label length | UTF-8 label | f32 score)
//!
//! All integers and reals are little-endian.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{mapped_distribution, ClassScore, Classifier, ModelSpec};
use crate::error::{Error, Result};
use crate::preprocess::InputTensor;

pub const DEFAULT_ADAPTER_TIMEOUT_MS: u64 = 5000;

pub mod protocol {
    use std::io::{self, Read, Write};

    use crate::classify::Layout;
    use crate::error::{Error, Result};

    pub const REQUEST_MAGIC: &[u8; 8] = b"FMODTNSR";
    pub const RESPONSE_MAGIC: &[u8; 8] = b"FMODSCRS";

    /// Upper bound on elements accepted in one request (a 4096×4096×4 tensor).
    pub const MAX_ELEMENTS: usize = 4096 * 4096 * 4;

    #[derive(Clone, Debug, PartialEq)]
    pub struct TensorRequest {
        pub height: u32,
        pub width: u32,
        pub channels: u32,
        pub layout: Layout,
        pub values: Vec<f32>,
    }

    pub fn write_request(w: &mut impl Write, req: &TensorRequest) -> io::Result<()> {
        w.write_all(REQUEST_MAGIC)?;
        w.write_all(&req.height.to_le_bytes())?;
        w.write_all(&req.width.to_le_bytes())?;
        w.write_all(&req.channels.to_le_bytes())?;
        w.write_all(&[req.layout.wire_tag()])?;
        let mut buf = Vec::with_capacity(req.values.len() * 4);
        for v in &req.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    /// Returns `Ok(None)` on a clean end of stream before any byte of a request.
    pub fn read_request(r: &mut impl Read) -> Result<Option<TensorRequest>> {
        if !read_magic(r, REQUEST_MAGIC)? {
            return Ok(None);
        }
        let height = read_u32(r)?;
        let width = read_u32(r)?;
        let channels = read_u32(r)?;
        let mut tag = [0u8; 1];
        read_exact(r, &mut tag)?;
        let layout = Layout::from_wire_tag(tag[0])
            .ok_or_else(|| Error::Protocol(format!("unknown layout tag {}", tag[0])))?;
        let n = (height as usize)
            .checked_mul(width as usize)
            .and_then(|n| n.checked_mul(channels as usize))
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Protocol(format!("tensor {height}x{width}x{channels} too large")))?;
        let mut bytes = vec![0u8; n * 4];
        read_exact(r, &mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Some(TensorRequest { height, width, channels, layout, values }))
    }

    pub fn write_response(w: &mut impl Write, scores: &[(String, f32)]) -> io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(RESPONSE_MAGIC);
        buf.extend_from_slice(&(scores.len() as u32).to_le_bytes());
        for (label, score) in scores {
            let bytes = label.as_bytes();
            let len = u16::try_from(bytes.len())
                .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "label longer than 65535 bytes"))?;
            buf.extend_from_slice(&len.to_le_bytes());
            buf.extend_from_slice(bytes);
            buf.extend_from_slice(&score.to_le_bytes());
        }
        w.write_all(&buf)?;
        w.flush()
    }

    /// Returns `Ok(None)` on a clean end of stream before any byte of a response.
    pub fn read_response(r: &mut impl Read) -> Result<Option<Vec<(String, f32)>>> {
        if !read_magic(r, RESPONSE_MAGIC)? {
            return Ok(None);
        }
        let count = read_u32(r)? as usize;
        let mut out = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let mut len = [0u8; 2];
            read_exact(r, &mut len)?;
            let mut label = vec![0u8; u16::from_le_bytes(len) as usize];
            read_exact(r, &mut label)?;
            let label = String::from_utf8(label).map_err(|_| Error::Protocol("label is not UTF-8".into()))?;
            let mut score = [0u8; 4];
            read_exact(r, &mut score)?;
            out.push((label, f32::from_le_bytes(score)));
        }
        Ok(Some(out))
    }

    fn read_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<bool> {
        let mut buf = [0u8; 8];
        let mut got = 0;
        while got < buf.len() {
            match r.read(&mut buf[got..]) {
                Ok(0) if got == 0 => return Ok(false),
                Ok(0) => return Err(Error::Protocol("stream closed inside magic".into())),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::Io(e)),
            }
        }
        if &buf != magic {
            return Err(Error::Protocol(format!("bad magic {:?}", String::from_utf8_lossy(&buf))));
        }
        Ok(true)
    }

    fn read_u32(r: &mut impl Read) -> Result<u32> {
        let mut b = [0u8; 4];
        read_exact(r, &mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
        r.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Protocol("stream closed mid-message".into()),
            _ => Error::Io(e),
        })
    }
}

/// Where an adapter lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `unix:/path/to/socket`
    Unix(std::path::PathBuf),
    /// `exec:program arg...`, speaking the protocol on stdin/stdout.
    Exec(Vec<String>),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(Error::Parse("empty tcp address".into()));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else if let Some(path) = s.strip_prefix("unix:") {
            Ok(Endpoint::Unix(path.into()))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if argv.is_empty() {
                return Err(Error::Parse("empty exec command".into()));
            }
            Ok(Endpoint::Exec(argv))
        } else {
            Err(Error::Parse(format!("unrecognized endpoint {s:?}; expected tcp://, unix: or exec:")))
        }
    }
}

type Response = Result<Option<Vec<(String, f32)>>>;
type Closer = Box<dyn FnOnce() + Send>;

/// A connection to one adapter. Requests are strictly sequential.
pub struct AdapterHandle {
    writer: Box<dyn Write + Send>,
    responses: Receiver<Response>,
    timeout: Duration,
    child: Option<Child>,
    closer: Option<Closer>,
    broken: bool,
    calls: usize,
}

impl AdapterHandle {
    pub fn connect(endpoint: &Endpoint, timeout_ms: u64) -> Result<Self> {
        let unavailable = |e: std::io::Error| Error::AdapterUnavailable(format!("{endpoint:?}: {e}"));
        let mut closer: Option<Closer> = None;
        let (reader, writer, child): (Box<dyn Read + Send>, Box<dyn Write + Send>, _) = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(unavailable)?;
                stream.set_nodelay(true).ok();
                stream.set_write_timeout(Some(Duration::from_millis(timeout_ms))).ok();
                let reader = stream.try_clone().map_err(unavailable)?;
                let control = stream.try_clone().map_err(unavailable)?;
                closer = Some(Box::new(move || {
                    let _ = control.shutdown(std::net::Shutdown::Both);
                }));
                (Box::new(reader), Box::new(BufWriter::new(stream)), None)
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let stream = std::os::unix::net::UnixStream::connect(path).map_err(unavailable)?;
                stream.set_write_timeout(Some(Duration::from_millis(timeout_ms))).ok();
                let reader = stream.try_clone().map_err(unavailable)?;
                let control = stream.try_clone().map_err(unavailable)?;
                closer = Some(Box::new(move || {
                    let _ = control.shutdown(std::net::Shutdown::Both);
                }));
                (Box::new(reader), Box::new(BufWriter::new(stream)), None)
            }
            #[cfg(not(unix))]
            Endpoint::Unix(_) => {
                return Err(Error::AdapterUnavailable("unix sockets are not supported on this platform".into()))
            }
            Endpoint::Exec(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(unavailable)?;
                let stdin: ChildStdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdout), Box::new(BufWriter::new(stdin)), Some(child))
            }
        };
        let mut handle = Self::from_parts(reader, writer, child, timeout_ms);
        handle.closer = closer;
        Ok(handle)
    }

    /// Wraps an already-established byte stream pair.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout_ms: u64,
    ) -> Self {
        Self::from_parts(Box::new(reader), Box::new(writer), None, timeout_ms)
    }

    fn from_parts(
        reader: Box<dyn Read + Send>,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        timeout_ms: u64,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let resp = protocol::read_response(&mut reader);
                let done = !matches!(resp, Ok(Some(_)));
                if tx.send(resp).is_err() || done {
                    break;
                }
            }
        });
        AdapterHandle {
            writer,
            responses: rx,
            timeout: Duration::from_millis(timeout_ms),
            child,
            closer: None,
            broken: false,
            calls: 0,
        }
    }

    /// Number of requests sent over this handle.
    pub fn calls(&self) -> usize {
        self.calls
    }

    /// Sends one tensor and waits for the raw backend scores.
    pub fn request(&mut self, tensor: &InputTensor, spec: &ModelSpec) -> Result<Vec<(String, f32)>> {
        if self.broken {
            return Err(Error::AdapterUnavailable("connection was lost by an earlier failure".into()));
        }
        let req = protocol::TensorRequest {
            height: tensor.height() as u32,
            width: tensor.width() as u32,
            channels: InputTensor::CHANNELS as u32,
            layout: spec.layout,
            values: tensor.values_in(spec.layout),
        };
        self.calls += 1;
        let result = self.exchange(&req);
        if result.is_err() {
            self.broken = true;
        }
        result
    }

    fn exchange(&mut self, req: &protocol::TensorRequest) -> Result<Vec<(String, f32)>> {
        protocol::write_request(&mut self.writer, req)
            .map_err(|e| Error::AdapterUnavailable(format!("write failed: {e}")))?;
        match self.responses.recv_timeout(self.timeout) {
            Ok(Ok(Some(scores))) => Ok(scores),
            Ok(Ok(None)) => Err(Error::Protocol("adapter closed the stream before responding".into())),
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(self.timeout.as_millis() as u64)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Protocol("adapter stream closed".into())),
        }
    }
}

impl Drop for AdapterHandle {
    fn drop(&mut self) {
        if let Some(close) = self.closer.take() {
            close();
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Classifier for AdapterHandle {
    fn classify(&mut self, tensor: &InputTensor, spec: &ModelSpec) -> Result<Vec<ClassScore>> {
        classify_external(self, tensor, spec)
    }
}

/// Round-trips a tensor through the adapter and maps the backend's labels
/// into target classes, renormalized to sum to 1.
pub fn classify_external(
    handle: &mut AdapterHandle,
    tensor: &InputTensor,
    spec: &ModelSpec,
) -> Result<Vec<ClassScore>> {
    let raw = handle.request(tensor, spec)?;
    mapped_distribution(&raw, spec)
}
