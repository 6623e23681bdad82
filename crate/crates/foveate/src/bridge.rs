//! Client side of the model-bridge protocol.
//!
//! Every frame is a 4-byte little-endian header length, a UTF-8 JSON header
//! and, when the header declares `payload_bytes > 0`, that many raw bytes.
//! Classify requests carry `[B, C, H, W]` channel-first `f32le` pixels;
//! replies carry `[B, K]` `f32le` probabilities. Replies are matched to
//! requests by id and may arrive in any order.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;

use foveate_core::oracle::{Classifier, LabelSet, ProbVector, DEFAULT_INPUT_SIZE};
use foveate_core::{Error as CoreError, ImageBuffer};
use serde::{Deserialize, Serialize};

/// Upper bound on a JSON header.
pub const MAX_HEADER_BYTES: u32 = 16 << 20;
/// Upper bound on a payload.
pub const MAX_PAYLOAD_BYTES: u64 = 1 << 32;
pub const DTYPE_F32LE: &str = "f32le";

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("bridge i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bridge protocol: {0}")]
    Protocol(String),
    #[error("bridge reported: {0}")]
    Remote(String),
    #[error("bridge connection closed: {0}")]
    Closed(String),
    #[error("cannot launch bridge {command:?}: {source}")]
    Spawn { command: String, source: io::Error },
}

impl From<BridgeError> for CoreError {
    fn from(e: BridgeError) -> Self {
        CoreError::Oracle(e.to_string())
    }
}

/// Frame header; the `op` field selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Header {
    Info {
        id: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<String>>,
    },
    Classify {
        id: u64,
        shape: [usize; 4],
        dtype: String,
        payload_bytes: u64,
    },
    Probs {
        id: u64,
        shape: [usize; 2],
        dtype: String,
        payload_bytes: u64,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}

impl Header {
    pub fn payload_bytes(&self) -> u64 {
        match self {
            Header::Classify { payload_bytes, .. } | Header::Probs { payload_bytes, .. } => *payload_bytes,
            _ => 0,
        }
    }

    pub fn id(&self) -> Option<u64> {
        match self {
            Header::Info { id, .. } | Header::Classify { id, .. } | Header::Probs { id, .. } => Some(*id),
            Header::Error { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub header: Header,
    pub payload: Vec<u8>,
}

pub fn write_frame<W: Write>(w: &mut W, header: &Header, payload: &[u8]) -> Result<(), BridgeError> {
    if header.payload_bytes() != payload.len() as u64 {
        return Err(BridgeError::Protocol(format!(
            "header declares {} payload bytes, got {}",
            header.payload_bytes(),
            payload.len()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| BridgeError::Protocol(e.to_string()))?;
    let len = u32::try_from(json.len())
        .ok()
        .filter(|&n| n <= MAX_HEADER_BYTES)
        .ok_or_else(|| BridgeError::Protocol(format!("header of {} bytes", json.len())))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before a frame starts.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, BridgeError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(BridgeError::Protocol("stream ended inside a length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_HEADER_BYTES {
        return Err(BridgeError::Protocol(format!("header length {len} exceeds limit")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| BridgeError::Protocol(format!("bad header: {e}")))?;
    let n = header.payload_bytes();
    if n > MAX_PAYLOAD_BYTES {
        return Err(BridgeError::Protocol(format!("payload of {n} bytes exceeds limit")));
    }
    let mut payload = vec![0u8; n as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(Frame { header, payload }))
}

/// Channel-first little-endian floats for a batch of equally sized images.
pub fn encode_batch(batch: &[ImageBuffer]) -> Result<([usize; 4], Vec<u8>), BridgeError> {
    let Some(first) = batch.first() else {
        return Ok(([0, 0, 0, 0], Vec::new()));
    };
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut bytes = Vec::with_capacity(batch.len() * c * h * w * 4);
    for img in batch {
        if (img.height(), img.width(), img.channels()) != (h, w, c) {
            return Err(BridgeError::Protocol("batch images differ in shape".into()));
        }
        for ch in 0..c {
            for r in 0..h {
                for col in 0..w {
                    bytes.extend_from_slice(&img.get(r, col, ch).to_le_bytes());
                }
            }
        }
    }
    Ok(([batch.len(), c, h, w], bytes))
}

pub fn decode_f32le(bytes: &[u8]) -> Result<Vec<f32>, BridgeError> {
    if bytes.len() % 4 != 0 {
        return Err(BridgeError::Protocol(format!("{} payload bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

#[derive(Debug)]
enum Reply {
    Info(Vec<String>),
    Probs { shape: [usize; 2], values: Vec<f32> },
    Error(String),
}

#[derive(Default)]
struct State {
    replies: HashMap<u64, Reply>,
    closed: Option<String>,
}

#[derive(Default)]
struct Shared {
    state: Mutex<State>,
    arrived: Condvar,
}

fn reader_loop<R: Read>(mut reader: R, shared: &Shared) {
    let reason = loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => break "end of stream".to_string(),
            Err(e) => break e.to_string(),
        };
        let (id, reply) = match frame.header {
            Header::Info { id, labels: Some(labels) } => (id, Reply::Info(labels)),
            Header::Probs { id, shape, dtype, .. } if dtype == DTYPE_F32LE => match decode_f32le(&frame.payload) {
                Ok(values) => (id, Reply::Probs { shape, values }),
                Err(e) => break e.to_string(),
            },
            Header::Probs { dtype, .. } => break format!("unsupported dtype {dtype:?}"),
            Header::Error { id: Some(id), message } => (id, Reply::Error(message)),
            Header::Error { id: None, message } => break format!("bridge error: {message}"),
            other => break format!("unexpected frame {other:?}"),
        };
        let mut state = shared.state.lock().expect("bridge state poisoned");
        state.replies.insert(id, reply);
        drop(state);
        shared.arrived.notify_all();
    };
    let mut state = shared.state.lock().expect("bridge state poisoned");
    state.closed = Some(reason);
    drop(state);
    shared.arrived.notify_all();
}

/// Handle for a request whose reply has not been collected yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ticket {
    id: u64,
    batch: usize,
}

impl Ticket {
    pub fn id(&self) -> u64 {
        self.id
    }
}

/// A classifier served by an external process (or any byte stream pair).
///
/// Requests from concurrent callers share one connection; a background
/// thread demultiplexes replies by id.
pub struct BridgeClient {
    writer: Mutex<Option<Box<dyn Write + Send>>>,
    shared: Arc<Shared>,
    next_id: AtomicU64,
    labels: LabelSet,
    input_size: (usize, usize),
    reader: Mutex<Option<JoinHandle<()>>>,
    child: Mutex<Option<Child>>,
}

impl BridgeClient {
    /// Launches `command` (split with shell quoting rules) and talks to it
    /// over its standard streams. Its error stream is inherited.
    pub fn spawn(command: &str, input_size: (usize, usize)) -> Result<Self, BridgeError> {
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| BridgeError::Protocol(format!("cannot parse bridge command {command:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn { command: command.to_string(), source })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut client = Self::connect(stdout, stdin, input_size);
        if let Ok(c) = &mut client {
            *c.child.get_mut().expect("fresh mutex") = Some(child);
        } else {
            let _ = child.kill();
            let _ = child.wait();
        }
        client
    }

    /// Uses an existing stream pair and performs the `info` handshake.
    pub fn connect<R, W>(reader: R, writer: W, input_size: (usize, usize)) -> Result<Self, BridgeError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let shared = Arc::new(Shared::default());
        let thread_shared = Arc::clone(&shared);
        let handle = std::thread::Builder::new()
            .name("bridge-reader".into())
            .spawn(move || reader_loop(BufReader::new(reader), &thread_shared))?;
        let placeholder = LabelSet::new(vec!["?0".into(), "?1".into()]).expect("two labels");
        let mut client = Self {
            writer: Mutex::new(Some(Box::new(BufWriter::new(writer)))),
            shared,
            next_id: AtomicU64::new(0),
            labels: placeholder,
            input_size,
            reader: Mutex::new(Some(handle)),
            child: Mutex::new(None),
        };
        let id = client.send(&|id| Header::Info { id, labels: None }, &[])?;
        match client.wait_reply(id)? {
            Reply::Info(labels) => {
                client.labels = LabelSet::new(labels).map_err(|e| BridgeError::Protocol(e.to_string()))?;
                Ok(client)
            }
            Reply::Error(m) => Err(BridgeError::Remote(m)),
            other => Err(BridgeError::Protocol(format!("info request answered with {other:?}"))),
        }
    }

    pub fn with_default_size<R, W>(reader: R, writer: W) -> Result<Self, BridgeError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::connect(reader, writer, DEFAULT_INPUT_SIZE)
    }

    fn send(&self, header: &dyn Fn(u64) -> Header, payload: &[u8]) -> Result<u64, BridgeError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let mut guard = self.writer.lock().expect("bridge writer poisoned");
        let w = guard.as_mut().ok_or_else(|| BridgeError::Closed("client shut down".into()))?;
        write_frame(w, &header(id), payload)?;
        Ok(id)
    }

    fn wait_reply(&self, id: u64) -> Result<Reply, BridgeError> {
        let mut state = self.shared.state.lock().expect("bridge state poisoned");
        loop {
            if let Some(reply) = state.replies.remove(&id) {
                return Ok(reply);
            }
            if let Some(reason) = &state.closed {
                return Err(BridgeError::Closed(reason.clone()));
            }
            state = self.shared.arrived.wait(state).expect("bridge state poisoned");
        }
    }

    /// Sends a classify request without waiting for its reply.
    pub fn submit(&self, batch: &[ImageBuffer]) -> Result<Ticket, BridgeError> {
        for img in batch {
            if img.dims() != self.input_size {
                return Err(BridgeError::Protocol(format!(
                    "image is {:?}, bridge expects {:?}",
                    img.dims(),
                    self.input_size
                )));
            }
        }
        let (shape, payload) = encode_batch(batch)?;
        let bytes = payload.len() as u64;
        let id = self.send(
            &|id| Header::Classify { id, shape, dtype: DTYPE_F32LE.into(), payload_bytes: bytes },
            &payload,
        )?;
        Ok(Ticket { id, batch: batch.len() })
    }

    /// Blocks until the reply for `ticket` arrives and validates it.
    pub fn wait(&self, ticket: Ticket) -> Result<Vec<ProbVector>, BridgeError> {
        match self.wait_reply(ticket.id)? {
            Reply::Probs { shape, values } => {
                let [b, k] = shape;
                if b != ticket.batch || k != self.labels.len() || values.len() != b * k {
                    return Err(BridgeError::Protocol(format!(
                        "reply {} has shape {shape:?} with {} values, expected [{}, {}]",
                        ticket.id,
                        values.len(),
                        ticket.batch,
                        self.labels.len()
                    )));
                }
                values
                    .chunks_exact(k.max(1))
                    .map(|row| {
                        ProbVector::new(row.iter().map(|&v| v as f64).collect())
                            .map_err(|e| BridgeError::Protocol(format!("reply {}: {e}", ticket.id)))
                    })
                    .collect()
            }
            Reply::Error(m) => Err(BridgeError::Remote(m)),
            other => Err(BridgeError::Protocol(format!("classify {} answered with {other:?}", ticket.id))),
        }
    }

    /// Submits every batch before collecting any reply.
    pub fn classify_pipelined(&self, batches: &[Vec<ImageBuffer>]) -> Result<Vec<Vec<ProbVector>>, BridgeError> {
        let tickets = batches.iter().map(|b| self.submit(b)).collect::<Result<Vec<_>, _>>()?;
        tickets.into_iter().map(|t| self.wait(t)).collect()
    }

    /// Closes the request stream and waits for the bridge to exit.
    pub fn shutdown(&self) {
        self.writer.lock().map(|mut w| w.take()).ok();
        if let Some(mut child) = self.child.lock().ok().and_then(|mut c| c.take()) {
            let _ = child.wait();
        }
        if let Some(handle) = self.reader.lock().ok().and_then(|mut h| h.take()) {
            let _ = handle.join();
        }
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl Classifier for BridgeClient {
    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    fn classify(&self, batch: &[ImageBuffer]) -> foveate_core::Result<Vec<ProbVector>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        for img in batch {
            if img.dims() != self.input_size {
                return Err(CoreError::ShapeMismatch { expected: self.input_size, found: img.dims() });
            }
        }
        let ticket = self.submit(batch)?;
        Ok(self.wait(ticket)?)
    }
}
