//! Client side of the `mllm-eval/1` evaluator protocol.
//!
//! Newline-delimited JSON over a byte stream (a child process's stdio or a
//! TCP socket). The server speaks first:
//!
//! ```text
//! <- {"protocol": "mllm-eval/1", "deterministic": true}
//! -> {"id": 1, "op": "evaluate", "audio_wav_b64": "...", "meta": {"coalition": 5, "n": 3}}
//! <- {"id": 1, "value": 0.25}            or  {"id": 1, "error": "..."}
//! ```
//!
//! Requests are answered in order and ids round-trip unchanged.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::audio::wav_bytes;
use crate::error::{Error, Result};
use crate::evaluator::{EvalError, EvalRequest, ModelEvaluator};

pub const PROTOCOL_NAME: &str = "mllm-eval/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub coalition: u64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub id: u64,
    pub op: String,
    pub audio_wav_b64: String,
    pub meta: RequestMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub type LineReader = Box<dyn BufRead + Send>;
pub type LineWriter = Box<dyn Write + Send>;

/// Opens a fresh stream to an evaluator; used again after a transport failure.
pub trait Connector: Send {
    fn connect(&mut self) -> io::Result<Connection>;
    fn describe(&self) -> String;
}

pub struct Connection {
    pub reader: LineReader,
    pub writer: LineWriter,
    pub child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Launches `sh -c <command>` and talks over its stdin/stdout.
pub struct ChildProcess {
    pub command: String,
}

impl Connector for ChildProcess {
    fn connect(&mut self) -> io::Result<Connection> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Connection {
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
        })
    }

    fn describe(&self) -> String {
        format!("child process `{}`", self.command)
    }
}

pub struct Tcp {
    pub addr: String,
}

impl Connector for Tcp {
    fn connect(&mut self) -> io::Result<Connection> {
        let addr = self
            .addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "address did not resolve"))?;
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Connection {
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(stream),
            child: None,
        })
    }

    fn describe(&self) -> String {
        format!("tcp://{}", self.addr)
    }
}

/// A connection handed over once; cannot be reopened.
struct Preconnected(Option<Connection>);

impl Connector for Preconnected {
    fn connect(&mut self) -> io::Result<Connection> {
        self.0
            .take()
            .ok_or_else(|| io::Error::new(io::ErrorKind::NotConnected, "stream already consumed"))
    }

    fn describe(&self) -> String {
        "pre-opened stream".into()
    }
}

fn read_line(reader: &mut LineReader) -> io::Result<String> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "evaluator closed the stream"));
    }
    Ok(line)
}

fn handshake(conn: &mut Connection) -> std::result::Result<Handshake, String> {
    let line = read_line(&mut conn.reader).map_err(|e| format!("no handshake: {e}"))?;
    let hs: Handshake = serde_json::from_str(line.trim()).map_err(|e| format!("bad handshake {:?}: {e}", line.trim()))?;
    if hs.protocol != PROTOCOL_NAME {
        return Err(format!("unsupported protocol {:?}, expected {PROTOCOL_NAME:?}", hs.protocol));
    }
    Ok(hs)
}

fn exchange(conn: &mut Connection, line: &str) -> std::result::Result<String, EvalError> {
    let mut framed = Vec::with_capacity(line.len() + 1);
    framed.extend_from_slice(line.as_bytes());
    framed.push(b'\n');
    conn.writer
        .write_all(&framed)
        .and_then(|_| conn.writer.flush())
        .map_err(|e| EvalError::Transport(format!("send: {e}")))?;
    read_line(&mut conn.reader).map_err(|e| EvalError::Transport(format!("receive: {e}")))
}

/// Evaluator reached over the wire protocol.
pub struct StreamEvaluator {
    connector: Box<dyn Connector>,
    conn: Option<Connection>,
    next_id: u64,
    deterministic: bool,
}

impl StreamEvaluator {
    /// Connects and performs the handshake; failures carry transport diagnostics.
    pub fn open(mut connector: Box<dyn Connector>) -> Result<Self> {
        let mut conn = connector
            .connect()
            .map_err(|e| Error::Evaluator(format!("cannot reach {}: {e}", connector.describe())))?;
        let hs = handshake(&mut conn).map_err(|e| Error::Protocol(format!("{}: {e}", connector.describe())))?;
        if !hs.deterministic {
            warn!(evaluator = %connector.describe(), "evaluator declares itself non-deterministic");
        }
        Ok(Self {
            connector,
            conn: Some(conn),
            next_id: 1,
            deterministic: hs.deterministic,
        })
    }

    pub fn spawn(command: &str) -> Result<Self> {
        Self::open(Box::new(ChildProcess {
            command: command.to_string(),
        }))
    }

    pub fn connect_tcp(addr: &str) -> Result<Self> {
        Self::open(Box::new(Tcp { addr: addr.to_string() }))
    }

    /// Wraps already-open streams. Without a connector, a broken stream stays broken.
    pub fn from_streams(reader: impl BufRead + Send + 'static, writer: impl Write + Send + 'static) -> Result<Self> {
        Self::open(Box::new(Preconnected(Some(Connection {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
        }))))
    }

    fn ensure_connected(&mut self) -> std::result::Result<&mut Connection, EvalError> {
        if self.conn.is_none() {
            debug!(evaluator = %self.connector.describe(), "reconnecting");
            let mut conn = self
                .connector
                .connect()
                .map_err(|e| EvalError::Transport(format!("reconnect to {}: {e}", self.connector.describe())))?;
            handshake(&mut conn).map_err(EvalError::Transport)?;
            self.conn = Some(conn);
        }
        Ok(self.conn.as_mut().unwrap())
    }

    fn round_trip(&mut self, line: &str, id: u64) -> std::result::Result<f64, EvalError> {
        let conn = self.ensure_connected()?;
        let reply = match exchange(conn, line) {
            Ok(reply) => reply,
            Err(e) => {
                self.conn = None;
                return Err(e);
            }
        };
        let resp: Response = match serde_json::from_str(reply.trim()) {
            Ok(r) => r,
            Err(e) => {
                self.conn = None;
                return Err(EvalError::Protocol(format!("unparseable response {:?}: {e}", reply.trim())));
            }
        };
        if resp.id != id {
            self.conn = None;
            return Err(EvalError::Protocol(format!("response id {} does not match request id {id}", resp.id)));
        }
        match (resp.value, resp.error) {
            (_, Some(msg)) => Err(EvalError::Remote(msg)),
            (Some(v), None) if v.is_finite() => Ok(v),
            (Some(v), None) => Err(EvalError::Protocol(format!("non-finite value {v}"))),
            (None, None) => Err(EvalError::Protocol("response has neither value nor error".into())),
        }
    }
}

impl ModelEvaluator for StreamEvaluator {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> std::result::Result<f64, EvalError> {
        let audio = request
            .audio
            .ok_or_else(|| EvalError::Protocol("wire evaluators need audio".into()))?;
        let bytes = wav_bytes(audio).map_err(|e| EvalError::Protocol(format!("encode WAV: {e}")))?;
        let id = self.next_id;
        self.next_id += 1;
        let req = EvaluateRequest {
            id,
            op: "evaluate".into(),
            audio_wav_b64: BASE64.encode(bytes),
            meta: RequestMeta {
                coalition: request.coalition.bits(),
                n: request.n,
            },
        };
        let line = serde_json::to_string(&req).map_err(|e| EvalError::Protocol(e.to_string()))?;
        self.round_trip(&line, id)
    }

    fn is_deterministic(&self) -> bool {
        self.deterministic
    }
}

/// Decodes the audio of a request; for servers and test fixtures.
pub fn decode_request_audio(req: &EvaluateRequest) -> Result<crate::audio::Waveform> {
    let bytes = BASE64
        .decode(&req.audio_wav_b64)
        .map_err(|e| Error::Protocol(format!("bad base64 audio: {e}")))?;
    crate::audio::decode_wav_bytes(&bytes)
}
