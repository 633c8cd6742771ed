//! Client for matcher workers running outside this process.
//!
//! Framing is one JSON object per line, over a child process's standard
//! streams or a TCP socket. The worker first announces itself with
//! `{"ready": true, "modes": [...]}`; afterwards every request carries an
//! id and responses may arrive in any order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{build_prompt, Evidence, MatchError, Matcher, ScoreFamily};
use crate::project::{GrayImage, ProjectionStyle};

/// Environment variable holding a worker command line or `tcp://host:port`.
pub const MATCHER_ENV: &str = "OP3D_MATCHER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExternalMode {
    Diffusion,
    Similarity,
}

impl ExternalMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExternalMode::Diffusion => "diffusion",
            ExternalMode::Similarity => "similarity",
        }
    }
}

/// First line sent by a worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub ready: bool,
    pub modes: Vec<String>,
    /// Noise schedule advertised by diffusion workers, logged verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Value>,
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    mode: ExternalMode,
    image_png_b64: String,
    prompts: &'a [String],
    trials: u32,
    seed: u64,
}

type Reply = Result<Value, MatchError>;
type Pending = Arc<Mutex<HashMap<u64, Sender<Reply>>>>;

/// Connection settings.
#[derive(Debug, Clone, Copy)]
pub struct ExternalConfig {
    pub mode: ExternalMode,
    pub trials: u32,
    pub handshake_timeout: Duration,
    pub request_timeout: Duration,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            mode: ExternalMode::Diffusion,
            trials: super::DEFAULT_TRIALS as u32,
            handshake_timeout: Duration::from_secs(30),
            request_timeout: Duration::from_secs(600),
        }
    }
}

pub struct ExternalMatcher {
    config: ExternalConfig,
    handshake: Handshake,
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Pending,
    closed: Arc<Mutex<Option<String>>>,
    next_id: AtomicU64,
    child: Mutex<Option<Child>>,
}

impl std::fmt::Debug for ExternalMatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalMatcher")
            .field("config", &self.config)
            .field("handshake", &self.handshake)
            .finish_non_exhaustive()
    }
}

fn unavailable(msg: impl Into<String>) -> MatchError {
    MatchError::MatcherUnavailable(msg.into())
}

impl ExternalMatcher {
    /// Connect over an already established pair of streams.
    pub fn from_streams<R, W>(
        reader: R,
        writer: W,
        config: ExternalConfig,
    ) -> Result<Self, MatchError>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        if config.trials == 0 {
            return Err(MatchError::NoTrials);
        }
        let pending: Pending = Arc::default();
        let closed: Arc<Mutex<Option<String>>> = Arc::default();
        let (hs_tx, hs_rx) = mpsc::channel();
        {
            let pending = Arc::clone(&pending);
            let closed = Arc::clone(&closed);
            thread::Builder::new()
                .name("op3d-matcher-reader".into())
                .spawn(move || read_loop(reader, hs_tx, pending, closed))
                .map_err(|e| unavailable(e.to_string()))?;
        }
        let handshake = match hs_rx.recv_timeout(config.handshake_timeout) {
            Ok(h) => h?,
            Err(RecvTimeoutError::Timeout) => {
                return Err(unavailable(format!(
                    "no handshake within {:?}",
                    config.handshake_timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(unavailable("worker closed before the handshake"))
            }
        };
        if !handshake.ready {
            return Err(unavailable("worker reported ready = false"));
        }
        if !handshake.modes.iter().any(|m| m == config.mode.as_str()) {
            return Err(unavailable(format!(
                "worker modes {:?} do not include {}",
                handshake.modes,
                config.mode.as_str()
            )));
        }
        if let Some(s) = &handshake.schedule {
            log::info!("external matcher schedule: {s}");
        }
        Ok(Self {
            config,
            handshake,
            writer: Mutex::new(Box::new(writer)),
            pending,
            closed,
            next_id: AtomicU64::new(1),
            child: Mutex::new(None),
        })
    }

    /// Launch `command` through `sh -c` and talk over its stdio.
    pub fn spawn(command: &str, config: ExternalConfig) -> Result<Self, MatchError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unavailable(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        match Self::from_streams(BufReader::new(stdout), stdin, config) {
            Ok(m) => {
                *m.child.lock().expect("child lock") = Some(child);
                Ok(m)
            }
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                Err(e)
            }
        }
    }

    pub fn connect_tcp(addr: &str, config: ExternalConfig) -> Result<Self, MatchError> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| unavailable(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| unavailable(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, config.handshake_timeout)
            .map_err(|e| unavailable(format!("{addr}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let reader = stream.try_clone().map_err(|e| unavailable(e.to_string()))?;
        Self::from_streams(BufReader::new(reader), stream, config)
    }

    /// `tcp://host:port` connects to a socket; anything else is a command.
    pub fn connect(spec: &str, config: ExternalConfig) -> Result<Self, MatchError> {
        match spec.strip_prefix("tcp://") {
            Some(addr) => Self::connect_tcp(addr, config),
            None => Self::spawn(spec, config),
        }
    }

    /// Connect using [`MATCHER_ENV`].
    pub fn from_env(config: ExternalConfig) -> Result<Self, MatchError> {
        let spec = std::env::var(MATCHER_ENV)
            .map_err(|_| unavailable(format!("{MATCHER_ENV} is not set")))?;
        Self::connect(&spec, config)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn config(&self) -> &ExternalConfig {
        &self.config
    }

    /// Send one request and wait for its response object.
    pub fn request(
        &self,
        image: &GrayImage,
        prompts: &[String],
        seed: u64,
    ) -> Result<Value, MatchError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let line = serde_json::to_string(&Request {
            id,
            mode: self.config.mode,
            image_png_b64: B64.encode(image.encode_png()),
            prompts,
            trials: self.config.trials,
            seed,
        })
        .map_err(|e| MatchError::ProtocolError(e.to_string()))?;

        let (tx, rx) = mpsc::channel();
        {
            let closed = self.closed.lock().expect("closed lock");
            if let Some(reason) = closed.as_ref() {
                return Err(unavailable(reason.clone()));
            }
            self.pending.lock().expect("pending lock").insert(id, tx);
        }
        let sent = {
            let mut w = self.writer.lock().expect("writer lock");
            writeln!(w, "{line}").and_then(|_| w.flush())
        };
        if let Err(e) = sent {
            self.pending.lock().expect("pending lock").remove(&id);
            return Err(unavailable(format!("write failed: {e}")));
        }
        match rx.recv_timeout(self.config.request_timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").remove(&id);
                Err(unavailable(format!(
                    "request {id} timed out after {:?}",
                    self.config.request_timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => Err(unavailable("worker stream closed")),
        }
    }
}

impl Drop for ExternalMatcher {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.lock().ok().and_then(|mut c| c.take()) {
            // closing stdin first lets a well-behaved worker exit on its own
            if let Ok(mut w) = self.writer.lock() {
                *w = Box::new(std::io::sink());
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn read_loop<R: BufRead>(
    reader: R,
    handshake: Sender<Result<Handshake, MatchError>>,
    pending: Pending,
    closed: Arc<Mutex<Option<String>>>,
) {
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(Ok(l)) => serde_json::from_str::<Handshake>(&l)
            .map_err(|e| MatchError::ProtocolError(format!("bad handshake {l:?}: {e}"))),
        Some(Err(e)) => Err(unavailable(e.to_string())),
        None => Err(unavailable("worker closed before the handshake")),
    };
    let ok = first.is_ok();
    let _ = handshake.send(first);
    let reason = if ok {
        loop {
            match lines.next() {
                Some(Ok(l)) if l.trim().is_empty() => continue,
                Some(Ok(l)) => dispatch(&l, &pending),
                Some(Err(e)) => break format!("read failed: {e}"),
                None => break "worker stream closed".to_string(),
            }
        }
    } else {
        "handshake failed".to_string()
    };
    let mut c = closed.lock().expect("closed lock");
    *c = Some(reason.clone());
    for (_, tx) in pending.lock().expect("pending lock").drain() {
        let _ = tx.send(Err(unavailable(reason.clone())));
    }
}

fn dispatch(line: &str, pending: &Pending) {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("ignoring malformed worker line: {e}");
            return;
        }
    };
    let Some(id) = value.get("id").and_then(Value::as_u64) else {
        log::warn!("ignoring worker line without id: {line}");
        return;
    };
    match pending.lock().expect("pending lock").remove(&id) {
        Some(tx) => {
            let _ = tx.send(Ok(value));
        }
        None => log::warn!("ignoring response to unknown request {id}"),
    }
}

fn f64_list(v: &Value, what: &str) -> Result<Vec<f64>, MatchError> {
    v.as_array()
        .ok_or_else(|| MatchError::ProtocolError(format!("{what} is not an array")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| MatchError::ProtocolError(format!("{what} holds a non-number")))
        })
        .collect()
}

/// Turn one response object into per-prompt evidence.
pub fn parse_response(
    value: &Value,
    mode: ExternalMode,
    n_prompts: usize,
) -> Result<Vec<Evidence>, MatchError> {
    if let Some(err) = value.get("error") {
        let msg = err
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| err.to_string());
        return Err(MatchError::ProtocolError(msg));
    }
    let (key, evidence): (&str, Vec<Evidence>) = match mode {
        ExternalMode::Diffusion => {
            let rows = value
                .get("sq_err")
                .and_then(Value::as_array)
                .ok_or_else(|| MatchError::ProtocolError("response lacks sq_err".into()))?;
            let mut out = Vec::with_capacity(rows.len());
            for row in rows {
                let errs = f64_list(row, "sq_err row")?;
                if errs.is_empty() {
                    return Err(MatchError::NoTrials);
                }
                out.push(Evidence::SqErr(errs));
            }
            ("sq_err", out)
        }
        ExternalMode::Similarity => {
            let sims = value
                .get("sim")
                .ok_or_else(|| MatchError::ProtocolError("response lacks sim".into()))?;
            (
                "sim",
                f64_list(sims, "sim")?
                    .into_iter()
                    .map(Evidence::Similarity)
                    .collect(),
            )
        }
    };
    if evidence.len() != n_prompts {
        return Err(MatchError::ProtocolError(format!(
            "{key} has {} entries for {n_prompts} prompts",
            evidence.len()
        )));
    }
    Ok(evidence)
}

impl Matcher for ExternalMatcher {
    fn family(&self) -> ScoreFamily {
        match self.config.mode {
            ExternalMode::Diffusion => ScoreFamily::Diffusion,
            ExternalMode::Similarity => ScoreFamily::Similarity,
        }
    }

    fn evidence(
        &self,
        image: &GrayImage,
        style: ProjectionStyle,
        classes: &[String],
        seed: u64,
    ) -> Result<Vec<Evidence>, MatchError> {
        let prompts: Vec<String> = classes.iter().map(|c| build_prompt(style, c)).collect();
        let reply = self.request(image, &prompts, seed)?;
        parse_response(&reply, self.config.mode, prompts.len())
    }
}
