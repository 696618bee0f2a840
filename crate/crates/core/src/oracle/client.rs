//! Client for oracles running out of process, as a child speaking the line
//! protocol on stdio or as a TCP server.
//!
//! Requests from any thread share one connection. A reader thread routes
//! each response to its waiting caller by request id, so callers may
//! pipeline freely and completion order does not matter.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::protocol::{Request, Response, PROTOCOL_VERSION};
use super::{AttentionDiagonal, Oracle, OracleCapabilities};
use crate::error::{Error, Result};
use crate::model::{PerturbationSpec, ScoreSequence, VideoBundle};

type Pending = Arc<Mutex<Option<HashMap<u64, Sender<Response>>>>>;

struct Connection {
    writer: Box<dyn Write + Send>,
    loaded: HashSet<String>,
    fragments_sent: HashSet<String>,
}

pub struct ExternalOracle {
    caps: OracleCapabilities,
    conn: Mutex<Connection>,
    pending: Pending,
    next_id: AtomicU64,
    child: Mutex<Option<Child>>,
    reader: Option<JoinHandle<()>>,
    tcp: Option<TcpStream>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle").field("caps", &self.caps).finish()
    }
}

fn write_line(w: &mut dyn Write, req: &Request) -> Result<()> {
    let mut line = serde_json::to_vec(req)?;
    line.push(b'\n');
    w.write_all(&line)
        .and_then(|_| w.flush())
        .map_err(|e| Error::Protocol(format!("oracle connection closed: {e}")))
}

impl ExternalOracle {
    /// Spawn `command` through the shell and talk to it over stdio.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let mut oracle = Self::handshake(Box::new(stdin), stdout)?;
        *oracle.child.get_mut().expect("fresh mutex") = Some(child);
        Ok(oracle)
    }

    pub fn connect(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| Error::Oracle(format!("cannot connect to {addr}: {e}")))?;
        let _ = stream.set_nodelay(true);
        let read_half = stream
            .try_clone()
            .map_err(|e| Error::Oracle(format!("socket clone failed: {e}")))?;
        let write_half = stream
            .try_clone()
            .map_err(|e| Error::Oracle(format!("socket clone failed: {e}")))?;
        let mut oracle = Self::handshake(Box::new(write_half), read_half)?;
        oracle.tcp = Some(stream);
        Ok(oracle)
    }

    fn handshake(mut writer: Box<dyn Write + Send>, reader: impl Read + Send + 'static) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        write_line(&mut writer, &Request::Hello { proto: PROTOCOL_VERSION })?;
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| Error::Protocol(format!("no hello from oracle: {e}")))?;
        let caps = match serde_json::from_str::<Response>(line.trim()) {
            Ok(Response::Hello { proto, caps }) if proto == PROTOCOL_VERSION => caps,
            Ok(Response::Hello { proto, .. }) => {
                return Err(Error::Protocol(format!("oracle speaks protocol {proto}")))
            }
            Ok(other) => return Err(Error::Protocol(format!("expected hello, got {other:?}"))),
            Err(e) => return Err(Error::Protocol(format!("bad hello `{}`: {e}", line.trim()))),
        };
        if caps.batch_limit == 0 {
            return Err(Error::Protocol("oracle declared batch_limit 0".into()));
        }

        let pending: Pending = Arc::new(Mutex::new(Some(HashMap::new())));
        let routes = Arc::clone(&pending);
        let handle = std::thread::spawn(move || route_responses(reader, routes));

        Ok(Self {
            caps,
            conn: Mutex::new(Connection {
                writer,
                loaded: HashSet::new(),
                fragments_sent: HashSet::new(),
            }),
            pending,
            next_id: AtomicU64::new(1),
            child: Mutex::new(None),
            reader: Some(handle),
            tcp: None,
        })
    }

    fn register(&self) -> Result<(u64, Receiver<Response>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = channel();
        match self.pending.lock().expect("pending lock").as_mut() {
            Some(map) => {
                map.insert(id, tx);
                Ok((id, rx))
            }
            None => Err(Error::Oracle("oracle connection is closed".into())),
        }
    }

    /// Write a request built for a fresh id. Loads the video first when this
    /// connection has not seen it, and attaches fragment boundaries to the
    /// first score request per video. Both checks happen under the writer
    /// lock so the server sees them before any dependent request.
    fn send(
        &self,
        bundle: &VideoBundle,
        build: impl FnOnce(u64, Option<Vec<[usize; 2]>>) -> Request,
        wants_fragments: bool,
    ) -> Result<Receiver<Response>> {
        let (id, rx) = self.register()?;
        let mut load_rx = None;
        {
            let mut conn = self.conn.lock().expect("connection lock");
            if !conn.loaded.contains(&bundle.video_id) {
                let sources = bundle.sources.as_ref().ok_or_else(|| {
                    Error::Unsupported(format!(
                        "external oracle needs file-backed videos; {} has no source paths",
                        bundle.video_id
                    ))
                })?;
                let (load_id, lrx) = self.register()?;
                let path = |p: &std::path::Path| p.to_string_lossy().into_owned();
                write_line(
                    &mut conn.writer,
                    &Request::Load {
                        id: load_id,
                        video_id: bundle.video_id.clone(),
                        features_path: path(&sources.features),
                        frames_path: sources.frames.as_deref().map(path),
                        segmentation_path: sources.segmentation.as_deref().map(path),
                    },
                )?;
                conn.loaded.insert(bundle.video_id.clone());
                load_rx = Some(lrx);
            }
            let fragments = if wants_fragments && !conn.fragments_sent.contains(&bundle.video_id) {
                conn.fragments_sent.insert(bundle.video_id.clone());
                Some(bundle.fragmentation.as_pairs())
            } else {
                None
            };
            write_line(&mut conn.writer, &build(id, fragments))?;
        }
        if let Some(lrx) = load_rx {
            match wait(lrx)? {
                Response::Ok { .. } => {}
                other => return Err(unexpected("ok", other)),
            }
        }
        Ok(rx)
    }

    fn send_score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<Receiver<Response>> {
        let video_id = bundle.video_id.clone();
        let spec = spec.clone();
        self.send(
            bundle,
            |id, fragments| Request::Score {
                id,
                video_id,
                spec,
                fragments,
            },
            true,
        )
    }
}

fn route_responses(mut reader: impl BufRead, pending: Pending) {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Response>(line.trim()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("unparseable oracle response: {e}");
                continue;
            }
        };
        match resp.id() {
            Some(id) => {
                let tx = pending
                    .lock()
                    .expect("pending lock")
                    .as_mut()
                    .and_then(|m| m.remove(&id));
                match tx {
                    Some(tx) => {
                        let _ = tx.send(resp);
                    }
                    None => log::warn!("oracle answered unknown request id {id}"),
                }
            }
            None => log::warn!("oracle reported an error without request id: {resp:?}"),
        }
    }
    // Dropping the senders wakes every waiter with a disconnect.
    pending.lock().expect("pending lock").take();
}

fn wait(rx: Receiver<Response>) -> Result<Response> {
    match rx.recv() {
        Ok(Response::Error { message, .. }) => Err(Error::Oracle(message)),
        Ok(resp) => Ok(resp),
        Err(_) => Err(Error::Oracle("oracle connection closed before responding".into())),
    }
}

fn unexpected(want: &str, got: Response) -> Error {
    Error::Protocol(format!("expected `{want}` response, got {got:?}"))
}

fn expect_scores(resp: Response) -> Result<ScoreSequence> {
    match resp {
        Response::Scores { scores, .. } => Ok(ScoreSequence(scores)),
        other => Err(unexpected("scores", other)),
    }
}

impl Oracle for ExternalOracle {
    fn capabilities(&self) -> OracleCapabilities {
        self.caps
    }

    fn score(&self, bundle: &VideoBundle, spec: &PerturbationSpec) -> Result<ScoreSequence> {
        expect_scores(wait(self.send_score(bundle, spec)?)?)
    }

    fn score_batch(&self, bundle: &VideoBundle, specs: &[PerturbationSpec]) -> Result<Vec<ScoreSequence>> {
        let mut out = Vec::with_capacity(specs.len());
        for window in specs.chunks(self.caps.batch_limit) {
            let receivers = window
                .iter()
                .map(|s| self.send_score(bundle, s))
                .collect::<Result<Vec<_>>>()?;
            for rx in receivers {
                out.push(expect_scores(wait(rx)?)?);
            }
        }
        Ok(out)
    }

    fn attention_diagonal(&self, bundle: &VideoBundle) -> Result<AttentionDiagonal> {
        let video_id = bundle.video_id.clone();
        let rx = self.send(bundle, |id, _| Request::Attention { id, video_id }, false)?;
        match wait(rx)? {
            Response::Attention { diag, .. } => Ok(AttentionDiagonal(diag)),
            other => Err(unexpected("attention", other)),
        }
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        // Closing our end lets a stdio server see end of input and exit.
        if let Ok(conn) = self.conn.get_mut() {
            conn.writer = Box::new(std::io::sink());
        }
        if let Some(stream) = &self.tcp {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Ok(Some(mut child)) = self.child.get_mut().map(Option::take) {
            let _ = child.wait();
        }
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}
