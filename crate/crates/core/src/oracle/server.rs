//! Serve any in-process oracle over the line protocol.
//!
//! Requests are handled strictly in arrival order, so pipelined clients get
//! responses in the order they wrote requests.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::net::TcpListener;

use super::protocol::{Request, Response, PROTOCOL_VERSION};
use super::Oracle;
use crate::error::{Error, Result};
use crate::model::{
    load_features, load_frames, load_segmentation, BundleSources, Fragment, Fragmentation, VideoBundle,
};

struct Session<'a> {
    oracle: &'a dyn Oracle,
    videos: HashMap<String, VideoBundle>,
    fragments_known: HashMap<String, bool>,
}

impl<'a> Session<'a> {
    fn handle(&mut self, req: Request) -> Response {
        let id = req.id();
        match self.dispatch(req) {
            Ok(resp) => resp,
            Err(e) => Response::Error {
                id,
                message: e.to_string(),
            },
        }
    }

    fn video(&self, video_id: &str) -> Result<&VideoBundle> {
        self.videos
            .get(video_id)
            .ok_or_else(|| Error::Validation(format!("video not loaded: {video_id}")))
    }

    fn dispatch(&mut self, req: Request) -> Result<Response> {
        match req {
            Request::Hello { proto } => {
                if proto != PROTOCOL_VERSION {
                    return Err(Error::Protocol(format!("unsupported protocol version {proto}")));
                }
                Ok(Response::Hello {
                    proto: PROTOCOL_VERSION,
                    caps: self.oracle.capabilities(),
                })
            }
            Request::Load {
                id,
                video_id,
                features_path,
                frames_path,
                segmentation_path,
            } => {
                let features = load_features(&features_path)?;
                let n = features.n_frames();
                let mut bundle = VideoBundle::new(video_id.clone(), features, Fragmentation::whole(n));
                if let Some(p) = &frames_path {
                    bundle = bundle.with_frames(load_frames(p)?);
                }
                if let Some(p) = &segmentation_path {
                    bundle = bundle.with_segmentation(load_segmentation(p)?);
                }
                bundle = bundle.with_sources(BundleSources {
                    features: features_path.into(),
                    frames: frames_path.map(Into::into),
                    segmentation: segmentation_path.map(Into::into),
                });
                self.fragments_known.insert(video_id.clone(), false);
                self.videos.insert(video_id, bundle);
                Ok(Response::Ok { id })
            }
            Request::Score {
                id,
                video_id,
                spec,
                fragments,
            } => {
                if let Some(pairs) = fragments {
                    let n = self.video(&video_id)?.n_frames();
                    let frag = Fragmentation::covering(
                        pairs.iter().map(|&[s, e]| Fragment::new(s, e)).collect(),
                        n,
                    )?;
                    self.videos.get_mut(&video_id).expect("checked above").fragmentation = frag;
                    self.fragments_known.insert(video_id.clone(), true);
                }
                let bundle = self.video(&video_id)?;
                if !self.fragments_known[&video_id] && spec != crate::model::PerturbationSpec::None {
                    return Err(Error::Validation(format!(
                        "no fragment boundaries received for {video_id}"
                    )));
                }
                let scores = super::score(self.oracle, bundle, &spec)?;
                Ok(Response::Scores { id, scores: scores.0 })
            }
            Request::Attention { id, video_id } => {
                let diag = super::attention_diagonal(self.oracle, self.video(&video_id)?)?;
                Ok(Response::Attention { id, diag: diag.0 })
            }
        }
    }
}

/// Run one session until the reader hits end of input.
pub fn serve(oracle: &dyn Oracle, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
    let mut session = Session {
        oracle,
        videos: HashMap::new(),
        fragments_known: HashMap::new(),
    };
    for line in reader.lines() {
        let line = line.map_err(|e| Error::Protocol(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<serde_json::Value>(&line) {
            Err(e) => Response::Error {
                id: None,
                message: format!("malformed json: {e}"),
            },
            Ok(value) => {
                let id = value.get("id").and_then(serde_json::Value::as_u64);
                match serde_json::from_value::<Request>(value) {
                    Ok(req) => session.handle(req),
                    Err(e) => Response::Error {
                        id,
                        message: format!("bad request: {e}"),
                    },
                }
            }
        };
        let mut out = serde_json::to_vec(&resp)?;
        out.push(b'\n');
        writer
            .write_all(&out)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::Protocol(format!("write failed: {e}")))?;
    }
    Ok(())
}

/// Accept connections one after another, each served to completion.
pub fn serve_tcp(oracle: &dyn Oracle, listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::Protocol(format!("accept failed: {e}")))?;
        let reader = std::io::BufReader::new(
            stream
                .try_clone()
                .map_err(|e| Error::Protocol(format!("socket clone failed: {e}")))?,
        );
        if let Err(e) = serve(oracle, reader, stream) {
            log::warn!("session ended with error: {e}");
        }
    }
    Ok(())
}
