//! Wire messages for external oracles: one UTF-8 JSON object per line.
//!
//! ```text
//! -> {"op":"hello","proto":1}
//! <- {"op":"hello","proto":1,"caps":{"fragment_masks":true,...,"batch_limit":64}}
//! -> {"op":"load","id":7,"video_id":"v1","features_path":"...","frames_path":null,"segmentation_path":null}
//! <- {"op":"ok","id":7}
//! -> {"op":"score","id":8,"video_id":"v1","spec":{"kind":"fragments","masked_fragments":[0,3]},"fragments":[[0,4],[5,9]]}
//! <- {"op":"scores","id":8,"scores":[...]}
//! -> {"op":"attention","id":9,"video_id":"v1"}
//! <- {"op":"attention","id":9,"diag":[...]}
//! <- {"op":"error","id":9,"message":"..."}
//! ```
//!
//! `fragments` accompanies the first score request for each video only.

use serde::{Deserialize, Serialize};

use super::OracleCapabilities;
use crate::model::PerturbationSpec;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello {
        proto: u32,
    },
    Load {
        id: u64,
        video_id: String,
        features_path: String,
        frames_path: Option<String>,
        segmentation_path: Option<String>,
    },
    Score {
        id: u64,
        video_id: String,
        spec: PerturbationSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fragments: Option<Vec<[usize; 2]>>,
    },
    Attention {
        id: u64,
        video_id: String,
    },
}

impl Request {
    pub fn id(&self) -> Option<u64> {
        match self {
            Request::Hello { .. } => None,
            Request::Load { id, .. } | Request::Score { id, .. } | Request::Attention { id, .. } => {
                Some(*id)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Response {
    Hello {
        proto: u32,
        caps: OracleCapabilities,
    },
    Ok {
        id: u64,
    },
    Scores {
        id: u64,
        scores: Vec<f64>,
    },
    Attention {
        id: u64,
        diag: Vec<f64>,
    },
    Error {
        id: Option<u64>,
        message: String,
    },
}

impl Response {
    pub fn id(&self) -> Option<u64> {
        match self {
            Response::Hello { .. } => None,
            Response::Ok { id } | Response::Scores { id, .. } | Response::Attention { id, .. } => {
                Some(*id)
            }
            Response::Error { id, .. } => *id,
        }
    }
}
