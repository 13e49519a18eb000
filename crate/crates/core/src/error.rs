use std::io;

use thiserror::Error;

use crate::scene::NodeId;
use crate::sltree::SubtreeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invariant violated at node {nid}: {message}")]
    NodeInvariant { nid: NodeId, message: String },

    #[error("invariant violated in subtree {sid}: {message}")]
    SubtreeInvariant { sid: SubtreeId, message: String },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("bad SLT file: {0}")]
    Format(String),

    #[error("truncated SLT file: needed {needed} bytes at offset {offset}, file has {len}")]
    Truncated { offset: usize, needed: usize, len: usize },

    #[error("invalid architecture config: {0}")]
    Config(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn node(nid: NodeId, message: impl Into<String>) -> Self {
        Error::NodeInvariant {
            nid,
            message: message.into(),
        }
    }

    pub(crate) fn subtree(sid: SubtreeId, message: impl Into<String>) -> Self {
        Error::SubtreeInvariant {
            sid,
            message: message.into(),
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
