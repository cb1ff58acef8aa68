//! Camera/edge wire protocol and the two session state machines.

mod camera;
mod codec;
mod server;

pub use camera::{AkisMode, CameraConfig, CameraSession, CameraStep, IntervalEvent};
pub use codec::{
    decode_header, decode_message, decode_prefix, encode_into, encode_message, ErrorCode, Hello, Message, MessageType,
    PatchPayload, StreamDecoder, WireError, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use server::{Detector, ServerConfig, ServerCostRecord, ServerSession, SessionState};

use thiserror::Error;

/// Session-level violations (well-formed messages in the wrong place).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("HELLO must open the session")]
    HelloRequired,
    #[error("duplicate HELLO")]
    DuplicateHello,
    #[error("NONKEYFRAME before any KEYFRAME")]
    NonKeyframeBeforeKeyframe,
    #[error("session parameters disagree: {0}")]
    SessionMismatch(String),
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("unexpected {0:?} message")]
    Unexpected(MessageType),
    #[error("session is closed")]
    Closed,
    #[error("peer reported {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("internal: {0}")]
    Internal(String),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::SessionMismatch(_) => ErrorCode::SessionMismatch,
            ProtocolError::BadPayload(_) => ErrorCode::BadPayload,
            ProtocolError::Internal(_) => ErrorCode::Internal,
            ProtocolError::Remote { code, .. } => *code,
            _ => ErrorCode::ProtocolViolation,
        }
    }

    pub fn to_message(&self) -> Message {
        Message::Error { code: self.code(), message: self.to_string() }
    }
}
