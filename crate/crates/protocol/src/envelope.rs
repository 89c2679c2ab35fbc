use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const PROTOCOL_VERSION: &str = "1.0";

pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const UNKNOWN_RUN: i64 = -32001;
pub const ILLEGAL_ACTION: i64 = -32002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Request,
    Response,
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> RpcError {
        RpcError {
            code,
            message: message.into(),
        }
    }
}

/// One protocol message. Field declaration order is the wire key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub version: String,
    pub id: u64,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
}

impl Envelope {
    pub fn request(id: u64, method: impl Into<String>, params: Map<String, Value>) -> Envelope {
        Envelope {
            version: PROTOCOL_VERSION.into(),
            id,
            kind: Kind::Request,
            method: Some(method.into()),
            params: Some(params),
            result: None,
            error: None,
        }
    }

    pub fn event(id: u64, method: impl Into<String>, params: Map<String, Value>) -> Envelope {
        Envelope {
            kind: Kind::Event,
            ..Envelope::request(id, method, params)
        }
    }

    pub fn response(id: u64, outcome: Result<Map<String, Value>, RpcError>) -> Envelope {
        let (result, error) = match outcome {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e)),
        };
        Envelope {
            version: PROTOCOL_VERSION.into(),
            id,
            kind: Kind::Response,
            method: None,
            params: None,
            result,
            error,
        }
    }

    /// Structural invariants shared by encoding and decoding.
    pub fn validate(&self) -> Result<(), InvariantError> {
        if self.version != PROTOCOL_VERSION {
            return Err(InvariantError::Version(self.version.clone()));
        }
        if self.id == 0 {
            return Err(InvariantError::ZeroId);
        }
        match self.kind {
            Kind::Request | Kind::Event => {
                if self.method.is_none() {
                    return Err(InvariantError::Missing("method"));
                }
                if self.params.is_none() {
                    return Err(InvariantError::Missing("params"));
                }
                if self.result.is_some() {
                    return Err(InvariantError::Unexpected("result"));
                }
                if self.error.is_some() {
                    return Err(InvariantError::Unexpected("error"));
                }
            }
            Kind::Response => {
                if self.method.is_some() {
                    return Err(InvariantError::Unexpected("method"));
                }
                if self.params.is_some() {
                    return Err(InvariantError::Unexpected("params"));
                }
                if self.result.is_some() == self.error.is_some() {
                    return Err(InvariantError::ResultXorError);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InvariantError {
    #[error("unsupported version `{0}`, expected \"1.0\"")]
    Version(String),
    #[error("id must be a positive integer")]
    ZeroId,
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("field `{0}` is not allowed for this kind")]
    Unexpected(&'static str),
    #[error("a response carries exactly one of `result` and `error`")]
    ResultXorError,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("missing field `{field}` (byte {offset})")]
    MissingField { field: String, offset: usize },
    #[error("malformed frame at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("frame contains more than one line (byte {offset})")]
    EmbeddedNewline { offset: usize },
    #[error("invalid envelope: {0}")]
    Invariant(#[from] InvariantError),
}

impl DecodeError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            DecodeError::MissingField { offset, .. }
            | DecodeError::Malformed { offset, .. }
            | DecodeError::EmbeddedNewline { offset } => Some(*offset),
            DecodeError::Invariant(_) => None,
        }
    }
}

/// One compact JSON line terminated by `\n`. Nested objects serialize
/// with sorted keys, so equal envelopes always give equal bytes.
pub fn encode_message(envelope: &Envelope) -> Result<Vec<u8>, InvariantError> {
    envelope.validate()?;
    let mut bytes = serde_json::to_vec(envelope).expect("envelopes always serialize");
    bytes.push(b'\n');
    Ok(bytes)
}

/// Decodes exactly one frame; a single trailing `\n` is accepted.
pub fn decode_message(frame: &[u8]) -> Result<Envelope, DecodeError> {
    let body = frame.strip_suffix(b"\n").unwrap_or(frame);
    if let Some(offset) = body.iter().position(|&b| b == b'\n') {
        return Err(DecodeError::EmbeddedNewline { offset });
    }
    let envelope: Envelope = serde_json::from_slice(body).map_err(|e| {
        // Frames are single lines, so the column is the byte position.
        let offset = e.column().saturating_sub(1);
        let message = e.to_string();
        match message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.split('`').next())
        {
            Some(field) => DecodeError::MissingField {
                field: field.to_string(),
                offset,
            },
            None => DecodeError::Malformed { offset, message },
        }
    })?;
    envelope.validate()?;
    Ok(envelope)
}
