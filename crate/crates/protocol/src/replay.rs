use thiserror::Error;

use crate::envelope::{decode_message, encode_message, DecodeError};
use crate::router::{Connection, RouteError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("line {line}: {source}")]
    Decode { line: usize, source: DecodeError },
    #[error("line {line}: {source}")]
    Contract { line: usize, source: RouteError },
}

/// Serves every request frame of `input` (one per line, blank lines
/// skipped) on a single connection and returns the response transcript.
pub fn replay(connection: &mut Connection, input: &[u8]) -> Result<Vec<u8>, ReplayError> {
    let mut transcript = Vec::new();
    for (i, frame) in input.split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        if frame.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let request = decode_message(frame).map_err(|source| ReplayError::Decode { line, source })?;
        let response = connection
            .serve(&request)
            .map_err(|source| ReplayError::Contract { line, source })?;
        transcript.extend(encode_message(&response).expect("responses are built valid"));
    }
    Ok(transcript)
}
