//! Wire framing: a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::envelope::RpcEnvelope;

/// Largest accepted frame body.
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    FrameTooLarge(usize),
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
}

/// Serializes `msg` into a complete frame.
pub fn encode_message<T: Serialize>(msg: &T) -> Result<Vec<u8>, FrameError> {
    let body = serde_json::to_vec(msg).map_err(|e| FrameError::MalformedJson(e.to_string()))?;
    if body.len() > MAX_FRAME {
        return Err(FrameError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn encode_frame(env: &RpcEnvelope) -> Result<Vec<u8>, FrameError> {
    encode_message(env)
}

/// Splits one frame body off the front of `buf`. Returns `Ok(None)` while
/// the frame is incomplete, otherwise the body and the bytes consumed.
pub fn split_frame(buf: &[u8]) -> Result<Option<(&[u8], usize)>, FrameError> {
    let Some(head) = buf.get(..4) else {
        return Ok(None);
    };
    let len = u32::from_be_bytes(head.try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::FrameTooLarge(len));
    }
    Ok(buf.get(4..4 + len).map(|body| (body, 4 + len)))
}

const REQUIRED: [&str; 4] = ["id", "vehicle_type", "vehicle_id", "method"];

/// Parses a request body, naming the first missing field.
pub fn parse_envelope(body: &[u8]) -> Result<RpcEnvelope, FrameError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| FrameError::MalformedJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| FrameError::MalformedJson("request must be a JSON object".into()))?;
    if let Some(missing) = REQUIRED.iter().find(|k| !obj.contains_key(**k)) {
        return Err(FrameError::MissingField(missing));
    }
    serde_json::from_value(value).map_err(|e| FrameError::MalformedJson(e.to_string()))
}

/// Parses any frame body as `T`.
pub fn parse_message<T: DeserializeOwned>(body: &[u8]) -> Result<T, FrameError> {
    serde_json::from_slice(body).map_err(|e| FrameError::MalformedJson(e.to_string()))
}

/// Decodes one complete request frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Option<(RpcEnvelope, usize)>, FrameError> {
    match split_frame(bytes)? {
        Some((body, used)) => Ok(Some((parse_envelope(body)?, used))),
        None => Ok(None),
    }
}

/// Incremental decoder for a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame body, if any. A body that fails to parse is
    /// still consumed, so the stream stays in sync.
    pub fn next_body(&mut self) -> Result<Option<Vec<u8>>, FrameError> {
        let Some((body, used)) = split_frame(&self.buf)? else {
            return Ok(None);
        };
        let body = body.to_vec();
        self.buf.drain(..used);
        Ok(Some(body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> RpcEnvelope {
        RpcEnvelope::world(1, "ping", json!({}))
    }

    #[test]
    fn minimal_round_trip() {
        let bytes = encode_frame(&minimal()).unwrap();
        let body = br#"{"id":1,"vehicle_type":"world","vehicle_id":"","method":"ping","params":{}}"#;
        assert_eq!(&bytes[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], body);
        let (env, used) = decode_frame(&bytes).unwrap().unwrap();
        assert_eq!(env, minimal());
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn partial_frames_wait() {
        let mut frame = 10u32.to_be_bytes().to_vec();
        frame.extend_from_slice(&[b' '; 9]);
        assert_eq!(split_frame(&frame), Ok(None));
        assert_eq!(split_frame(&frame[..3]), Ok(None));
        let bytes = encode_frame(&minimal()).unwrap();
        let mut dec = FrameDecoder::new();
        for b in &bytes[..bytes.len() - 1] {
            dec.push(&[*b]);
            assert_eq!(dec.next_body(), Ok(None));
        }
        dec.push(&bytes[bytes.len() - 1..]);
        let body = dec.next_body().unwrap().unwrap();
        assert_eq!(parse_envelope(&body).unwrap(), minimal());
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn too_large() {
        let frame = [0x01, 0x00, 0x00, 0x01, b'{'];
        assert_eq!(split_frame(&frame), Err(FrameError::FrameTooLarge(0x0100_0001)));
        let exact = (MAX_FRAME as u32).to_be_bytes();
        assert_eq!(split_frame(&exact), Ok(None));
    }

    #[test]
    fn malformed_and_missing() {
        assert!(matches!(parse_envelope(b"{not json"), Err(FrameError::MalformedJson(_))));
        assert!(matches!(parse_envelope(b"[1,2]"), Err(FrameError::MalformedJson(_))));
        assert_eq!(
            parse_envelope(br#"{"id":1,"vehicle_type":"world","vehicle_id":""}"#),
            Err(FrameError::MissingField("method"))
        );
        assert_eq!(
            parse_envelope(br#"{"vehicle_type":"world","vehicle_id":"","method":"ping"}"#),
            Err(FrameError::MissingField("id"))
        );
        assert!(matches!(
            parse_envelope(br#"{"id":1,"vehicle_type":"boat","vehicle_id":"","method":"ping"}"#),
            Err(FrameError::MalformedJson(_))
        ));
        // params may be omitted
        let env = parse_envelope(br#"{"id":7,"vehicle_type":"car","vehicle_id":"u","method":"ping"}"#).unwrap();
        assert_eq!(env.params, json!({}));
    }

    #[test]
    fn stream_of_frames() {
        let mut bytes = Vec::new();
        for i in 0..5 {
            bytes.extend(encode_frame(&RpcEnvelope::world(i, "ping", json!({"i": i}))).unwrap());
        }
        let mut dec = FrameDecoder::new();
        for chunk in bytes.chunks(7) {
            dec.push(chunk);
        }
        for i in 0..5 {
            let env = parse_envelope(&dec.next_body().unwrap().unwrap()).unwrap();
            assert_eq!(env.id, i);
        }
        assert_eq!(dec.next_body(), Ok(None));
    }
}
