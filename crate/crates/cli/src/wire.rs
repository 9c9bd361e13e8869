//! Framing and messages for the authority service.
//!
//! Every frame is a 4-byte big-endian length followed by that many bytes of
//! JSON. Binary fields travel as standard base64.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

pub const MAX_FRAME: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Store { pk: String, blob: String, now: i64 },
    Lookup { keys: Vec<String> },
    Prune { now: i64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireBlob {
    pub pk: String,
    pub blob: String,
}

/// `{"ok":true,...}` on success, `{"ok":false,"err":...}` otherwise. Only the
/// field belonging to the request kind is present.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub err: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<Vec<WireBlob>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
}

impl Response {
    pub fn stored() -> Self {
        Response { ok: true, err: None, blobs: None, removed: None }
    }

    pub fn blobs(blobs: Vec<WireBlob>) -> Self {
        Response { ok: true, err: None, blobs: Some(blobs), removed: None }
    }

    pub fn removed(n: usize) -> Self {
        Response { ok: true, err: None, blobs: None, removed: Some(n) }
    }

    pub fn error(msg: impl Into<String>) -> Self {
        Response { ok: false, err: Some(msg.into()), blobs: None, removed: None }
    }
}

pub fn b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn unb64(field: &str, s: &str) -> Result<Vec<u8>, String> {
    B64.decode(s).map_err(|e| format!("{field}: invalid base64: {e}"))
}

/// What came off the wire.
#[derive(Debug)]
pub enum Frame {
    Body(Vec<u8>),
    /// The declared length was over the limit; the body has been skipped.
    Oversized(usize),
}

/// Reads one frame. `Ok(None)` means the peer closed cleanly between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        let skipped = io::copy(&mut r.take(len as u64), &mut io::sink())?;
        if skipped < len as u64 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        return Ok(Some(Frame::Oversized(len)));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(Frame::Body(body)))
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    let len = u32::try_from(body.len()).map_err(|_| io::Error::other("frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

pub fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> io::Result<()> {
    let body = serde_json::to_vec(value).map_err(io::Error::other)?;
    write_frame(w, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn request_json_shape() {
        let r = Request::Prune { now: 86400 };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"op":"prune","now":86400}"#);
        let back: Request = serde_json::from_str(r#"{"op":"lookup","keys":["AA=="]}"#).unwrap();
        assert_eq!(back, Request::Lookup { keys: vec!["AA==".into()] });
        assert!(serde_json::from_str::<Request>(r#"{"op":"drop"}"#).is_err());
        assert!(serde_json::from_str::<Request>(r#"{"op":"prune","now":1,"x":2}"#).is_err());
    }

    #[test]
    fn response_omits_unused_fields() {
        assert_eq!(serde_json::to_string(&Response::stored()).unwrap(), r#"{"ok":true}"#);
        assert_eq!(
            serde_json::to_string(&Response::error("bad")).unwrap(),
            r#"{"ok":false,"err":"bad"}"#
        );
        assert_eq!(serde_json::to_string(&Response::removed(3)).unwrap(), r#"{"ok":true,"removed":3}"#);
    }

    #[test]
    fn frames_roundtrip_and_eof() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        write_frame(&mut buf, b"").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        let mut cur = Cursor::new(buf);
        assert!(matches!(read_frame(&mut cur).unwrap(), Some(Frame::Body(b)) if b == b"hello"));
        assert!(matches!(read_frame(&mut cur).unwrap(), Some(Frame::Body(b)) if b.is_empty()));
        assert!(read_frame(&mut cur).unwrap().is_none());
    }

    #[test]
    fn oversized_frame_is_skipped_and_stream_stays_aligned() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&((MAX_FRAME + 1) as u32).to_be_bytes());
        buf.resize(buf.len() + MAX_FRAME + 1, 7u8);
        write_frame(&mut buf, b"next").unwrap();
        let mut cur = Cursor::new(buf);
        assert!(matches!(read_frame(&mut cur).unwrap(), Some(Frame::Oversized(n)) if n == MAX_FRAME + 1));
        assert!(matches!(read_frame(&mut cur).unwrap(), Some(Frame::Body(b)) if b == b"next"));
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut cur = Cursor::new(vec![0, 0, 0, 9, 1, 2]);
        assert!(read_frame(&mut cur).is_err());
    }
}
