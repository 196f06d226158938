//! CSP wire protocol frames.
//!
//! Every frame is `type(u8) || payload_len(u32 LE) || payload`:
//!
//! | type | name     | payload                                                          |
//! |------|----------|------------------------------------------------------------------|
//! | 0x01 | SEARCH   | 16-byte token                                                    |
//! | 0x02 | RESPONSE | query_id(u64 LE) count(u32 LE) {name_len(u16 LE) name blob_len(u32 LE) blob}* |
//! | 0x7F | ERROR    | UTF-8 message                                                    |

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use crate::sse::{CiphertextDocument, SearchToken, TOKEN_LEN};
use crate::trace::QueryId;

pub const MSG_SEARCH: u8 = 0x01;
pub const MSG_RESPONSE: u8 = 0x02;
pub const MSG_ERROR: u8 = 0x7F;
pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("need {0} more bytes")]
    Incomplete(usize),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("bad payload for message type 0x{kind:02x}: {reason}")]
    BadPayload { kind: u8, reason: &'static str },
}

/// CSP answer to one search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResponse {
    pub query_id: QueryId,
    /// Sorted by filename.
    pub ciphertexts: Vec<CiphertextDocument>,
}

impl SearchResponse {
    pub fn new(query_id: QueryId, mut ciphertexts: Vec<CiphertextDocument>) -> Self {
        ciphertexts.sort_by(|a, b| a.filename().cmp(b.filename()));
        Self { query_id, ciphertexts }
    }

    /// `L_search` for this query.
    pub fn result_size(&self) -> usize {
        self.ciphertexts.len()
    }

    pub fn filenames(&self) -> impl Iterator<Item = &str> {
        self.ciphertexts.iter().map(CiphertextDocument::filename)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Search(SearchToken),
    Response(SearchResponse),
    Error(String),
}

/// Splits a frame header into `(type, payload_len)`.
pub fn parse_header(header: &[u8; HEADER_LEN]) -> (u8, u32) {
    (header[0], u32::from_le_bytes(header[1..].try_into().unwrap()))
}

struct Reader<'a> {
    buf: &'a [u8],
    kind: u8,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        if self.buf.len() < n {
            return Err(FrameError::BadPayload { kind: self.kind, reason: "truncated" });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, FrameError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FrameError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Frame {
    pub fn kind(&self) -> u8 {
        match self {
            Frame::Search(_) => MSG_SEARCH,
            Frame::Response(_) => MSG_RESPONSE,
            Frame::Error(_) => MSG_ERROR,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        match self {
            Frame::Search(t) => payload.extend_from_slice(t.as_bytes()),
            Frame::Response(r) => {
                payload.extend_from_slice(&r.query_id.0.to_le_bytes());
                payload.extend_from_slice(&(r.ciphertexts.len() as u32).to_le_bytes());
                for c in &r.ciphertexts {
                    payload.extend_from_slice(&(c.filename().len() as u16).to_le_bytes());
                    payload.extend_from_slice(c.filename().as_bytes());
                    payload.extend_from_slice(&(c.blob().len() as u32).to_le_bytes());
                    payload.extend_from_slice(c.blob());
                }
            }
            Frame::Error(msg) => payload.extend_from_slice(msg.as_bytes()),
        }
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.push(self.kind());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode_payload(kind: u8, payload: &[u8]) -> Result<Self, FrameError> {
        let bad = |reason| FrameError::BadPayload { kind, reason };
        match kind {
            MSG_SEARCH => {
                let bytes: [u8; TOKEN_LEN] = payload.try_into().map_err(|_| bad("token must be 16 bytes"))?;
                Ok(Frame::Search(SearchToken::from_bytes(bytes)))
            }
            MSG_RESPONSE => {
                let mut r = Reader { buf: payload, kind };
                let query_id = QueryId(r.u64()?);
                let count = r.u32()? as usize;
                let mut ciphertexts = Vec::with_capacity(count.min(1024));
                for _ in 0..count {
                    let name_len = r.u16()? as usize;
                    let name = core::str::from_utf8(r.take(name_len)?).map_err(|_| bad("filename is not utf-8"))?;
                    let blob_len = r.u32()? as usize;
                    let blob = r.take(blob_len)?.to_vec();
                    let c = CiphertextDocument::new(name, blob).map_err(|_| bad("invalid filename"))?;
                    ciphertexts.push(c);
                }
                if !r.buf.is_empty() {
                    return Err(bad("trailing bytes"));
                }
                Ok(Frame::Response(SearchResponse { query_id, ciphertexts }))
            }
            MSG_ERROR => {
                let msg = core::str::from_utf8(payload).map_err(|_| bad("message is not utf-8"))?;
                Ok(Frame::Error(msg.to_owned()))
            }
            other => Err(FrameError::UnknownType(other)),
        }
    }

    /// Decodes one frame from the front of `buf`, returning it with the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), FrameError> {
        if buf.len() < HEADER_LEN {
            return Err(FrameError::Incomplete(HEADER_LEN - buf.len()));
        }
        let (kind, len) = parse_header(buf[..HEADER_LEN].try_into().unwrap());
        let total = HEADER_LEN + len as usize;
        if buf.len() < total {
            return Err(FrameError::Incomplete(total - buf.len()));
        }
        Ok((Self::decode_payload(kind, &buf[HEADER_LEN..total])?, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn search_frame_layout() {
        let t = SearchToken::from_bytes([0xAB; TOKEN_LEN]);
        let bytes = Frame::Search(t).encode();
        assert_eq!(bytes[0], 0x01);
        assert_eq!(&bytes[1..5], &16u32.to_le_bytes());
        assert_eq!(&bytes[5..], &[0xAB; 16]);
    }

    #[test]
    fn response_frame_layout() {
        let r = SearchResponse::new(
            QueryId(7),
            vec![CiphertextDocument::new("b", vec![9, 9]).unwrap(), CiphertextDocument::new("a", vec![1]).unwrap()],
        );
        let bytes = Frame::Response(r).encode();
        let expected: Vec<u8> = [
            &[0x02][..],
            &(8 + 4 + (2 + 1 + 4 + 1) + (2 + 1 + 4 + 2) as u32).to_le_bytes(),
            &7u64.to_le_bytes(),
            &2u32.to_le_bytes(),
            &1u16.to_le_bytes(),
            b"a",
            &1u32.to_le_bytes(),
            &[1],
            &1u16.to_le_bytes(),
            b"b",
            &2u32.to_le_bytes(),
            &[9, 9],
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn bad_frames() {
        assert_eq!(Frame::decode(&[1, 2]), Err(FrameError::Incomplete(3)));
        assert_eq!(Frame::decode(&[0x55, 0, 0, 0, 0]), Err(FrameError::UnknownType(0x55)));
        assert!(matches!(Frame::decode(&[1, 3, 0, 0, 0, 1, 2, 3]), Err(FrameError::BadPayload { .. })));
        assert!(matches!(Frame::decode(&[1, 20, 0, 0, 0, 1]), Err(FrameError::Incomplete(19))));
        // response declaring one entry with no body
        let mut p = vec![2, 12, 0, 0, 0];
        p.extend_from_slice(&[0; 8]);
        p.extend_from_slice(&1u32.to_le_bytes());
        assert!(matches!(Frame::decode(&p), Err(FrameError::BadPayload { .. })));
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        let name = "[a-z0-9]{1,8}(/[a-z0-9]{1,8}){0,2}";
        prop_oneof![
            any::<[u8; 16]>().prop_map(|b| Frame::Search(SearchToken::from_bytes(b))),
            "[ -~]{0,40}".prop_map(Frame::Error),
            (any::<u64>(), prop::collection::btree_map(name, prop::collection::vec(any::<u8>(), 0..40), 0..6))
                .prop_map(|(q, docs)| {
                    let cts = docs.into_iter().map(|(n, b)| CiphertextDocument::new(n, b).unwrap()).collect();
                    Frame::Response(SearchResponse::new(QueryId(q), cts))
                }),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(frame in arb_frame()) {
            let bytes = frame.encode();
            prop_assert_eq!(Frame::decode(&bytes), Ok((frame, bytes.len())));
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = Frame::decode(&bytes);
        }
    }
}
