//! Data-owner side of the wire protocol.

use std::io::Write;
use std::net::{TcpStream, ToSocketAddrs};

use sseleak_core::{Frame, SearchResponse, SearchToken};

use crate::error::{LabError, Result};
use crate::server::read_frame_raw;

/// Largest response the client will buffer.
pub const MAX_RESPONSE_LEN: u32 = 1 << 30;

pub struct CspClient {
    stream: TcpStream,
}

impl CspClient {
    pub fn connect(endpoint: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(endpoint)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn search(&mut self, token: &SearchToken) -> Result<SearchResponse> {
        match self.send_raw(&Frame::Search(*token).encode())? {
            Frame::Response(r) => Ok(r),
            Frame::Error(msg) => Err(LabError::Server(msg)),
            Frame::Search(_) => Err(LabError::Protocol("server sent a SEARCH frame".into())),
        }
    }

    /// Sends arbitrary bytes and reads one reply frame.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<Frame> {
        self.stream.write_all(bytes)?;
        self.read_frame()
    }

    fn read_frame(&mut self) -> Result<Frame> {
        match read_frame_raw(&mut self.stream, MAX_RESPONSE_LEN)? {
            None => Err(LabError::Protocol("connection closed by server".into())),
            Some((_, Err(len))) => Err(LabError::Protocol(format!("{len}-byte response exceeds limit"))),
            Some((kind, Ok(payload))) => Ok(Frame::decode_payload(kind, &payload)?),
        }
    }
}
