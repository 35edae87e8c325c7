//! Blocking client for one endpoint.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::envelope::{EndpointKind, RpcEnvelope, RpcResponse};
use crate::frame::{encode_frame, parse_message, FrameDecoder, FrameError};
use crate::server::EndpointConfig;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("server closed the connection")]
    Closed,
    #[error("response id {got} does not match request id {sent}")]
    IdMismatch { sent: u64, got: u64 },
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

pub struct RpcClient {
    kind: EndpointKind,
    stream: TcpStream,
    decoder: FrameDecoder,
    next_id: u64,
}

impl RpcClient {
    pub fn connect(addr: SocketAddr, kind: EndpointKind) -> Result<Self, ClientError> {
        let stream = TcpStream::connect_timeout(&addr, DEFAULT_TIMEOUT).map_err(|source| ClientError::Connect { addr, source })?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        Ok(Self {
            kind,
            stream,
            decoder: FrameDecoder::new(),
            next_id: 1,
        })
    }

    pub fn connect_to(cfg: &EndpointConfig, kind: EndpointKind) -> Result<Self, ClientError> {
        Self::connect(cfg.addr(kind), kind)
    }

    pub fn kind(&self) -> EndpointKind {
        self.kind
    }

    /// Sends a raw envelope and waits for the next response frame.
    pub fn send(&mut self, env: &RpcEnvelope) -> Result<RpcResponse, ClientError> {
        self.stream.write_all(&encode_frame(env)?)?;
        self.read_response()
    }

    /// Writes pre-encoded bytes, e.g. a deliberately broken frame.
    pub fn send_raw(&mut self, bytes: &[u8]) -> Result<RpcResponse, ClientError> {
        self.stream.write_all(bytes)?;
        self.read_response()
    }

    fn read_response(&mut self) -> Result<RpcResponse, ClientError> {
        let mut buf = [0u8; 64 * 1024];
        loop {
            if let Some(body) = self.decoder.next_body()? {
                return Ok(parse_message(&body)?);
            }
            match self.stream.read(&mut buf)? {
                0 => return Err(ClientError::Closed),
                n => self.decoder.push(&buf[..n]),
            }
        }
    }

    /// Calls `method` on this endpoint with a fresh request id.
    pub fn call(&mut self, vehicle_id: &str, method: &str, params: Value) -> Result<RpcResponse, ClientError> {
        let id = self.next_id;
        self.next_id += 1;
        let resp = self.send(&RpcEnvelope::new(id, self.kind, vehicle_id, method, params))?;
        if resp.id != id {
            return Err(ClientError::IdMismatch { sent: id, got: resp.id });
        }
        Ok(resp)
    }
}
