//! TCP service: one listener per endpoint kind, one thread per connection.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{IpAddr, Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use agsim_core::SimHandle;
use thiserror::Error;

use crate::envelope::{EndpointKind, ErrorCode, RpcResponse};
use crate::frame::{encode_message, parse_envelope, FrameDecoder, FrameError};
use crate::router::route;

pub const DEFAULT_BASE_PORT: u16 = 41451;
pub const BASE_PORT_ENV: &str = "AGSIM_BASE_PORT";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind the {kind} endpoint on {addr}: {source}")]
    Bind {
        kind: EndpointKind,
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("invalid {BASE_PORT_ENV} value `{0}`")]
    BadPort(String),
}

/// Where the three endpoints listen. A base port of 0 picks free ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointConfig {
    pub host: IpAddr,
    pub base_port: u16,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            base_port: DEFAULT_BASE_PORT,
        }
    }
}

impl EndpointConfig {
    pub fn with_base_port(base_port: u16) -> Self {
        Self {
            base_port,
            ..Self::default()
        }
    }

    /// Default config with the base port taken from the environment.
    pub fn from_env() -> Result<Self, ServeError> {
        match std::env::var(BASE_PORT_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Self::with_base_port)
                .map_err(|_| ServeError::BadPort(v)),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn port(&self, kind: EndpointKind) -> u16 {
        if self.base_port == 0 {
            0
        } else {
            self.base_port + kind.offset()
        }
    }

    pub fn addr(&self, kind: EndpointKind) -> SocketAddr {
        SocketAddr::new(self.host, self.port(kind))
    }
}

const POLL: Duration = Duration::from_millis(100);

struct Shared {
    sim: SimHandle,
    stop: AtomicBool,
    connections: Mutex<Vec<JoinHandle<()>>>,
}

/// A running service; dropping it shuts it down.
pub struct Server {
    addrs: Vec<(EndpointKind, SocketAddr)>,
    shared: Arc<Shared>,
    acceptors: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn start(cfg: EndpointConfig, sim: SimHandle) -> Result<Self, ServeError> {
        let shared = Arc::new(Shared {
            sim,
            stop: AtomicBool::new(false),
            connections: Mutex::new(Vec::new()),
        });
        let mut listeners = Vec::new();
        for kind in EndpointKind::ALL {
            let addr = cfg.addr(kind);
            let l = TcpListener::bind(addr).map_err(|source| ServeError::Bind { kind, addr, source })?;
            let local = l.local_addr().map_err(|source| ServeError::Bind { kind, addr, source })?;
            l.set_nonblocking(true)
                .map_err(|source| ServeError::Bind { kind, addr, source })?;
            listeners.push((kind, local, l));
        }
        let addrs = listeners.iter().map(|(k, a, _)| (*k, *a)).collect();
        let acceptors = listeners
            .into_iter()
            .map(|(kind, _, l)| {
                let shared = shared.clone();
                std::thread::spawn(move || accept_loop(kind, l, shared))
            })
            .collect();
        Ok(Self {
            addrs,
            shared,
            acceptors,
        })
    }

    pub fn addr(&self, kind: EndpointKind) -> SocketAddr {
        self.addrs
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, a)| *a)
            .expect("every endpoint is bound")
    }

    pub fn addrs(&self) -> &[(EndpointKind, SocketAddr)] {
        &self.addrs
    }

    /// Stops accepting, closes every connection and joins all threads.
    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        for h in self.acceptors.drain(..) {
            let _ = h.join();
        }
        let conns = std::mem::take(&mut *self.shared.connections.lock().expect("connection list"));
        for h in conns {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop_all();
    }
}

fn accept_loop(kind: EndpointKind, listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let s = shared.clone();
                let h = std::thread::spawn(move || {
                    let _ = serve_connection(kind, stream, &s);
                });
                let mut conns = shared.connections.lock().expect("connection list");
                conns.retain(|h| !h.is_finished());
                conns.push(h);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(10)),
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn write_response(stream: &mut TcpStream, resp: &RpcResponse) -> io::Result<()> {
    let bytes = match encode_message(resp) {
        Ok(b) => b,
        Err(FrameError::FrameTooLarge(n)) => encode_message(&RpcResponse::error(
            resp.id,
            ErrorCode::FrameTooLarge,
            format!("response of {n} bytes exceeds the frame limit"),
        ))
        .expect("small error response encodes"),
        Err(e) => encode_message(&RpcResponse::error(resp.id, ErrorCode::MalformedRequest, e.to_string()))
            .expect("small error response encodes"),
    };
    stream.write_all(&bytes)
}

/// Best-effort request id from a body that failed to parse.
fn salvage_id(body: &[u8]) -> u64 {
    serde_json::from_slice::<serde_json::Value>(body)
        .ok()
        .and_then(|v| v.get("id").and_then(|i| i.as_u64()))
        .unwrap_or(0)
}

fn serve_connection(kind: EndpointKind, mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(POLL))?;
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    while !shared.stop.load(Ordering::SeqCst) {
        let n = match stream.read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(n) => n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        decoder.push(&buf[..n]);
        loop {
            let body = match decoder.next_body() {
                Ok(Some(b)) => b,
                Ok(None) => break,
                Err(e) => {
                    // the stream cannot be resynchronized after a bad length
                    write_response(&mut stream, &RpcResponse::error(0, ErrorCode::FrameTooLarge, e.to_string()))?;
                    let _ = stream.shutdown(Shutdown::Both);
                    return Ok(());
                }
            };
            let resp = match parse_envelope(&body) {
                Ok(env) => route(&env, kind, &shared.sim),
                Err(e) => RpcResponse::error(salvage_id(&body), ErrorCode::MalformedRequest, e.to_string()),
            };
            write_response(&mut stream, &resp)?;
        }
    }
    Ok(())
}
