//! Wire protocol for talking to a running simulation: length-prefixed JSON
//! over TCP, with one listening port per vehicle type plus a world port.

pub mod client;
pub mod envelope;
pub mod frame;
pub mod router;
pub mod server;

pub use client::{ClientError, RpcClient};
pub use envelope::{EndpointKind, ErrorCode, RpcEnvelope, RpcResponse, Status};
pub use frame::{decode_frame, encode_frame, FrameDecoder, FrameError, MAX_FRAME};
pub use router::route;
pub use server::{EndpointConfig, ServeError, Server, BASE_PORT_ENV, DEFAULT_BASE_PORT};
