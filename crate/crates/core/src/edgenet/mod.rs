//! Edge offload of 2D detection over TCP.
//!
//! The client pipelines up to `max_inflight` requests on one connection and
//! resolves them out of order; the server answers each request on its own
//! thread and can pad handling time to emulate detector compute. The
//! simulation payload names a scene view (scene id, pose, seed) instead of
//! shipping pixels, so the oracle backend reproduces the in-process detector
//! exactly.

mod backend;
mod client;
mod server;
pub mod wire;

pub use backend::{DetectorBackend, OracleBackend};
pub use client::{Backpressure, ClientConfig, ClientError, DetectHandle, DetectReply, EdgeClient};
pub use server::{serve, Server, ServerConfig};
pub use wire::{DetectPayload, DetectResult, MsgType, WireError, WireMessage, HEADER_LEN, MAX_PAYLOAD};
