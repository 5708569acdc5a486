use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::Rng;

use super::backend::DetectorBackend;
use super::wire::{read_message, write_message, DetectPayload, DetectResult, MsgType, WireError, WireMessage};
use crate::rng;

const ACCEPT_POLL: Duration = Duration::from_millis(5);

/// Emulated detector cost added to every request.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServerConfig {
    /// Minimum handling time per request, seconds.
    pub model_compute: f64,
    /// Uniform half-width around `model_compute`, seconds.
    pub jitter: f64,
    pub seed: u64,
}

struct Shared {
    backend: Arc<dyn DetectorBackend>,
    cfg: ServerConfig,
    flight: Mutex<()>,
    shutdown: AtomicBool,
    conns: Mutex<Vec<TcpStream>>,
}

/// A running detection server. Dropping it shuts it down.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

/// Binds `addr` and starts serving `backend` in background threads.
pub fn serve<A: ToSocketAddrs>(backend: Arc<dyn DetectorBackend>, addr: A, cfg: ServerConfig) -> io::Result<Server> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        backend,
        cfg,
        flight: Mutex::new(()),
        shutdown: AtomicBool::new(false),
        conns: Mutex::new(Vec::new()),
    });
    let s = shared.clone();
    let accept = thread::Builder::new().name("edge-accept".into()).spawn(move || accept_loop(listener, s))?;
    log::info!("edge server listening on {addr}");
    Ok(Server { addr, shared, accept: Some(accept) })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes every connection and joins the accept thread.
    pub fn shutdown(mut self) {
        self.stop();
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    /// Flag that stops the server when set (for signal handlers).
    pub fn stop_handle(&self) -> impl Fn() + Send + Sync + 'static {
        let s = self.shared.clone();
        move || s.shutdown.store(true, Ordering::SeqCst)
    }

    fn stop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = start_connection(stream, peer, shared.clone()) {
                    log::warn!("connection from {peer} failed to start: {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(ACCEPT_POLL);
            }
        }
    }
    for c in shared.conns.lock().unwrap_or_else(|e| e.into_inner()).drain(..) {
        let _ = c.shutdown(Shutdown::Both);
    }
}

fn start_connection(stream: TcpStream, peer: SocketAddr, shared: Arc<Shared>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    shared.conns.lock().unwrap_or_else(|e| e.into_inner()).push(stream.try_clone()?);
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    thread::Builder::new().name(format!("edge-conn-{peer}")).spawn(move || {
        connection_loop(stream, writer, shared);
        log::debug!("connection from {peer} closed");
    })?;
    Ok(())
}

fn send(writer: &Mutex<TcpStream>, msg: &WireMessage) -> Result<(), WireError> {
    let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
    write_message(&mut *w, msg)
}

fn connection_loop(mut stream: TcpStream, writer: Arc<Mutex<TcpStream>>, shared: Arc<Shared>) {
    loop {
        let msg = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => return,
            Err(WireError::Io(_)) => return,
            Err(e) => {
                let _ = send(&writer, &WireMessage::new(MsgType::Error, 0, 0.0, e.to_string().into_bytes()));
                let _ = stream.shutdown(Shutdown::Both);
                return;
            }
        };
        match msg.msg_type {
            MsgType::Ping => {
                let pong = WireMessage::new(MsgType::Pong, msg.frame_id, msg.capture_timestamp, Vec::new());
                if send(&writer, &pong).is_err() {
                    return;
                }
            }
            MsgType::DetectRequest => {
                let request = match DetectPayload::decode(&msg.payload) {
                    Ok(r) => r,
                    Err(e) => {
                        let err = WireMessage::new(
                            MsgType::Error,
                            msg.frame_id,
                            msg.capture_timestamp,
                            e.to_string().into_bytes(),
                        );
                        let _ = send(&writer, &err);
                        let _ = stream.shutdown(Shutdown::Both);
                        return;
                    }
                };
                let (w, s) = (writer.clone(), shared.clone());
                let spawned = thread::Builder::new()
                    .name("edge-request".into())
                    .spawn(move || handle_request(&msg, &request, &w, &s));
                if spawned.is_err() {
                    return;
                }
            }
            other => {
                let text = format!("unexpected message type {other:?}");
                let _ = send(
                    &writer,
                    &WireMessage::new(MsgType::Error, msg.frame_id, msg.capture_timestamp, text.into_bytes()),
                );
                let _ = stream.shutdown(Shutdown::Both);
                return;
            }
        }
    }
}

fn handle_request(msg: &WireMessage, request: &DetectPayload, writer: &Mutex<TcpStream>, shared: &Shared) {
    let start = Instant::now();
    let result = if shared.backend.single_flight() {
        let _guard = shared.flight.lock().unwrap_or_else(|e| e.into_inner());
        shared.backend.detect(request)
    } else {
        shared.backend.detect(request)
    };
    let cfg = &shared.cfg;
    let jitter = if cfg.jitter > 0.0 {
        rng::rng(rng::derive_seed(cfg.seed, rng::STREAM_LATENCY, msg.frame_id)).random_range(-cfg.jitter..=cfg.jitter)
    } else {
        0.0
    };
    let pad = Duration::from_secs_f64((cfg.model_compute + jitter).max(0.0));
    if let Some(rest) = pad.checked_sub(start.elapsed()) {
        thread::sleep(rest);
    }
    let reply = match result {
        Ok(boxes) => {
            let body = DetectResult { server_time: start.elapsed().as_secs_f64(), boxes };
            WireMessage::new(MsgType::DetectResponse, msg.frame_id, msg.capture_timestamp, body.encode())
        }
        Err(e) => WireMessage::new(MsgType::Error, msg.frame_id, msg.capture_timestamp, e.into_bytes()),
    };
    let _ = send(writer, &reply);
}
