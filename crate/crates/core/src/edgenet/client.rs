use std::collections::HashMap;
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{read_message, write_message, DetectPayload, DetectResult, MsgType, WireMessage};
use crate::geometry::Box2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("rejected: {0} requests already in flight")]
    Rejected(usize),
    #[error("frame id {got} does not exceed previous {last}")]
    FrameIdOrder { last: u64, got: u64 },
    #[error("server error: {0}")]
    Server(String),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// What to do with a submission when `max_inflight` requests are pending.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Backpressure {
    /// Fail the new request immediately with [`ClientError::Rejected`].
    #[default]
    RejectNewest,
    /// Wait (up to the timeout) for a slot.
    Block,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClientConfig {
    pub max_inflight: usize,
    pub policy: Backpressure,
    pub timeout: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self { max_inflight: 3, policy: Backpressure::RejectNewest, timeout: Duration::from_secs(1) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectReply {
    pub frame_id: u64,
    pub boxes: Vec<Box2D>,
    /// Server-reported handling time, seconds.
    pub server_time: f64,
    /// Submission to resolution, measured by the client.
    pub rtt: Duration,
}

type Reply = Result<DetectReply, ClientError>;

struct Pending {
    tx: Sender<Reply>,
    sent: Instant,
}

#[derive(Default)]
struct State {
    pending: HashMap<u64, Pending>,
    pings: HashMap<u64, Sender<Instant>>,
    next_ping: u64,
    last_frame_id: Option<u64>,
    closed: Option<String>,
    max_seen: usize,
}

struct Inner {
    writer: Mutex<TcpStream>,
    state: Mutex<State>,
    slot_freed: Condvar,
    cfg: ClientConfig,
}

impl Inner {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn release(&self, frame_id: u64) {
        self.lock().pending.remove(&frame_id);
        self.slot_freed.notify_all();
    }
}

/// Handle to one outstanding request; can be moved to another thread.
pub struct DetectHandle {
    pub frame_id: u64,
    rx: Receiver<Reply>,
    deadline: Instant,
    inner: Arc<Inner>,
}

impl DetectHandle {
    /// Blocks until the reply arrives or the timeout expires.
    pub fn wait(self) -> Reply {
        let left = self.deadline.saturating_duration_since(Instant::now());
        match self.rx.recv_timeout(left) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => {
                self.inner.release(self.frame_id);
                // the reply may have raced the timeout
                self.rx.try_recv().unwrap_or(Err(ClientError::Timeout))
            }
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Transport("connection closed".into())),
        }
    }

    /// Non-blocking poll.
    pub fn try_wait(&self) -> Option<Reply> {
        self.rx.try_recv().ok()
    }
}

/// Connection to a detection server with bounded pipelining.
pub struct EdgeClient {
    inner: Arc<Inner>,
    peer: SocketAddr,
    reader: Option<JoinHandle<()>>,
}

impl EdgeClient {
    pub fn connect<A: ToSocketAddrs>(addr: A, cfg: ClientConfig) -> Result<Self, ClientError> {
        if cfg.max_inflight == 0 {
            return Err(ClientError::Protocol("max_inflight must be at least 1".into()));
        }
        let transport = |e: std::io::Error| ClientError::Transport(e.to_string());
        let peer = addr
            .to_socket_addrs()
            .map_err(transport)?
            .next()
            .ok_or_else(|| ClientError::Transport("address resolved to nothing".into()))?;
        let stream = TcpStream::connect_timeout(&peer, cfg.timeout).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        let reader_stream = stream.try_clone().map_err(transport)?;
        let inner = Arc::new(Inner {
            writer: Mutex::new(stream),
            state: Mutex::new(State::default()),
            slot_freed: Condvar::new(),
            cfg,
        });
        let i = inner.clone();
        let reader = thread::Builder::new()
            .name("edge-client-reader".into())
            .spawn(move || reader_loop(reader_stream, i))
            .map_err(transport)?;
        Ok(Self { inner, peer, reader: Some(reader) })
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    pub fn config(&self) -> &ClientConfig {
        &self.inner.cfg
    }

    pub fn inflight(&self) -> usize {
        self.inner.lock().pending.len()
    }

    /// Smallest frame id the next submit accepts.
    pub fn next_frame_id(&self) -> u64 {
        self.inner.lock().last_frame_id.map_or(0, |l| l + 1)
    }

    /// Largest number of simultaneously pending requests seen so far.
    pub fn max_observed_inflight(&self) -> usize {
        self.inner.lock().max_seen
    }

    /// Sends a request without waiting for its reply. Frame ids must strictly
    /// increase per connection.
    pub fn submit(
        &self,
        frame_id: u64,
        capture_timestamp: f64,
        payload: &DetectPayload,
    ) -> Result<DetectHandle, ClientError> {
        let cfg = self.inner.cfg;
        let deadline = Instant::now() + cfg.timeout;
        let (tx, rx) = mpsc::channel();
        {
            let mut st = self.inner.lock();
            if let Some(why) = &st.closed {
                return Err(ClientError::Transport(why.clone()));
            }
            if let Some(last) = st.last_frame_id {
                if frame_id <= last {
                    return Err(ClientError::FrameIdOrder { last, got: frame_id });
                }
            }
            // requests whose handles were dropped without waiting still hold a
            // slot until they expire
            let now = Instant::now();
            st.pending.retain(|_, p| now.duration_since(p.sent) < cfg.timeout);
            while st.pending.len() >= cfg.max_inflight {
                match cfg.policy {
                    Backpressure::RejectNewest => return Err(ClientError::Rejected(st.pending.len())),
                    Backpressure::Block => {
                        let left = deadline.saturating_duration_since(Instant::now());
                        if left.is_zero() {
                            return Err(ClientError::Timeout);
                        }
                        st = self.inner.slot_freed.wait_timeout(st, left).unwrap_or_else(|e| e.into_inner()).0;
                        if let Some(why) = &st.closed {
                            return Err(ClientError::Transport(why.clone()));
                        }
                    }
                }
            }
            st.last_frame_id = Some(frame_id);
            st.pending.insert(frame_id, Pending { tx, sent: Instant::now() });
            st.max_seen = st.max_seen.max(st.pending.len());
        }
        let msg = WireMessage::new(MsgType::DetectRequest, frame_id, capture_timestamp, payload.encode());
        let sent = {
            let mut w = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
            write_message(&mut *w, &msg)
        };
        if let Err(e) = sent {
            self.inner.release(frame_id);
            return Err(ClientError::Transport(e.to_string()));
        }
        Ok(DetectHandle { frame_id, rx, deadline, inner: self.inner.clone() })
    }

    /// Submit and wait.
    pub fn detect(
        &self,
        frame_id: u64,
        capture_timestamp: f64,
        payload: &DetectPayload,
    ) -> Result<DetectReply, ClientError> {
        self.submit(frame_id, capture_timestamp, payload)?.wait()
    }

    /// Round trip of a ping.
    pub fn ping(&self) -> Result<Duration, ClientError> {
        let (tx, rx) = mpsc::channel();
        let id = {
            let mut st = self.inner.lock();
            if let Some(why) = &st.closed {
                return Err(ClientError::Transport(why.clone()));
            }
            st.next_ping += 1;
            let id = st.next_ping;
            st.pings.insert(id, tx);
            id
        };
        let start = Instant::now();
        {
            let mut w = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
            write_message(&mut *w, &WireMessage::new(MsgType::Ping, id, 0.0, Vec::new()))
                .map_err(|e| ClientError::Transport(e.to_string()))?;
        }
        match rx.recv_timeout(self.inner.cfg.timeout) {
            Ok(at) => Ok(at.duration_since(start)),
            Err(RecvTimeoutError::Timeout) => {
                self.inner.lock().pings.remove(&id);
                Err(ClientError::Timeout)
            }
            Err(RecvTimeoutError::Disconnected) => Err(ClientError::Transport("connection closed".into())),
        }
    }
}

impl Drop for EdgeClient {
    fn drop(&mut self) {
        let _ = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner()).shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn reader_loop(mut stream: TcpStream, inner: Arc<Inner>) {
    let why = loop {
        let msg = match read_message(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => break "server closed the connection".to_string(),
            Err(e) => break e.to_string(),
        };
        let now = Instant::now();
        match msg.msg_type {
            MsgType::DetectResponse => {
                let Some(p) = inner.lock().pending.remove(&msg.frame_id) else { continue };
                inner.slot_freed.notify_all();
                let reply = DetectResult::decode(&msg.payload)
                    .map(|r| DetectReply {
                        frame_id: msg.frame_id,
                        boxes: r.boxes,
                        server_time: r.server_time,
                        rtt: now.duration_since(p.sent),
                    })
                    .map_err(|e| ClientError::Protocol(e.to_string()));
                let _ = p.tx.send(reply);
            }
            MsgType::Pong => {
                if let Some(tx) = inner.lock().pings.remove(&msg.frame_id) {
                    let _ = tx.send(now);
                }
            }
            MsgType::Error => {
                let text = String::from_utf8_lossy(&msg.payload).into_owned();
                let p = inner.lock().pending.remove(&msg.frame_id);
                inner.slot_freed.notify_all();
                match p {
                    Some(p) => {
                        let _ = p.tx.send(Err(ClientError::Server(text)));
                    }
                    None => log::warn!("server error: {text}"),
                }
            }
            other => break format!("unexpected {other:?} from server"),
        }
    };
    let mut st = inner.lock();
    st.closed = Some(why.clone());
    for (_, p) in st.pending.drain() {
        let _ = p.tx.send(Err(ClientError::Transport(why.clone())));
    }
    st.pings.clear();
    drop(st);
    inner.slot_freed.notify_all();
}
