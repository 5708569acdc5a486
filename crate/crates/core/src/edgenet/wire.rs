//! Length-prefixed framing.
//!
//! ```text
//! u32 LE  payload length
//! u8      message type
//! u64 LE  frame id
//! f64 LE  capture timestamp, seconds
//! ...     payload
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::geometry::{Box2D, ObjectClass, Pose};

pub const HEADER_LEN: usize = 21;
pub const MAX_PAYLOAD: usize = 64 << 20;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte cap")]
    Oversize(usize),
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("bad payload: {0}")]
    Payload(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    DetectRequest = 1,
    DetectResponse = 2,
    Ping = 3,
    Pong = 4,
    Error = 255,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Result<Self, WireError> {
        Ok(match b {
            1 => MsgType::DetectRequest,
            2 => MsgType::DetectResponse,
            3 => MsgType::Ping,
            4 => MsgType::Pong,
            255 => MsgType::Error,
            other => return Err(WireError::UnknownType(other)),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub frame_id: u64,
    pub capture_timestamp: f64,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn new(msg_type: MsgType, frame_id: u64, capture_timestamp: f64, payload: Vec<u8>) -> Self {
        Self { msg_type, frame_id, capture_timestamp, payload }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(WireError::Oversize(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.frame_id.to_le_bytes());
        out.extend_from_slice(&self.capture_timestamp.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one message from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated { need: HEADER_LEN, have: bytes.len() });
        }
        let (len, msg_type, frame_id, ts) = parse_header(bytes[..HEADER_LEN].try_into().expect("header slice"))?;
        let total = HEADER_LEN + len;
        if bytes.len() < total {
            return Err(WireError::Truncated { need: total, have: bytes.len() });
        }
        Ok((Self::new(msg_type, frame_id, ts, bytes[HEADER_LEN..total].to_vec()), total))
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(usize, MsgType, u64, f64), WireError> {
    let len = u32::from_le_bytes(h[0..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::Oversize(len));
    }
    let msg_type = MsgType::from_u8(h[4])?;
    let frame_id = u64::from_le_bytes(h[5..13].try_into().unwrap());
    let ts = f64::from_le_bytes(h[13..21].try_into().unwrap());
    Ok((len, msg_type, frame_id, ts))
}

/// Reads one message. `Ok(None)` means the peer closed cleanly at a frame
/// boundary; a close mid-frame is [`WireError::Truncated`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<WireMessage>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < HEADER_LEN {
        return Err(WireError::Truncated { need: HEADER_LEN, have: got });
    }
    let (len, msg_type, frame_id, ts) = parse_header(&header)?;
    let mut payload = vec![0u8; len];
    let got = read_full(r, &mut payload)?;
    if got < len {
        return Err(WireError::Truncated { need: HEADER_LEN + len, have: HEADER_LEN + got });
    }
    Ok(Some(WireMessage::new(msg_type, frame_id, ts, payload)))
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

pub fn write_message<W: Write>(w: &mut W, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&msg.encode()?)?;
    w.flush()?;
    Ok(())
}

/// Body of a detect request.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectPayload {
    /// Reference to a view of a scene the server also knows: the oracle
    /// backend renders it itself instead of receiving pixels.
    SceneView { scene_id: u64, pose: Pose, seed: u64 },
    /// Reserved for image-consuming backends: width, height, raw bytes.
    RawImage { width: u32, height: u32, data: Vec<u8> },
}

const KIND_SCENE_VIEW: u8 = 0;
const KIND_RAW_IMAGE: u8 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.at < n {
            return Err(WireError::Payload(format!("payload ends after {} bytes", self.buf.len())));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn finish(self) -> Result<(), WireError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(WireError::Payload(format!("{} trailing bytes", self.buf.len() - self.at)))
        }
    }
}

impl DetectPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            DetectPayload::SceneView { scene_id, pose, seed } => {
                out.push(KIND_SCENE_VIEW);
                out.extend_from_slice(&scene_id.to_le_bytes());
                for x in pose.to_array() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.extend_from_slice(&seed.to_le_bytes());
            }
            DetectPayload::RawImage { width, height, data } => {
                out.push(KIND_RAW_IMAGE);
                out.extend_from_slice(&width.to_le_bytes());
                out.extend_from_slice(&height.to_le_bytes());
                out.extend_from_slice(data);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor { buf: bytes, at: 0 };
        match c.u8()? {
            KIND_SCENE_VIEW => {
                let scene_id = c.u64()?;
                let mut m = [0.0; 12];
                for x in m.iter_mut() {
                    *x = c.f64()?;
                }
                let pose = Pose::from_array(&m).map_err(|e| WireError::Payload(e.to_string()))?;
                let seed = c.u64()?;
                c.finish()?;
                Ok(DetectPayload::SceneView { scene_id, pose, seed })
            }
            KIND_RAW_IMAGE => {
                let width = c.u32()?;
                let height = c.u32()?;
                let data = bytes[c.at..].to_vec();
                Ok(DetectPayload::RawImage { width, height, data })
            }
            k => Err(WireError::Payload(format!("unknown request kind {k}"))),
        }
    }
}

/// Body of a detect response.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectResult {
    /// Server-side handling time, seconds.
    pub server_time: f64,
    pub boxes: Vec<Box2D>,
}

impl DetectResult {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.boxes.len() * 44);
        out.extend_from_slice(&self.server_time.to_le_bytes());
        out.extend_from_slice(&(self.boxes.len() as u32).to_le_bytes());
        for b in &self.boxes {
            for x in [b.u_min, b.v_min, b.u_max, b.v_max] {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&b.class.id().to_le_bytes());
            out.extend_from_slice(&b.confidence.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut c = Cursor { buf: bytes, at: 0 };
        let server_time = c.f64()?;
        let n = c.u32()? as usize;
        if n > bytes.len() / 44 {
            return Err(WireError::Payload(format!("box count {n} exceeds payload")));
        }
        let mut boxes = Vec::with_capacity(n);
        for _ in 0..n {
            let (u0, v0, u1, v1) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?);
            let id = c.u32()?;
            let class = ObjectClass::from_id(id).ok_or_else(|| WireError::Payload(format!("unknown class id {id}")))?;
            let conf = c.f64()?;
            boxes.push(Box2D::new(u0, v0, u1, v1, class, conf).map_err(|e| WireError::Payload(e.to_string()))?);
        }
        c.finish()?;
        Ok(Self { server_time, boxes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn ping_is_21_bytes() {
        let m = WireMessage::new(MsgType::Ping, 7, 0.5, Vec::new());
        let bytes = m.encode().unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(bytes[4], 3);
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 7);
        let (back, used) = WireMessage::decode(&bytes).unwrap();
        assert_eq!((back, used), (m, 21));
    }

    #[test]
    fn truncation_and_garbage() {
        let m = WireMessage::new(MsgType::DetectRequest, 1, 0.0, vec![1, 2, 3]);
        let mut bytes = m.encode().unwrap();
        bytes.pop();
        assert!(matches!(WireMessage::decode(&bytes), Err(WireError::Truncated { .. })));
        assert!(matches!(read_message(&mut bytes.as_slice()), Err(WireError::Truncated { .. })));
        assert!(read_message(&mut &b""[..]).unwrap().is_none());
        let mut bad = m.encode().unwrap();
        bad[4] = 9;
        assert!(matches!(WireMessage::decode(&bad), Err(WireError::UnknownType(9))));
        let mut huge = m.encode().unwrap();
        huge[..4].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(WireMessage::decode(&huge), Err(WireError::Oversize(_))));
    }

    #[test]
    fn oversize_payload_rejected_on_encode() {
        let m = WireMessage::new(MsgType::DetectRequest, 1, 0.0, vec![0; MAX_PAYLOAD + 1]);
        assert!(matches!(m.encode(), Err(WireError::Oversize(_))));
    }

    #[test]
    fn payload_codecs_round_trip() {
        let p = DetectPayload::SceneView {
            scene_id: 3,
            pose: Pose::gravity_aligned(Vec3::new(1.0, 2.0, 1.5), 0.3, 0.5),
            seed: 99,
        };
        assert_eq!(DetectPayload::decode(&p.encode()).unwrap(), p);
        let raw = DetectPayload::RawImage { width: 2, height: 1, data: vec![9, 8, 7, 6, 5, 4] };
        assert_eq!(DetectPayload::decode(&raw.encode()).unwrap(), raw);
        assert!(DetectPayload::decode(&[7]).is_err());
        let r = DetectResult {
            server_time: 0.013,
            boxes: vec![Box2D::new(1.0, 2.0, 30.0, 40.0, ObjectClass::Tv, 0.5).unwrap()],
        };
        assert_eq!(DetectResult::decode(&r.encode()).unwrap(), r);
        let mut bad = r.encode();
        bad.push(0);
        assert!(DetectResult::decode(&bad).is_err());
    }
}
