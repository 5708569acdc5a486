//! Depth frames and the `DPF1` fixture format.
//!
//! `DPF1` layout, all little-endian:
//!
//! ```text
//! magic   "DPF1"          4 bytes
//! width   u32
//! height  u32
//! stamp   f64             seconds
//! pose    12 × f64        row-major rotation, then translation
//! intr    4 × f64         fx, fy, cx, cy
//! depth   width·height × f32, row-major
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, GeometryError, Pose};

pub const DPF1_MAGIC: &[u8; 4] = b"DPF1";

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("depth grid has {got} samples, expected {expected}")]
    GridSize { expected: usize, got: usize },
    #[error("negative depth {0}")]
    NegativeDepth(f32),
    #[error("invalid timestamp {0}")]
    Timestamp(f64),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Timestamped, pose-stamped grid of metric depth. `0.0` and `NaN` both mean
/// "no return".
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
    pub timestamp: f64,
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

#[inline]
pub fn is_valid_depth(d: f32) -> bool {
    d > 0.0 && d.is_finite()
}

impl DepthFrame {
    pub fn new(intrinsics: CameraIntrinsics, depth: Vec<f32>, timestamp: f64, pose: Pose) -> Result<Self, FrameError> {
        intrinsics.validate()?;
        let expected = intrinsics.width as usize * intrinsics.height as usize;
        if depth.len() != expected {
            return Err(FrameError::GridSize { expected, got: depth.len() });
        }
        if let Some(&bad) = depth.iter().find(|d| d.is_finite() && **d < 0.0) {
            return Err(FrameError::NegativeDepth(bad));
        }
        if !(timestamp >= 0.0 && timestamp.is_finite()) {
            return Err(FrameError::Timestamp(timestamp));
        }
        Ok(Self { width: intrinsics.width, height: intrinsics.height, depth, timestamp, pose, intrinsics })
    }

    /// Frame with every pixel set to `value`.
    pub fn uniform(intrinsics: CameraIntrinsics, value: f32, timestamp: f64, pose: Pose) -> Result<Self, FrameError> {
        let n = intrinsics.width as usize * intrinsics.height as usize;
        Self::new(intrinsics, vec![value; n], timestamp, pose)
    }

    #[inline]
    pub fn at(&self, u: u32, v: u32) -> f32 {
        self.depth[v as usize * self.width as usize + u as usize]
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| is_valid_depth(**d)).count()
    }

    pub fn write_dpf1<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DPF1_MAGIC)?;
        w.write_all(&self.width.to_le_bytes())?;
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&self.timestamp.to_le_bytes())?;
        for x in self.pose.to_array() {
            w.write_all(&x.to_le_bytes())?;
        }
        let i = &self.intrinsics;
        for x in [i.fx, i.fy, i.cx, i.cy] {
            w.write_all(&x.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.depth.len() * 4);
        for d in &self.depth {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_dpf1<R: Read>(mut r: R) -> Result<Self, FrameError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DPF1_MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        let width = read_u32(&mut r)?;
        let height = read_u32(&mut r)?;
        let timestamp = read_f64(&mut r)?;
        let mut pose = [0.0; 12];
        for x in pose.iter_mut() {
            *x = read_f64(&mut r)?;
        }
        let mut k = [0.0; 4];
        for x in k.iter_mut() {
            *x = read_f64(&mut r)?;
        }
        let n = width as usize * height as usize;
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let depth = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let intrinsics = CameraIntrinsics::new(k[0], k[1], k[2], k[3], width, height)?;
        Self::new(intrinsics, depth, timestamp, Pose::from_array(&pose)?)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn dpf1_round_trip_and_layout() {
        let intr = CameraIntrinsics::new(50.0, 51.0, 3.0, 2.0, 6, 4).unwrap();
        let depth: Vec<f32> = (0..24).map(|i| if i % 5 == 0 { 0.0 } else { i as f32 * 0.1 }).collect();
        let pose = Pose::gravity_aligned(Vec3::new(0.5, -1.0, 1.5), 0.3, 0.2);
        let frame = DepthFrame::new(intr, depth, 1.25, pose).unwrap();
        let mut bytes = Vec::new();
        frame.write_dpf1(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 8 + 96 + 32 + 24 * 4);
        assert_eq!(&bytes[..4], b"DPF1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 6);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1.25);
        let back = DepthFrame::read_dpf1(bytes.as_slice()).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn dpf1_rejects_bad_input() {
        assert!(matches!(DepthFrame::read_dpf1(&b"DPF2xxxx"[..]), Err(FrameError::BadMagic(_))));
        let intr = CameraIntrinsics::new(50.0, 50.0, 1.0, 1.0, 2, 2).unwrap();
        let frame = DepthFrame::uniform(intr, 1.0, 0.0, Pose::identity()).unwrap();
        let mut bytes = Vec::new();
        frame.write_dpf1(&mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(DepthFrame::read_dpf1(bytes.as_slice()), Err(FrameError::Io(_))));
    }

    #[test]
    fn frame_validation() {
        let intr = CameraIntrinsics::new(50.0, 50.0, 1.0, 1.0, 2, 2).unwrap();
        assert!(DepthFrame::new(intr, vec![1.0; 3], 0.0, Pose::identity()).is_err());
        assert!(DepthFrame::new(intr, vec![1.0, -1.0, 0.0, 0.0], 0.0, Pose::identity()).is_err());
        assert!(DepthFrame::new(intr, vec![1.0, f32::NAN, 0.0, 0.0], 0.0, Pose::identity()).is_ok());
        assert!(DepthFrame::new(intr, vec![1.0; 4], -1.0, Pose::identity()).is_err());
    }
}
