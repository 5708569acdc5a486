use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng;

/// Emulated offload delay. Compute defaults model a 2D detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencySpec {
    /// Network round trip, seconds.
    pub fixed: f64,
    /// Half-width of the uniform jitter, seconds.
    pub jitter: f64,
    /// Detector compute on the edge, seconds.
    pub model_compute: f64,
}

/// 2D detector compute on the edge, seconds.
pub const COMPUTE_2D: f64 = 0.013;
/// Point-cloud 3D detector compute on the edge, seconds.
pub const COMPUTE_3D: f64 = 0.283;

impl Default for LatencySpec {
    fn default() -> Self {
        Self { fixed: 0.02, jitter: 0.005, model_compute: COMPUTE_2D }
    }
}

impl LatencySpec {
    pub fn zero() -> Self {
        Self { fixed: 0.0, jitter: 0.0, model_compute: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("fixed", self.fixed), ("jitter", self.jitter), ("model_compute", self.model_compute)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("latency {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Arrival time of a request sent at `send_time`.
pub fn delay(lat: &LatencySpec, send_time: f64, seed: u64) -> f64 {
    let j = if lat.jitter > 0.0 { rng::rng(seed).random_range(-lat.jitter..=lat.jitter) } else { 0.0 };
    (send_time + lat.fixed + lat.model_compute + j).max(send_time)
}
