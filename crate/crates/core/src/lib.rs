//! Hybrid 3D object detection for headsets: 2D detection offloaded to an
//! edge server, 3D boxes lifted on the device from the live depth stream,
//! motion-compensated and fused across views.
//!
//! The crate also carries the simulator, the edge protocol and the
//! evaluation harness used to measure all of this without hardware.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod depthlift;
pub mod edgenet;
pub mod fusion;
pub mod geometry;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod rng;
pub mod simkit;
