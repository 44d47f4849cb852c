//! Post-detection engine for motorcycle riding violations.
//!
//! Takes per-frame motorcycle / rider / helmet / no-helmet detections (from
//! any upstream detector) and turns them into tracked, counted triple-riding
//! and helmet violations. The pieces:
//!
//! - [`geometry`] — rectangles, trapezium instance boundaries, polygon
//!   clipping, IOU.
//! - [`dense_net`] — a small fully-connected network with MSE backprop,
//!   the substrate for both regressors.
//! - [`regressors`] — the amodal rider-box regressor (completes boxes for
//!   occluded riders from their headgear) and the trapezium box regressor.
//! - [`association`] — frame-level instance assembly, trapezium-based rider
//!   counting, ROI extraction, headgear assignment.
//! - [`tracker`] — motion-only multi-object tracking (Kalman + IOU-gated
//!   optimal assignment) over instance and headgear boxes.
//! - [`pipeline`] — end-to-end orchestration and the violation report.
//! - [`synth`] — seeded synthetic scene generator with exact ground truth,
//!   including the minimum-area trapezium label oracle.
//! - [`eval`] — precision/recall/F-score over matched violations and count
//!   accuracy.
//!
//! See the crate `examples/` for one runnable demo per capability and the
//! `moto-violations` binary for the stream-processing CLI.

pub mod association;
pub mod config;
pub mod dense_net;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod records;
pub mod regressors;
pub mod synth;
pub mod tracker;

pub use config::EngineConfig;
pub use geometry::{Point, Rect, Trapezium};
pub use pipeline::{Engine, TrapeziumSource, ViolationReport};
pub use records::{ClassTag, Detection, FrameRecord};
