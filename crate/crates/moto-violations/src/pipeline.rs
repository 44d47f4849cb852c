//! End-to-end orchestration: ingest detections, assemble instances, fit
//! trapezia, flag violations, track, and emit per-frame outputs plus the
//! video-level violation report with unique counts.
//!
//! The per-frame stages run in a fixed order: area/confidence filtering,
//! optional amodal rider completion, rider grouping, trapezium prediction,
//! rider assignment, triple flagging, headgear assignment and ROI
//! extraction, then the tracker step. The whole pipeline is a pure function
//! of (stream, models, config): no clocks, no unseeded randomness.

use crate::association::{
    assign_headgear, assign_riders, extract_roi, group_riders, HeadgearStatus,
};
use crate::config::EngineConfig;
use crate::dense_net::DenseNet;
use crate::geometry::{Rect, Trapezium};
use crate::records::{ClassTag, FrameRecord};
use crate::regressors::{predict_amodal, predict_trapezium};
use crate::synth::min_area_trapezium;
use crate::tracker::{
    HeadgearObservation, InstanceObservation, TrackClass, Tracker, TrackerError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame {frame}: {reason}")]
    BadRecord { frame: u64, reason: String },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Where per-instance trapezia come from: a trained regressor checkpoint,
/// or the minimum-area fit over the motorcycle and its candidate riders
/// (useful before a model exists; with impostor candidates it is looser
/// than a trained regressor).
pub enum TrapeziumSource {
    Model(DenseNet),
    CandidateFit,
}

#[derive(Debug, Clone)]
pub struct InstanceOutput {
    /// Canonical per-frame index (coordinate-sorted motorcycle order).
    pub instance_index: usize,
    pub moto: Rect,
    pub trapezium: Option<Trapezium>,
    /// `|predicted Y - centroid_y|` consistency residual, model source only.
    pub trapezium_residual: Option<f64>,
    pub assigned_riders: Vec<Rect>,
    pub rider_status: Vec<HeadgearStatus>,
    pub triple: bool,
    pub helmet_violation: bool,
    pub roi: Option<Rect>,
    pub track_id: u64,
    pub track_confirmed: bool,
}

#[derive(Debug, Clone)]
pub struct HeadgearOutput {
    pub rect: Rect,
    pub no_helmet: bool,
    pub track_id: u64,
    pub track_confirmed: bool,
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame: u64,
    pub instances: Vec<InstanceOutput>,
    pub headgear: Vec<HeadgearOutput>,
}

pub struct Engine {
    cfg: EngineConfig,
    trap_source: TrapeziumSource,
    amodal: Option<DenseNet>,
    tracker: Tracker,
}

impl Engine {
    pub fn new(cfg: EngineConfig, trap_source: TrapeziumSource, amodal: Option<DenseNet>) -> Self {
        let tracker = Tracker::new(cfg.tracker);
        Self {
            cfg,
            trap_source,
            amodal,
            tracker,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn process_frame(&mut self, rec: &FrameRecord) -> Result<FrameOutput, PipelineError> {
        if rec.w == 0 || rec.h == 0 {
            return Err(PipelineError::BadRecord {
                frame: rec.frame,
                reason: "zero frame dimensions".into(),
            });
        }
        let frame_w = rec.w as f64;
        let frame_h = rec.h as f64;
        let frame_rect = Rect::new(0.0, 0.0, frame_w, frame_h).expect("frame rect");

        // Score gate, area filter, clipping. Malformed boxes or scores fail
        // the whole record.
        let mut motos = Vec::new();
        let mut riders = Vec::new();
        let mut headgear: Vec<(Rect, HeadgearStatus)> = Vec::new();
        for (idx, det) in rec.detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&det.score) {
                return Err(PipelineError::BadRecord {
                    frame: rec.frame,
                    reason: format!("detection {idx}: score {} outside [0,1]", det.score),
                });
            }
            let Some(rect) = det.rect() else {
                return Err(PipelineError::BadRecord {
                    frame: rec.frame,
                    reason: format!("detection {idx}: degenerate box {:?}", det.bbox),
                });
            };
            if det.score < self.cfg.confidence_threshold {
                continue;
            }
            let Some(rect) = rect.clip_to(&frame_rect) else {
                continue;
            };
            if rect.area() < self.cfg.min_box_area {
                continue;
            }
            match det.cls {
                ClassTag::Motorcycle => motos.push(rect),
                ClassTag::Rider => riders.push(rect),
                ClassTag::Helmet => headgear.push((rect, HeadgearStatus::Helmet)),
                ClassTag::NoHelmet => headgear.push((rect, HeadgearStatus::NoHelmet)),
            }
        }

        // Amodal completion: predict the rider box each headgear implies;
        // when no detected rider matches the prediction, the rider is
        // occluded and the predicted box fills in.
        if let Some(model) = &self.amodal {
            let existing = riders.clone();
            for (hg, _) in &headgear {
                let Ok(pred) = predict_amodal(model, hg, frame_w, frame_h) else {
                    continue;
                };
                let covered = existing
                    .iter()
                    .any(|r| crate::geometry::rect_iou(&pred, r) > self.cfg.occluded_rider_iou);
                if covered {
                    continue;
                }
                if let Some(clipped) = pred.clip_to(&frame_rect) {
                    riders.push(clipped);
                }
            }
        }

        let mut instances = group_riders(&motos, &riders);
        let mut residuals: Vec<Option<f64>> = vec![None; instances.len()];
        for (slot, inst) in instances.iter_mut().enumerate() {
            let candidate_rects: Vec<Rect> =
                inst.candidates.iter().map(|&i| riders[i]).collect();
            match &self.trap_source {
                TrapeziumSource::Model(model) => {
                    if let Ok((t, residual)) =
                        predict_trapezium(model, &inst.moto, &candidate_rects, frame_w, frame_h)
                    {
                        inst.trapezium = Some(t);
                        residuals[slot] = Some(residual);
                    }
                }
                TrapeziumSource::CandidateFit => {
                    let mut boxes = vec![inst.moto];
                    boxes.extend(candidate_rects);
                    inst.trapezium = min_area_trapezium(&boxes).ok();
                }
            }
        }

        assign_riders(
            &mut instances,
            &riders,
            self.cfg.association_mode,
            self.cfg.euclidean_max_dist,
        );
        for inst in instances.iter_mut() {
            assign_headgear(inst, &riders, &headgear, self.cfg.headgear_iou_gate);
        }

        let observations: Vec<InstanceObservation> = instances
            .iter()
            .map(|inst| {
                InstanceObservation::new(
                    inst.moto,
                    inst.trapezium,
                    inst.triple,
                    inst.helmet_violation,
                )
            })
            .collect();
        let headgear_obs: Vec<HeadgearObservation> = headgear
            .iter()
            .map(|(rect, status)| {
                HeadgearObservation::new(*rect, *status == HeadgearStatus::NoHelmet)
            })
            .collect();
        let step = self.tracker.step(rec.frame, &observations, &headgear_obs)?;

        let confirmed = |id: u64| {
            self.tracker
                .live_tracks()
                .iter()
                .find(|t| t.id == id)
                .map(|t| t.is_confirmed())
                .unwrap_or(false)
        };
        let instances_out = instances
            .iter()
            .enumerate()
            .map(|(slot, inst)| InstanceOutput {
                instance_index: inst.id,
                moto: inst.moto,
                trapezium: inst.trapezium,
                trapezium_residual: residuals[slot],
                assigned_riders: inst.assigned.iter().map(|&i| riders[i]).collect(),
                rider_status: inst.rider_status.clone(),
                triple: inst.triple,
                helmet_violation: inst.helmet_violation,
                roi: extract_roi(inst, &riders, frame_w, frame_h, self.cfg.roi_expansion),
                track_id: step.instance_track_ids[slot],
                track_confirmed: confirmed(step.instance_track_ids[slot]),
            })
            .collect();
        let headgear_out = headgear
            .iter()
            .enumerate()
            .map(|(idx, (rect, status))| HeadgearOutput {
                rect: *rect,
                no_helmet: *status == HeadgearStatus::NoHelmet,
                track_id: step.headgear_track_ids[idx],
                track_confirmed: confirmed(step.headgear_track_ids[idx]),
            })
            .collect();
        Ok(FrameOutput {
            frame: rec.frame,
            instances: instances_out,
            headgear: headgear_out,
        })
    }

    /// Consumes the engine and produces the video-level report: unique
    /// confirmed tracks whose flagged-frame counts clear the persistence
    /// threshold.
    pub fn finalize(self) -> ViolationReport {
        let min_frames = self.cfg.tracker.violation_min_frames;
        let mut tracks = Vec::new();
        let mut triple = 0usize;
        let mut rider = 0usize;
        let mut instance = 0usize;
        for t in self.tracker.all_tracks() {
            if !t.ever_confirmed() {
                continue;
            }
            match t.class {
                TrackClass::Instance => {
                    if t.triple_frames >= min_frames {
                        triple += 1;
                        tracks.push(TrackEvidence {
                            track_id: t.id,
                            kind: ViolationKind::TripleRiding,
                            frames: spans(&t.triple_evidence),
                        });
                    }
                    if t.helmetless_frames >= min_frames {
                        instance += 1;
                        tracks.push(TrackEvidence {
                            track_id: t.id,
                            kind: ViolationKind::HelmetInstance,
                            frames: spans(&t.helmetless_evidence),
                        });
                    }
                }
                TrackClass::NoHelmet => {
                    if t.helmetless_frames >= min_frames {
                        rider += 1;
                        tracks.push(TrackEvidence {
                            track_id: t.id,
                            kind: ViolationKind::HelmetRider,
                            frames: spans(&t.helmetless_evidence),
                        });
                    }
                }
                TrackClass::Helmet => {}
            }
        }
        tracks.sort_by_key(|e| (e.kind as u8, e.track_id));
        ViolationReport {
            triple_riding_count: triple,
            helmet_violation_rider_count: rider,
            helmet_violation_instance_count: instance,
            violation_min_frames: min_frames,
            tracks,
        }
    }
}

/// Compresses sorted frame ids into maximal consecutive `[start, end]` runs.
fn spans(frames: &[u64]) -> Vec<[u64; 2]> {
    let mut out: Vec<[u64; 2]> = Vec::new();
    for &f in frames {
        match out.last_mut() {
            Some(last) if last[1] + 1 == f => last[1] = f,
            Some(last) if last[1] >= f => {}
            _ => out.push([f, f]),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TripleRiding,
    HelmetRider,
    HelmetInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEvidence {
    pub track_id: u64,
    pub kind: ViolationKind,
    /// Inclusive `[start, end]` frame spans in which the track was flagged.
    pub frames: Vec<[u64; 2]>,
}

/// Video-level violation counts over unique confirmed tracks, with
/// per-track evidence spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub triple_riding_count: usize,
    pub helmet_violation_rider_count: usize,
    pub helmet_violation_instance_count: usize,
    /// The persistence threshold the counts were computed with.
    pub violation_min_frames: u32,
    pub tracks: Vec<TrackEvidence>,
}

// ---------------------------------------------------------------------------
// Overlay stream
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayKind {
    Rect,
    Trapezium,
}

/// Color scheme: red = helmet violation, green = helmet, orange =
/// triple-riding violation, yellow = driving instance, purple = motorcycle,
/// blue = rider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayColor {
    Red,
    Green,
    Orange,
    Yellow,
    Purple,
    Blue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayShape {
    pub kind: OverlayKind,
    /// `[x1,y1,x2,y2]` for rects, 8 vertex floats for trapezia.
    pub points: Vec<f64>,
    pub color: OverlayColor,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub frame: u64,
    pub shapes: Vec<OverlayShape>,
}

fn rect_shape(r: &Rect, color: OverlayColor, label: &str, track_id: Option<u64>) -> OverlayShape {
    OverlayShape {
        kind: OverlayKind::Rect,
        points: vec![r.x1, r.y1, r.x2, r.y2],
        color,
        label: label.to_string(),
        track_id,
    }
}

/// Renders a processed frame into the overlay record consumed by
/// downstream drawing tools.
pub fn emit_overlay(out: &FrameOutput) -> OverlayRecord {
    let mut shapes = Vec::new();
    for inst in &out.instances {
        shapes.push(rect_shape(
            &inst.moto,
            OverlayColor::Purple,
            "motorcycle",
            Some(inst.track_id),
        ));
        for rider in &inst.assigned_riders {
            shapes.push(rect_shape(rider, OverlayColor::Blue, "rider", None));
        }
        if let Some(t) = &inst.trapezium {
            let (color, label) = if inst.triple {
                (OverlayColor::Orange, "triple_riding")
            } else {
                (OverlayColor::Yellow, "instance")
            };
            shapes.push(OverlayShape {
                kind: OverlayKind::Trapezium,
                points: t.to_flat().to_vec(),
                color,
                label: label.to_string(),
                track_id: Some(inst.track_id),
            });
        }
    }
    for hg in &out.headgear {
        let (color, label) = if hg.no_helmet {
            (OverlayColor::Red, "helmet_violation")
        } else {
            (OverlayColor::Green, "helmet")
        };
        shapes.push(rect_shape(&hg.rect, color, label, Some(hg.track_id)));
    }
    OverlayRecord {
        frame: out.frame,
        shapes,
    }
}

/// Convenience runner over in-memory records: processes every frame,
/// collects outputs and per-record errors, and finalizes the report.
pub fn run_records(
    cfg: &EngineConfig,
    trap_source: TrapeziumSource,
    amodal: Option<DenseNet>,
    records: &[FrameRecord],
) -> (Vec<FrameOutput>, ViolationReport, Vec<String>) {
    let mut engine = Engine::new(cfg.clone(), trap_source, amodal);
    let mut outputs = Vec::with_capacity(records.len());
    let mut errors = Vec::new();
    for rec in records {
        match engine.process_frame(rec) {
            Ok(out) => outputs.push(out),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let report = engine.finalize();
    (outputs, report, errors)
}
