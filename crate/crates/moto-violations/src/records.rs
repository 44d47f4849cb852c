//! Line-delimited stream schemas shared by the pipeline, the synthetic
//! generator and the CLI.
//!
//! A detection stream carries one frame per line:
//!
//! ```json
//! {"frame":0,"w":1280,"h":720,"detections":[{"cls":"motorcycle","box":[10.0,20.0,110.0,160.0],"score":0.9}]}
//! ```
//!
//! Ground-truth streams use the same schema plus `instance_id` on each
//! detection and a per-frame `instances` list with the oracle trapezium
//! (8 floats, TL/TR/BR/BL) and violation labels. Optional fields are
//! omitted when absent, so a ground-truth stream with the extras stripped
//! is a valid detection stream.

use crate::geometry::Rect;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Motorcycle,
    Rider,
    Helmet,
    NoHelmet,
}

impl ClassTag {
    pub fn is_headgear(self) -> bool {
        matches!(self, ClassTag::Helmet | ClassTag::NoHelmet)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cls: ClassTag,
    /// `[x1, y1, x2, y2]` pixels.
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u64>,
}

impl Detection {
    pub fn new(cls: ClassTag, rect: &Rect, score: f64) -> Self {
        Self {
            cls,
            bbox: [rect.x1, rect.y1, rect.x2, rect.y2],
            score,
            instance_id: None,
        }
    }

    pub fn rect(&self) -> Option<Rect> {
        Rect::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3]).ok()
    }
}

/// Ground-truth labels for one driving instance in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub id: u64,
    /// Oracle trapezium as `[x0,y0,...,x3,y3]` in TL/TR/BR/BL order.
    pub trapezium: [f64; 8],
    pub riders: usize,
    pub triple: bool,
    pub no_helmet_riders: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub w: u32,
    pub h: u32,
    pub detections: Vec<Detection>,
    /// Free-text label of the upstream detector; provenance only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Ground-truth instance labels; absent in detection streams.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<GtInstance>,
}

impl FrameRecord {
    pub fn new(frame: u64, w: u32, h: u32) -> Self {
        Self {
            frame,
            w,
            h,
            detections: Vec::new(),
            source: None,
            instances: Vec::new(),
        }
    }

    /// Copy with the ground-truth-only fields removed.
    pub fn stripped(&self) -> FrameRecord {
        FrameRecord {
            frame: self.frame,
            w: self.w,
            h: self.h,
            detections: self
                .detections
                .iter()
                .map(|d| Detection {
                    instance_id: None,
                    ..d.clone()
                })
                .collect(),
            source: self.source.clone(),
            instances: Vec::new(),
        }
    }
}

pub fn parse_frame_line(line: &str, line_no: usize) -> Result<FrameRecord, RecordError> {
    serde_json::from_str(line).map_err(|source| RecordError::Parse {
        line: line_no,
        source,
    })
}

/// Reads a whole stream, failing on the first malformed line.
pub fn read_frames<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>, RecordError> {
    let mut frames = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(parse_frame_line(&line, idx + 1)?);
    }
    Ok(frames)
}

pub fn write_frames<W: Write>(writer: &mut W, frames: &[FrameRecord]) -> Result<(), RecordError> {
    for f in frames {
        serde_json::to_writer(&mut *writer, f)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
