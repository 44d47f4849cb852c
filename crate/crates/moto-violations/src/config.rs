//! Engine configuration: every tunable named across the modules, loadable
//! from a flat `key=value` file (`#` comments and blank lines allowed).

use crate::association::AssociationMode;
use crate::dense_net::TrainConfig;
use crate::tracker::TrackerConfig;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for key {key:?}")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Detections below this score are ignored.
    pub confidence_threshold: f64,
    /// Boxes smaller than this many square pixels are dropped.
    pub min_box_area: f64,
    pub association_mode: AssociationMode,
    /// Distance cutoff for the euclidean association baseline.
    pub euclidean_max_dist: f64,
    /// Minimum headgear-rider IOU for a headgear assignment.
    pub headgear_iou_gate: f64,
    /// A headgear box whose predicted rider box matches no labeled rider
    /// above this IOU counts as occluded. Raise it when rider boxes nest
    /// heavily.
    pub occluded_rider_iou: f64,
    /// ROI growth per dimension (0.10 = 10%).
    pub roi_expansion: f64,
    /// IOU threshold for violation matching in evaluation.
    pub eval_iou_threshold: f64,
    pub tracker: TrackerConfig,
    pub train: TrainConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.25,
            min_box_area: 900.0,
            association_mode: AssociationMode::TrapeziumIou,
            euclidean_max_dist: f64::INFINITY,
            headgear_iou_gate: 0.05,
            occluded_rider_iou: 0.1,
            roi_expansion: 0.10,
            eval_iou_threshold: 0.5,
            tracker: TrackerConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

impl EngineConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Defaults overridden by the given `key=value` lines.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "confidence_threshold" => self.confidence_threshold = parse_value(key, value)?,
            "min_box_area" => self.min_box_area = parse_value(key, value)?,
            "association_mode" => {
                self.association_mode =
                    AssociationMode::parse(value).ok_or_else(|| ConfigError::BadValue {
                        key: key.to_string(),
                        value: value.to_string(),
                    })?
            }
            "euclidean_max_dist" => self.euclidean_max_dist = parse_value(key, value)?,
            "headgear_iou_gate" => self.headgear_iou_gate = parse_value(key, value)?,
            "occluded_rider_iou" => self.occluded_rider_iou = parse_value(key, value)?,
            "roi_expansion" => self.roi_expansion = parse_value(key, value)?,
            "eval_iou_threshold" => self.eval_iou_threshold = parse_value(key, value)?,
            "tracker_min_hits" => self.tracker.min_hits = parse_value(key, value)?,
            "tracker_max_age" => self.tracker.max_age = parse_value(key, value)?,
            "tracker_iou_gate" => self.tracker.iou_gate = parse_value(key, value)?,
            "violation_min_frames" => self.tracker.violation_min_frames = parse_value(key, value)?,
            "train_learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "train_epochs" => self.train.epochs = parse_value(key, value)?,
            "train_batch_size" => self.train.batch_size = parse_value(key, value)?,
            "train_seed" => self.train.seed = parse_value(key, value)?,
            "train_lr_decay_factor" => self.train.lr_decay_factor = parse_value(key, value)?,
            "train_decay_every" => self.train.decay_every = parse_value(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Renders the full configuration as a parseable `key=value` document.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("confidence_threshold", self.confidence_threshold.to_string());
        kv("min_box_area", self.min_box_area.to_string());
        kv("association_mode", self.association_mode.name().to_string());
        kv("euclidean_max_dist", self.euclidean_max_dist.to_string());
        kv("headgear_iou_gate", self.headgear_iou_gate.to_string());
        kv("occluded_rider_iou", self.occluded_rider_iou.to_string());
        kv("roi_expansion", self.roi_expansion.to_string());
        kv("eval_iou_threshold", self.eval_iou_threshold.to_string());
        kv("tracker_min_hits", self.tracker.min_hits.to_string());
        kv("tracker_max_age", self.tracker.max_age.to_string());
        kv("tracker_iou_gate", self.tracker.iou_gate.to_string());
        kv(
            "violation_min_frames",
            self.tracker.violation_min_frames.to_string(),
        );
        kv("train_learning_rate", self.train.learning_rate.to_string());
        kv("train_epochs", self.train.epochs.to_string());
        kv("train_batch_size", self.train.batch_size.to_string());
        kv("train_seed", self.train.seed.to_string());
        kv(
            "train_lr_decay_factor",
            self.train.lr_decay_factor.to_string(),
        );
        kv("train_decay_every", self.train.decay_every.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_key_values() {
        let cfg = EngineConfig::default();
        let text = cfg.to_key_values();
        let back = EngineConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn overrides_comments_and_blanks() {
        let text = "\n# tracker tweaks\ntracker_min_hits = 1\nviolation_min_frames=1\nassociation_mode=moto_box_iou\n";
        let cfg = EngineConfig::parse(text).unwrap();
        assert_eq!(cfg.tracker.min_hits, 1);
        assert_eq!(cfg.tracker.violation_min_frames, 1);
        assert_eq!(cfg.association_mode, AssociationMode::MotoBoxIou);
        // Untouched keys keep their defaults.
        assert_eq!(cfg.confidence_threshold, 0.25);
        assert_eq!(cfg.min_box_area, 900.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            EngineConfig::parse("no_such_key=1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            EngineConfig::parse("train_epochs=many"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            EngineConfig::parse("just some text"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn infinity_survives_the_round_trip() {
        let cfg = EngineConfig::default();
        assert!(cfg.euclidean_max_dist.is_infinite());
        let back = EngineConfig::parse(&cfg.to_key_values()).unwrap();
        assert!(back.euclidean_max_dist.is_infinite());
    }
}
