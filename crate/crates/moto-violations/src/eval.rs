//! Violation-identification scoring: greedy IOU matching between predicted
//! and ground-truth violations, precision/recall/F-score, and video-level
//! count accuracy. Frame-level and track-level granularities are both
//! supported; the caller states which one it is scoring by choosing the
//! inputs.

use crate::geometry::{convex_iou, rect_iou, trap_rect_iou, Rect, Trapezium};
use crate::pipeline::{FrameOutput, ViolationReport};
use crate::records::FrameRecord;
use crate::synth::{self, GtCounts};
use crate::tracker::{Track, TrackClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A violation's spatial footprint: either an axis-aligned box or a
/// trapezium instance boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rect(Rect),
    Trapezium(Trapezium),
}

impl Shape {
    pub fn iou(&self, other: &Shape) -> f64 {
        match (self, other) {
            (Shape::Rect(a), Shape::Rect(b)) => rect_iou(a, b),
            (Shape::Trapezium(t), Shape::Rect(r)) | (Shape::Rect(r), Shape::Trapezium(t)) => {
                trap_rect_iou(t, r)
            }
            (Shape::Trapezium(a), Shape::Trapezium(b)) => convex_iou(a.vertices(), b.vertices()),
        }
    }

    /// Content key for order-independent tie-breaking.
    fn key(&self) -> (u8, [f64; 8]) {
        match self {
            Shape::Rect(r) => (0, [r.x1, r.y1, r.x2, r.y2, 0.0, 0.0, 0.0, 0.0]),
            Shape::Trapezium(t) => (1, t.to_flat()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Matched (pred index, gt index, IOU), indices into the input lists.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl MatchResult {
    pub fn accumulate(&mut self, other: &MatchResult) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// Greedy one-to-one matching by descending IOU between flagged predictions
/// and flagged ground truths; a pair matches iff its IOU clears the
/// threshold. Unflagged entries are ignored on both sides. Ties are broken
/// by shape content, so the result does not depend on input ordering.
pub fn match_violations(
    preds: &[(Shape, bool)],
    gts: &[(Shape, bool)],
    iou_threshold: f64,
) -> MatchResult {
    let flagged_preds: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].1).collect();
    let flagged_gts: Vec<usize> = (0..gts.len()).filter(|&j| gts[j].1).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &flagged_preds {
        for &j in &flagged_gts {
            let iou = preds[i].0.iou(&gts[j].0);
            if iou >= iou_threshold {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| preds[a.1].0.key().partial_cmp(&preds[b.1].0.key()).unwrap())
            .then_with(|| gts[a.2].0.key().partial_cmp(&gts[b.2].0.key()).unwrap())
    });

    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (iou, i, j) in candidates {
        if pred_used[i] || gt_used[j] {
            continue;
        }
        pred_used[i] = true;
        gt_used[j] = true;
        pairs.push((i, j, iou));
    }
    MatchResult {
        true_positives: pairs.len(),
        false_positives: flagged_preds.len() - pairs.len(),
        false_negatives: flagged_gts.len() - pairs.len(),
        pairs,
    }
}

/// Precision/recall/F-score. When a denominator is zero the value is 0 and
/// the corresponding `*_defined` flag is false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> Prf {
    let precision_defined = tp + fp > 0;
    let recall_defined = tp + fn_ > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if recall_defined {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f_score,
        precision_defined,
        recall_defined,
    }
}

impl MatchResult {
    pub fn prf(&self) -> Prf {
        prf(self.true_positives, self.false_positives, self.false_negatives)
    }
}

/// Video-level unique violation counts, comparable between a pipeline
/// report and generator ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub triple: usize,
    pub helmet_riders: usize,
    pub helmet_instances: usize,
}

impl From<&ViolationReport> for Counts {
    fn from(r: &ViolationReport) -> Self {
        Counts {
            triple: r.triple_riding_count,
            helmet_riders: r.helmet_violation_rider_count,
            helmet_instances: r.helmet_violation_instance_count,
        }
    }
}

impl From<GtCounts> for Counts {
    fn from(g: GtCounts) -> Self {
        Counts {
            triple: g.triple_instances,
            helmet_riders: g.no_helmet_riders,
            helmet_instances: g.helmet_violation_instances,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryError {
    pub absolute: u64,
    pub relative: f64,
}

fn category_error(pred: usize, gt: usize) -> CategoryError {
    let absolute = pred.abs_diff(gt) as u64;
    CategoryError {
        absolute,
        relative: absolute as f64 / gt.max(1) as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountErrors {
    pub triple: CategoryError,
    pub helmet_riders: CategoryError,
    pub helmet_instances: CategoryError,
}

/// Per-category absolute and relative count errors between a predicted
/// report and ground truth.
pub fn count_accuracy(pred: &Counts, gt: &Counts) -> CountErrors {
    CountErrors {
        triple: category_error(pred.triple, gt.triple),
        helmet_riders: category_error(pred.helmet_riders, gt.helmet_riders),
        helmet_instances: category_error(pred.helmet_instances, gt.helmet_instances),
    }
}

// ---------------------------------------------------------------------------
// Scoring harness over pipeline outputs and ground-truth streams
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryPrf {
    pub triple: Prf,
    pub helmet_rider: Prf,
    pub helmet_instance: Prf,
}

/// Ground-truth rider boxes whose headgear is a no-helmet box. Headgear is
/// aligned to riders positionally within an instance (the generator emits
/// them in rider order); if the counts disagree, headgear falls back to
/// best-IOU rider matching.
fn gt_helmetless_riders(rec: &FrameRecord) -> Vec<Rect> {
    let mut out = Vec::new();
    for group in synth::group_gt_boxes(rec).values() {
        if group.riders.len() == group.headgear.len() {
            for (rider, (_, no_helmet)) in group.riders.iter().zip(&group.headgear) {
                if *no_helmet {
                    out.push(*rider);
                }
            }
        } else {
            for (hg, no_helmet) in &group.headgear {
                if !no_helmet {
                    continue;
                }
                let best = group
                    .riders
                    .iter()
                    .max_by(|a, b| rect_iou(hg, a).partial_cmp(&rect_iou(hg, b)).unwrap());
                if let Some(r) = best {
                    out.push(*r);
                }
            }
        }
    }
    out
}

fn gt_instance_shapes(rec: &FrameRecord) -> Vec<(Shape, bool, bool)> {
    rec.instances
        .iter()
        .map(|inst| {
            let shape = Trapezium::from_flat(&inst.trapezium)
                .map(Shape::Trapezium)
                .unwrap_or_else(|_| {
                    // Malformed label: fall back to the instance's motorcycle box.
                    let grouped = synth::group_gt_boxes(rec);
                    let rect = grouped
                        .get(&inst.id)
                        .and_then(|g| g.moto)
                        .unwrap_or_else(|| Rect::new(0.0, 0.0, 1.0, 1.0).unwrap());
                    Shape::Rect(rect)
                });
            (shape, inst.triple, inst.no_helmet_riders > 0)
        })
        .collect()
}

fn instance_shape(out: &crate::pipeline::InstanceOutput) -> Shape {
    match &out.trapezium {
        Some(t) => Shape::Trapezium(*t),
        None => Shape::Rect(out.moto),
    }
}

/// Frame-level scores: per-frame greedy matching accumulated over the
/// video, per category.
pub fn score_frames(
    outputs: &[FrameOutput],
    gt: &[FrameRecord],
    iou_threshold: f64,
) -> CategoryPrf {
    let by_frame: BTreeMap<u64, &FrameRecord> = gt.iter().map(|r| (r.frame, r)).collect();
    let mut triple = MatchResult::default();
    let mut rider = MatchResult::default();
    let mut instance = MatchResult::default();
    for out in outputs {
        let Some(rec) = by_frame.get(&out.frame) else {
            continue;
        };
        let gt_shapes = gt_instance_shapes(rec);

        let preds: Vec<(Shape, bool)> = out
            .instances
            .iter()
            .map(|i| (instance_shape(i), i.triple))
            .collect();
        let gts: Vec<(Shape, bool)> = gt_shapes.iter().map(|(s, t, _)| (s.clone(), *t)).collect();
        triple.accumulate(&match_violations(&preds, &gts, iou_threshold));

        let preds: Vec<(Shape, bool)> = out
            .instances
            .iter()
            .flat_map(|i| {
                i.assigned_riders
                    .iter()
                    .zip(&i.rider_status)
                    .map(|(r, s)| {
                        (
                            Shape::Rect(*r),
                            *s == crate::association::HeadgearStatus::NoHelmet,
                        )
                    })
            })
            .collect();
        let gts: Vec<(Shape, bool)> = gt_helmetless_riders(rec)
            .into_iter()
            .map(|r| (Shape::Rect(r), true))
            .collect();
        rider.accumulate(&match_violations(&preds, &gts, iou_threshold));

        let preds: Vec<(Shape, bool)> = out
            .instances
            .iter()
            .map(|i| (instance_shape(i), i.helmet_violation))
            .collect();
        let gts: Vec<(Shape, bool)> = gt_shapes
            .iter()
            .map(|(s, _, h)| (s.clone(), *h))
            .collect();
        instance.accumulate(&match_violations(&preds, &gts, iou_threshold));
    }
    CategoryPrf {
        triple: triple.prf(),
        helmet_rider: rider.prf(),
        helmet_instance: instance.prf(),
    }
}

/// Track-level scores: each violating confirmed track reduces to its mean
/// flagged box; ground-truth instances reduce to their mean boxes over the
/// video. One greedy matching per category.
pub fn score_tracks(
    tracks: &[&Track],
    gt: &[FrameRecord],
    violation_min_frames: u32,
    iou_threshold: f64,
) -> CategoryPrf {
    // Ground-truth reductions.
    let mut moto_sum: BTreeMap<u64, ([f64; 4], usize, bool, bool)> = BTreeMap::new();
    let mut rider_sum: BTreeMap<(u64, usize), ([f64; 4], usize)> = BTreeMap::new();
    for rec in gt {
        let grouped = synth::group_gt_boxes(rec);
        for inst in &rec.instances {
            let Some(group) = grouped.get(&inst.id) else {
                continue;
            };
            let Some(moto) = group.moto else { continue };
            let entry = moto_sum
                .entry(inst.id)
                .or_insert(([0.0; 4], 0, false, false));
            for (s, v) in entry.0.iter_mut().zip([moto.x1, moto.y1, moto.x2, moto.y2]) {
                *s += v;
            }
            entry.1 += 1;
            entry.2 |= inst.triple;
            entry.3 |= inst.no_helmet_riders > 0;
            if group.riders.len() == group.headgear.len() {
                for (k, (rider, (_, no_helmet))) in
                    group.riders.iter().zip(&group.headgear).enumerate()
                {
                    if *no_helmet {
                        let e = rider_sum.entry((inst.id, k)).or_insert(([0.0; 4], 0));
                        for (s, v) in e.0.iter_mut().zip([rider.x1, rider.y1, rider.x2, rider.y2])
                        {
                            *s += v;
                        }
                        e.1 += 1;
                    }
                }
            }
        }
    }
    let mean = |sum: &[f64; 4], n: usize| {
        Rect::new(
            sum[0] / n as f64,
            sum[1] / n as f64,
            sum[2] / n as f64,
            sum[3] / n as f64,
        )
        .ok()
    };

    let gt_triple: Vec<(Shape, bool)> = moto_sum
        .values()
        .filter(|(_, n, triple, _)| *n > 0 && *triple)
        .filter_map(|(s, n, _, _)| mean(s, *n).map(|r| (Shape::Rect(r), true)))
        .collect();
    let gt_instance: Vec<(Shape, bool)> = moto_sum
        .values()
        .filter(|(_, n, _, helmetless)| *n > 0 && *helmetless)
        .filter_map(|(s, n, _, _)| mean(s, *n).map(|r| (Shape::Rect(r), true)))
        .collect();
    let gt_rider: Vec<(Shape, bool)> = rider_sum
        .values()
        .filter_map(|(s, n)| mean(s, *n).map(|r| (Shape::Rect(r), true)))
        .collect();

    let pred_triple: Vec<(Shape, bool)> = tracks
        .iter()
        .filter(|t| t.ever_confirmed())
        .filter(|t| t.class == TrackClass::Instance && t.triple_frames >= violation_min_frames)
        .filter_map(|t| t.mean_triple_rect().map(|r| (Shape::Rect(r), true)))
        .collect();
    let pred_instance: Vec<(Shape, bool)> = tracks
        .iter()
        .filter(|t| t.ever_confirmed())
        .filter(|t| t.class == TrackClass::Instance && t.helmetless_frames >= violation_min_frames)
        .filter_map(|t| t.mean_helmetless_rect().map(|r| (Shape::Rect(r), true)))
        .collect();
    let pred_rider: Vec<(Shape, bool)> = tracks
        .iter()
        .filter(|t| t.ever_confirmed())
        .filter(|t| t.class == TrackClass::NoHelmet && t.helmetless_frames >= violation_min_frames)
        .filter_map(|t| t.mean_helmetless_rect().map(|r| (Shape::Rect(r), true)))
        .collect();

    CategoryPrf {
        triple: match_violations(&pred_triple, &gt_triple, iou_threshold).prf(),
        helmet_rider: match_headgear_to_riders(&pred_rider, &gt_rider),
        helmet_instance: match_violations(&pred_instance, &gt_instance, iou_threshold).prf(),
    }
}

/// Headgear boxes sit on top of rider boxes, so their IOU with the rider is
/// structurally small. A prediction counts as matching a ground-truth rider
/// when the headgear box lies (mostly) inside it: intersection over the
/// headgear's own area, one-to-one greedy.
fn match_headgear_to_riders(preds: &[(Shape, bool)], gts: &[(Shape, bool)]) -> Prf {
    let mut candidates = Vec::new();
    for (i, (p, _)) in preds.iter().enumerate() {
        let Shape::Rect(pr) = p else { continue };
        for (j, (g, _)) in gts.iter().enumerate() {
            let Shape::Rect(gr) = g else { continue };
            let coverage = pr.intersection_area(gr) / pr.area();
            if coverage >= 0.5 {
                candidates.push((coverage, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut tp = 0;
    for (_, i, j) in candidates {
        if pred_used[i] || gt_used[j] {
            continue;
        }
        pred_used[i] = true;
        gt_used[j] = true;
        tp += 1;
    }
    prf(tp, preds.len() - tp, gts.len() - tp)
}

// ---------------------------------------------------------------------------
// Scores document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeScores {
    pub mode: String,
    pub frame: CategoryPrf,
    pub track: CategoryPrf,
    pub counts: Counts,
    pub gt_counts: Counts,
    pub count_errors: CountErrors,
    pub record_errors: usize,
}

/// The document the `eval` command emits: thresholds plus per-mode scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoresDoc {
    pub iou_threshold: f64,
    pub violation_min_frames: u32,
    pub modes: Vec<ModeScores>,
}

/// Runs the pipeline over a detection stream with the configured
/// association mode and scores it against ground truth at both
/// granularities.
pub fn evaluate_mode(
    cfg: &crate::config::EngineConfig,
    trap_model: Option<&crate::dense_net::DenseNet>,
    amodal: Option<&crate::dense_net::DenseNet>,
    detections: &[FrameRecord],
    gt: &[FrameRecord],
) -> ModeScores {
    use crate::pipeline::{Engine, TrapeziumSource};
    let source = match trap_model {
        Some(m) => TrapeziumSource::Model(m.clone()),
        None => TrapeziumSource::CandidateFit,
    };
    let mut engine = Engine::new(cfg.clone(), source, amodal.cloned());
    let mut outputs = Vec::with_capacity(detections.len());
    let mut record_errors = 0usize;
    for rec in detections {
        match engine.process_frame(rec) {
            Ok(out) => outputs.push(out),
            Err(_) => record_errors += 1,
        }
    }
    let tracks: Vec<Track> = engine.tracker().all_tracks().into_iter().cloned().collect();
    let track_refs: Vec<&Track> = tracks.iter().collect();
    let report = engine.finalize();
    let frame = score_frames(&outputs, gt, cfg.eval_iou_threshold);
    let track = score_tracks(
        &track_refs,
        gt,
        cfg.tracker.violation_min_frames,
        cfg.eval_iou_threshold,
    );
    let counts = Counts::from(&report);
    let gt_counts = Counts::from(synth::gt_counts(gt));
    ModeScores {
        mode: cfg.association_mode.name().to_string(),
        frame,
        track,
        counts,
        gt_counts,
        count_errors: count_accuracy(&counts, &gt_counts),
        record_errors,
    }
}
