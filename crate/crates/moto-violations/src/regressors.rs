//! The two learned regressors and their data plumbing.
//!
//! The amodal regressor maps a helmet/no-helmet box to the full rider box
//! it implies, recovering riders whose bodies are occluded. The trapezium
//! regressor maps a motorcycle box plus up to five rider boxes (24 inputs)
//! to the 7-value trapezium parameterization: centroid X/Y, width W, and
//! the vertical offsets of the four trapezium corners from the motorcycle
//! box corners. All regressor I/O is normalized by the frame dimensions.

use crate::dense_net::{Activation, DenseNet, NetError, TrainConfig};
use crate::geometry::{centroid, GeometryError, Point, Rect, Trapezium};
use crate::records::{ClassTag, Detection, FrameRecord, GtInstance};
use crate::geometry::rect_iou;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Fixed regressor input width: one motorcycle box plus five rider slots.
pub const REGRESSOR_INPUT_LEN: usize = 24;
/// Maximum number of rider boxes packed into the input.
pub const MAX_RIDER_SLOTS: usize = 5;
/// Trapezium regressor topology: 24 inputs, 512 and 256 hidden nodes, 7 outputs.
pub const TRAPEZIUM_TOPOLOGY: [usize; 4] = [24, 512, 256, 7];
/// Amodal regressor topology: 4 inputs, 16 and 64 hidden nodes, 4 outputs.
pub const AMODAL_TOPOLOGY: [usize; 4] = [4, 16, 64, 4];

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("model topology mismatch: expected {expected_in} inputs / {expected_out} outputs, got {got_in} / {got_out}")]
    Topology {
        expected_in: usize,
        expected_out: usize,
        got_in: usize,
        got_out: usize,
    },
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("annotation frames disagree on dimensions")]
    MixedFrameDims,
    #[error("empty training set")]
    EmptyTrainingSet,
}

/// The 7-value trapezium parameterization. `x`/`y` are the centroid, `w`
/// the distance between the vertical parallel sides, and the `d_*` values
/// are vertical offsets of each trapezium corner from the corresponding
/// motorcycle box corner (top corners from `moto.y1`, bottom from `moto.y2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapeziumParams {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub d_tl: f64,
    pub d_tr: f64,
    pub d_br: f64,
    pub d_bl: f64,
}

impl TrapeziumParams {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.x, self.y, self.w, self.d_tl, self.d_tr, self.d_br, self.d_bl,
        ]
    }

    pub fn from_array(v: &[f64; 7]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            w: v[2],
            d_tl: v[3],
            d_tr: v[4],
            d_br: v[5],
            d_bl: v[6],
        }
    }

    /// Frame-normalized form: x-like values by width, y-like by height.
    pub fn normalized(&self, frame_w: f64, frame_h: f64) -> [f64; 7] {
        [
            self.x / frame_w,
            self.y / frame_h,
            self.w / frame_w,
            self.d_tl / frame_h,
            self.d_tr / frame_h,
            self.d_br / frame_h,
            self.d_bl / frame_h,
        ]
    }

    pub fn denormalized(v: &[f64; 7], frame_w: f64, frame_h: f64) -> Self {
        Self {
            x: v[0] * frame_w,
            y: v[1] * frame_h,
            w: v[2] * frame_w,
            d_tl: v[3] * frame_h,
            d_tr: v[4] * frame_h,
            d_br: v[5] * frame_h,
            d_bl: v[6] * frame_h,
        }
    }
}

/// Concatenates the motorcycle box and its rider boxes into the fixed
/// 24-value regressor input, normalized to `[0,1]` by the frame dimensions.
///
/// Riders are packed in descending order of intersection area with the
/// motorcycle (ties broken by coordinates), so the packing is invariant to
/// the caller's rider ordering. With more than five riders the smallest
/// intersections are dropped; unused slots stay exactly zero.
pub fn pack_input(moto: &Rect, riders: &[Rect], frame_w: f64, frame_h: f64) -> [f64; 24] {
    let mut out = [0.0; REGRESSOR_INPUT_LEN];
    out[0] = moto.x1 / frame_w;
    out[1] = moto.y1 / frame_h;
    out[2] = moto.x2 / frame_w;
    out[3] = moto.y2 / frame_h;

    let mut with_area: Vec<(f64, &Rect)> = riders
        .iter()
        .map(|r| (r.intersection_area(moto), r))
        .filter(|(a, _)| *a > 0.0)
        .collect();
    with_area.sort_by(|(aa, ra), (ab, rb)| {
        ab.partial_cmp(aa)
            .unwrap()
            .then_with(|| {
                (ra.x1, ra.y1, ra.x2, ra.y2)
                    .partial_cmp(&(rb.x1, rb.y1, rb.x2, rb.y2))
                    .unwrap()
            })
    });
    for (slot, (_, r)) in with_area.iter().take(MAX_RIDER_SLOTS).enumerate() {
        let base = 4 + slot * 4;
        out[base] = r.x1 / frame_w;
        out[base + 1] = r.y1 / frame_h;
        out[base + 2] = r.x2 / frame_w;
        out[base + 3] = r.y2 / frame_h;
    }
    out
}

/// Extracts the 7-value parameterization of a trapezium relative to its
/// motorcycle box.
pub fn fit_params(trapezium: &Trapezium, moto: &Rect) -> Result<TrapeziumParams, GeometryError> {
    let c = centroid(trapezium.vertices())?;
    let v = trapezium.vertices();
    Ok(TrapeziumParams {
        x: c.x,
        y: c.y,
        w: trapezium.width(),
        d_tl: v[0].y - moto.y1,
        d_tr: v[1].y - moto.y1,
        d_br: v[2].y - moto.y2,
        d_bl: v[3].y - moto.y2,
    })
}

/// Rebuilds the trapezium from its parameters and motorcycle box, exactly
/// inverting [`fit_params`]. Returns the trapezium together with the
/// consistency residual `|y - centroid_y(result)|` (the predicted Y is
/// redundant given the offsets and is only reported, not used for
/// placement).
///
/// The corner y's come straight from the offsets. The side lengths then fix
/// where a trapezium of width `w` must sit for its centroid x to equal `x`:
/// `left = x - w*(a + 2b) / (3*(a + b))` with `a`/`b` the left/right side
/// lengths.
pub fn reconstruct(
    params: &TrapeziumParams,
    moto: &Rect,
) -> Result<(Trapezium, f64), RegressorError> {
    if !params.to_array().iter().all(|v| v.is_finite()) {
        return Err(RegressorError::InvalidPrediction(
            "non-finite parameters".into(),
        ));
    }
    if params.w <= 0.0 {
        return Err(RegressorError::InvalidPrediction(format!(
            "non-positive width {}",
            params.w
        )));
    }
    let y_tl = moto.y1 + params.d_tl;
    let y_tr = moto.y1 + params.d_tr;
    let y_br = moto.y2 + params.d_br;
    let y_bl = moto.y2 + params.d_bl;
    let a = y_bl - y_tl;
    let b = y_br - y_tr;
    if a < 0.0 || b < 0.0 {
        return Err(RegressorError::InvalidPrediction(
            "sides cross: bottom corner above top corner".into(),
        ));
    }
    if a + b <= 1e-9 {
        return Err(RegressorError::InvalidPrediction(
            "degenerate: both sides have zero length".into(),
        ));
    }
    let left = params.x - params.w * (a + 2.0 * b) / (3.0 * (a + b));
    let right = left + params.w;
    let trapezium = Trapezium::new([
        Point::new(left, y_tl),
        Point::new(right, y_tr),
        Point::new(right, y_br),
        Point::new(left, y_bl),
    ])
    .map_err(|e| RegressorError::InvalidPrediction(e.to_string()))?;
    let residual = (params.y - trapezium.centroid().y).abs();
    Ok((trapezium, residual))
}

/// One labeled box in an annotation set.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub class: ClassTag,
    pub rect: Rect,
    pub instance_id: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameAnnotation {
    pub frame: u64,
    pub boxes: Vec<LabeledBox>,
    /// Ground-truth trapezia keyed by instance id.
    pub trapezia: Vec<(u64, Trapezium)>,
}

/// Per-frame labeled boxes with class tags and instance groupings, plus
/// frame dimensions. The working form of both ground-truth label streams
/// and annotation files.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub frame_w: f64,
    pub frame_h: f64,
    pub frames: Vec<FrameAnnotation>,
}

impl AnnotationSet {
    pub fn from_records(records: &[FrameRecord]) -> Result<Self, RegressorError> {
        let Some(first) = records.first() else {
            return Ok(Self {
                frame_w: 0.0,
                frame_h: 0.0,
                frames: Vec::new(),
            });
        };
        if records.iter().any(|r| r.w != first.w || r.h != first.h) {
            return Err(RegressorError::MixedFrameDims);
        }
        let frames = records
            .iter()
            .map(|rec| {
                let boxes = rec
                    .detections
                    .iter()
                    .filter_map(|d| {
                        d.rect().map(|rect| LabeledBox {
                            class: d.cls,
                            rect,
                            instance_id: d.instance_id,
                        })
                    })
                    .collect();
                let trapezia = rec
                    .instances
                    .iter()
                    .filter_map(|i| {
                        Trapezium::from_flat(&i.trapezium)
                            .ok()
                            .map(|t| (i.id, t))
                    })
                    .collect();
                FrameAnnotation {
                    frame: rec.frame,
                    boxes,
                    trapezia,
                }
            })
            .collect();
        Ok(Self {
            frame_w: first.w as f64,
            frame_h: first.h as f64,
            frames,
        })
    }

    pub fn to_records(&self) -> Vec<FrameRecord> {
        self.frames
            .iter()
            .map(|fa| {
                let mut rec = FrameRecord::new(fa.frame, self.frame_w as u32, self.frame_h as u32);
                for b in &fa.boxes {
                    let mut det = Detection::new(b.class, &b.rect, 1.0);
                    det.instance_id = b.instance_id;
                    rec.detections.push(det);
                }
                for (id, trap) in &fa.trapezia {
                    let riders = fa
                        .boxes
                        .iter()
                        .filter(|b| b.class == ClassTag::Rider && b.instance_id == Some(*id))
                        .count();
                    let no_helmet = fa
                        .boxes
                        .iter()
                        .filter(|b| b.class == ClassTag::NoHelmet && b.instance_id == Some(*id))
                        .count();
                    rec.instances.push(GtInstance {
                        id: *id,
                        trapezium: trap.to_flat(),
                        riders,
                        triple: riders >= 3,
                        no_helmet_riders: no_helmet,
                    });
                }
                rec
            })
            .collect()
    }
}

/// Builds trapezium-regressor training pairs: one sample per driving
/// instance with a motorcycle box and a valid ground-truth trapezium.
/// Inputs are packed from all riders intersecting the motorcycle (as at
/// inference time, neighbors included); targets are the normalized
/// parameters. Returns the samples and the number of skipped instances.
pub fn build_trapezium_trainset(ann: &AnnotationSet) -> (Vec<(Vec<f64>, Vec<f64>)>, usize) {
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for fa in &ann.frames {
        let riders: Vec<Rect> = fa
            .boxes
            .iter()
            .filter(|b| b.class == ClassTag::Rider)
            .map(|b| b.rect)
            .collect();
        let mut moto_by_id: BTreeMap<u64, Rect> = BTreeMap::new();
        for b in &fa.boxes {
            if b.class == ClassTag::Motorcycle {
                if let Some(id) = b.instance_id {
                    moto_by_id.entry(id).or_insert(b.rect);
                }
            }
        }
        let trap_by_id: BTreeMap<u64, &Trapezium> =
            fa.trapezia.iter().map(|(id, t)| (*id, t)).collect();
        let mut ids: BTreeSet<u64> = moto_by_id.keys().copied().collect();
        ids.extend(trap_by_id.keys().copied());
        ids.extend(fa.boxes.iter().filter_map(|b| b.instance_id));

        for id in ids {
            let (Some(moto), Some(trap)) = (moto_by_id.get(&id), trap_by_id.get(&id)) else {
                skipped += 1;
                continue;
            };
            let Ok(params) = fit_params(trap, moto) else {
                skipped += 1;
                continue;
            };
            let input = pack_input(moto, &riders, ann.frame_w, ann.frame_h);
            let target = params.normalized(ann.frame_w, ann.frame_h);
            samples.push((input.to_vec(), target.to_vec()));
        }
    }
    (samples, skipped)
}

fn check_topology(model: &DenseNet, want_in: usize, want_out: usize) -> Result<(), RegressorError> {
    if model.input_size() != want_in || model.output_size() != want_out {
        return Err(RegressorError::Topology {
            expected_in: want_in,
            expected_out: want_out,
            got_in: model.input_size(),
            got_out: model.output_size(),
        });
    }
    Ok(())
}

/// Runs the trapezium regressor for one instance: pack, forward,
/// denormalize, reconstruct. Returns the trapezium and the Y residual.
pub fn predict_trapezium(
    model: &DenseNet,
    moto: &Rect,
    riders: &[Rect],
    frame_w: f64,
    frame_h: f64,
) -> Result<(Trapezium, f64), RegressorError> {
    check_topology(model, REGRESSOR_INPUT_LEN, 7)?;
    let input = pack_input(moto, riders, frame_w, frame_h);
    let out = model.forward(&input)?;
    let arr: [f64; 7] = out.try_into().expect("output size checked");
    let params = TrapeziumParams::denormalized(&arr, frame_w, frame_h);
    reconstruct(&params, moto)
}

/// Initializes and trains the trapezium regressor (tanh hidden layers).
pub fn train_trapezium(
    samples: &[(Vec<f64>, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<(DenseNet, Vec<f64>), RegressorError> {
    if samples.is_empty() {
        return Err(RegressorError::EmptyTrainingSet);
    }
    let mut net = DenseNet::init(&TRAPEZIUM_TOPOLOGY, Activation::Tanh, cfg.seed)?;
    let history = net.train(samples, cfg)?;
    Ok((net, history))
}

/// How much of a headgear box must lie inside a rider box for the rider to
/// count as that head's (non-occluded) owner.
pub const HEADGEAR_COVER: f64 = 0.5;

/// Gathers (headgear box, rider box) training pairs from non-occluded
/// riders: every headgear box covered by at least one rider. Among covering
/// riders the one with the highest IOU wins, which with nested rider boxes
/// is the smallest (the head's own rider).
pub fn collect_amodal_pairs(ann: &AnnotationSet, min_cover: f64) -> Vec<(Rect, Rect)> {
    let mut pairs = Vec::new();
    for fa in &ann.frames {
        let riders: Vec<&Rect> = fa
            .boxes
            .iter()
            .filter(|b| b.class == ClassTag::Rider)
            .map(|b| &b.rect)
            .collect();
        for b in &fa.boxes {
            if !b.class.is_headgear() {
                continue;
            }
            let best = riders
                .iter()
                .filter(|r| b.rect.intersection_area(r) / b.rect.area() >= min_cover)
                .map(|r| (rect_iou(&b.rect, r), *r))
                .max_by(|(ia, ra), (ib, rb)| {
                    ia.partial_cmp(ib).unwrap().then_with(|| {
                        (ra.x1, ra.y1, ra.x2, ra.y2)
                            .partial_cmp(&(rb.x1, rb.y1, rb.x2, rb.y2))
                            .unwrap()
                    })
                });
            if let Some((_, rider)) = best {
                pairs.push((b.rect, *rider));
            }
        }
    }
    pairs
}

/// Initializes and trains the amodal regressor (relu hidden layers) on
/// headgear-to-rider pairs, normalized by the frame dimensions.
pub fn train_amodal(
    pairs: &[(Rect, Rect)],
    frame_w: f64,
    frame_h: f64,
    cfg: &TrainConfig,
) -> Result<(DenseNet, Vec<f64>), RegressorError> {
    if pairs.is_empty() {
        return Err(RegressorError::EmptyTrainingSet);
    }
    let samples: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(h, r)| {
            (
                vec![h.x1 / frame_w, h.y1 / frame_h, h.x2 / frame_w, h.y2 / frame_h],
                vec![r.x1 / frame_w, r.y1 / frame_h, r.x2 / frame_w, r.y2 / frame_h],
            )
        })
        .collect();
    let mut net = DenseNet::init(&AMODAL_TOPOLOGY, Activation::Relu, cfg.seed)?;
    let history = net.train(&samples, cfg)?;
    Ok((net, history))
}

/// Predicts the full rider box implied by a headgear box.
pub fn predict_amodal(
    model: &DenseNet,
    headgear: &Rect,
    frame_w: f64,
    frame_h: f64,
) -> Result<Rect, RegressorError> {
    check_topology(model, 4, 4)?;
    let out = model.forward(&[
        headgear.x1 / frame_w,
        headgear.y1 / frame_h,
        headgear.x2 / frame_w,
        headgear.y2 / frame_h,
    ])?;
    Rect::new(
        out[0] * frame_w,
        out[1] * frame_h,
        out[2] * frame_w,
        out[3] * frame_h,
    )
    .map_err(|e| RegressorError::InvalidPrediction(e.to_string()))
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FillStats {
    pub headgear_total: usize,
    pub small_dropped: usize,
    pub missing_before: usize,
    pub filled: usize,
    pub invalid_predictions: usize,
}

/// Whether a headgear box's rider is missing: the rider box the regressor
/// predicts from it has no labeled rider above `occluded_iou`. The
/// threshold compares predicted and labeled *rider* boxes, so it is kept
/// low for non-overlapping riders and raised for heavily nested ones.
fn rider_missing(
    model: &DenseNet,
    headgear: &Rect,
    riders: &[Rect],
    occluded_iou: f64,
    frame_w: f64,
    frame_h: f64,
) -> Option<Result<Rect, RegressorError>> {
    let predicted = predict_amodal(model, headgear, frame_w, frame_h);
    match &predicted {
        Ok(p) => {
            let covered = riders.iter().any(|r| rect_iou(p, r) > occluded_iou);
            if covered {
                None
            } else {
                Some(predicted)
            }
        }
        Err(_) => Some(predicted),
    }
}

/// Fraction of headgear boxes (at or above `min_box_area`) whose predicted
/// rider box matches no labeled rider above `occluded_iou` — the
/// missing-rider rate.
pub fn missing_rider_rate(
    ann: &AnnotationSet,
    model: &DenseNet,
    occluded_iou: f64,
    min_box_area: f64,
) -> Result<f64, RegressorError> {
    check_topology(model, 4, 4)?;
    let mut total = 0usize;
    let mut missing = 0usize;
    for fa in &ann.frames {
        let riders: Vec<Rect> = fa
            .boxes
            .iter()
            .filter(|b| b.class == ClassTag::Rider)
            .map(|b| b.rect)
            .collect();
        for b in &fa.boxes {
            if !b.class.is_headgear() || b.rect.area() < min_box_area {
                continue;
            }
            total += 1;
            if rider_missing(model, &b.rect, &riders, occluded_iou, ann.frame_w, ann.frame_h)
                .is_some()
            {
                missing += 1;
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        missing as f64 / total as f64
    })
}

/// Inserts the predicted rider box for every headgear box whose prediction
/// matches no existing rider above `occluded_iou`. Headgear boxes smaller
/// than `min_box_area` are dropped first and never trigger a fill; existing
/// rider boxes are never removed, and at most one box is added per headgear
/// box.
pub fn amodal_fill(
    ann: &AnnotationSet,
    model: &DenseNet,
    occluded_iou: f64,
    min_box_area: f64,
) -> Result<(AnnotationSet, FillStats), RegressorError> {
    check_topology(model, 4, 4)?;
    let mut stats = FillStats::default();
    let mut frames = Vec::with_capacity(ann.frames.len());
    for fa in &ann.frames {
        let riders: Vec<Rect> = fa
            .boxes
            .iter()
            .filter(|b| b.class == ClassTag::Rider)
            .map(|b| b.rect)
            .collect();
        let mut boxes = Vec::with_capacity(fa.boxes.len());
        let mut fills = Vec::new();
        for b in &fa.boxes {
            if b.class.is_headgear() {
                stats.headgear_total += 1;
                if b.rect.area() < min_box_area {
                    stats.small_dropped += 1;
                    continue;
                }
                if let Some(prediction) = rider_missing(
                    model,
                    &b.rect,
                    &riders,
                    occluded_iou,
                    ann.frame_w,
                    ann.frame_h,
                ) {
                    stats.missing_before += 1;
                    match prediction {
                        Ok(rect) => {
                            stats.filled += 1;
                            fills.push(LabeledBox {
                                class: ClassTag::Rider,
                                rect,
                                instance_id: b.instance_id,
                            });
                        }
                        Err(_) => stats.invalid_predictions += 1,
                    }
                }
            }
            boxes.push(b.clone());
        }
        boxes.extend(fills);
        frames.push(FrameAnnotation {
            frame: fa.frame,
            boxes,
            trapezia: fa.trapezia.clone(),
        });
    }
    Ok((
        AnnotationSet {
            frame_w: ann.frame_w,
            frame_h: ann.frame_h,
            frames,
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn worked_trapezium() -> Trapezium {
        Trapezium::new([
            Point::new(0.0, 0.0),
            Point::new(3.0, -1.0),
            Point::new(3.0, 3.0),
            Point::new(0.0, 2.0),
        ])
        .unwrap()
    }

    #[test]
    fn pack_fills_slots_in_intersection_order() {
        let moto = Rect::new(100.0, 100.0, 200.0, 200.0).unwrap();
        let r1 = Rect::new(110.0, 40.0, 160.0, 190.0).unwrap();
        let r2 = Rect::new(150.0, 60.0, 190.0, 150.0).unwrap();
        let packed = pack_input(&moto, &[r2, r1], 1000.0, 1000.0);
        // r1 has the larger intersection and takes the first slot.
        assert_eq!(&packed[0..4], &[0.1, 0.1, 0.2, 0.2]);
        assert_eq!(&packed[4..8], &[0.11, 0.04, 0.16, 0.19]);
        assert_eq!(&packed[8..12], &[0.15, 0.06, 0.19, 0.15]);
        assert!(packed[12..].iter().all(|&v| v == 0.0));

        // Permutation invariance.
        assert_eq!(packed, pack_input(&moto, &[r1, r2], 1000.0, 1000.0));
    }

    #[test]
    fn pack_zero_riders() {
        let moto = Rect::new(0.0, 0.0, 500.0, 250.0).unwrap();
        let packed = pack_input(&moto, &[], 1000.0, 1000.0);
        assert_eq!(&packed[0..4], &[0.0, 0.0, 0.5, 0.25]);
        assert!(packed[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pack_drops_smallest_of_six_riders() {
        let moto = Rect::new(0.0, 0.0, 100.0, 100.0).unwrap();
        // Intersection areas 10, 20, ..., 60 square pixels.
        let riders: Vec<Rect> = (1..=6)
            .map(|i| Rect::new(0.0, 0.0, 10.0 * i as f64, 1.0).unwrap())
            .collect();
        let packed = pack_input(&moto, &riders, 100.0, 100.0);
        // The rider with the smallest intersection (width 10) is gone.
        let widths: Vec<f64> = (0..MAX_RIDER_SLOTS)
            .map(|s| (packed[4 + s * 4 + 2] - packed[4 + s * 4]) * 100.0)
            .collect();
        assert_eq!(widths, vec![60.0, 50.0, 40.0, 30.0, 20.0]);
    }

    #[test]
    fn fit_params_identity_and_worked_example() {
        let moto = Rect::new(10.0, 20.0, 110.0, 80.0).unwrap();
        let p = fit_params(&Trapezium::from_rect(&moto), &moto).unwrap();
        assert!((p.w - 100.0).abs() < 1e-12);
        assert!((p.x - 60.0).abs() < 1e-12 && (p.y - 50.0).abs() < 1e-12);
        for d in [p.d_tl, p.d_tr, p.d_br, p.d_bl] {
            assert!(d.abs() < 1e-12);
        }

        let moto = Rect::new(0.0, 0.0, 3.0, 2.0).unwrap();
        let p = fit_params(&worked_trapezium(), &moto).unwrap();
        assert!((p.x - 5.0 / 3.0).abs() < 1e-12);
        assert!((p.y - 1.0).abs() < 1e-12);
        assert!((p.w - 3.0).abs() < 1e-12);
        assert!((p.d_tl - 0.0).abs() < 1e-12);
        assert!((p.d_tr + 1.0).abs() < 1e-12);
        assert!((p.d_br - 1.0).abs() < 1e-12);
        assert!((p.d_bl - 0.0).abs() < 1e-12);
    }

    fn random_trapezium_and_moto(rng: &mut StdRng) -> (Trapezium, Rect) {
        let left = rng.random_range(0.0..500.0);
        let w = rng.random_range(20.0..300.0);
        let tl = rng.random_range(0.0..400.0);
        let tr = rng.random_range(0.0..400.0);
        let bl = tl + rng.random_range(5.0..250.0);
        let br = tr + rng.random_range(5.0..250.0);
        let t = Trapezium::new([
            Point::new(left, tl),
            Point::new(left + w, tr),
            Point::new(left + w, br),
            Point::new(left, bl),
        ])
        .unwrap();
        let moto = Rect::new(
            left + rng.random_range(-20.0..20.0),
            tl.max(tr) + rng.random_range(0.0..50.0),
            left + w + rng.random_range(-20.0..20.0),
            bl.min(br) + rng.random_range(0.0..50.0),
        );
        let moto = moto.unwrap_or_else(|_| Rect::new(left, tl, left + w, bl).unwrap());
        (t, moto)
    }

    #[test]
    fn fit_and_reconstruct_are_inverses() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..500 {
            let (t, moto) = random_trapezium_and_moto(&mut rng);
            let p = fit_params(&t, &moto).unwrap();
            let (back, residual) = reconstruct(&p, &moto).unwrap();
            for (a, b) in t.vertices().iter().zip(back.vertices()) {
                assert!((a.x - b.x).abs() < 1e-9, "{a:?} vs {b:?}");
                assert!((a.y - b.y).abs() < 1e-9);
            }
            assert!(residual < 1e-9);

            // And the other direction: params -> trapezium -> params.
            let p2 = fit_params(&back, &moto).unwrap();
            for (a, b) in p.to_array().iter().zip(p2.to_array()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reconstruct_zero_offsets_yields_the_moto_rect() {
        let moto = Rect::new(50.0, 60.0, 150.0, 160.0).unwrap();
        let p = TrapeziumParams {
            x: 100.0,
            y: 110.0,
            w: 100.0,
            d_tl: 0.0,
            d_tr: 0.0,
            d_br: 0.0,
            d_bl: 0.0,
        };
        let (t, residual) = reconstruct(&p, &moto).unwrap();
        let v = t.vertices();
        assert!((v[0].x - 50.0).abs() < 1e-9 && (v[0].y - 60.0).abs() < 1e-9);
        assert!((v[2].x - 150.0).abs() < 1e-9 && (v[2].y - 160.0).abs() < 1e-9);
        assert!(residual < 1e-9);
    }

    #[test]
    fn reconstruct_rejects_invalid_predictions() {
        let moto = Rect::new(0.0, 0.0, 100.0, 100.0).unwrap();
        let base = TrapeziumParams {
            x: 50.0,
            y: 50.0,
            w: 100.0,
            d_tl: 0.0,
            d_tr: 0.0,
            d_br: 0.0,
            d_bl: 0.0,
        };
        // Bottom-left above top-left: crossed sides.
        let crossed = TrapeziumParams {
            d_tl: 0.0,
            d_bl: -150.0,
            ..base
        };
        assert!(matches!(
            reconstruct(&crossed, &moto),
            Err(RegressorError::InvalidPrediction(_))
        ));
        let flat = TrapeziumParams { w: 0.0, ..base };
        assert!(matches!(
            reconstruct(&flat, &moto),
            Err(RegressorError::InvalidPrediction(_))
        ));
    }

    #[test]
    fn zero_model_prediction_is_flagged_invalid() {
        let mut model = DenseNet::init(&TRAPEZIUM_TOPOLOGY, Activation::Tanh, 0).unwrap();
        for w in &mut model.weights {
            w.fill(0.0);
        }
        let moto = Rect::new(100.0, 100.0, 300.0, 260.0).unwrap();
        let err = predict_trapezium(&model, &moto, &[], 1000.0, 1000.0).unwrap_err();
        assert!(matches!(err, RegressorError::InvalidPrediction(_)));
    }

    #[test]
    fn trapezium_regressor_memorizes_one_instance() {
        let moto = Rect::new(700.0, 600.0, 920.0, 790.0).unwrap();
        let riders = vec![
            Rect::new(740.0, 330.0, 850.0, 760.0).unwrap(),
            Rect::new(790.0, 290.0, 890.0, 700.0).unwrap(),
        ];
        let mut boxes = vec![moto];
        boxes.extend(riders.iter().copied());
        let gt = crate::synth::min_area_trapezium(&boxes).unwrap();
        let (fw, fh) = (1920.0, 1080.0);
        let input = pack_input(&moto, &riders, fw, fh).to_vec();
        let target = fit_params(&gt, &moto).unwrap().normalized(fw, fh).to_vec();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            epochs: 3000,
            batch_size: 1,
            seed: 3,
            decay_every: 1500,
            lr_decay_factor: 10.0,
        };
        let (model, history) = train_trapezium(&[(input, target)], &cfg).unwrap();
        assert!(*history.last().unwrap() < 1e-8);
        let (pred, _) = predict_trapezium(&model, &moto, &riders, fw, fh).unwrap();
        for (p, g) in pred.vertices().iter().zip(gt.vertices()) {
            let err = ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt();
            assert!(err < 1.0, "corner error {err} px");
        }
    }

    fn synthetic_amodal_pairs(n: usize, seed: u64) -> Vec<(Rect, Rect)> {
        // rider = (hx1 - 1.5*hw, hy1, hx2 + 1.5*hw, hy1 + 5*hh) with 5% noise.
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let hw = rng.random_range(25.0..45.0);
                let hh = rng.random_range(45.0..75.0);
                let hx1 = rng.random_range(100.0..1700.0);
                let hy1 = rng.random_range(100.0..600.0);
                let h = Rect::new(hx1, hy1, hx1 + hw, hy1 + hh).unwrap();
                let noise = |rng: &mut StdRng, scale: f64| rng.random_range(-0.05..0.05) * scale;
                let r = Rect::new(
                    hx1 - 1.5 * hw + noise(&mut rng, hw),
                    hy1 + noise(&mut rng, hh),
                    hx1 + hw + 1.5 * hw + noise(&mut rng, hw),
                    hy1 + 5.0 * hh + noise(&mut rng, hh),
                )
                .unwrap();
                (h, r)
            })
            .collect()
    }

    #[test]
    fn amodal_learns_the_synthetic_rule() {
        let train = synthetic_amodal_pairs(500, 51);
        let held = synthetic_amodal_pairs(150, 52);
        let cfg = TrainConfig {
            learning_rate: 0.3,
            epochs: 20000,
            batch_size: 32,
            seed: 1,
            decay_every: 15000,
            lr_decay_factor: 10.0,
        };
        let (model, _) = train_amodal(&train, 1920.0, 1080.0, &cfg).unwrap();
        let mean_iou: f64 = held
            .iter()
            .map(|(h, r)| {
                let pred = predict_amodal(&model, h, 1920.0, 1080.0).unwrap();
                rect_iou(&pred, r)
            })
            .sum::<f64>()
            / held.len() as f64;
        assert!(mean_iou > 0.8, "held-out mean IoU {mean_iou}");

        // Determinism: identical checkpoints from identical runs.
        let (again, _) = train_amodal(&train, 1920.0, 1080.0, &cfg).unwrap();
        assert_eq!(model.to_bytes(), again.to_bytes());
    }

    #[test]
    fn amodal_memorizes_a_single_pair() {
        let pair = synthetic_amodal_pairs(1, 9);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 4000,
            batch_size: 1,
            seed: 2,
            decay_every: 0,
            lr_decay_factor: 10.0,
        };
        let (_, history) = train_amodal(&pair, 1920.0, 1080.0, &cfg).unwrap();
        assert!(*history.last().unwrap() < 1e-6);
    }

    fn annotation_frame(boxes: Vec<LabeledBox>) -> AnnotationSet {
        AnnotationSet {
            frame_w: 1920.0,
            frame_h: 1080.0,
            frames: vec![FrameAnnotation {
                frame: 0,
                boxes,
                trapezia: Vec::new(),
            }],
        }
    }

    fn lb(class: ClassTag, rect: Rect) -> LabeledBox {
        LabeledBox {
            class,
            rect,
            instance_id: None,
        }
    }

    /// A quick amodal model good enough for fill logic tests (covered
    /// riders clear the occlusion threshold, missing ones do not).
    fn quick_amodal_model() -> DenseNet {
        let pairs = synthetic_amodal_pairs(400, 62);
        let cfg = TrainConfig {
            learning_rate: 0.3,
            epochs: 3000,
            batch_size: 32,
            seed: 4,
            decay_every: 0,
            lr_decay_factor: 10.0,
        };
        train_amodal(&pairs, 1920.0, 1080.0, &cfg).unwrap().0
    }

    #[test]
    fn fill_leaves_covered_riders_alone_and_drops_small_headgear() {
        let model = quick_amodal_model();
        let (helmet, rider) = synthetic_amodal_pairs(1, 77)[0];
        let ann = annotation_frame(vec![
            lb(ClassTag::Rider, rider),
            lb(ClassTag::Helmet, helmet),
        ]);
        let (filled, stats) = amodal_fill(&ann, &model, 0.1, 900.0).unwrap();
        assert_eq!(filled.frames[0].boxes.len(), 2, "covered rider: no fill");
        assert_eq!(stats.filled, 0);

        let tiny = Rect::new(500.0, 500.0, 510.0, 510.0).unwrap();
        let ann = annotation_frame(vec![lb(ClassTag::NoHelmet, tiny)]);
        let (filled, stats) = amodal_fill(&ann, &model, 0.1, 900.0).unwrap();
        assert_eq!(stats.small_dropped, 1);
        assert_eq!(stats.filled, 0);
        assert!(filled.frames[0].boxes.is_empty());
    }

    #[test]
    fn fill_restores_a_deleted_rider() {
        let model = quick_amodal_model();
        let (helmet, rider) = synthetic_amodal_pairs(1, 78)[0];
        let ann = annotation_frame(vec![lb(ClassTag::Helmet, helmet)]);
        let (filled, stats) = amodal_fill(&ann, &model, 0.1, 900.0).unwrap();
        assert_eq!(stats.missing_before, 1);
        assert_eq!(stats.filled, 1);
        let inserted = filled.frames[0]
            .boxes
            .iter()
            .find(|b| b.class == ClassTag::Rider)
            .unwrap();
        assert!(rect_iou(&inserted.rect, &rider) > 0.6);
    }

    #[test]
    fn fill_never_removes_riders_and_adds_at_most_one_per_headgear() {
        let mut rng = StdRng::seed_from_u64(61);
        let model = quick_amodal_model();
        for _ in 0..20 {
            let mut boxes = Vec::new();
            let mut headgear = 0;
            for (h, r) in synthetic_amodal_pairs(rng.random_range(1..6), rng.random::<u64>()) {
                headgear += 1;
                boxes.push(lb(h_class(&mut rng), h));
                if rng.random::<bool>() {
                    boxes.push(lb(ClassTag::Rider, r));
                }
            }
            let riders_before = boxes.iter().filter(|b| b.class == ClassTag::Rider).count();
            let ann = annotation_frame(boxes);
            let (filled, stats) = amodal_fill(&ann, &model, 0.1, 900.0).unwrap();
            let riders_after = filled.frames[0]
                .boxes
                .iter()
                .filter(|b| b.class == ClassTag::Rider)
                .count();
            assert!(riders_after >= riders_before);
            assert!(riders_after - riders_before <= headgear);
            assert_eq!(stats.filled + stats.invalid_predictions, stats.missing_before);
        }
    }

    fn h_class(rng: &mut StdRng) -> ClassTag {
        if rng.random::<bool>() {
            ClassTag::Helmet
        } else {
            ClassTag::NoHelmet
        }
    }

    #[test]
    fn trainset_from_synthetic_scene_matches_oracle_targets() {
        let cfg = crate::synth::SceneConfig {
            n_instances: 2,
            n_frames: 1,
            ..crate::synth::SceneConfig::default()
        };
        let scene = crate::synth::generate(&cfg).unwrap();
        let ann = AnnotationSet::from_records(&scene.gt).unwrap();
        let (samples, skipped) = build_trapezium_trainset(&ann);
        assert_eq!(samples.len(), 2);
        assert_eq!(skipped, 0);
        let grouped = crate::synth::group_gt_boxes(&scene.gt[0]);
        for (idx, (_, target)) in samples.iter().enumerate() {
            let boxes = &grouped[&(idx as u64)];
            let mut all = vec![boxes.moto.unwrap()];
            all.extend(boxes.riders.iter().copied());
            let oracle = crate::synth::min_area_trapezium(&all).unwrap();
            let expect = fit_params(&oracle, &boxes.moto.unwrap())
                .unwrap()
                .normalized(ann.frame_w, ann.frame_h);
            for (a, b) in target.iter().zip(expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trainset_counts_skips() {
        // A trapezium label with no motorcycle box must be skipped.
        let trap = worked_trapezium();
        let ann = AnnotationSet {
            frame_w: 100.0,
            frame_h: 100.0,
            frames: vec![FrameAnnotation {
                frame: 0,
                boxes: vec![lb(ClassTag::Rider, Rect::new(0.0, 0.0, 10.0, 10.0).unwrap())],
                trapezia: vec![(7, trap)],
            }],
        };
        let (samples, skipped) = build_trapezium_trainset(&ann);
        assert!(samples.is_empty());
        // The rider box has no instance id, so only the trapezium's id counts.
        assert_eq!(skipped, 1);
    }
}
