//! Seeded synthetic scene generator with exact ground truth, plus the
//! minimum-area trapezium oracle used to label driving instances.
//!
//! Scenes are desk-scale stand-ins for real dashcam footage: each driving
//! instance is a motorcycle box with 1–5 rider boxes stacked above it
//! (leaning sideways as real pillion riders do), headgear boxes sitting on
//! each rider, a fixed per-rider helmet/no-helmet attribute, and a linear
//! trajectory. The ground-truth stream carries instance groupings, oracle
//! trapezia and violation labels; the detection stream is the same scene
//! with seeded jitter, deletions and spurious boxes.

use crate::geometry::{GeometryError, Point, Rect, Trapezium};
use crate::records::{ClassTag, Detection, FrameRecord, GtInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no boxes given")]
    EmptyInput,
    #[error("scene does not fit the frame: {0}")]
    DoesNotFit(String),
    #[error("bad scene config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Minimum-area trapezium with vertical parallel sides circumscribing all
/// boxes.
///
/// The sides sit at the min x1 / max x2 of the boxes. The top edge is the
/// line minimizing enclosed area subject to lying above (smaller y than)
/// every box top corner; the bottom edge is symmetric below the bottom
/// corners. Each 2-variable linear program is solved exactly by enumerating
/// active-constraint pairs, with the horizontal support line as fallback
/// (and as the kept solution on objective ties).
pub fn min_area_trapezium(boxes: &[Rect]) -> Result<Trapezium, SynthError> {
    if boxes.is_empty() {
        return Err(SynthError::EmptyInput);
    }
    let left = boxes.iter().map(|b| b.x1).fold(f64::INFINITY, f64::min);
    let right = boxes.iter().map(|b| b.x2).fold(f64::NEG_INFINITY, f64::max);
    let top_corners: Vec<(f64, f64)> = boxes
        .iter()
        .flat_map(|b| [(b.x1, b.y1), (b.x2, b.y1)])
        .collect();
    let bottom_corners: Vec<(f64, f64)> = boxes
        .iter()
        .flat_map(|b| [(b.x1, b.y2), (b.x2, b.y2)])
        .collect();
    let (mt, ct) = support_line(&top_corners, left, right, Side::Above);
    let (mb, cb) = support_line(&bottom_corners, left, right, Side::Below);
    Ok(Trapezium::new([
        Point::new(left, mt * left + ct),
        Point::new(right, mt * right + ct),
        Point::new(right, mb * right + cb),
        Point::new(left, mb * left + cb),
    ])?)
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    /// Line lies above the corners (smaller y); area is minimized by
    /// maximizing the integral of the line over `[left, right]`.
    Above,
    /// Line lies below the corners; minimize the integral.
    Below,
}

const FEASIBLE_SLACK: f64 = 1e-10;

fn feasible(m: f64, c: f64, corners: &[(f64, f64)], side: Side) -> bool {
    corners.iter().all(|&(x, y)| match side {
        Side::Above => m * x + c <= y + FEASIBLE_SLACK,
        Side::Below => m * x + c >= y - FEASIBLE_SLACK,
    })
}

/// Solves `optimize m*s1 + c*s0` over support lines of `corners`, where
/// `s1, s0` are the integral weights over `[left, right]`.
fn support_line(corners: &[(f64, f64)], left: f64, right: f64, side: Side) -> (f64, f64) {
    let s1 = (right * right - left * left) / 2.0;
    let s0 = right - left;
    let objective = |m: f64, c: f64| m * s1 + c * s0;
    let better = |cand: f64, best: f64| match side {
        // Require a strict improvement so ties keep the horizontal fallback.
        Side::Above => cand > best + 1e-9 * (1.0 + best.abs()),
        Side::Below => cand < best - 1e-9 * (1.0 + best.abs()),
    };

    let horizontal = match side {
        Side::Above => corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
        Side::Below => corners
            .iter()
            .map(|c| c.1)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let mut best = (0.0, horizontal);
    let mut best_obj = objective(0.0, horizontal);

    for i in 0..corners.len() {
        for j in (i + 1)..corners.len() {
            let (xi, yi) = corners[i];
            let (xj, yj) = corners[j];
            if (xj - xi).abs() < 1e-9 {
                continue;
            }
            let m = (yj - yi) / (xj - xi);
            let c = yi - m * xi;
            if !feasible(m, c, corners, side) {
                continue;
            }
            let obj = objective(m, c);
            if better(obj, best_obj) {
                best = (m, c);
                best_obj = obj;
            }
        }
    }
    best
}

/// Scene parameters. Probabilities are per rider (occlusion, no-helmet) or
/// per detection (false negatives) or per ground-truth box (false
/// positives); `jitter_std` is the per-coordinate Gaussian noise in pixels.
/// `spacing` and `lean` control crowding: small spacing packs instances
/// against their neighbors, `lean` tilts rider stacks sideways.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub frame_w: u32,
    pub frame_h: u32,
    pub n_instances: usize,
    /// Weights for rider counts 1..=5.
    pub rider_count_weights: [f64; 5],
    pub no_helmet_prob: f64,
    /// Probability a rider box is deleted from the detections (its headgear
    /// persists).
    pub occlusion_prob: f64,
    pub jitter_std: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    /// Per-instance speed range, pixels per frame.
    pub velocity_range: (f64, f64),
    pub n_frames: usize,
    pub seed: u64,
    /// Sideways offset of rider stacks, as a fraction of motorcycle width.
    pub lean: f64,
    /// Center-to-center distance between adjacent instances, pixels.
    pub spacing: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            frame_w: 1920,
            frame_h: 1080,
            n_instances: 4,
            rider_count_weights: [0.25, 0.40, 0.25, 0.07, 0.03],
            no_helmet_prob: 0.3,
            occlusion_prob: 0.0,
            jitter_std: 0.0,
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
            velocity_range: (0.5, 3.0),
            n_frames: 30,
            seed: 7,
            lean: 0.3,
            spacing: 420.0,
        }
    }
}

impl SceneConfig {
    /// Well-separated instances: association is unambiguous in any mode.
    pub fn separated(n_instances: usize, seed: u64) -> Self {
        Self {
            n_instances,
            seed,
            ..Self::default()
        }
    }

    /// Instances packed against their neighbors with strong rider lean, so
    /// rider boxes overlap adjacent motorcycles.
    pub fn crowded(n_instances: usize, seed: u64) -> Self {
        Self {
            n_instances,
            seed,
            spacing: 210.0,
            lean: 0.34,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub gt: Vec<FrameRecord>,
    pub detections: Vec<FrameRecord>,
}

struct RiderAttr {
    dx: f64,
    bottom_off: f64,
    w: f64,
    h: f64,
    headgear_noise: [f64; 4],
    no_helmet: bool,
}

struct InstanceAttr {
    cx0: f64,
    bottom0: f64,
    moto_w: f64,
    moto_h: f64,
    vx: f64,
    vy: f64,
    riders: Vec<RiderAttr>,
}

impl InstanceAttr {
    fn moto_at(&self, t: f64) -> Rect {
        let cx = self.cx0 + self.vx * t;
        let bottom = self.bottom0 + self.vy * t;
        Rect {
            x1: cx - self.moto_w / 2.0,
            y1: bottom - self.moto_h,
            x2: cx + self.moto_w / 2.0,
            y2: bottom,
        }
    }

    fn rider_at(&self, j: usize, t: f64) -> Rect {
        let r = &self.riders[j];
        let cx = self.cx0 + self.vx * t + r.dx;
        let bottom = self.bottom0 + self.vy * t + r.bottom_off;
        Rect {
            x1: cx - r.w / 2.0,
            y1: bottom - r.h,
            x2: cx + r.w / 2.0,
            y2: bottom,
        }
    }

    /// Headgear sits centered on the rider top at fixed fractions of the
    /// rider box (30% of its width, 24% of its height), plus the rider's
    /// static placement noise. The fractions keep headgear-rider IOU well
    /// above the assignment gate.
    fn headgear_at(&self, j: usize, t: f64) -> Rect {
        let r = &self.riders[j];
        let rider = self.rider_at(j, t);
        let hw = r.w * 0.30;
        let hh = r.h * 0.24;
        let cx = (rider.x1 + rider.x2) / 2.0;
        Rect {
            x1: cx - hw / 2.0 + r.headgear_noise[0] * r.w,
            y1: rider.y1 + r.headgear_noise[1] * r.h,
            x2: cx + hw / 2.0 + r.headgear_noise[2] * r.w,
            y2: rider.y1 + hh + r.headgear_noise[3] * r.h,
        }
    }
}

fn sample_rider_count(weights: &[f64; 5], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut draw = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return i + 1;
        }
    }
    5
}

/// Generates the ground-truth and detection streams for one scene. Fully
/// seeded: the same config yields byte-identical streams.
pub fn generate(cfg: &SceneConfig) -> Result<Scene, SynthError> {
    for (name, p) in [
        ("no_helmet_prob", cfg.no_helmet_prob),
        ("occlusion_prob", cfg.occlusion_prob),
        ("false_positive_rate", cfg.false_positive_rate),
        ("false_negative_rate", cfg.false_negative_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SynthError::BadConfig(format!("{name} must be in [0,1]")));
        }
    }
    if cfg.frame_w == 0 || cfg.frame_h == 0 || cfg.n_instances == 0 || cfg.n_frames == 0 {
        return Err(SynthError::BadConfig(
            "frame dims, n_instances and n_frames must be positive".into(),
        ));
    }
    if cfg.rider_count_weights.iter().sum::<f64>() <= 0.0 {
        return Err(SynthError::BadConfig(
            "rider count weights must not all be zero".into(),
        ));
    }
    if cfg.jitter_std < 0.0 || cfg.velocity_range.0 > cfg.velocity_range.1 {
        return Err(SynthError::BadConfig("bad noise or velocity range".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Static per-instance attributes; motion translates them rigidly.
    // Positions along the row are filled in afterwards, once the widest
    // instance extent is known.
    let mut instances = Vec::with_capacity(cfg.n_instances);
    for _ in 0..cfg.n_instances {
        let moto_w = rng.random_range(190.0..240.0);
        let moto_h = rng.random_range(170.0..210.0);
        let cx0 = 0.0;
        let bottom0 = cfg.frame_h as f64 * 0.72 + rng.random_range(-15.0..15.0);
        let count = sample_rider_count(&cfg.rider_count_weights, &mut rng);
        // Rider stacks lean the same way across the scene, as a forward
        // camera's perspective tilts them.
        let lean_dir = 1.0;
        let speed = rng.random_range(cfg.velocity_range.0..=cfg.velocity_range.1);
        let vx = speed * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let vy = speed * rng.random_range(-0.25..0.25);
        // Diminishing sideways offsets per stack level.
        let lean_profile = [0.0, 0.5, 1.0, 1.4, 1.7];
        let mut riders = Vec::with_capacity(count);
        for j in 0..count {
            // Boxes grow with stack level, so a headgear box contained in
            // several stacked riders always has its best IOU with its own
            // (smallest) rider.
            let level = 1.0 + 0.12 * j as f64;
            let w = moto_w * rng.random_range(0.46..0.56) * level;
            let h = rng.random_range(270.0..320.0) * level;
            let mut headgear_noise = [0.0; 4];
            for slot in &mut headgear_noise {
                *slot = normal.sample(&mut rng) * 0.015;
            }
            riders.push(RiderAttr {
                dx: lean_dir * cfg.lean * moto_w * lean_profile[j],
                bottom_off: -moto_h * (0.08 + 0.18 * j as f64),
                w,
                h,
                headgear_noise,
                no_helmet: rng.random::<f64>() < cfg.no_helmet_prob,
            });
        }
        instances.push(InstanceAttr {
            cx0,
            bottom0,
            moto_w,
            moto_h,
            vx,
            vy,
            riders,
        });
    }

    // Place the row: the margin covers the widest instance extent plus its
    // drift over the video.
    let mut margin = cfg.spacing;
    for inst in &instances {
        let mut extent = inst.moto_w / 2.0;
        for j in 0..inst.riders.len() {
            let r = inst.rider_at(j, 0.0);
            extent = extent.max(r.x1.abs()).max(r.x2.abs());
        }
        let drift = inst.vx.abs() * (cfg.n_frames - 1) as f64;
        margin = margin.max(extent + drift + 5.0);
    }
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.cx0 = margin + i as f64 * cfg.spacing;
    }

    // The scene must stay inside the frame for its whole duration.
    let frame = Rect::new(0.0, 0.0, cfg.frame_w as f64, cfg.frame_h as f64).expect("frame rect");
    for (i, inst) in instances.iter().enumerate() {
        for t in [0.0, (cfg.n_frames - 1) as f64] {
            let mut boxes = vec![inst.moto_at(t)];
            for j in 0..inst.riders.len() {
                boxes.push(inst.rider_at(j, t));
                boxes.push(inst.headgear_at(j, t));
            }
            for b in &boxes {
                if b.x1 < 1.0 || b.y1 < 1.0 || b.x2 > frame.x2 - 1.0 || b.y2 > frame.y2 - 1.0 {
                    return Err(SynthError::DoesNotFit(format!(
                        "instance {i} leaves the frame at t={t}"
                    )));
                }
            }
        }
    }

    let mut gt_frames = Vec::with_capacity(cfg.n_frames);
    let mut det_frames = Vec::with_capacity(cfg.n_frames);
    for frame_idx in 0..cfg.n_frames {
        let t = frame_idx as f64;
        let mut gt = FrameRecord::new(frame_idx as u64, cfg.frame_w, cfg.frame_h);
        gt.source = Some("synth".into());
        for (i, inst) in instances.iter().enumerate() {
            let id = i as u64;
            let moto = inst.moto_at(t);
            let mut det = Detection::new(ClassTag::Motorcycle, &moto, 1.0);
            det.instance_id = Some(id);
            gt.detections.push(det);
            let mut rider_boxes = Vec::new();
            for j in 0..inst.riders.len() {
                let rider = inst.rider_at(j, t);
                let mut det = Detection::new(ClassTag::Rider, &rider, 1.0);
                det.instance_id = Some(id);
                gt.detections.push(det);
                rider_boxes.push(rider);
            }
            for j in 0..inst.riders.len() {
                let headgear = inst.headgear_at(j, t);
                let cls = if inst.riders[j].no_helmet {
                    ClassTag::NoHelmet
                } else {
                    ClassTag::Helmet
                };
                let mut det = Detection::new(cls, &headgear, 1.0);
                det.instance_id = Some(id);
                gt.detections.push(det);
            }
            let mut all = vec![moto];
            all.extend(rider_boxes.iter().copied());
            let trapezium = min_area_trapezium(&all)?;
            let no_helmet_riders = inst.riders.iter().filter(|r| r.no_helmet).count();
            gt.instances.push(GtInstance {
                id,
                trapezium: trapezium.to_flat(),
                riders: inst.riders.len(),
                triple: inst.riders.len() >= 3,
                no_helmet_riders,
            });
        }

        // Detection stream: seeded deletions, jitter and spurious boxes.
        let mut det_rec = gt.stripped();
        let mut noisy = Vec::with_capacity(det_rec.detections.len());
        for d in det_rec.detections {
            let mut dropped = false;
            if d.cls == ClassTag::Rider && rng.random::<f64>() < cfg.occlusion_prob {
                dropped = true;
            }
            if rng.random::<f64>() < cfg.false_negative_rate {
                dropped = true;
            }
            if !dropped {
                let mut bbox = d.bbox;
                if cfg.jitter_std > 0.0 {
                    for v in &mut bbox {
                        let dv = normal.sample(&mut rng) * cfg.jitter_std;
                        *v += dv.clamp(-3.0 * cfg.jitter_std, 3.0 * cfg.jitter_std);
                    }
                }
                if let Ok(rect) = Rect::new(bbox[0], bbox[1], bbox[2], bbox[3]) {
                    if let Some(clipped) = rect.clip_to(&frame) {
                        noisy.push(Detection::new(d.cls, &clipped, 1.0));
                    }
                }
            }
            if cfg.false_positive_rate > 0.0 && rng.random::<f64>() < cfg.false_positive_rate {
                let w = (d.bbox[2] - d.bbox[0]) * rng.random_range(0.7..1.3);
                let h = (d.bbox[3] - d.bbox[1]) * rng.random_range(0.7..1.3);
                let cx = (d.bbox[0] + d.bbox[2]) / 2.0
                    + rng.random_range(0.5..1.5)
                        * (d.bbox[2] - d.bbox[0])
                        * if rng.random::<bool>() { 1.0 } else { -1.0 };
                let cy = (d.bbox[1] + d.bbox[3]) / 2.0
                    + rng.random_range(0.5..1.5)
                        * (d.bbox[3] - d.bbox[1])
                        * if rng.random::<bool>() { 1.0 } else { -1.0 };
                let score = rng.random_range(0.3..0.9);
                if let Ok(rect) = Rect::from_center(cx, cy, w, h) {
                    if let Some(clipped) = rect.clip_to(&frame) {
                        noisy.push(Detection::new(d.cls, &clipped, score));
                    }
                }
            }
        }
        det_rec.detections = noisy;

        gt_frames.push(gt);
        det_frames.push(det_rec);
    }

    Ok(Scene {
        gt: gt_frames,
        detections: det_frames,
    })
}

/// Per-instance ground-truth boxes in one frame: motorcycle, riders, and
/// headgear with its no-helmet flag.
#[derive(Debug, Default, Clone)]
pub struct GtInstanceBoxes {
    pub moto: Option<Rect>,
    pub riders: Vec<Rect>,
    pub headgear: Vec<(Rect, bool)>,
}

pub fn group_gt_boxes(rec: &FrameRecord) -> BTreeMap<u64, GtInstanceBoxes> {
    let mut map: BTreeMap<u64, GtInstanceBoxes> = BTreeMap::new();
    for d in &rec.detections {
        let Some(id) = d.instance_id else { continue };
        let Some(rect) = d.rect() else { continue };
        let entry = map.entry(id).or_default();
        match d.cls {
            ClassTag::Motorcycle => entry.moto = Some(rect),
            ClassTag::Rider => entry.riders.push(rect),
            ClassTag::Helmet => entry.headgear.push((rect, false)),
            ClassTag::NoHelmet => entry.headgear.push((rect, true)),
        }
    }
    map
}

/// Video-level unique violation counts implied by the ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GtCounts {
    pub triple_instances: usize,
    pub no_helmet_riders: usize,
    pub helmet_violation_instances: usize,
}

pub fn gt_counts(gt: &[FrameRecord]) -> GtCounts {
    let mut per_instance: BTreeMap<u64, (bool, usize)> = BTreeMap::new();
    for rec in gt {
        for inst in &rec.instances {
            let entry = per_instance.entry(inst.id).or_insert((false, 0));
            entry.0 |= inst.triple;
            entry.1 = entry.1.max(inst.no_helmet_riders);
        }
    }
    GtCounts {
        triple_instances: per_instance.values().filter(|v| v.0).count(),
        no_helmet_riders: per_instance.values().map(|v| v.1).sum(),
        helmet_violation_instances: per_instance.values().filter(|v| v.1 > 0).count(),
    }
}
