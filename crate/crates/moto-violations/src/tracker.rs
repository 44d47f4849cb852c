//! Motion-only multi-object tracking: constant-velocity Kalman prediction,
//! IOU-gated optimal assignment, and a tentative/confirmed/deleted
//! lifecycle.
//!
//! Instance boxes and headgear boxes are tracked jointly but matched within
//! their own class pools. A trapezium is tracked via its motorcycle
//! rectangle: the Kalman state follows the motorcycle box, and the latest
//! trapezium rides along as the track payload. Matching is pure motion +
//! IOU (no appearance embeddings); the observation structs keep room for an
//! optional feature vector should one ever be wired in.

use crate::geometry::{rect_iou, Rect, Trapezium};
use nalgebra::{SMatrix, SVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("non-monotone frame id: {frame} after {last}")]
    NonMonotoneFrame { last: u64, frame: u64 },
}

// ---------------------------------------------------------------------------
// Optimal assignment
// ---------------------------------------------------------------------------

/// Cost value marking a disallowed pairing; kept well below f64 limits so
/// potentials arithmetic stays finite.
pub const GATED_COST: f64 = 1.0e6;

#[derive(Debug, Clone, PartialEq)]
pub struct HungarianResult {
    /// Column matched to each row; `None` for rows left out when there are
    /// more rows than columns.
    pub row_to_col: Vec<Option<usize>>,
    pub total_cost: f64,
}

/// Optimal one-to-one assignment minimizing total cost. All `min(n, m)`
/// possible pairs are assigned; disallowed pairs should carry a large
/// sentinel (e.g. [`GATED_COST`]) and be filtered by the caller afterwards.
pub fn hungarian(cost: &Array2<f64>) -> HungarianResult {
    let (n, m) = (cost.nrows(), cost.ncols());
    if n == 0 || m == 0 {
        return HungarianResult {
            row_to_col: vec![None; n],
            total_cost: 0.0,
        };
    }
    let row_to_col = if n <= m {
        solve_rows_le_cols(cost)
    } else {
        let t = cost.t().to_owned();
        let col_to_row = solve_rows_le_cols(&t);
        let mut out = vec![None; n];
        for (col, row) in col_to_row.iter().enumerate() {
            if let Some(r) = row {
                out[*r] = Some(col);
            }
        }
        out
    };
    let total_cost = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[(r, c)]))
        .sum();
    HungarianResult {
        row_to_col,
        total_cost,
    }
}

/// Potentials-based shortest-augmenting-path Hungarian; requires
/// `rows <= cols` and assigns every row.
fn solve_rows_le_cols(cost: &Array2<f64>) -> Vec<Option<usize>> {
    let n = cost.nrows();
    let m = cost.ncols();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut matched = vec![0usize; m + 1]; // row (1-based) owning column j
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![None; n];
    for j in 1..=m {
        if matched[j] != 0 {
            row_to_col[matched[j] - 1] = Some(j - 1);
        }
    }
    row_to_col
}

// ---------------------------------------------------------------------------
// Kalman filter
// ---------------------------------------------------------------------------

type V8 = SVector<f64, 8>;
type M8 = SMatrix<f64, 8, 8>;
type V4 = SVector<f64, 4>;
type M4 = SMatrix<f64, 4, 4>;
type M4x8 = SMatrix<f64, 4, 8>;

/// Smallest box dimension the filter will report.
const MIN_DIM: f64 = 1.0;

/// Constant-velocity box state: `(cx, cy, w, h, vcx, vcy, vw, vh)` in
/// pixels and pixels/frame, with an 8x8 covariance kept symmetric
/// positive semi-definite (Joseph-form updates plus explicit
/// symmetrization).
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: V8,
    pub cov: M8,
}

fn transition() -> M8 {
    let mut f = M8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn process_noise() -> M8 {
    M8::from_diagonal(&V8::from_row_slice(&[
        1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 0.01,
    ]))
}

fn measurement_noise() -> M4 {
    M4::identity()
}

impl KalmanState {
    pub fn from_rect(r: &Rect) -> Self {
        let c = r.center();
        let mut mean = V8::zeros();
        mean[0] = c.x;
        mean[1] = c.y;
        mean[2] = r.width();
        mean[3] = r.height();
        let cov = M8::from_diagonal(&V8::from_row_slice(&[
            10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4, 1e4,
        ]));
        Self { mean, cov }
    }

    /// Advances one frame: constant-velocity transition plus process noise.
    pub fn predict(&mut self) {
        let f = transition();
        self.mean = f * self.mean;
        self.mean[2] = self.mean[2].max(MIN_DIM);
        self.mean[3] = self.mean[3].max(MIN_DIM);
        self.cov = f * self.cov * f.transpose() + process_noise();
        self.symmetrize();
    }

    /// Measurement update with a detected rect (Joseph form).
    pub fn update(&mut self, r: &Rect) {
        let c = r.center();
        let z = V4::from_row_slice(&[c.x, c.y, r.width(), r.height()]);
        let h = M4x8::identity();
        let s = h * self.cov * h.transpose() + measurement_noise();
        let Some(s_inv) = s.try_inverse() else {
            return; // S is PD by construction; bail out rather than corrupt
        };
        let k = self.cov * h.transpose() * s_inv;
        let innovation = z - h * self.mean;
        self.mean += k * innovation;
        self.mean[2] = self.mean[2].max(MIN_DIM);
        self.mean[3] = self.mean[3].max(MIN_DIM);
        let ikh = M8::identity() - k * h;
        self.cov = ikh * self.cov * ikh.transpose() + k * measurement_noise() * k.transpose();
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    pub fn rect(&self) -> Rect {
        let w = self.mean[2].max(MIN_DIM);
        let h = self.mean[3].max(MIN_DIM);
        Rect::from_center(self.mean[0], self.mean[1], w, h).expect("positive dims")
    }
}

// ---------------------------------------------------------------------------
// Tracks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackClass {
    Instance,
    Helmet,
    NoHelmet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Hits required to confirm a track.
    pub min_hits: u32,
    /// Consecutive misses before a track is deleted.
    pub max_age: u32,
    /// Minimum IOU for a detection-track match.
    pub iou_gate: f64,
    /// Flagged frames required before a track counts as a violation.
    pub violation_min_frames: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            min_hits: 3,
            max_age: 30,
            iou_gate: 0.3,
            violation_min_frames: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub class: TrackClass,
    pub kalman: KalmanState,
    pub lifecycle: Lifecycle,
    /// Frame at which the track was confirmed; survives deletion.
    pub confirmed_at: Option<u64>,
    pub hits: u32,
    pub misses: u32,
    /// Frames in which this instance track was triple-flagged.
    pub triple_frames: u32,
    /// Instance tracks: frames with at least one no-helmet rider.
    /// No-helmet headgear tracks: frames the box was detected.
    pub helmetless_frames: u32,
    pub triple_evidence: Vec<u64>,
    pub helmetless_evidence: Vec<u64>,
    /// Latest trapezium (instance tracks only).
    pub trapezium: Option<Trapezium>,
    pub last_rect: Rect,
    pub first_frame: u64,
    pub last_frame: u64,
    triple_rect_sum: [f64; 4],
    helmetless_rect_sum: [f64; 4],
}

impl Track {
    fn new(id: u64, class: TrackClass, rect: &Rect, frame: u64, min_hits: u32) -> Self {
        Self {
            id,
            class,
            kalman: KalmanState::from_rect(rect),
            lifecycle: if min_hits <= 1 {
                Lifecycle::Confirmed
            } else {
                Lifecycle::Tentative
            },
            confirmed_at: if min_hits <= 1 { Some(frame) } else { None },
            hits: 1,
            misses: 0,
            triple_frames: 0,
            helmetless_frames: 0,
            triple_evidence: Vec::new(),
            helmetless_evidence: Vec::new(),
            trapezium: None,
            last_rect: *rect,
            first_frame: frame,
            last_frame: frame,
            triple_rect_sum: [0.0; 4],
            helmetless_rect_sum: [0.0; 4],
        }
    }

    pub fn is_confirmed(&self) -> bool {
        self.lifecycle == Lifecycle::Confirmed
    }

    /// Whether the track reached confirmation at any point, even if it has
    /// since been deleted.
    pub fn ever_confirmed(&self) -> bool {
        self.confirmed_at.is_some()
    }

    fn record_triple(&mut self, frame: u64, rect: &Rect) {
        self.triple_frames += 1;
        self.triple_evidence.push(frame);
        for (s, v) in self
            .triple_rect_sum
            .iter_mut()
            .zip([rect.x1, rect.y1, rect.x2, rect.y2])
        {
            *s += v;
        }
    }

    fn record_helmetless(&mut self, frame: u64, rect: &Rect) {
        self.helmetless_frames += 1;
        self.helmetless_evidence.push(frame);
        for (s, v) in self
            .helmetless_rect_sum
            .iter_mut()
            .zip([rect.x1, rect.y1, rect.x2, rect.y2])
        {
            *s += v;
        }
    }

    /// Mean box over triple-flagged frames.
    pub fn mean_triple_rect(&self) -> Option<Rect> {
        mean_rect(&self.triple_rect_sum, self.triple_frames)
    }

    /// Mean box over no-helmet-flagged frames.
    pub fn mean_helmetless_rect(&self) -> Option<Rect> {
        mean_rect(&self.helmetless_rect_sum, self.helmetless_frames)
    }
}

fn mean_rect(sum: &[f64; 4], count: u32) -> Option<Rect> {
    if count == 0 {
        return None;
    }
    let n = count as f64;
    Rect::new(sum[0] / n, sum[1] / n, sum[2] / n, sum[3] / n).ok()
}

/// One assembled driving instance handed to the tracker for a frame.
#[derive(Debug, Clone)]
pub struct InstanceObservation {
    /// The motorcycle box; the trapezium is tracked through it.
    pub rect: Rect,
    pub trapezium: Option<Trapezium>,
    pub triple: bool,
    pub helmetless: bool,
    /// Optional appearance feature, unused by the motion-only matcher.
    pub feature: Option<Vec<f64>>,
}

impl InstanceObservation {
    pub fn new(rect: Rect, trapezium: Option<Trapezium>, triple: bool, helmetless: bool) -> Self {
        Self {
            rect,
            trapezium,
            triple,
            helmetless,
            feature: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadgearObservation {
    pub rect: Rect,
    pub no_helmet: bool,
    pub feature: Option<Vec<f64>>,
}

impl HeadgearObservation {
    pub fn new(rect: Rect, no_helmet: bool) -> Self {
        Self {
            rect,
            no_helmet,
            feature: None,
        }
    }
}

/// Track ids matched to this frame's observations, in input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub instance_track_ids: Vec<u64>,
    pub headgear_track_ids: Vec<u64>,
}

/// One tracker per video; frames must be stepped in increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    live: Vec<Track>,
    retired: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            cfg,
            live: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn live_tracks(&self) -> &[Track] {
        &self.live
    }

    /// Live and retired tracks, in creation order.
    pub fn all_tracks(&self) -> Vec<&Track> {
        let mut all: Vec<&Track> = self.retired.iter().chain(self.live.iter()).collect();
        all.sort_by_key(|t| t.id);
        all
    }

    /// Advances one frame: predict, match per class pool, update matched
    /// tracks, spawn tentative tracks for unmatched detections, age the
    /// rest.
    pub fn step(
        &mut self,
        frame: u64,
        instances: &[InstanceObservation],
        headgear: &[HeadgearObservation],
    ) -> Result<StepOutput, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::NonMonotoneFrame { last, frame });
            }
        }
        self.last_frame = Some(frame);

        for t in &mut self.live {
            t.kalman.predict();
        }

        let mut matched_tracks = vec![false; self.live.len()];
        let mut out = StepOutput::default();

        // Instance pool.
        let inst_dets: Vec<(usize, Rect)> = instances.iter().map(|o| o.rect).enumerate().collect();
        let pool: Vec<usize> = (0..self.live.len())
            .filter(|&i| self.live[i].class == TrackClass::Instance)
            .collect();
        let pairs = self.match_pool(&pool, &inst_dets);
        out.instance_track_ids = vec![0; instances.len()];
        let mut matched_dets = vec![false; instances.len()];
        for (track_idx, det_idx) in pairs {
            matched_tracks[track_idx] = true;
            matched_dets[det_idx] = true;
            let obs = &instances[det_idx];
            let track = &mut self.live[track_idx];
            Self::apply_hit(track, &obs.rect, frame, self.cfg.min_hits);
            track.trapezium = obs.trapezium;
            if obs.triple {
                track.record_triple(frame, &obs.rect);
            }
            if obs.helmetless {
                track.record_helmetless(frame, &obs.rect);
            }
            out.instance_track_ids[det_idx] = track.id;
        }
        for (det_idx, obs) in instances.iter().enumerate() {
            if matched_dets[det_idx] {
                continue;
            }
            let mut track = Track::new(
                self.next_id,
                TrackClass::Instance,
                &obs.rect,
                frame,
                self.cfg.min_hits,
            );
            track.trapezium = obs.trapezium;
            if obs.triple {
                track.record_triple(frame, &obs.rect);
            }
            if obs.helmetless {
                track.record_helmetless(frame, &obs.rect);
            }
            out.instance_track_ids[det_idx] = track.id;
            self.next_id += 1;
            self.live.push(track);
            matched_tracks.push(true);
        }

        // Headgear pools, matched within the same class.
        out.headgear_track_ids = vec![0; headgear.len()];
        for class in [TrackClass::Helmet, TrackClass::NoHelmet] {
            let dets: Vec<(usize, Rect)> = headgear
                .iter()
                .enumerate()
                .filter(|(_, o)| (o.no_helmet && class == TrackClass::NoHelmet) || (!o.no_helmet && class == TrackClass::Helmet))
                .map(|(i, o)| (i, o.rect))
                .collect();
            let pool: Vec<usize> = (0..self.live.len())
                .filter(|&i| self.live[i].class == class)
                .collect();
            let pairs = self.match_pool(&pool, &dets);
            let mut matched_pool_dets = vec![false; dets.len()];
            for (track_idx, dense_idx) in pairs {
                let (det_idx, rect) = dets[dense_idx];
                matched_tracks[track_idx] = true;
                matched_pool_dets[dense_idx] = true;
                let track = &mut self.live[track_idx];
                Self::apply_hit(track, &rect, frame, self.cfg.min_hits);
                if class == TrackClass::NoHelmet {
                    track.record_helmetless(frame, &rect);
                }
                out.headgear_track_ids[det_idx] = track.id;
            }
            for (dense_idx, &(det_idx, rect)) in dets.iter().enumerate() {
                if matched_pool_dets[dense_idx] {
                    continue;
                }
                let mut track =
                    Track::new(self.next_id, class, &rect, frame, self.cfg.min_hits);
                if class == TrackClass::NoHelmet {
                    track.record_helmetless(frame, &rect);
                }
                out.headgear_track_ids[det_idx] = track.id;
                self.next_id += 1;
                self.live.push(track);
                matched_tracks.push(true);
            }
        }

        // Age unmatched tracks and retire the expired ones.
        for (idx, t) in self.live.iter_mut().enumerate() {
            if !matched_tracks[idx] {
                t.misses += 1;
                if t.misses > self.cfg.max_age {
                    t.lifecycle = Lifecycle::Deleted;
                }
            }
        }
        let mut still_live = Vec::with_capacity(self.live.len());
        for t in self.live.drain(..) {
            if t.lifecycle == Lifecycle::Deleted {
                self.retired.push(t);
            } else {
                still_live.push(t);
            }
        }
        self.live = still_live;

        Ok(out)
    }

    fn apply_hit(track: &mut Track, rect: &Rect, frame: u64, min_hits: u32) {
        track.kalman.update(rect);
        track.hits += 1;
        track.misses = 0;
        track.last_rect = *rect;
        track.last_frame = frame;
        if track.lifecycle == Lifecycle::Tentative && track.hits >= min_hits {
            track.lifecycle = Lifecycle::Confirmed;
            track.confirmed_at = Some(frame);
        }
    }

    /// IOU-gated optimal matching between a track pool and detections.
    /// Returns (live-track index, detection index) pairs.
    fn match_pool(&self, pool: &[usize], dets: &[(usize, Rect)]) -> Vec<(usize, usize)> {
        if pool.is_empty() || dets.is_empty() {
            return Vec::new();
        }
        let mut cost = Array2::from_elem((pool.len(), dets.len()), GATED_COST);
        for (row, &track_idx) in pool.iter().enumerate() {
            let predicted = self.live[track_idx].kalman.rect();
            for (col, (_, rect)) in dets.iter().enumerate() {
                let iou = rect_iou(&predicted, rect);
                if iou >= self.cfg.iou_gate {
                    cost[(row, col)] = 1.0 - iou;
                }
            }
        }
        let result = hungarian(&cost);
        result
            .row_to_col
            .iter()
            .enumerate()
            .filter_map(|(row, col)| {
                col.and_then(|col| {
                    if cost[(row, col)] < GATED_COST / 2.0 {
                        Some((pool[row], col))
                    } else {
                        None
                    }
                })
            })
            .collect()
    }
}
