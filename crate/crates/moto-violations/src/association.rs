//! Frame-level instance assembly: grouping riders with motorcycles,
//! trapezium-based rider counting, triple-riding flagging, helmet-ROI
//! extraction, and headgear-to-rider assignment.
//!
//! Riders are first gathered as candidates of every motorcycle they
//! intersect, then each rider is assigned to at most one instance — the one
//! maximizing the affinity of the selected [`AssociationMode`]. Tie-breaks
//! are content-based (intersection area, then canonical instance order), so
//! the result is invariant to the ordering of the detection lists.

use crate::geometry::{rect_iou, trap_rect_iou, Rect, Trapezium};
use serde::{Deserialize, Serialize};

/// How rider boxes are matched to driving instances. The trapezium mode is
/// the production path; the others are selectable baselines for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMode {
    /// Nearest motorcycle center within a distance cutoff.
    EuclideanBaseline,
    /// IOU between the rider box and the motorcycle box.
    MotoBoxIou,
    /// IOU between the rider box and the axis-aligned bounding box of the
    /// motorcycle plus its candidate riders.
    RectInstanceIou,
    /// IOU between the rider box and the fitted trapezium.
    TrapeziumIou,
}

impl AssociationMode {
    pub const ALL: [AssociationMode; 4] = [
        AssociationMode::EuclideanBaseline,
        AssociationMode::MotoBoxIou,
        AssociationMode::RectInstanceIou,
        AssociationMode::TrapeziumIou,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AssociationMode::EuclideanBaseline => "euclidean_baseline",
            AssociationMode::MotoBoxIou => "moto_box_iou",
            AssociationMode::RectInstanceIou => "rect_instance_iou",
            AssociationMode::TrapeziumIou => "trapezium_iou",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadgearStatus {
    Helmet,
    NoHelmet,
    Unknown,
}

/// One driving instance within a frame: a motorcycle, its candidate and
/// assigned riders (as indices into the frame's rider list), the fitted
/// trapezium, and the violation flags.
#[derive(Debug, Clone)]
pub struct Instance {
    /// Per-frame index in canonical (coordinate-sorted) motorcycle order.
    pub id: usize,
    pub moto: Rect,
    pub candidates: Vec<usize>,
    pub trapezium: Option<Trapezium>,
    pub assigned: Vec<usize>,
    pub triple: bool,
    /// Status per assigned rider, parallel to `assigned`.
    pub rider_status: Vec<HeadgearStatus>,
    pub helmet_violation: bool,
}

impl Instance {
    pub fn assigned_rects<'a>(&self, riders: &'a [Rect]) -> Vec<&'a Rect> {
        self.assigned.iter().map(|&i| &riders[i]).collect()
    }

    /// Bounding box of the motorcycle and all candidate riders (the
    /// rectangular instance box of the ablation baseline).
    pub fn rect_instance_box(&self, riders: &[Rect]) -> Rect {
        let mut bbox = self.moto;
        for &i in &self.candidates {
            bbox = bbox.union_bbox(&riders[i]);
        }
        bbox
    }
}

/// Builds one instance per motorcycle; a rider becomes a candidate of every
/// instance whose motorcycle it intersects (area > 0). Motorcycles are
/// sorted by coordinates first so instance ids do not depend on input order.
pub fn group_riders(motos: &[Rect], riders: &[Rect]) -> Vec<Instance> {
    let mut sorted: Vec<Rect> = motos.to_vec();
    sorted.sort_by(|a, b| {
        (a.x1, a.y1, a.x2, a.y2)
            .partial_cmp(&(b.x1, b.y1, b.x2, b.y2))
            .unwrap()
    });
    sorted
        .into_iter()
        .enumerate()
        .map(|(id, moto)| {
            let candidates = riders
                .iter()
                .enumerate()
                .filter(|(_, r)| r.intersection_area(&moto) > 0.0)
                .map(|(i, _)| i)
                .collect();
            Instance {
                id,
                moto,
                candidates,
                trapezium: None,
                assigned: Vec::new(),
                triple: false,
                rider_status: Vec::new(),
                helmet_violation: false,
            }
        })
        .collect()
}

/// True iff the instance carries more than two riders.
pub fn flag_triple(instance: &Instance) -> bool {
    instance.assigned.len() >= 3
}

fn affinity(inst: &Instance, rider: &Rect, riders: &[Rect], mode: AssociationMode) -> f64 {
    match mode {
        AssociationMode::EuclideanBaseline => {
            let ic = inst.moto.center();
            let rc = rider.center();
            -(((ic.x - rc.x).powi(2) + (ic.y - rc.y).powi(2)).sqrt())
        }
        AssociationMode::MotoBoxIou => rect_iou(rider, &inst.moto),
        AssociationMode::RectInstanceIou => rect_iou(rider, &inst.rect_instance_box(riders)),
        AssociationMode::TrapeziumIou => match &inst.trapezium {
            Some(t) => trap_rect_iou(t, rider),
            // Instances whose trapezium prediction failed fall back to the
            // motorcycle box so they stay countable.
            None => rect_iou(rider, &inst.moto),
        },
    }
}

/// Assigns every rider to at most one instance: the candidate instance with
/// the highest affinity. Zero-affinity riders (or riders beyond
/// `euclidean_max_dist` in the euclidean baseline) stay unassigned. Ties go
/// to the instance with the larger rider-motorcycle intersection, then the
/// lower instance id. Sets the triple flag on each instance.
pub fn assign_riders(
    instances: &mut [Instance],
    riders: &[Rect],
    mode: AssociationMode,
    euclidean_max_dist: f64,
) {
    for inst in instances.iter_mut() {
        inst.assigned.clear();
        inst.rider_status.clear();
        inst.triple = false;
        inst.helmet_violation = false;
    }
    for (ridx, rider) in riders.iter().enumerate() {
        let mut best: Option<(usize, f64, f64)> = None; // (slot, affinity, inter)
        for (slot, inst) in instances.iter().enumerate() {
            if !inst.candidates.contains(&ridx) {
                continue;
            }
            let score = affinity(inst, rider, riders, mode);
            match mode {
                AssociationMode::EuclideanBaseline => {
                    if -score > euclidean_max_dist {
                        continue;
                    }
                }
                _ => {
                    if score <= 0.0 {
                        continue;
                    }
                }
            }
            let inter = rider.intersection_area(&inst.moto);
            let replace = match &best {
                None => true,
                Some((bslot, bscore, binter)) => {
                    score > *bscore
                        || (score == *bscore
                            && (inter > *binter || (inter == *binter && inst.id < instances[*bslot].id)))
                }
            };
            if replace {
                best = Some((slot, score, inter));
            }
        }
        if let Some((slot, _, _)) = best {
            instances[slot].assigned.push(ridx);
        }
    }
    for inst in instances.iter_mut() {
        // Canonical order within the instance: by rider coordinates.
        inst.assigned.sort_by(|&a, &b| {
            (riders[a].x1, riders[a].y1, riders[a].x2, riders[a].y2)
                .partial_cmp(&(riders[b].x1, riders[b].y1, riders[b].x2, riders[b].y2))
                .unwrap()
        });
        inst.rider_status = vec![HeadgearStatus::Unknown; inst.assigned.len()];
        inst.triple = flag_triple(inst);
    }
}

/// Helmet-detector ROI for an instance: motorcycle x-range, vertical range
/// from the highest assigned rider top (or the motorcycle top, whichever is
/// higher) down to the motorcycle bottom, grown by `expand` per dimension
/// about the center and clipped to the frame. `None` without assigned
/// riders.
pub fn extract_roi(
    inst: &Instance,
    riders: &[Rect],
    frame_w: f64,
    frame_h: f64,
    expand: f64,
) -> Option<Rect> {
    if inst.assigned.is_empty() {
        return None;
    }
    let top = inst
        .assigned
        .iter()
        .map(|&i| riders[i].y1)
        .fold(inst.moto.y1, f64::min);
    let base = Rect::new(inst.moto.x1, top, inst.moto.x2, inst.moto.y2).ok()?;
    let grown = base.scaled_about_center(1.0 + expand).ok()?;
    grown.clip_to(&Rect::new(0.0, 0.0, frame_w, frame_h).ok()?)
}

/// Assigns each headgear box to the assigned rider with the highest IOU
/// (must exceed `iou_gate`); riders without headgear stay `Unknown`. Sets
/// the instance-level helmet violation flag: true iff any rider ends up
/// `NoHelmet`.
pub fn assign_headgear(
    inst: &mut Instance,
    riders: &[Rect],
    headgear: &[(Rect, HeadgearStatus)],
    iou_gate: f64,
) {
    inst.rider_status = vec![HeadgearStatus::Unknown; inst.assigned.len()];
    // Highest-IOU headgear wins per rider; no-helmet wins exact ties.
    let mut best_iou = vec![0.0f64; inst.assigned.len()];
    for (rect, status) in headgear {
        debug_assert!(*status != HeadgearStatus::Unknown);
        let mut target: Option<(usize, f64)> = None;
        for (k, &ridx) in inst.assigned.iter().enumerate() {
            let iou = rect_iou(rect, &riders[ridx]);
            if iou <= iou_gate {
                continue;
            }
            if target.map_or(true, |(_, b)| iou > b) {
                target = Some((k, iou));
            }
        }
        if let Some((k, iou)) = target {
            let beats = iou > best_iou[k]
                || (iou == best_iou[k]
                    && *status == HeadgearStatus::NoHelmet
                    && inst.rider_status[k] == HeadgearStatus::Helmet);
            if beats {
                best_iou[k] = iou;
                inst.rider_status[k] = *status;
            }
        }
    }
    inst.helmet_violation = inst
        .rider_status
        .iter()
        .any(|s| *s == HeadgearStatus::NoHelmet);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn r(x1: f64, y1: f64, x2: f64, y2: f64) -> Rect {
        Rect::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn grouping_by_intersection() {
        let moto = r(100.0, 100.0, 200.0, 200.0);
        let rider = r(120.0, 20.0, 180.0, 150.0);
        let instances = group_riders(&[moto], &[rider]);
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].candidates, vec![0]);

        // A rider overlapping two motorcycles is a candidate in both.
        let moto_b = r(170.0, 100.0, 270.0, 200.0);
        let instances = group_riders(&[moto, moto_b], &[r(160.0, 50.0, 210.0, 180.0)]);
        assert_eq!(instances[0].candidates, vec![0]);
        assert_eq!(instances[1].candidates, vec![0]);

        // Disjoint rider is a candidate nowhere.
        let instances = group_riders(&[moto], &[r(500.0, 500.0, 550.0, 600.0)]);
        assert!(instances[0].candidates.is_empty());
    }

    #[test]
    fn triple_flag_thresholds() {
        let moto = r(0.0, 100.0, 100.0, 200.0);
        let mk = |n: usize| {
            let riders: Vec<Rect> = (0..n)
                .map(|i| r(10.0 + i as f64, 50.0, 80.0 + i as f64, 150.0))
                .collect();
            let mut instances = group_riders(&[moto], &riders);
            assign_riders(&mut instances, &riders, AssociationMode::MotoBoxIou, f64::INFINITY);
            instances[0].triple
        };
        assert!(!mk(2));
        assert!(mk(3));
        assert!(mk(5));
    }

    /// The crowded two-instance layout: each motorcycle carries riders
    /// stacked above it, and the top rider of the left instance leans over
    /// the right motorcycle.
    fn crowded_pair() -> (Vec<Rect>, Vec<Rect>, Vec<usize>) {
        let moto_a = r(100.0, 500.0, 300.0, 690.0);
        let moto_b = r(310.0, 500.0, 510.0, 690.0);
        let riders = vec![
            // True riders of A; the later ones lean right toward B.
            r(150.0, 200.0, 250.0, 660.0),
            r(190.0, 160.0, 290.0, 620.0),
            r(240.0, 120.0, 340.0, 580.0),
            // True rider of B.
            r(360.0, 180.0, 460.0, 650.0),
        ];
        (vec![moto_a, moto_b], riders, vec![0, 0, 0, 1])
    }

    #[test]
    fn trapezium_mode_rejects_the_neighbors_rider() {
        let (motos, riders, want) = crowded_pair();
        let mut instances = group_riders(&motos, &riders);
        // Rider 2 leans over motorcycle B: candidate of both.
        assert!(instances[1].candidates.contains(&2));

        // Oracle trapezia over the true groups.
        for inst in instances.iter_mut() {
            let mut own = vec![inst.moto];
            for (ridx, &owner) in want.iter().enumerate() {
                if owner == inst.id {
                    own.push(riders[ridx]);
                }
            }
            inst.trapezium = Some(synth::min_area_trapezium(&own).unwrap());
        }
        assign_riders(&mut instances, &riders, AssociationMode::TrapeziumIou, f64::INFINITY);
        assert_eq!(instances[0].assigned, vec![0, 1, 2]);
        assert_eq!(instances[1].assigned, vec![3]);
        assert!(instances[0].triple);
        assert!(!instances[1].triple);
    }

    #[test]
    fn ties_break_by_intersection_then_id() {
        // Rider placed exactly symmetrically between two identical motos:
        // same IOU with both, but a larger intersection with the left one
        // wins; with equal intersections the lower id wins.
        let moto_a = r(0.0, 0.0, 100.0, 100.0);
        let moto_b = r(120.0, 0.0, 220.0, 100.0);
        let rider = r(40.0, -50.0, 180.0, 60.0); // overlaps both equally by symmetry
        let mut instances = group_riders(&[moto_b, moto_a], &[rider]);
        assign_riders(&mut instances, &[rider], AssociationMode::MotoBoxIou, f64::INFINITY);
        // intersection with A: (100-40)x60, with B: (180-120)x60 — equal;
        // canonical order puts A first (id 0), so A gets the rider.
        assert_eq!(instances[0].moto, moto_a);
        assert_eq!(instances[0].assigned, vec![0]);
        assert!(instances[1].assigned.is_empty());

        // Brute-force cross-check on this tiny case: best affinity per rider.
        let iou_a = rect_iou(&rider, &moto_a);
        let iou_b = rect_iou(&rider, &moto_b);
        assert!((iou_a - iou_b).abs() < 1e-12);
    }

    #[test]
    fn assignment_is_order_invariant_and_exclusive() {
        let mut rng = StdRng::seed_from_u64(71);
        for _ in 0..50 {
            let n_motos = rng.random_range(1..5);
            let motos: Vec<Rect> = (0..n_motos)
                .map(|_| {
                    let x = rng.random_range(0.0..600.0);
                    let y = rng.random_range(300.0..500.0);
                    r(x, y, x + rng.random_range(80.0..200.0), y + rng.random_range(80.0..200.0))
                })
                .collect();
            let riders: Vec<Rect> = (0..rng.random_range(1..8))
                .map(|_| {
                    let x = rng.random_range(0.0..600.0);
                    let y = rng.random_range(100.0..450.0);
                    r(x, y, x + rng.random_range(50.0..120.0), y + rng.random_range(150.0..300.0))
                })
                .collect();
            for mode in AssociationMode::ALL {
                let mut a = group_riders(&motos, &riders);
                assign_riders(&mut a, &riders, mode, 400.0);

                // Shuffled inputs, same outcome (keyed by moto coordinates).
                let mut motos_shuffled = motos.clone();
                let mut rider_perm: Vec<usize> = (0..riders.len()).collect();
                use rand::seq::SliceRandom;
                motos_shuffled.shuffle(&mut rng);
                rider_perm.shuffle(&mut rng);
                let riders_shuffled: Vec<Rect> = rider_perm.iter().map(|&i| riders[i]).collect();
                let mut b = group_riders(&motos_shuffled, &riders_shuffled);
                assign_riders(&mut b, &riders_shuffled, mode, 400.0);

                for (ia, ib) in a.iter().zip(&b) {
                    assert_eq!(ia.moto, ib.moto);
                    let rects_a: Vec<Rect> = ia.assigned.iter().map(|&i| riders[i]).collect();
                    let rects_b: Vec<Rect> =
                        ib.assigned.iter().map(|&i| riders_shuffled[i]).collect();
                    assert_eq!(rects_a, rects_b, "mode {mode:?}");
                }

                // Global exclusivity.
                let mut seen = std::collections::HashSet::new();
                for inst in &a {
                    for &ridx in &inst.assigned {
                        assert!(seen.insert(ridx), "rider {ridx} assigned twice");
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_trapezia_recover_ground_truth_grouping_on_separated_scenes() {
        for seed in 0..5 {
            let cfg = synth::SceneConfig {
                n_frames: 1,
                rider_count_weights: [0.2, 0.3, 0.3, 0.1, 0.1],
                ..synth::SceneConfig::separated(4, 900 + seed)
            };
            let scene = synth::generate(&cfg).unwrap();
            let grouped = synth::group_gt_boxes(&scene.gt[0]);
            let motos: Vec<Rect> = grouped.values().map(|g| g.moto.unwrap()).collect();
            let riders: Vec<Rect> = grouped.values().flat_map(|g| g.riders.clone()).collect();
            let mut instances = group_riders(&motos, &riders);
            for inst in instances.iter_mut() {
                let mut own = vec![inst.moto];
                own.extend(inst.candidates.iter().map(|&i| riders[i]));
                inst.trapezium = Some(synth::min_area_trapezium(&own).unwrap());
            }
            assign_riders(&mut instances, &riders, AssociationMode::TrapeziumIou, f64::INFINITY);

            for inst in &instances {
                let gt = grouped
                    .values()
                    .find(|g| g.moto.unwrap() == inst.moto)
                    .unwrap();
                let mut got: Vec<Rect> = inst.assigned.iter().map(|&i| riders[i]).collect();
                let mut want = gt.riders.clone();
                let key = |r: &Rect| (r.x1, r.y1, r.x2, r.y2);
                got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                assert_eq!(got, want, "seed {seed}");
            }
        }
    }

    #[test]
    fn roi_follows_the_stated_arithmetic() {
        let moto = r(100.0, 200.0, 200.0, 300.0);
        let rider = r(110.0, 120.0, 190.0, 290.0);
        let mut instances = group_riders(&[moto], &[rider]);
        assign_riders(&mut instances, &[rider], AssociationMode::MotoBoxIou, f64::INFINITY);
        let roi = extract_roi(&instances[0], &[rider], 1920.0, 1080.0, 0.10).unwrap();
        assert!((roi.x1 - 95.0).abs() < 1e-9);
        assert!((roi.y1 - 111.0).abs() < 1e-9);
        assert!((roi.x2 - 205.0).abs() < 1e-9);
        assert!((roi.y2 - 309.0).abs() < 1e-9);
    }

    #[test]
    fn roi_clips_to_frame_and_contains_the_motorcycle() {
        let moto = r(0.0, 0.0, 100.0, 100.0);
        let rider = r(5.0, 0.0, 60.0, 80.0);
        let mut instances = group_riders(&[moto], &[rider]);
        assign_riders(&mut instances, &[rider], AssociationMode::MotoBoxIou, f64::INFINITY);
        let roi = extract_roi(&instances[0], &[rider], 500.0, 400.0, 0.10).unwrap();
        assert!(roi.x1 >= 0.0 && roi.y1 >= 0.0);

        // Rider fully inside the moto's vertical range: base ROI is the moto.
        let rider_low = r(20.0, 30.0, 80.0, 90.0);
        let mut instances = group_riders(&[moto], &[rider_low]);
        assign_riders(&mut instances, &[rider_low], AssociationMode::MotoBoxIou, f64::INFINITY);
        let roi = extract_roi(&instances[0], &[rider_low], 500.0, 400.0, 0.0).unwrap();
        assert_eq!(roi, moto.clip_to(&r(0.0, 0.0, 500.0, 400.0)).unwrap());

        // No assigned riders -> no ROI.
        let mut empty = group_riders(&[moto], &[]);
        assign_riders(&mut empty, &[], AssociationMode::MotoBoxIou, f64::INFINITY);
        assert!(extract_roi(&empty[0], &[], 500.0, 400.0, 0.10).is_none());
    }

    #[test]
    fn headgear_statuses_and_instance_flag() {
        let moto = r(100.0, 400.0, 300.0, 600.0);
        let riders = vec![r(120.0, 150.0, 200.0, 550.0), r(210.0, 180.0, 290.0, 560.0)];
        let mut instances = group_riders(&[moto], &riders);
        assign_riders(&mut instances, &riders, AssociationMode::MotoBoxIou, f64::INFINITY);
        let headgear = vec![
            (r(140.0, 150.0, 180.0, 220.0), HeadgearStatus::Helmet),
            (r(230.0, 180.0, 270.0, 250.0), HeadgearStatus::NoHelmet),
        ];
        assign_headgear(&mut instances[0], &riders, &headgear, 0.05);
        assert_eq!(
            instances[0].rider_status,
            vec![HeadgearStatus::Helmet, HeadgearStatus::NoHelmet]
        );
        assert!(instances[0].helmet_violation);

        // All helmets: no violation.
        let all_helmets = vec![
            (r(140.0, 150.0, 180.0, 220.0), HeadgearStatus::Helmet),
            (r(230.0, 180.0, 270.0, 250.0), HeadgearStatus::Helmet),
        ];
        assign_headgear(&mut instances[0], &riders, &all_helmets, 0.05);
        assert!(!instances[0].helmet_violation);

        // Headgear overlapping no rider is dropped; statuses stay unknown.
        let stray = vec![(r(600.0, 600.0, 650.0, 660.0), HeadgearStatus::NoHelmet)];
        assign_headgear(&mut instances[0], &riders, &stray, 0.05);
        assert!(instances[0]
            .rider_status
            .iter()
            .all(|s| *s == HeadgearStatus::Unknown));
        assert!(!instances[0].helmet_violation);
    }

    #[test]
    fn triple_flag_is_monotone_in_assigned_riders() {
        let moto = r(0.0, 300.0, 200.0, 500.0);
        let riders: Vec<Rect> = (0..5)
            .map(|i| r(10.0 + 30.0 * i as f64, 100.0, 90.0 + 30.0 * i as f64, 450.0))
            .collect();
        let mut instances = group_riders(&[moto], &riders);
        assign_riders(&mut instances, &riders, AssociationMode::MotoBoxIou, f64::INFINITY);
        assert!(instances[0].triple);
        // Removing riders can clear the flag; re-adding restores it and
        // never turns a flagged instance unflagged.
        let mut inst = instances[0].clone();
        while inst.assigned.len() > 3 {
            inst.assigned.pop();
            assert!(flag_triple(&inst));
        }
        inst.assigned.pop();
        assert!(!flag_triple(&inst));
    }
}
