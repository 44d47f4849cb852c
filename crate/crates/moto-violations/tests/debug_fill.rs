use moto_violations::dense_net::TrainConfig;
use moto_violations::geometry::rect_iou;
use moto_violations::records::{ClassTag, FrameRecord};
use moto_violations::regressors::{
    amodal_fill, collect_amodal_pairs, missing_rider_rate, train_amodal, AnnotationSet,
    HEADGEAR_COVER,
};
use moto_violations::synth::{self, SceneConfig};

fn scenes(n: usize, base: u64, occlusion: f64) -> (Vec<FrameRecord>, Vec<FrameRecord>) {
    let mut gt = Vec::new();
    let mut det = Vec::new();
    for s in 0..n as u64 {
        let cfg = SceneConfig {
            n_frames: 3,
            occlusion_prob: occlusion,
            rider_count_weights: [0.2, 0.3, 0.3, 0.1, 0.1],
            ..SceneConfig::separated(4, base + s)
        };
        let scene = synth::generate(&cfg).unwrap();
        gt.extend(scene.gt);
        det.extend(scene.detections);
    }
    for (i, f) in gt.iter_mut().enumerate() { f.frame = i as u64; }
    for (i, f) in det.iter_mut().enumerate() { f.frame = i as u64; }
    (gt, det)
}

#[test]
fn probe_fill() {
    let t0 = std::time::Instant::now();
    let (train_gt, _) = scenes(60, 1000, 0.0);
    let ann = AnnotationSet::from_records(&train_gt).unwrap();
    let pairs = collect_amodal_pairs(&ann, HEADGEAR_COVER);
    println!("pairs: {}", pairs.len());
    let cfg = TrainConfig {
        learning_rate: 0.3,
        epochs: 20000,
        batch_size: 32,
        seed: 9,
        decay_every: 15000,
        lr_decay_factor: 10.0,
    };
    let (model, hist) = train_amodal(&pairs, ann.frame_w, ann.frame_h, &cfg).unwrap();
    println!("train {:.0}s loss {:.2e}", t0.elapsed().as_secs_f64(), hist.last().unwrap());

    let threshold = 0.6;
    let (eval_gt, eval_det) = scenes(40, 5000, 0.10);
    let det_ann = AnnotationSet::from_records(&eval_det).unwrap();
    let before = missing_rider_rate(&det_ann, &model, threshold, 900.0).unwrap();
    let (filled, stats) = amodal_fill(&det_ann, &model, threshold, 900.0).unwrap();
    let after = missing_rider_rate(&filled, &model, threshold, 900.0).unwrap();
    println!("missing {before:.4} -> {after:.4}; stats {stats:?}");

    let mut ious = Vec::new();
    for (gt_rec, det_rec) in eval_gt.iter().zip(&eval_det) {
        let det_riders: Vec<_> = det_rec
            .detections
            .iter()
            .filter(|d| d.cls == ClassTag::Rider)
            .filter_map(|d| d.rect())
            .collect();
        for d in &gt_rec.detections {
            if d.cls != ClassTag::Rider { continue; }
            let gt_rect = d.rect().unwrap();
            if det_riders.iter().any(|r| rect_iou(r, &gt_rect) > 0.99) { continue; }
            let best = filled.frames[gt_rec.frame as usize]
                .boxes
                .iter()
                .filter(|b| b.class == ClassTag::Rider)
                .map(|b| rect_iou(&b.rect, &gt_rect))
                .fold(0.0, f64::max);
            ious.push(best);
        }
    }
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    println!("{} deleted riders, filled mean IoU {mean:.4}", ious.len());
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
