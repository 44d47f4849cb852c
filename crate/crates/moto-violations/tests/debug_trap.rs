use moto_violations::dense_net::TrainConfig;
use moto_violations::records::FrameRecord;
use moto_violations::regressors::{build_trapezium_trainset, predict_trapezium, train_trapezium, AnnotationSet};
use moto_violations::synth::{self, SceneConfig};
use moto_violations::geometry::Trapezium;

fn corpus(n_scenes: usize, base_seed: u64, crowded: bool) -> Vec<FrameRecord> {
    let mut frames = Vec::new();
    for s in 0..n_scenes as u64 {
        let mut cfg = if crowded {
            SceneConfig::crowded(5, base_seed + s)
        } else {
            SceneConfig::separated(4, base_seed + s)
        };
        cfg.n_frames = 1;
        cfg.rider_count_weights = [0.15, 0.25, 0.35, 0.15, 0.10];
        if crowded {
            cfg.frame_w = 2200;
        }
        frames.extend(synth::generate(&cfg).unwrap().gt);
    }
    for (i, f) in frames.iter_mut().enumerate() {
        f.frame = i as u64;
    }
    frames
}

#[test]
fn probe_trap_training() {
    let t0 = std::time::Instant::now();
    let train_frames = corpus(500, 10_000, false);
    let held_frames = corpus(120, 90_000, false);
    let ann = AnnotationSet::from_records(&train_frames).unwrap();
    let (samples, skipped) = build_trapezium_trainset(&ann);
    println!("train samples {} skipped {} gen {:.1}s", samples.len(), skipped, t0.elapsed().as_secs_f64());

    for (lr, epochs, batch, decay_at) in [
        (0.05, 300usize, 64usize, 200usize),
        (0.2, 300, 64, 200),
        (0.2, 800, 64, 500),
    ] {
        let t1 = std::time::Instant::now();
        let cfg = TrainConfig {
            learning_rate: lr,
            epochs,
            batch_size: batch,
            seed: 12,
            decay_every: decay_at,
            lr_decay_factor: 10.0,
        };
        let (model, hist) = train_trapezium(&samples, &cfg).unwrap();
        // Held-out corner error as fraction of instance diagonal.
        let mut rel_errors = Vec::new();
        for rec in &held_frames {
            let grouped = synth::group_gt_boxes(rec);
            for inst in &rec.instances {
                let g = &grouped[&inst.id];
                let moto = g.moto.unwrap();
                let gt = Trapezium::from_flat(&inst.trapezium).unwrap();
                let riders: Vec<_> = rec
                    .detections
                    .iter()
                    .filter(|d| d.cls == moto_violations::records::ClassTag::Rider)
                    .filter_map(|d| d.rect())
                    .collect();
                let Ok((pred, _)) = predict_trapezium(&model, &moto, &riders, rec.w as f64, rec.h as f64) else {
                    rel_errors.push(1.0);
                    continue;
                };
                let bb = gt.bounding_rect();
                let diag = (bb.width().powi(2) + bb.height().powi(2)).sqrt();
                let mean_corner: f64 = pred
                    .vertices()
                    .iter()
                    .zip(gt.vertices())
                    .map(|(p, g)| ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt())
                    .sum::<f64>()
                    / 4.0;
                rel_errors.push(mean_corner / diag);
            }
        }
        let mean_rel = rel_errors.iter().sum::<f64>() / rel_errors.len() as f64;
        println!(
            "lr={lr} epochs={epochs} batch={batch}: loss={:.3e} held_rel_corner={:.4} ({} instances) {:.0}s",
            hist.last().unwrap(),
            mean_rel,
            rel_errors.len(),
            t1.elapsed().as_secs_f64()
        );
    }
}
