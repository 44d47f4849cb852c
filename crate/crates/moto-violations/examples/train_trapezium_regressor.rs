//! Train the trapezium box regressor on synthetic driving instances and
//! report held-out corner accuracy. A smaller run than the acceptance
//! suite uses, but the same machinery end to end.
//!
//! Run with: `cargo run --release --example train_trapezium_regressor`

use moto_violations::dense_net::TrainConfig;
use moto_violations::geometry::Trapezium;
use moto_violations::records::{ClassTag, FrameRecord};
use moto_violations::regressors::{build_trapezium_trainset, predict_trapezium, train_trapezium, AnnotationSet};
use moto_violations::synth::{self, SceneConfig};

fn scenes(n: usize, base_seed: u64) -> Vec<FrameRecord> {
    let mut frames = Vec::new();
    for s in 0..n as u64 {
        let cfg = SceneConfig {
            n_frames: 1,
            rider_count_weights: [0.15, 0.25, 0.35, 0.15, 0.10],
            ..SceneConfig::separated(4, base_seed + s)
        };
        frames.extend(synth::generate(&cfg).unwrap().gt);
    }
    for (i, f) in frames.iter_mut().enumerate() {
        f.frame = i as u64;
    }
    frames
}

fn main() -> anyhow::Result<()> {
    let train_frames = scenes(150, 1000);
    let held_frames = scenes(40, 9000);
    let ann = AnnotationSet::from_records(&train_frames)?;
    let (samples, skipped) = build_trapezium_trainset(&ann);
    println!("{} training instances ({} skipped)", samples.len(), skipped);

    let cfg = TrainConfig {
        learning_rate: 0.2,
        epochs: 300,
        batch_size: 64,
        seed: 12,
        decay_every: 200,
        lr_decay_factor: 10.0,
    };
    let (model, history) = train_trapezium(&samples, &cfg)?;
    println!(
        "trained {} epochs, loss {:.3e} -> {:.3e}",
        cfg.epochs,
        history[0],
        history.last().unwrap()
    );

    let mut rel_errors = Vec::new();
    for rec in &held_frames {
        let grouped = synth::group_gt_boxes(rec);
        let riders: Vec<_> = rec
            .detections
            .iter()
            .filter(|d| d.cls == ClassTag::Rider)
            .filter_map(|d| d.rect())
            .collect();
        for inst in &rec.instances {
            let moto = grouped[&inst.id].moto.unwrap();
            let gt = Trapezium::from_flat(&inst.trapezium)?;
            let Ok((pred, _)) = predict_trapezium(&model, &moto, &riders, rec.w as f64, rec.h as f64)
            else {
                continue;
            };
            let bb = gt.bounding_rect();
            let diag = (bb.width().powi(2) + bb.height().powi(2)).sqrt();
            let mean_corner = pred
                .vertices()
                .iter()
                .zip(gt.vertices())
                .map(|(p, g)| ((p.x - g.x).powi(2) + (p.y - g.y).powi(2)).sqrt())
                .sum::<f64>()
                / 4.0;
            rel_errors.push(mean_corner / diag);
        }
    }
    let mean = rel_errors.iter().sum::<f64>() / rel_errors.len() as f64;
    println!(
        "held-out: {} instances, mean corner error {:.2}% of instance diagonal",
        rel_errors.len(),
        100.0 * mean
    );
    Ok(())
}
