//! Recover occluded riders: train the amodal regressor on headgear-rider
//! pairs from clean scenes, then fill missing rider boxes in a corpus where
//! a share of them was deleted.
//!
//! Run with: `cargo run --release --example amodal_completion`

use moto_violations::dense_net::TrainConfig;
use moto_violations::records::FrameRecord;
use moto_violations::regressors::{
    amodal_fill, collect_amodal_pairs, missing_rider_rate, train_amodal, AnnotationSet,
    HEADGEAR_COVER,
};
use moto_violations::synth::{self, SceneConfig};

fn scenes(n: usize, base_seed: u64, occlusion: f64) -> Vec<FrameRecord> {
    let mut frames = Vec::new();
    for s in 0..n as u64 {
        let cfg = SceneConfig {
            n_frames: 2,
            occlusion_prob: occlusion,
            rider_count_weights: [0.2, 0.3, 0.3, 0.1, 0.1],
            ..SceneConfig::separated(4, base_seed + s)
        };
        let scene = synth::generate(&cfg).unwrap();
        frames.extend(if occlusion > 0.0 { scene.detections } else { scene.gt });
    }
    for (i, f) in frames.iter_mut().enumerate() {
        f.frame = i as u64;
    }
    frames
}

fn main() -> anyhow::Result<()> {
    // Clean corpus for training pairs.
    let ann = AnnotationSet::from_records(&scenes(40, 100, 0.0))?;
    let pairs = collect_amodal_pairs(&ann, HEADGEAR_COVER);
    println!("collected {} headgear-rider pairs", pairs.len());

    let cfg = TrainConfig {
        learning_rate: 0.3,
        epochs: 8000,
        batch_size: 32,
        seed: 9,
        decay_every: 6000,
        lr_decay_factor: 10.0,
    };
    let (model, history) = train_amodal(&pairs, ann.frame_w, ann.frame_h, &cfg)?;
    println!("final training loss {:.3e}", history.last().unwrap());

    // Corpus with 10% of rider boxes deleted; their headgear persists.
    // Stacked rider boxes overlap heavily here, so the occlusion test uses
    // a higher predicted-box IOU threshold than the sparse-scene default.
    let occluded = AnnotationSet::from_records(&scenes(30, 900, 0.10))?;
    let threshold = 0.6;
    let before = missing_rider_rate(&occluded, &model, threshold, 900.0)?;
    let (filled, stats) = amodal_fill(&occluded, &model, threshold, 900.0)?;
    let after = missing_rider_rate(&filled, &model, threshold, 900.0)?;
    println!(
        "missing-rider rate {:.1}% -> {:.1}% ({} boxes filled, {} headgear seen)",
        100.0 * before,
        100.0 * after,
        stats.filled,
        stats.headgear_total
    );
    Ok(())
}
