//! Generate a synthetic traffic scene and write its ground-truth and
//! detection streams next to each other, then summarize what was made.
//!
//! Run with: `cargo run --example generate_scenes`

use moto_violations::records::{write_frames, ClassTag};
use moto_violations::synth::{generate, gt_counts, SceneConfig};
use std::fs::File;
use std::io::BufWriter;

fn main() -> anyhow::Result<()> {
    let cfg = SceneConfig {
        n_instances: 4,
        rider_count_weights: [0.2, 0.3, 0.3, 0.1, 0.1],
        no_helmet_prob: 0.35,
        occlusion_prob: 0.10,
        jitter_std: 1.5,
        false_negative_rate: 0.05,
        n_frames: 60,
        seed: 42,
        ..SceneConfig::default()
    };
    let scene = generate(&cfg)?;

    let dir = std::env::temp_dir();
    let gt_path = dir.join("scene_gt.jsonl");
    let det_path = dir.join("scene_detections.jsonl");
    write_frames(&mut BufWriter::new(File::create(&gt_path)?), &scene.gt)?;
    write_frames(&mut BufWriter::new(File::create(&det_path)?), &scene.detections)?;

    let counts = gt_counts(&scene.gt);
    println!("wrote {} ground-truth frames to {}", scene.gt.len(), gt_path.display());
    println!("wrote detection stream to {}", det_path.display());
    println!(
        "ground truth: {} triple-riding instances, {} helmetless riders, {} instances with a helmet violation",
        counts.triple_instances, counts.no_helmet_riders, counts.helmet_violation_instances
    );

    let count = |cls: ClassTag, frames: &[moto_violations::FrameRecord]| {
        frames
            .iter()
            .flat_map(|f| &f.detections)
            .filter(|d| d.cls == cls)
            .count()
    };
    for cls in [ClassTag::Motorcycle, ClassTag::Rider, ClassTag::Helmet, ClassTag::NoHelmet] {
        println!(
            "{cls:?}: {} ground-truth boxes, {} detected",
            count(cls, &scene.gt),
            count(cls, &scene.detections)
        );
    }
    Ok(())
}
