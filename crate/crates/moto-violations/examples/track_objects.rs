//! The motion tracker on its own: two instances crossing paths with a
//! detection dropout in the middle, plus a headgear box, all keeping their
//! identities.
//!
//! Run with: `cargo run --example track_objects`

use moto_violations::geometry::Rect;
use moto_violations::tracker::{
    HeadgearObservation, InstanceObservation, Tracker, TrackerConfig,
};

fn main() -> anyhow::Result<()> {
    let mut tracker = Tracker::new(TrackerConfig::default());
    for frame in 0..40u64 {
        let t = frame as f64;
        // A drives right along the top, B drives left along the bottom.
        let a = Rect::new(60.0 + 14.0 * t, 120.0, 260.0 + 14.0 * t, 300.0)?;
        let b = Rect::new(700.0 - 14.0 * t, 520.0, 900.0 - 14.0 * t, 700.0)?;
        let helmet = Rect::new(a.x1 + 60.0, a.y1 - 60.0, a.x1 + 120.0, a.y1)?;

        // A detector hiccup: nothing seen on frame 17.
        let (instances, headgear) = if frame == 17 {
            (vec![], vec![])
        } else {
            (
                vec![
                    InstanceObservation::new(a, None, frame > 5, false),
                    InstanceObservation::new(b, None, false, false),
                ],
                vec![HeadgearObservation::new(helmet, false)],
            )
        };
        let out = tracker.step(frame, &instances, &headgear)?;
        if frame % 8 == 0 || frame == 17 {
            println!(
                "frame {frame:>2}: instance tracks {:?}, headgear tracks {:?}",
                out.instance_track_ids, out.headgear_track_ids
            );
        }
    }

    println!("\nfinal tracks:");
    for t in tracker.all_tracks() {
        println!(
            "  id {:>2} {:?} {:?} hits={} triple_frames={} spans {:?}..{:?}",
            t.id, t.class, t.lifecycle, t.hits, t.triple_frames, t.first_frame, t.last_frame
        );
    }
    Ok(())
}
