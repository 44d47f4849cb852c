use moto_violations::eval::Counts;
use moto_violations::pipeline::{run_records, TrapeziumSource};
use moto_violations::synth::{self, SceneConfig};
use moto_violations::EngineConfig;

#[test]
fn probe_exact_counts() {
    let t0 = std::time::Instant::now();
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let cfg = SceneConfig {
            frame_w: 2560,
            n_instances: 4,
            rider_count_weights: [0.2, 0.3, 0.4, 0.1, 0.0],
            no_helmet_prob: 0.4,
            false_negative_rate: 0.20,
            n_frames: 60,
            velocity_range: (0.3, 2.0),
            seed: 7000 + seed,
            ..SceneConfig::default()
        };
        let scene = synth::generate(&cfg).unwrap();
        let gt = Counts::from(synth::gt_counts(&scene.gt));
        let (_, report, errors) = run_records(
            &EngineConfig::default(),
            TrapeziumSource::CandidateFit,
            None,
            &scene.detections,
        );
        assert!(errors.is_empty());
        let got = Counts::from(&report);
        if got != gt {
            failures.push((seed, got, gt));
        }
    }
    println!("failures: {:?}", failures);
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    assert!(failures.is_empty());
}
