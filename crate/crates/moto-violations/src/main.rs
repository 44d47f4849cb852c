//! Stream-processing CLI: run the violation pipeline over detection
//! streams, train the regressors, generate synthetic scenes, evaluate
//! association modes, and fill occluded riders. All subcommands exit
//! nonzero with a diagnostic on malformed input.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use moto_violations::association::AssociationMode;
use moto_violations::dense_net::DenseNet;
use moto_violations::eval;
use moto_violations::pipeline::{emit_overlay, Engine, TrapeziumSource};
use moto_violations::records::{self, FrameRecord};
use moto_violations::regressors::{
    build_trapezium_trainset, collect_amodal_pairs, amodal_fill, missing_rider_rate,
    train_amodal, train_trapezium, AnnotationSet,
};
use moto_violations::synth::{self, SceneConfig};
use moto_violations::EngineConfig;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "moto-violations",
    about = "Detect, track and count triple-riding and helmet violations from detection streams"
)]
struct Cli {
    /// Seed override for anything stochastic (training shuffles, synthesis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a detection stream into a violation report and overlay stream.
    Run {
        /// Line-delimited detection stream (one frame per line).
        #[arg(long)]
        detections: PathBuf,
        /// Trapezium regressor checkpoint; without it instances fall back
        /// to the minimum-area fit over their candidate riders.
        #[arg(long)]
        trap_model: Option<PathBuf>,
        /// Amodal regressor checkpoint enabling occluded-rider completion.
        #[arg(long)]
        amodal_model: Option<PathBuf>,
        /// key=value config file; defaults apply where absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path for the violation report (JSON).
        #[arg(long)]
        report: PathBuf,
        /// Output path for the overlay stream (JSONL).
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Train the trapezium box regressor from an annotated ground-truth stream.
    TrainTrapezium {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Hold out every k-th sample for validation (e.g. 0.2 = every 5th).
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Train the amodal rider-box regressor from an annotated stream.
    TrainAmodal {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic scene: ground-truth and detection streams.
    Synth {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 1920)]
        frame_w: u32,
        #[arg(long, default_value_t = 1080)]
        frame_h: u32,
        #[arg(long, default_value_t = 4)]
        instances: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        /// Comma-separated weights for rider counts 1..=5.
        #[arg(long, default_value = "0.25,0.40,0.25,0.07,0.03")]
        rider_weights: String,
        #[arg(long, default_value_t = 0.3)]
        no_helmet_prob: f64,
        #[arg(long, default_value_t = 0.0)]
        occlusion_prob: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter_std: f64,
        #[arg(long, default_value_t = 0.0)]
        false_positive_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        false_negative_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        velocity_min: f64,
        #[arg(long, default_value_t = 3.0)]
        velocity_max: f64,
        #[arg(long, default_value_t = 0.3)]
        lean: f64,
        #[arg(long, default_value_t = 420.0)]
        spacing: f64,
    },
    /// Score pipeline output against ground truth per association mode.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        trap_model: Option<PathBuf>,
        #[arg(long)]
        amodal_model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of the association modes, or "all".
        #[arg(long, default_value = "all")]
        mode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert predicted rider boxes for occluded riders in an annotation stream.
    FillAmodal {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<EngineConfig> {
    let mut cfg = match path {
        Some(p) => EngineConfig::from_file(p).with_context(|| format!("config {}", p.display()))?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<DenseNet> {
    DenseNet::load(path).with_context(|| format!("model {}", path.display()))
}

fn read_stream(path: &Path) -> Result<Vec<FrameRecord>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    Ok(records::read_frames(BufReader::new(file))?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            detections,
            trap_model,
            amodal_model,
            config,
            report,
            overlay,
        } => run(
            &detections,
            trap_model.as_deref(),
            amodal_model.as_deref(),
            &config,
            &report,
            overlay.as_deref(),
            cli.seed,
        ),
        Command::TrainTrapezium {
            annotations,
            out,
            config,
            holdout,
        } => train_trapezium_cmd(&annotations, &out, &config, holdout, cli.seed),
        Command::TrainAmodal {
            annotations,
            out,
            config,
        } => train_amodal_cmd(&annotations, &out, &config, cli.seed),
        Command::Synth {
            gt,
            detections,
            frame_w,
            frame_h,
            instances,
            frames,
            rider_weights,
            no_helmet_prob,
            occlusion_prob,
            jitter_std,
            false_positive_rate,
            false_negative_rate,
            velocity_min,
            velocity_max,
            lean,
            spacing,
        } => {
            let weights = parse_weights(&rider_weights)?;
            let cfg = SceneConfig {
                frame_w,
                frame_h,
                n_instances: instances,
                rider_count_weights: weights,
                no_helmet_prob,
                occlusion_prob,
                jitter_std,
                false_positive_rate,
                false_negative_rate,
                velocity_range: (velocity_min, velocity_max),
                n_frames: frames,
                seed: cli.seed.unwrap_or(7),
                lean,
                spacing,
            };
            synth_cmd(&cfg, &gt, &detections)
        }
        Command::Eval {
            detections,
            gt,
            trap_model,
            amodal_model,
            config,
            mode,
            out,
        } => eval_cmd(
            &detections,
            &gt,
            trap_model.as_deref(),
            amodal_model.as_deref(),
            &config,
            &mode,
            &out,
            cli.seed,
        ),
        Command::FillAmodal {
            annotations,
            model,
            out,
            config,
        } => fill_amodal_cmd(&annotations, &model, &out, &config, cli.seed),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    detections: &Path,
    trap_model: Option<&Path>,
    amodal_model: Option<&Path>,
    config: &Option<PathBuf>,
    report_path: &Path,
    overlay_path: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let trap_source = match trap_model {
        Some(p) => TrapeziumSource::Model(load_model(p)?),
        None => TrapeziumSource::CandidateFit,
    };
    let amodal = amodal_model.map(load_model).transpose()?;
    let mut engine = Engine::new(cfg, trap_source, amodal);

    let file = File::open(detections).with_context(|| format!("open {}", detections.display()))?;
    let mut overlay_writer = overlay_path
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()
        .with_context(|| "create overlay output")?;
    let mut errors: Vec<String> = Vec::new();
    let mut processed = 0usize;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match records::parse_frame_line(&line, line_no) {
            Err(e) => errors.push(e.to_string()),
            Ok(rec) => match engine.process_frame(&rec) {
                Err(e) => errors.push(format!("line {line_no}: {e}")),
                Ok(out) => {
                    processed += 1;
                    if let Some(w) = overlay_writer.as_mut() {
                        serde_json::to_writer(&mut *w, &emit_overlay(&out))?;
                        w.write_all(b"\n")?;
                    }
                }
            },
        }
    }
    if let Some(mut w) = overlay_writer {
        w.flush()?;
    }
    let report = engine.finalize();
    std::fs::write(report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("write {}", report_path.display()))?;
    println!(
        "processed {processed} frames: triple_riding={} helmet_riders={} helmet_instances={}",
        report.triple_riding_count,
        report.helmet_violation_rider_count,
        report.helmet_violation_instance_count
    );
    if !errors.is_empty() {
        for e in errors.iter().take(20) {
            eprintln!("error: {e}");
        }
        bail!("{} malformed record(s) in {}", errors.len(), detections.display());
    }
    Ok(())
}

fn train_trapezium_cmd(
    annotations: &Path,
    out: &Path,
    config: &Option<PathBuf>,
    holdout: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let ann = AnnotationSet::from_records(&read_stream(annotations)?)?;
    let (samples, skipped) = build_trapezium_trainset(&ann);
    if samples.is_empty() {
        bail!("no usable driving instances in {}", annotations.display());
    }
    let (train, held) = split_holdout(&samples, holdout);
    let (model, history) = train_trapezium(&train, &cfg.train)?;
    model.save(out)?;
    println!(
        "trained on {} samples ({} skipped), final loss {:.3e}",
        train.len(),
        skipped,
        history.last().unwrap()
    );
    if !held.is_empty() {
        let mse = model.dataset_loss(&held)?;
        println!("holdout mse over {} samples: {:.3e}", held.len(), mse);
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn train_amodal_cmd(
    annotations: &Path,
    out: &Path,
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let ann = AnnotationSet::from_records(&read_stream(annotations)?)?;
    let pairs = collect_amodal_pairs(&ann, moto_violations::regressors::HEADGEAR_COVER);
    if pairs.is_empty() {
        bail!("no headgear-rider pairs in {}", annotations.display());
    }
    let (model, history) = train_amodal(&pairs, ann.frame_w, ann.frame_h, &cfg.train)?;
    model.save(out)?;
    println!(
        "trained on {} pairs, final loss {:.3e}, checkpoint {}",
        pairs.len(),
        history.last().unwrap(),
        out.display()
    );
    Ok(())
}

fn synth_cmd(cfg: &SceneConfig, gt_path: &Path, det_path: &Path) -> Result<()> {
    let scene = synth::generate(cfg)?;
    write_stream(gt_path, &scene.gt)?;
    write_stream(det_path, &scene.detections)?;
    let counts = synth::gt_counts(&scene.gt);
    println!(
        "generated {} frames, {} instances: triple={} no_helmet_riders={} helmet_instances={}",
        scene.gt.len(),
        cfg.n_instances,
        counts.triple_instances,
        counts.no_helmet_riders,
        counts.helmet_violation_instances
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval_cmd(
    detections: &Path,
    gt: &Path,
    trap_model: Option<&Path>,
    amodal_model: Option<&Path>,
    config: &Option<PathBuf>,
    mode: &str,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let base_cfg = load_config(config, seed)?;
    let det_frames = read_stream(detections)?;
    let gt_frames = read_stream(gt)?;
    let trap = trap_model.map(load_model).transpose()?;
    let amodal = amodal_model.map(load_model).transpose()?;
    let modes: Vec<AssociationMode> = if mode == "all" {
        AssociationMode::ALL.to_vec()
    } else {
        vec![AssociationMode::parse(mode)
            .with_context(|| format!("unknown association mode {mode:?}"))?]
    };
    let mut doc = eval::ScoresDoc {
        iou_threshold: base_cfg.eval_iou_threshold,
        violation_min_frames: base_cfg.tracker.violation_min_frames,
        modes: Vec::new(),
    };
    for m in modes {
        let mut cfg = base_cfg.clone();
        cfg.association_mode = m;
        let scores = eval::evaluate_mode(&cfg, trap.as_ref(), amodal.as_ref(), &det_frames, &gt_frames);
        println!(
            "{}: frame triple P={:.3} R={:.3} F={:.3} | counts {:?} vs gt {:?}",
            scores.mode,
            scores.frame.triple.precision,
            scores.frame.triple.recall,
            scores.frame.triple.f_score,
            scores.counts,
            scores.gt_counts
        );
        doc.modes.push(scores);
    }
    std::fs::write(out, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("write {}", out.display()))?;
    Ok(())
}

fn fill_amodal_cmd(
    annotations: &Path,
    model: &Path,
    out: &Path,
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let ann = AnnotationSet::from_records(&read_stream(annotations)?)?;
    let model = load_model(model)?;
    let before = missing_rider_rate(&ann, &model, cfg.occluded_rider_iou, cfg.min_box_area)?;
    let (filled, stats) = amodal_fill(&ann, &model, cfg.occluded_rider_iou, cfg.min_box_area)?;
    let after = missing_rider_rate(&filled, &model, cfg.occluded_rider_iou, cfg.min_box_area)?;
    write_stream(out, &filled.to_records())?;
    println!(
        "headgear={} filled={} small_dropped={} invalid={} missing_rate {:.4} -> {:.4}",
        stats.headgear_total,
        stats.filled,
        stats.small_dropped,
        stats.invalid_predictions,
        before,
        after
    );
    Ok(())
}

fn parse_weights(csv: &str) -> Result<[f64; 5]> {
    let parts: Vec<f64> = csv
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("rider weights {csv:?}"))?;
    if parts.len() != 5 {
        bail!("need exactly 5 rider-count weights, got {}", parts.len());
    }
    Ok([parts[0], parts[1], parts[2], parts[3], parts[4]])
}

fn split_holdout(
    samples: &[(Vec<f64>, Vec<f64>)],
    holdout: Option<f64>,
) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<(Vec<f64>, Vec<f64>)>) {
    let Some(frac) = holdout.filter(|f| *f > 0.0 && *f < 1.0) else {
        return (samples.to_vec(), Vec::new());
    };
    let stride = (1.0 / frac).round().max(2.0) as usize;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if i % stride == stride - 1 {
            held.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    (train, held)
}

fn write_stream(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("create {}", path.display()))?);
    records::write_frames(&mut file, frames)?;
    file.flush()?;
    Ok(())
}
