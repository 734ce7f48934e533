//! One handler per subcommand. Handlers return the stdout payload; errors
//! carry the exit code through [`CliError`].

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use fitcheck_core::config::PipelineConfig;
use fitcheck_core::fusion::{plan_segments, FusionPlan};
use fitcheck_core::imu::{extract_signature, ImuError, ImuRecording, MotionSignature};
use fitcheck_core::mra::{self, naive, AttentionWeights, FeatureMap};
use fitcheck_core::pose::{ground_pose_sequence, GroundSpec, PoseError, PoseSequence};
use fitcheck_core::retrieval::{
    classify_orientation, load_background_db, load_motion_db, retrieve_backgrounds,
    retrieve_motions, RankedResult, RetrievalError,
};
use fitcheck_core::sampling::{
    apply_condition_dropout, choose_finetune_gt, gate_augmentation, sample_training_window,
    ConditioningSet, FinetuneGt, SeededRng, VideoMeta, WindowMode,
};

use crate::args::Format;
use crate::util::{checksum, data_err, parse_normal, relative_to, usage_err, CliError};

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    text
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("failed to read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| data_err(format!("failed to write {}: {e}", path.display())))
}

fn imu_error(path: &Path, err: ImuError) -> CliError {
    match err {
        ImuError::InvalidCutoff { .. } => usage_err(err.to_string()),
        other => data_err(format!("{}: {other}", path.display())),
    }
}

fn retrieval_error(err: RetrievalError) -> CliError {
    match err {
        RetrievalError::InvalidK => usage_err(err.to_string()),
        other => data_err(other.to_string()),
    }
}

fn ranked_table(results: &[RankedResult]) -> String {
    let mut out = String::from("rank  score         id\n");
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!("{:<5} {:<13.6} {}\n", i + 1, r.score, r.id));
    }
    out
}

pub fn imu_signature(
    input: &Path,
    out: &Path,
    cutoff: f64,
    format: Format,
) -> Result<String, CliError> {
    let text = read_file(input)?;
    let rec = ImuRecording::from_jsonl(&text).map_err(|e| imu_error(input, e))?;
    let sig = extract_signature(&rec, cutoff).map_err(|e| imu_error(input, e))?;
    write_file(out, &to_pretty_json(&sig))?;

    let duration = rec.samples().last().unwrap().t - rec.samples()[0].t;
    #[derive(Serialize)]
    struct Summary<'a> {
        samples: usize,
        duration_s: f64,
        sample_rate_hz: f64,
        cutoff_hz: f64,
        out: &'a str,
    }
    let summary = Summary {
        samples: rec.samples().len(),
        duration_s: duration,
        sample_rate_hz: rec.sample_rate(),
        cutoff_hz: cutoff,
        out: &out.display().to_string(),
    };
    Ok(match format {
        Format::Json => to_pretty_json(&summary),
        Format::Table => format!(
            "{} samples over {:.2} s ({:.1} Hz), cutoff {:.1} Hz -> {}\n",
            summary.samples, summary.duration_s, summary.sample_rate_hz, cutoff, summary.out
        ),
    })
}

pub fn retrieve_motion(
    db_path: &Path,
    query_path: &Path,
    k: usize,
    alpha: f64,
    format: Format,
) -> Result<String, CliError> {
    let db = load_motion_db(db_path).map_err(retrieval_error)?;
    let query: MotionSignature = serde_json::from_str(&read_file(query_path)?)
        .map_err(|e| data_err(format!("failed to parse {}: {e}", query_path.display())))?;
    let results = retrieve_motions(&db, &query, k, alpha).map_err(retrieval_error)?;
    Ok(match format {
        Format::Json => to_pretty_json(&results),
        Format::Table => ranked_table(&results),
    })
}

pub fn retrieve_background(
    db_path: &Path,
    normal_spec: &str,
    k: usize,
    format: Format,
) -> Result<String, CliError> {
    let db = load_background_db(db_path).map_err(retrieval_error)?;
    let normal = parse_normal(normal_spec)?;
    let results = retrieve_backgrounds(&db, &normal, k).map_err(retrieval_error)?;
    Ok(match format {
        Format::Json => to_pretty_json(&results),
        Format::Table => ranked_table(&results),
    })
}

fn pose_error(err: PoseError) -> CliError {
    match err {
        PoseError::GroundLineOutOfFrame { .. } | PoseError::InvalidHeightFraction(_) => {
            usage_err(err.to_string())
        }
        other => data_err(other.to_string()),
    }
}

#[derive(Serialize)]
struct GroundingSummary {
    scale: f64,
    translation: [f64; 2],
    ground_y: f64,
    center_x: f64,
    height_frac: f64,
}

pub fn ground_pose(
    pose_path: &Path,
    ground_y: f64,
    center_x: Option<f64>,
    height_frac: f64,
    conf_threshold: f64,
    out: Option<&Path>,
    format: Format,
) -> Result<String, CliError> {
    let pose = PoseSequence::load(pose_path).map_err(pose_error)?;
    let center_x = center_x.unwrap_or(f64::from(pose.frame_size().0) / 2.0);
    let spec = GroundSpec {
        ground_y,
        target_height_frac: height_frac,
        center_x,
    };
    let (grounded, transform) =
        ground_pose_sequence(&pose, &spec, conf_threshold).map_err(pose_error)?;
    let summary = GroundingSummary {
        scale: transform.scale,
        translation: transform.translation,
        ground_y,
        center_x,
        height_frac,
    };

    if let Some(out) = out {
        write_file(out, &to_pretty_json(&grounded))?;
        return Ok(match format {
            Format::Json => to_pretty_json(&summary),
            Format::Table => format!(
                "scale {:.6}, translation ({:.3}, {:.3}) -> {}\n",
                transform.scale,
                transform.translation[0],
                transform.translation[1],
                out.display()
            ),
        });
    }
    Ok(match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Full {
                #[serde(flatten)]
                summary: GroundingSummary,
                pose: PoseSequence,
            }
            to_pretty_json(&Full {
                summary,
                pose: grounded,
            })
        }
        Format::Table => format!(
            "scale {:.6}, translation ({:.3}, {:.3}), {} frames grounded\n",
            transform.scale,
            transform.translation[0],
            transform.translation[1],
            grounded.frame_count()
        ),
    })
}

fn plan_summary_table(plan: &FusionPlan) -> String {
    let mut out = format!(
        "{} content frames, T = {}, overlap = {}, {} segments\n",
        plan.total_content_frames,
        plan.segment_content_len,
        plan.overlap,
        plan.segments.len()
    );
    for s in &plan.segments {
        out.push_str(&format!(
            "segment {}: frames [{}, {})\n",
            s.index, s.start, s.end
        ));
    }
    out
}

pub fn plan_fusion(
    frames: usize,
    t: Option<usize>,
    overlap: Option<usize>,
    out: Option<&Path>,
    config: &PipelineConfig,
    format: Format,
) -> Result<String, CliError> {
    let t = t.unwrap_or(config.content_frames_t);
    let overlap = overlap.unwrap_or(config.overlap_frames);
    let plan = plan_segments(frames, t, overlap).map_err(|e| usage_err(e.to_string()))?;

    if let Some(out) = out {
        write_file(out, &to_pretty_json(&plan))?;
        return Ok(match format {
            Format::Json => to_pretty_json(&serde_json::json!({
                "segments": plan.segments.len(),
                "out": out.display().to_string(),
            })),
            Format::Table => format!("{} segments -> {}\n", plan.segments.len(), out.display()),
        });
    }
    Ok(match format {
        Format::Json => to_pretty_json(&plan),
        Format::Table => plan_summary_table(&plan),
    })
}

pub fn mra_demo(
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
    format: Format,
) -> Result<String, CliError> {
    if frames < 3 {
        return Err(usage_err(format!(
            "--frames {frames} too small: need 2 reference slots plus at least 1 content frame"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let x = FeatureMap::from_fn(frames, height, width, channels, |_, _, _, _| {
        rng.uniform() * 2.0 - 1.0
    });
    let gen_weight = |rng: &mut SeededRng| -> Vec<f64> {
        (0..channels * channels)
            .map(|_| rng.uniform() * 2.0 - 1.0)
            .collect()
    };
    let weights = AttentionWeights::new(
        channels,
        gen_weight(&mut rng),
        gen_weight(&mut rng),
        gen_weight(&mut rng),
        None,
    )
    .map_err(|e| usage_err(e.to_string()))?;

    let output =
        mra::multi_reference_attention(&x, &weights).map_err(|e| data_err(e.to_string()))?;
    let reference =
        naive::multi_reference_attention(&x, &weights).map_err(|e| data_err(e.to_string()))?;
    let max_diff = output.max_abs_diff(&reference);
    let oracle_ok = max_diff < 1e-9;

    #[derive(Serialize)]
    struct Demo {
        seed: u64,
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        input_checksum: String,
        output_checksum: String,
        oracle_max_abs_diff: f64,
        oracle_ok: bool,
    }
    let demo = Demo {
        seed,
        frames,
        height,
        width,
        channels,
        input_checksum: format!("{:016x}", checksum(x.data())),
        output_checksum: format!("{:016x}", checksum(output.data())),
        oracle_max_abs_diff: max_diff,
        oracle_ok,
    };
    if !oracle_ok {
        return Err(data_err(format!(
            "multi-reference attention diverged from the naive reference by {max_diff:e}"
        )));
    }
    Ok(match format {
        Format::Json => to_pretty_json(&demo),
        Format::Table => format!(
            "input  {}\noutput {}\noracle max |diff| = {:.3e} (ok)\n",
            demo.input_checksum, demo.output_checksum, max_diff
        ),
    })
}

#[derive(Serialize)]
struct RateLine {
    observed: f64,
    target: f64,
}

impl RateLine {
    fn new(hits: usize, draws: usize, target: f64) -> Self {
        Self {
            observed: hits as f64 / draws as f64,
            target,
        }
    }
}

/// Synthetic labeled video for the report: one full turn of yaw, so the
/// orientation classifier produces front, back and other bands.
fn report_video(frames: usize) -> VideoMeta {
    let labels = (0..frames)
        .map(|i| {
            let yaw = i as f64 * 360.0 / frames as f64;
            classify_orientation(yaw).expect("yaw in range")
        })
        .collect();
    VideoMeta::new(labels)
}

pub fn sample_report(
    draws: usize,
    seed: u64,
    config: &PipelineConfig,
    format: Format,
) -> Result<String, CliError> {
    if draws == 0 {
        return Err(usage_err("--draws must be at least 1"));
    }
    let root = SeededRng::new(seed);
    let video = report_video(48);
    let t = config.content_frames_t.min(video.frame_count());
    let probs = config.window_policy_probs;

    let mut window_rng = root.fork(0);
    let mut mode_counts = [0usize; 3];
    for _ in 0..draws {
        let (_, mode) = sample_training_window(&video, t, &mut window_rng, probs)
            .map_err(|e| data_err(e.to_string()))?;
        mode_counts[match mode {
            WindowMode::Random => 0,
            WindowMode::MustFront => 1,
            WindowMode::MustBack => 2,
        }] += 1;
    }

    let mut dropout_rng = root.fork(1);
    let mut dropped = [0usize; 3];
    for _ in 0..draws {
        let out = apply_condition_dropout(
            ConditioningSet::all(),
            &mut dropout_rng,
            config.dropout_prob,
        )
        .map_err(|e| data_err(e.to_string()))?;
        if !out.has_vae {
            dropped[0] += 1;
        }
        if !out.has_image {
            dropped[1] += 1;
        }
        if !out.has_pose {
            dropped[2] += 1;
        }
    }

    let mut augment_rng = root.fork(2);
    let mut augmented = 0usize;
    for _ in 0..draws {
        if gate_augmentation(&mut augment_rng, config.augment_prob)
            .map_err(|e| data_err(e.to_string()))?
        {
            augmented += 1;
        }
    }

    let mut finetune_rng = root.fork(3);
    let mut front_gt = 0usize;
    for _ in 0..draws {
        if choose_finetune_gt(&mut finetune_rng, config.finetune_front_gt_prob)
            .map_err(|e| data_err(e.to_string()))?
            == FinetuneGt::FrontGt
        {
            front_gt += 1;
        }
    }

    #[derive(Serialize)]
    struct Report {
        seed: u64,
        draws: usize,
        window_modes: WindowRates,
        condition_dropout: DropoutRates,
        augmentation_gate: RateLine,
        finetune_front_gt: RateLine,
    }
    #[derive(Serialize)]
    struct WindowRates {
        random: RateLine,
        must_front: RateLine,
        must_back: RateLine,
    }
    #[derive(Serialize)]
    struct DropoutRates {
        vae: RateLine,
        image: RateLine,
        pose: RateLine,
    }

    let report = Report {
        seed,
        draws,
        window_modes: WindowRates {
            random: RateLine::new(mode_counts[0], draws, probs[0]),
            must_front: RateLine::new(mode_counts[1], draws, probs[1]),
            must_back: RateLine::new(mode_counts[2], draws, probs[2]),
        },
        condition_dropout: DropoutRates {
            vae: RateLine::new(dropped[0], draws, config.dropout_prob),
            image: RateLine::new(dropped[1], draws, config.dropout_prob),
            pose: RateLine::new(dropped[2], draws, config.dropout_prob),
        },
        augmentation_gate: RateLine::new(augmented, draws, config.augment_prob),
        finetune_front_gt: RateLine::new(front_gt, draws, config.finetune_front_gt_prob),
    };

    Ok(match format {
        Format::Json => to_pretty_json(&report),
        Format::Table => {
            let line = |name: &str, r: &RateLine| {
                format!(
                    "{name:<22} observed {:.4}  target {:.4}\n",
                    r.observed, r.target
                )
            };
            let mut out = format!("{} draws, seed {}\n", draws, seed);
            out.push_str(&line("window random", &report.window_modes.random));
            out.push_str(&line("window must-front", &report.window_modes.must_front));
            out.push_str(&line("window must-back", &report.window_modes.must_back));
            out.push_str(&line("dropout vae", &report.condition_dropout.vae));
            out.push_str(&line("dropout image", &report.condition_dropout.image));
            out.push_str(&line("dropout pose", &report.condition_dropout.pose));
            out.push_str(&line("augmentation gate", &report.augmentation_gate));
            out.push_str(&line("finetune front GT", &report.finetune_front_gt));
            out
        }
    })
}

/// Resolves `--pick`; without it, prompts on stderr and reads one 1-based
/// rank from stdin.
fn pick_rank(pick: Option<usize>, results: &[RankedResult], what: &str) -> Result<usize, CliError> {
    if let Some(rank) = pick {
        if (1..=results.len()).contains(&rank) {
            return Ok(rank);
        }
        return Err(usage_err(format!(
            "pick {rank} for {what} out of range 1..={}",
            results.len()
        )));
    }
    eprintln!("Select a {what}:");
    for (i, r) in results.iter().enumerate() {
        eprintln!("  [{}] {} (score {:.4})", i + 1, r.id, r.score);
    }
    eprint!("> ");
    let _ = std::io::stderr().flush();
    let mut line = String::new();
    let read = std::io::stdin()
        .lock()
        .read_line(&mut line)
        .map_err(|e| usage_err(format!("failed to read selection: {e}")))?;
    if read == 0 {
        return Err(usage_err(format!(
            "no {what} selection on stdin; pass --pick / --pick-bg for non-interactive use"
        )));
    }
    let rank: usize = line
        .trim()
        .parse()
        .map_err(|_| usage_err(format!("invalid {what} selection `{}`", line.trim())))?;
    if (1..=results.len()).contains(&rank) {
        Ok(rank)
    } else {
        Err(usage_err(format!(
            "selection {rank} for {what} out of range 1..={}",
            results.len()
        )))
    }
}

pub struct PipelineArgs<'a> {
    pub imu: &'a Path,
    pub motion_db: &'a Path,
    pub background_db: &'a Path,
    pub normal: &'a str,
    pub k: usize,
    pub pick: Option<usize>,
    pub pick_bg: Option<usize>,
    pub ground_y: f64,
    pub center_x: Option<f64>,
    pub height_frac: f64,
    pub conf_threshold: f64,
    pub cutoff: f64,
    pub out_dir: &'a Path,
}

#[derive(Serialize)]
struct ManifestSelection {
    rank: usize,
    id: String,
    score: f64,
    path: String,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    k: usize,
    inputs: ManifestInputs,
    reference_normal: [f64; 3],
    artifacts: ManifestArtifacts,
    selected_motion: ManifestSelection,
    selected_background: ManifestSelection,
    grounding: GroundingSummary,
    fusion: ManifestFusion,
    config: PipelineConfig,
}

#[derive(Serialize)]
struct ManifestInputs {
    imu_log: String,
    motion_db: String,
    background_db: String,
}

#[derive(Serialize)]
struct ManifestArtifacts {
    signature: String,
    motion_candidates: String,
    background_candidates: String,
    grounded_pose: String,
    fusion_plan: String,
}

#[derive(Serialize)]
struct ManifestFusion {
    total_content_frames: usize,
    segment_content_len: usize,
    overlap: usize,
    segment_starts: Vec<usize>,
}

pub fn pipeline(
    args: &PipelineArgs<'_>,
    config: &PipelineConfig,
    seed: u64,
    format: Format,
) -> Result<String, CliError> {
    std::fs::create_dir_all(args.out_dir)
        .map_err(|e| data_err(format!("failed to create {}: {e}", args.out_dir.display())))?;
    let artifact = |name: &str| args.out_dir.join(name);
    let rel = |path: &Path| relative_to(args.out_dir, path).display().to_string();

    // IMU log -> signature.
    let text = read_file(args.imu)?;
    let rec = ImuRecording::from_jsonl(&text).map_err(|e| imu_error(args.imu, e))?;
    let signature = extract_signature(&rec, args.cutoff).map_err(|e| imu_error(args.imu, e))?;
    write_file(&artifact("signature.json"), &to_pretty_json(&signature))?;

    // Top-k motions, one-shot selection.
    let motion_db = load_motion_db(args.motion_db).map_err(retrieval_error)?;
    let motions = retrieve_motions(&motion_db, &signature, args.k, config.alpha_motion)
        .map_err(retrieval_error)?;
    write_file(&artifact("motion_topk.json"), &to_pretty_json(&motions))?;
    let motion_rank = pick_rank(args.pick, &motions, "motion")?;
    let picked_motion = &motions[motion_rank - 1];
    let motion_entry = motion_db
        .iter()
        .find(|e| e.id == picked_motion.id)
        .expect("ranked id exists in db");

    // Top-k backgrounds, one-shot selection.
    let reference_normal = parse_normal(args.normal)?;
    let background_db = load_background_db(args.background_db).map_err(retrieval_error)?;
    let backgrounds =
        retrieve_backgrounds(&background_db, &reference_normal, args.k).map_err(retrieval_error)?;
    write_file(
        &artifact("background_topk.json"),
        &to_pretty_json(&backgrounds),
    )?;
    let background_rank = pick_rank(args.pick_bg, &backgrounds, "background")?;
    let picked_background = &backgrounds[background_rank - 1];
    let background_entry = background_db
        .iter()
        .find(|e| e.id == picked_background.id)
        .expect("ranked id exists in db");

    // Paths inside a database file are relative to that file.
    let resolve_db_path = |db: &Path, stored: &str| -> PathBuf {
        let p = PathBuf::from(stored);
        if p.is_absolute() {
            p
        } else {
            db.parent().unwrap_or(Path::new(".")).join(p)
        }
    };

    // The selected motion's pose sequence, grounded into the background.
    let pose_path = resolve_db_path(args.motion_db, &motion_entry.pose_path);
    let pose = PoseSequence::load(&pose_path).map_err(pose_error)?;
    let center_x = args
        .center_x
        .unwrap_or(f64::from(pose.frame_size().0) / 2.0);
    let spec = GroundSpec {
        ground_y: args.ground_y,
        target_height_frac: args.height_frac,
        center_x,
    };
    let (grounded, transform) =
        ground_pose_sequence(&pose, &spec, args.conf_threshold).map_err(pose_error)?;
    write_file(&artifact("grounded_pose.json"), &to_pretty_json(&grounded))?;

    // Segment plan for the grounded sequence length.
    let plan = plan_segments(
        grounded.frame_count(),
        config.content_frames_t,
        config.overlap_frames,
    )
    .map_err(|e| data_err(e.to_string()))?;
    write_file(&artifact("fusion_plan.json"), &to_pretty_json(&plan))?;

    let manifest = Manifest {
        seed,
        k: args.k,
        inputs: ManifestInputs {
            imu_log: rel(args.imu),
            motion_db: rel(args.motion_db),
            background_db: rel(args.background_db),
        },
        reference_normal,
        artifacts: ManifestArtifacts {
            signature: "signature.json".into(),
            motion_candidates: "motion_topk.json".into(),
            background_candidates: "background_topk.json".into(),
            grounded_pose: "grounded_pose.json".into(),
            fusion_plan: "fusion_plan.json".into(),
        },
        selected_motion: ManifestSelection {
            rank: motion_rank,
            id: picked_motion.id.clone(),
            score: picked_motion.score,
            path: rel(&pose_path),
        },
        selected_background: ManifestSelection {
            rank: background_rank,
            id: picked_background.id.clone(),
            score: picked_background.score,
            path: rel(&resolve_db_path(
                args.background_db,
                &background_entry.image_path,
            )),
        },
        grounding: GroundingSummary {
            scale: transform.scale,
            translation: transform.translation,
            ground_y: args.ground_y,
            center_x,
            height_frac: args.height_frac,
        },
        fusion: ManifestFusion {
            total_content_frames: plan.total_content_frames,
            segment_content_len: plan.segment_content_len,
            overlap: plan.overlap,
            segment_starts: plan.segments.iter().map(|s| s.start).collect(),
        },
        config: config.clone(),
    };
    let manifest_json = to_pretty_json(&manifest);
    write_file(&artifact("manifest.json"), &manifest_json)?;

    Ok(match format {
        Format::Json => manifest_json,
        Format::Table => format!(
            "motion {} (rank {}), background {} (rank {}), {} frames, {} segments -> {}\n",
            picked_motion.id,
            motion_rank,
            picked_background.id,
            background_rank,
            grounded.frame_count(),
            plan.segments.len(),
            args.out_dir.join("manifest.json").display()
        ),
    })
}
