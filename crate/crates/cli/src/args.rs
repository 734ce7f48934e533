//! Command-line surface: one subcommand per pipeline stage plus the
//! end-to-end `pipeline` command. Every config field can be overridden by a
//! flag of the same name; `--config` points at a flat key = value file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "fitcheck",
    version,
    about = "Motion retrieval, pose grounding and generation scheduling for fit-check videos"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Config file: flat key = value lines, unknown keys rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output format for stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,

    /// RNG seed. The FITCHECK_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// Per-field config overrides; CLI beats file beats defaults.
#[derive(Debug, Args)]
pub struct ConfigOverrides {
    /// Content frames per segment (T).
    #[arg(long, global = true)]
    pub content_frames_t: Option<usize>,

    /// Overlapping content frames between segments.
    #[arg(long, global = true)]
    pub overlap_frames: Option<usize>,

    /// Guidance scale.
    #[arg(long, global = true)]
    pub guidance_scale: Option<f64>,

    /// Denoising steps.
    #[arg(long, global = true)]
    pub denoise_steps: Option<usize>,

    /// Translation weight in the combined motion distance.
    #[arg(long, global = true)]
    pub alpha_motion: Option<f64>,

    /// Frame width in pixels.
    #[arg(long, global = true)]
    pub frame_width: Option<u32>,

    /// Frame height in pixels.
    #[arg(long, global = true)]
    pub frame_height: Option<u32>,

    /// Loss weight inside shadow and reflection regions.
    #[arg(long, global = true)]
    pub loss_weight_beta: Option<f64>,

    /// Condition dropout probability.
    #[arg(long, global = true)]
    pub dropout_prob: Option<f64>,

    /// Reference augmentation probability.
    #[arg(long, global = true)]
    pub augment_prob: Option<f64>,

    /// Probability of front GT during fine-tuning.
    #[arg(long, global = true)]
    pub finetune_front_gt_prob: Option<f64>,

    /// Window mode probabilities as `random,must-front,must-back`.
    #[arg(long, global = true, value_parser = parse_prob_triple)]
    pub window_policy_probs: Option<ProbTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbTriple(pub [f64; 3]);

fn parse_prob_triple(s: &str) -> Result<ProbTriple, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    }
    let mut probs = [0.0; 3];
    for (slot, part) in probs.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad probability `{part}`: {e}"))?;
    }
    Ok(ProbTriple(probs))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an IMU log (JSON lines) into a motion signature file.
    ImuSignature {
        /// Input log: one {"t","ax","ay","az","yaw"} object per line.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output signature JSON.
        #[arg(long)]
        out: PathBuf,
        /// Low-pass cutoff in Hz.
        #[arg(long, default_value_t = 5.0)]
        cutoff: f64,
    },

    /// Rank motion candidates against a query signature.
    RetrieveMotion {
        /// Motion database JSON.
        #[arg(long)]
        db: PathBuf,
        /// Query signature JSON.
        #[arg(long)]
        query: PathBuf,
        /// Number of results.
        #[arg(short, default_value_t = 5)]
        k: usize,
    },

    /// Rank backgrounds by ground plane normal alignment.
    RetrieveBackground {
        /// Background database JSON.
        #[arg(long)]
        db: PathBuf,
        /// Reference normal: `x,y,z` or a path to a JSON file holding
        /// [x,y,z] or {"normal": [x,y,z]}. Normalized before use.
        #[arg(long)]
        normal: String,
        /// Number of results.
        #[arg(short, default_value_t = 5)]
        k: usize,
    },

    /// Scale and translate a pose sequence onto a ground line.
    GroundPose {
        /// Pose sequence JSON.
        #[arg(long)]
        pose: PathBuf,
        /// Image-space y of the ground contact line.
        #[arg(long)]
        ground_y: f64,
        /// Target horizontal center; defaults to half the pose frame width.
        #[arg(long)]
        center_x: Option<f64>,
        /// Subject height as a fraction of frame height.
        #[arg(long, default_value_t = 0.6)]
        height_frac: f64,
        /// Keypoint confidence threshold.
        #[arg(long, default_value_t = 0.3)]
        conf_threshold: f64,
        /// Write the grounded sequence here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Plan overlapping generation segments with blending weights.
    PlanFusion {
        /// Total content frames to generate (N).
        #[arg(long)]
        frames: usize,
        /// Content frames per segment; defaults to the config value.
        #[arg(long = "T")]
        t: Option<usize>,
        /// Overlapping frames; defaults to the config value.
        #[arg(long)]
        overlap: Option<usize>,
        /// Write the plan here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run multi-reference attention on seeded random features and check
    /// it against the naive reference implementation.
    MraDemo {
        /// Total frames including the two reference slots.
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
    },

    /// Print empirical frequencies of every sampling policy against its
    /// configured target.
    SampleReport {
        /// Number of draws per policy.
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },

    /// Full chain: IMU log -> signature -> top-k motions -> top-k
    /// backgrounds -> grounded pose -> fusion plan, plus a manifest.
    Pipeline {
        /// Input IMU log (JSON lines).
        #[arg(long)]
        imu: PathBuf,
        /// Motion database JSON.
        #[arg(long)]
        motion_db: PathBuf,
        /// Background database JSON.
        #[arg(long)]
        background_db: PathBuf,
        /// Reference ground normal for background retrieval (`x,y,z` or a
        /// JSON file); defaults to straight up.
        #[arg(long, default_value = "0,1,0")]
        normal: String,
        /// Number of candidates to retrieve per stage.
        #[arg(short, default_value_t = 5)]
        k: usize,
        /// 1-based rank of the motion to select; prompts when omitted.
        #[arg(long)]
        pick: Option<usize>,
        /// 1-based rank of the background to select; prompts when omitted.
        #[arg(long)]
        pick_bg: Option<usize>,
        /// Image-space y of the ground contact line.
        #[arg(long)]
        ground_y: f64,
        /// Target horizontal center; defaults to half the pose frame width.
        #[arg(long)]
        center_x: Option<f64>,
        /// Subject height as a fraction of frame height.
        #[arg(long, default_value_t = 0.6)]
        height_frac: f64,
        /// Keypoint confidence threshold.
        #[arg(long, default_value_t = 0.3)]
        conf_threshold: f64,
        /// Low-pass cutoff in Hz for the IMU stage.
        #[arg(long, default_value_t = 5.0)]
        cutoff: f64,
        /// Directory for all artifacts and the manifest.
        #[arg(long)]
        out_dir: PathBuf,
    },
}
