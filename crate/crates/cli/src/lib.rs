//! The `fitcheck` command line: argument parsing, config resolution and
//! dispatch. [`run`] is process-free (no exits, no global state) so the
//! whole surface is testable in-process; `main` just forwards.

mod args;
mod commands;
mod util;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use fitcheck_core::config::{load_config, PipelineConfig};

use args::{Cli, Command, GlobalArgs};
use util::{data_err, usage_err, CliError};

pub use args::Format;

/// Outcome of one invocation. Exit code 0 is success, 1 a usage error,
/// 2 a data error (missing or malformed input).
#[derive(Debug)]
pub struct CommandResult {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CommandResult {
    fn success(stdout: String) -> Self {
        Self {
            exit_code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn failure(err: CliError) -> Self {
        Self {
            exit_code: err.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {}\n", err.message()),
        }
    }
}

/// FITCHECK_SEED overrides the flag when set.
fn resolve_seed(flag_seed: u64) -> Result<u64, CliError> {
    match std::env::var("FITCHECK_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map_err(|_| usage_err(format!("FITCHECK_SEED=`{raw}` is not a valid seed"))),
        Err(_) => Ok(flag_seed),
    }
}

/// Config file, then flag overrides, then a final validation. File problems
/// are data errors; override combinations that break invariants are usage
/// errors.
fn resolve_config(global: &GlobalArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &global.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| data_err(format!("failed to read {}: {e}", path.display())))?;
            load_config(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };

    let o = &global.overrides;
    if let Some(v) = o.content_frames_t {
        config.content_frames_t = v;
    }
    if let Some(v) = o.overlap_frames {
        config.overlap_frames = v;
    }
    if let Some(v) = o.guidance_scale {
        config.guidance_scale = v;
    }
    if let Some(v) = o.denoise_steps {
        config.denoise_steps = v;
    }
    if let Some(v) = o.alpha_motion {
        config.alpha_motion = v;
    }
    if let Some(v) = o.frame_width {
        config.frame_width = v;
    }
    if let Some(v) = o.frame_height {
        config.frame_height = v;
    }
    if let Some(v) = o.loss_weight_beta {
        config.loss_weight_beta = v;
    }
    if let Some(v) = o.dropout_prob {
        config.dropout_prob = v;
    }
    if let Some(v) = o.augment_prob {
        config.augment_prob = v;
    }
    if let Some(v) = o.finetune_front_gt_prob {
        config.finetune_front_gt_prob = v;
    }
    if let Some(v) = o.window_policy_probs {
        config.window_policy_probs = v.0;
    }
    config.validate().map_err(|e| usage_err(e.to_string()))?;
    Ok(config)
}

/// Parses and runs one invocation, returning its exit code and streams.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult {
                    exit_code: 0,
                    stdout: rendered,
                    stderr: String::new(),
                },
                _ => CommandResult {
                    exit_code: 1,
                    stdout: String::new(),
                    stderr: rendered,
                },
            };
        }
    };

    let outcome = dispatch(&cli);
    match outcome {
        Ok(stdout) => CommandResult::success(stdout),
        Err(e) => CommandResult::failure(e),
    }
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let seed = resolve_seed(cli.global.seed)?;
    let config = resolve_config(&cli.global)?;
    let format = cli.global.format;

    match &cli.command {
        Command::ImuSignature { input, out, cutoff } => {
            commands::imu_signature(input, out, *cutoff, format)
        }
        Command::RetrieveMotion { db, query, k } => {
            commands::retrieve_motion(db, query, *k, config.alpha_motion, format)
        }
        Command::RetrieveBackground { db, normal, k } => {
            commands::retrieve_background(db, normal, *k, format)
        }
        Command::GroundPose {
            pose,
            ground_y,
            center_x,
            height_frac,
            conf_threshold,
            out,
        } => commands::ground_pose(
            pose,
            *ground_y,
            *center_x,
            *height_frac,
            *conf_threshold,
            out.as_deref(),
            format,
        ),
        Command::PlanFusion {
            frames,
            t,
            overlap,
            out,
        } => commands::plan_fusion(*frames, *t, *overlap, out.as_deref(), &config, format),
        Command::MraDemo {
            frames,
            height,
            width,
            channels,
        } => commands::mra_demo(*frames, *height, *width, *channels, seed, format),
        Command::SampleReport { draws } => commands::sample_report(*draws, seed, &config, format),
        Command::Pipeline {
            imu,
            motion_db,
            background_db,
            normal,
            k,
            pick,
            pick_bg,
            ground_y,
            center_x,
            height_frac,
            conf_threshold,
            cutoff,
            out_dir,
        } => commands::pipeline(
            &commands::PipelineArgs {
                imu,
                motion_db,
                background_db,
                normal,
                k: *k,
                pick: *pick,
                pick_bg: *pick_bg,
                ground_y: *ground_y,
                center_x: *center_x,
                height_frac: *height_frac,
                conf_threshold: *conf_threshold,
                cutoff: *cutoff,
                out_dir,
            },
            &config,
            seed,
            format,
        ),
    }
}
