//! Command-line surface: render, animate, train, eval, generate.
//!
//! Exit codes are a stable contract: 0 success, 2 input error, 3 missing
//! state or prerequisite, 4 numerical failure.

mod commands;
mod config;

pub use config::{RunManifest, TrainFileConfig};

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STATE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn state(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_STATE,
            message: message.into(),
        }
    }
}

impl From<crate::training::TrainError> for CliError {
    fn from(e: crate::training::TrainError) -> Self {
        let code = match &e {
            crate::training::TrainError::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<crate::gsplat::GsplatError> for CliError {
    fn from(e: crate::gsplat::GsplatError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<crate::rigging::RigError> for CliError {
    fn from(e: crate::rigging::RigError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<crate::motiongen::MotionError> for CliError {
    fn from(e: crate::motiongen::MotionError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<crate::numcore::NumError> for CliError {
    fn from(e: crate::numcore::NumError) -> Self {
        CliError::input(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "rsat",
    version,
    about = "Socially-conditioned talking-head avatars on Gaussian splatting"
)]
pub struct Cli {
    /// Worker-thread cap; RSAT_THREADS is honored when unset.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a Gaussian scene through a camera into a PPM/PNG image.
    Render {
        /// Scene JSON (background + Gaussians).
        #[arg(long)]
        scene: PathBuf,
        /// Camera JSON.
        #[arg(long)]
        camera: PathBuf,
        /// Output image (.ppm or .png).
        #[arg(long)]
        out: PathBuf,
        /// Override the camera resolution, e.g. 64x64.
        #[arg(long)]
        resolution: Option<String>,
    },
    /// Animate a rigged avatar over a motion sequence, one image per frame.
    Animate {
        /// Base mesh (Wavefront OBJ, v/f records).
        #[arg(long)]
        mesh: PathBuf,
        /// Blendshape basis (BSB1).
        #[arg(long)]
        basis: PathBuf,
        /// Motion sequence (MSQ1).
        #[arg(long)]
        motion: PathBuf,
        /// Bound-set checkpoint (JSON header; payload sits next to it).
        #[arg(long)]
        boundset: PathBuf,
        /// Camera JSON.
        #[arg(long)]
        camera: PathBuf,
        /// Output directory for frame-%05d images.
        #[arg(long)]
        out: PathBuf,
        /// Render at most this many frames.
        #[arg(long)]
        frames: Option<usize>,
        /// Override the camera resolution, e.g. 64x64.
        #[arg(long)]
        resolution: Option<String>,
        /// Background color r,g,b in [0,1].
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
        background: Vec<f64>,
        /// Write PNG instead of PPM.
        #[arg(long)]
        png: bool,
    },
    /// Run one training stage; writes a checkpoint and a per-step loss log.
    Train {
        /// Stage to run.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        stage: u8,
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        /// Pipeline config JSON (or an emitted run manifest).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Global seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stage-1 checkpoint (required by stage 3).
        #[arg(long)]
        ckpt1: Option<PathBuf>,
        /// Stage-2 checkpoint (required by stage 3).
        #[arg(long)]
        ckpt2: Option<PathBuf>,
    },
    /// Compare predicted clips against ground truth; writes a metrics JSON.
    Eval {
        /// Manifest of predicted clips.
        #[arg(long)]
        pred: PathBuf,
        /// Manifest of ground-truth clips.
        #[arg(long)]
        gt: PathBuf,
        /// Output report path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate speaker-B motion from both speakers' audio and speaker-A motion.
    Generate {
        #[arg(long)]
        audio_a: PathBuf,
        #[arg(long)]
        audio_b: PathBuf,
        #[arg(long)]
        motion_a: PathBuf,
        /// Relationship axes: one of blood|non-blood plus one of
        /// equal|non-equal (comma-separated or repeated).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        relationship: Vec<String>,
        /// Model checkpoint (stage 1 or stage 3).
        #[arg(long)]
        ckpt: PathBuf,
        /// Output motion file (MSQ1).
        #[arg(long)]
        out: PathBuf,
        /// Global seed, echoed into the run manifest.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_threads(explicit: Option<usize>) {
    let n = explicit.or_else(|| {
        std::env::var("RSAT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

/// Parse argv, dispatch, and return the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let result = match cli.command {
        Command::Render {
            scene,
            camera,
            out,
            resolution,
        } => commands::cmd_render(&scene, &camera, &out, resolution.as_deref()),
        Command::Animate {
            mesh,
            basis,
            motion,
            boundset,
            camera,
            out,
            frames,
            resolution,
            background,
            png,
        } => commands::cmd_animate(commands::AnimateArgs {
            mesh,
            basis,
            motion,
            boundset,
            camera,
            out,
            frames,
            resolution,
            background: [background[0], background[1], background[2]],
            png,
        }),
        Command::Train {
            stage,
            manifest,
            config,
            out,
            seed,
            ckpt1,
            ckpt2,
        } => commands::cmd_train(commands::TrainArgs {
            stage,
            manifest,
            config,
            out,
            seed,
            ckpt1,
            ckpt2,
        }),
        Command::Eval { pred, gt, out } => commands::cmd_eval(&pred, &gt, &out),
        Command::Generate {
            audio_a,
            audio_b,
            motion_a,
            relationship,
            ckpt,
            out,
            seed,
        } => commands::cmd_generate(commands::GenerateArgs {
            audio_a,
            audio_b,
            motion_a,
            relationship,
            ckpt,
            out,
            seed,
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Parse "WxH".
pub(crate) fn parse_resolution(spec: &str) -> Result<(usize, usize), CliError> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError::input(format!("resolution must look like 64x64, got {spec:?}")))?;
    let w = w
        .parse()
        .map_err(|e| CliError::input(format!("bad resolution width {w:?}: {e}")))?;
    let h = h
        .parse()
        .map_err(|e| CliError::input(format!("bad resolution height {h:?}: {e}")))?;
    Ok((w, h))
}

/// Parse the two relationship axis tokens.
pub(crate) fn parse_relationship(
    tokens: &[String],
) -> Result<crate::social::SocialRelationship, CliError> {
    let mut blood: Option<bool> = None;
    let mut equal: Option<bool> = None;
    for t in tokens {
        match t.trim() {
            "blood" => blood = Some(true),
            "non-blood" | "non_blood" => blood = Some(false),
            "equal" => equal = Some(true),
            "non-equal" | "non_equal" => equal = Some(false),
            other => {
                return Err(CliError::input(format!(
                    "unknown relationship token {other:?} (expected blood|non-blood and equal|non-equal)"
                )))
            }
        }
    }
    match (blood, equal) {
        (Some(blood), Some(equal)) => Ok(crate::social::SocialRelationship { blood, equal }),
        _ => Err(CliError::input(
            "relationship needs one of blood|non-blood and one of equal|non-equal",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolution_parsing() {
        assert_eq!(parse_resolution("64x48").unwrap(), (64, 48));
        assert!(parse_resolution("64").is_err());
        assert!(parse_resolution("ax4").is_err());
    }

    #[test]
    fn relationship_parsing() {
        let r = parse_relationship(&["blood".into(), "non-equal".into()]).unwrap();
        assert!(r.blood && !r.equal);
        assert!(parse_relationship(&["blood".into()]).is_err());
        assert!(parse_relationship(&["nope".into(), "equal".into()]).is_err());
    }
}
