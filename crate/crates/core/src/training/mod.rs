//! Losses, metrics, checkpoints, datasets, and the three-stage schedule.

pub mod checkpoint;
pub mod dataset;
pub mod fd;
pub mod losses;
pub mod metrics;
pub mod ssim;
pub mod stages;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{
    synthetic_social_dataset, DatasetManifest, GtFrame, SyntheticSocialSpec, TrainClip,
};
pub use fd::{frechet_distance_sq, metric_fd, metric_pfd};
pub use losses::{dssim_value, l_image, l_joint, l_mesh, l_offset, l_pos, LossWeights};
pub use metrics::{metric_l1, metric_mse_images, metric_mse_motion, metric_psnr, metric_ssim};
pub use ssim::ssim_mean;
pub use stages::{
    build_model, run_stage1, run_stage2, run_stage3, stage2_frames, GaussianParams, ModelBundle,
    RendererBundle, Stage2Frame, StageConfig, TrainLog,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration error: {what}")]
    Config { what: String },
    #[error("contract violation: {what}")]
    Contract { what: String },
    #[error("numerical failure: {what}")]
    Numerical { what: String },
    #[error("i/o failed on {path}: {what}")]
    Io { path: String, what: String },
    #[error("parse failure in {path}: {what}")]
    Parse { path: String, what: String },
    #[error(transparent)]
    Num(#[from] crate::numcore::NumError),
    #[error(transparent)]
    Rig(#[from] crate::rigging::RigError),
    #[error(transparent)]
    Gsplat(#[from] crate::gsplat::GsplatError),
    #[error(transparent)]
    Motion(#[from] crate::motiongen::MotionError),
}
