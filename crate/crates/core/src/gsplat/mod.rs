//! 3D Gaussian splatting renderer: density evaluation, perspective
//! projection of anisotropic Gaussians, depth-sorted alpha blending, and an
//! analytic backward pass through the full render.

pub mod backward;
pub mod image;
pub mod math;
pub mod project;
pub mod raster;
pub mod scene;

pub use backward::{rasterize_backward, render_on_tape, RasterGrads, RenderStats};
pub use image::Image;
pub use project::{covariance_from_rs, evaluate_density, project_gaussian};
pub use raster::{rasterize, rasterize_naive, render_video, TILE_SIZE};
pub use scene::Scene;

use math::{orthonormality_defect, Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Screen-space dilation added to both eigendirections of every projected
/// covariance (standard splatting anti-aliasing floor, in px²).
pub const DILATION: f64 = 0.3;
/// Per-splat contribution clamp: α·G never exceeds this.
pub const ALPHA_CLAMP: f64 = 0.99;
/// Blending stops once residual transmittance falls below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Splat footprints are truncated at this many standard deviations. At 6.5σ
/// the discarded weight is below 7e-10, well under the renderer's 1e-6
/// analytic-profile tolerance.
pub const CUTOFF_SIGMA: f64 = 6.5;

#[derive(Debug, thiserror::Error)]
pub enum GsplatError {
    #[error("degenerate scale: {what}")]
    DegenerateScale { what: String },
    #[error("invalid camera: {what}")]
    InvalidCamera { what: String },
    #[error("i/o failed on {path}: {what}")]
    Io { path: String, what: String },
    #[error("parse failure in {path} at byte {offset}: {what}")]
    Parse {
        path: String,
        offset: usize,
        what: String,
    },
}

/// One 3D Gaussian primitive. Rotation is a quaternion (w, x, y, z),
/// renormalized on use; scales are stored as logarithms and opacity as a
/// logit so every gradient step keeps the primitive valid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Gaussian3D {
    pub position: Vec3,
    pub rotation: [f64; 4],
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub color: Vec3,
}

impl Gaussian3D {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vec3 {
        [
            self.log_scale[0].exp(),
            self.log_scale[1].exp(),
            self.log_scale[2].exp(),
        ]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pinhole camera with a rigid world-to-camera transform.
#[derive(Debug, Clone)]
pub struct Camera {
    rot: Mat3,
    trans: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        world_to_camera: [f64; 16],
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Result<Self, GsplatError> {
        let mut rot = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rot[i][j] = world_to_camera[i * 4 + j];
            }
        }
        let trans = [world_to_camera[3], world_to_camera[7], world_to_camera[11]];
        let defect = orthonormality_defect(&rot);
        if defect >= 1e-9 {
            return Err(GsplatError::InvalidCamera {
                what: format!("rotation block is not orthonormal (defect {defect:.3e})"),
            });
        }
        if near <= 0.0 {
            return Err(GsplatError::InvalidCamera {
                what: format!("near plane must be positive, got {near}"),
            });
        }
        if width == 0 || height == 0 {
            return Err(GsplatError::InvalidCamera {
                what: format!("degenerate viewport {width}x{height}"),
            });
        }
        Ok(Camera {
            rot,
            trans,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
        })
    }

    /// Axis-aligned camera at the origin looking down +z, principal point
    /// centered. Convenient for tests and synthetic scenes.
    pub fn simple(width: usize, height: usize, focal: f64, near: f64) -> Self {
        let mut w = [0.0; 16];
        w[0] = 1.0;
        w[5] = 1.0;
        w[10] = 1.0;
        w[15] = 1.0;
        Camera::new(
            w,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            near,
        )
        .expect("identity transform is valid")
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rot
    }

    pub fn translation(&self) -> &Vec3 {
        &self.trans
    }

    pub fn world_to_camera_matrix(&self) -> [f64; 16] {
        let mut w = [0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                w[i * 4 + j] = self.rot[i][j];
            }
        }
        w[3] = self.trans[0];
        w[7] = self.trans[1];
        w[11] = self.trans[2];
        w[15] = 1.0;
        w
    }

    pub fn to_camera_space(&self, p: &Vec3) -> Vec3 {
        math::add3(&math::mat3_mul_vec(&self.rot, p), &self.trans)
    }
}

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone)]
pub struct Splat2D {
    pub mean2d: [f64; 2],
    /// (xx, xy, yy) of the symmetric 2×2 covariance, dilation included.
    pub cov2d: [f64; 3],
    pub depth: f64,
    pub color: Vec3,
    pub alpha: f64,
    /// Source index; depth-sort tie-break, keeps renders order-stable.
    pub gaussian_index: usize,
}
