//! Scene and camera file formats (JSON).

use super::{Camera, Gaussian3D, GsplatError};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A renderable set of Gaussians plus a background color.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Scene {
    pub background: [f64; 3],
    pub gaussians: Vec<Gaussian3D>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self, GsplatError> {
        let text = std::fs::read_to_string(path).map_err(|e| GsplatError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| GsplatError::Parse {
            path: path.display().to_string(),
            offset: e.column(),
            what: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GsplatError> {
        let text = serde_json::to_string_pretty(self).expect("scene serializes");
        std::fs::write(path, text).map_err(|e| GsplatError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }
}

/// On-disk camera document: `{W: 16 floats row-major, fx, fy, cx, cy,
/// width, height, near}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl CameraDoc {
    pub fn to_camera(&self, path_for_errors: &str) -> Result<Camera, GsplatError> {
        if self.w.len() != 16 {
            return Err(GsplatError::Parse {
                path: path_for_errors.to_string(),
                offset: 0,
                what: format!("camera W must have 16 entries, got {}", self.w.len()),
            });
        }
        let mut w = [0.0; 16];
        w.copy_from_slice(&self.w);
        Camera::new(
            w,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            self.near,
        )
    }

    pub fn from_camera(cam: &Camera) -> Self {
        CameraDoc {
            w: cam.world_to_camera_matrix().to_vec(),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            near: cam.near,
        }
    }
}

pub fn load_camera(path: &Path) -> Result<Camera, GsplatError> {
    let text = std::fs::read_to_string(path).map_err(|e| GsplatError::Io {
        path: path.display().to_string(),
        what: e.to_string(),
    })?;
    let doc: CameraDoc = serde_json::from_str(&text).map_err(|e| GsplatError::Parse {
        path: path.display().to_string(),
        offset: e.column(),
        what: e.to_string(),
    })?;
    doc.to_camera(&path.display().to_string())
}

pub fn save_camera(cam: &Camera, path: &Path) -> Result<(), GsplatError> {
    let doc = CameraDoc::from_camera(cam);
    let text = serde_json::to_string_pretty(&doc).expect("camera serializes");
    std::fs::write(path, text).map_err(|e| GsplatError::Io {
        path: path.display().to_string(),
        what: e.to_string(),
    })
}
