//! Dataset manifests (JSON) and in-memory training clips, plus the
//! synthetic dyadic datasets used for verification.

use super::TrainError;
use crate::gsplat::scene::load_camera;
use crate::gsplat::{Camera, Image};
use crate::motiongen::{AudioFeatureSeq, MotionSeq};
use crate::numcore::Rng;
use crate::rigging::MotionGroups;
use crate::social::SocialRelationship;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameEntry {
    pub camera: PathBuf,
    pub image: PathBuf,
    pub motion_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipEntry {
    #[serde(rename = "audio_A")]
    pub audio_a: PathBuf,
    #[serde(rename = "audio_B")]
    pub audio_b: PathBuf,
    #[serde(rename = "motion_A")]
    pub motion_a: PathBuf,
    #[serde(rename = "motion_B")]
    pub motion_b: PathBuf,
    pub relationship: SocialRelationship,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<FrameEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub clips: Vec<ClipEntry>,
}

/// Ground-truth frame for rendering losses.
#[derive(Debug, Clone)]
pub struct GtFrame {
    pub camera: Camera,
    pub image: Image,
    pub motion_index: usize,
}

/// Fully loaded training clip.
#[derive(Debug, Clone)]
pub struct TrainClip {
    pub id: String,
    pub audio_a: AudioFeatureSeq,
    pub audio_b: AudioFeatureSeq,
    pub motion_a: MotionSeq,
    pub motion_b: MotionSeq,
    pub relationship: SocialRelationship,
    pub frames: Vec<GtFrame>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| TrainError::Parse {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("manifest serializes"),
        )
        .map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    /// Load every clip, resolving paths relative to the manifest location.
    pub fn load_clips(&self, manifest_path: &Path) -> Result<Vec<TrainClip>, TrainError> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        self.clips
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let frames = match &entry.frames {
                    None => Vec::new(),
                    Some(list) => list
                        .iter()
                        .map(|f| {
                            Ok(GtFrame {
                                camera: load_camera(&resolve(&f.camera))?,
                                image: Image::read(&resolve(&f.image))?,
                                motion_index: f.motion_index,
                            })
                        })
                        .collect::<Result<Vec<_>, TrainError>>()?,
                };
                Ok(TrainClip {
                    id: entry.id.clone().unwrap_or_else(|| format!("clip{i:04}")),
                    audio_a: AudioFeatureSeq::load(&resolve(&entry.audio_a))?,
                    audio_b: AudioFeatureSeq::load(&resolve(&entry.audio_b))?,
                    motion_a: MotionSeq::load(&resolve(&entry.motion_a))?,
                    motion_b: MotionSeq::load(&resolve(&entry.motion_b))?,
                    relationship: entry.relationship,
                    frames,
                })
            })
            .collect()
    }
}

/// Smooth bounded signal: a small sum of sines with random phases.
fn smooth_signal(rng: &mut Rng, t: usize, dims: usize, amplitude: f64) -> Vec<f64> {
    let mut out = vec![0.0; t * dims];
    for d in 0..dims {
        let f1 = rng.range(0.5, 2.0);
        let f2 = rng.range(2.0, 5.0);
        let p1 = rng.range(0.0, std::f64::consts::TAU);
        let p2 = rng.range(0.0, std::f64::consts::TAU);
        let a2 = rng.range(0.1, 0.4);
        for i in 0..t {
            let x = i as f64 / t.max(1) as f64 * std::f64::consts::TAU;
            out[i * dims + d] = amplitude * ((f1 * x + p1).sin() + a2 * (f2 * x + p2).sin());
        }
    }
    out
}

/// Configuration of the synthetic dyadic dataset: identical inputs across
/// relationship classes, targets scaled by a per-class amplitude, so the
/// social pathway is the only route to the target.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSocialSpec {
    pub clips_per_class: usize,
    pub frames: usize,
    pub d_audio: usize,
    pub groups: MotionGroups,
    pub fps: f64,
    /// Target amplitude per relationship class index.
    pub amplitudes: [f64; 4],
}

impl Default for SyntheticSocialSpec {
    fn default() -> Self {
        SyntheticSocialSpec {
            clips_per_class: 20,
            frames: 8,
            d_audio: 8,
            groups: MotionGroups {
                exp: 4,
                jaw: 1,
                pose: 6,
            },
            fps: 25.0,
            amplitudes: [0.25, 0.5, 1.0, 2.0],
        }
    }
}

/// Build the synthetic relationship-conditioned dataset. Clip `i` of every
/// class shares audio, speaker-A motion, and base target pattern; only the
/// amplitude differs by class.
pub fn synthetic_social_dataset(seed: u64, spec: &SyntheticSocialSpec) -> Vec<TrainClip> {
    let mut clips = Vec::with_capacity(4 * spec.clips_per_class);
    let p = spec.groups.total();
    for i in 0..spec.clips_per_class {
        // one RNG per clip index: classes share the same draw
        let mut rng = Rng::seed_from(seed ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let audio_a = AudioFeatureSeq::new(
            smooth_signal(&mut rng, spec.frames, spec.d_audio, 1.0),
            spec.frames,
            spec.d_audio,
            spec.fps,
        )
        .expect("synthetic audio is well-formed");
        let audio_b = AudioFeatureSeq::new(
            smooth_signal(&mut rng, spec.frames, spec.d_audio, 1.0),
            spec.frames,
            spec.d_audio,
            spec.fps,
        )
        .expect("synthetic audio is well-formed");
        let motion_a = MotionSeq::new(
            smooth_signal(&mut rng, spec.frames, p, 0.5),
            spec.frames,
            spec.groups,
            spec.fps,
        )
        .expect("synthetic motion is well-formed");
        let base_pattern = smooth_signal(&mut rng, spec.frames, p, 1.0);
        for (class, rel) in SocialRelationship::ALL.iter().enumerate() {
            let target: Vec<f64> = base_pattern
                .iter()
                .map(|v| v * spec.amplitudes[class])
                .collect();
            clips.push(TrainClip {
                id: format!("class{class}_clip{i:03}"),
                audio_a: audio_a.clone(),
                audio_b: audio_b.clone(),
                motion_a: motion_a.clone(),
                motion_b: MotionSeq::new(target, spec.frames, spec.groups, spec.fps)
                    .expect("synthetic target is well-formed"),
                relationship: *rel,
                frames: Vec::new(),
            });
        }
    }
    clips
}
