//! Audio-feature and motion-parameter sequences with their binary formats.
//!
//! `AFT1`: 4-byte magic, T and d as u64 LE, frame rate as f64 LE, then T·d
//! f64 LE features. `MSQ1`: 4-byte magic, T then EXP/JAW/POSE counts as u64
//! LE, frame rate as f64 LE, then T·P f64 LE parameters.

use super::MotionError;
use crate::rigging::MotionGroups;
use std::io::Read;
use std::path::Path;

pub const AUDIO_MAGIC: &[u8; 4] = b"AFT1";
pub const MOTION_MAGIC: &[u8; 4] = b"MSQ1";

/// T × d feature matrix at a fixed frame rate. The features themselves come
/// from files; the upstream speech encoder is out of scope here.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSeq {
    pub frames: Vec<f64>,
    pub len: usize,
    pub dim: usize,
    pub frame_rate: f64,
}

/// T × P facial motion parameters, grouped EXP | JAW | POSE.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSeq {
    pub frames: Vec<f64>,
    pub len: usize,
    pub groups: MotionGroups,
    pub frame_rate: f64,
}

fn check_finite(values: &[f64], what: &str) -> Result<(), MotionError> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(MotionError::Contract {
            what: format!("{what} contains non-finite value {bad}"),
        });
    }
    Ok(())
}

impl AudioFeatureSeq {
    pub fn new(
        frames: Vec<f64>,
        len: usize,
        dim: usize,
        frame_rate: f64,
    ) -> Result<Self, MotionError> {
        if len == 0 || dim == 0 || frames.len() != len * dim {
            return Err(MotionError::Contract {
                what: format!(
                    "audio sequence shape mismatch: {} values for T={len} d={dim}",
                    frames.len()
                ),
            });
        }
        check_finite(&frames, "audio features")?;
        Ok(AudioFeatureSeq {
            frames,
            len,
            dim,
            frame_rate,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), MotionError> {
        let mut bytes = Vec::with_capacity(4 + 24 + self.frames.len() * 8);
        bytes.extend_from_slice(AUDIO_MAGIC);
        bytes.extend_from_slice(&(self.len as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.dim as u64).to_le_bytes());
        bytes.extend_from_slice(&self.frame_rate.to_le_bytes());
        for v in &self.frames {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| MotionError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, MotionError> {
        let bytes = read_all(path)?;
        let perr = |what: String| MotionError::Parse {
            path: path.display().to_string(),
            what,
        };
        if bytes.len() < 28 || &bytes[0..4] != AUDIO_MAGIC {
            return Err(perr("missing AFT1 magic".into()));
        }
        let t = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let d = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let fps = f64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes"));
        let expected = 28 + t * d * 8;
        if bytes.len() != expected {
            return Err(perr(format!(
                "payload holds {} bytes, expected {expected} for T={t} d={d}",
                bytes.len()
            )));
        }
        let frames = floats_le(&bytes[28..]);
        AudioFeatureSeq::new(frames, t, d, fps)
    }

    /// Linear-interpolation resample to `t_out` frames over the same span.
    pub fn resample(&self, t_out: usize) -> Result<Vec<f64>, MotionError> {
        resample_rows(&self.frames, self.len, self.dim, t_out)
    }
}

impl MotionSeq {
    pub fn new(
        frames: Vec<f64>,
        len: usize,
        groups: MotionGroups,
        frame_rate: f64,
    ) -> Result<Self, MotionError> {
        let p = groups.total();
        if len == 0 || p == 0 || frames.len() != len * p {
            return Err(MotionError::Contract {
                what: format!(
                    "motion sequence shape mismatch: {} values for T={len} P={p}",
                    frames.len()
                ),
            });
        }
        check_finite(&frames, "motion parameters")?;
        Ok(MotionSeq {
            frames,
            len,
            groups,
            frame_rate,
        })
    }

    pub fn zeros(len: usize, groups: MotionGroups, frame_rate: f64) -> Self {
        MotionSeq {
            frames: vec![0.0; len * groups.total()],
            len,
            groups,
            frame_rate,
        }
    }

    pub fn params(&self) -> usize {
        self.groups.total()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let p = self.params();
        &self.frames[t * p..(t + 1) * p]
    }

    /// Column range of one metric group.
    pub fn group_range(&self, group: MotionGroup) -> std::ops::Range<usize> {
        match group {
            MotionGroup::Exp => 0..self.groups.exp,
            MotionGroup::Jaw => self.groups.exp..self.groups.exp + self.groups.jaw,
            MotionGroup::Pose => self.groups.pose_offset()..self.groups.total(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MotionError> {
        let mut bytes = Vec::with_capacity(4 + 40 + self.frames.len() * 8);
        bytes.extend_from_slice(MOTION_MAGIC);
        bytes.extend_from_slice(&(self.len as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.groups.exp as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.groups.jaw as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.groups.pose as u64).to_le_bytes());
        bytes.extend_from_slice(&self.frame_rate.to_le_bytes());
        for v in &self.frames {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| MotionError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, MotionError> {
        let bytes = read_all(path)?;
        let perr = |what: String| MotionError::Parse {
            path: path.display().to_string(),
            what,
        };
        if bytes.len() < 44 || &bytes[0..4] != MOTION_MAGIC {
            return Err(perr("missing MSQ1 magic".into()));
        }
        let t = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let exp = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let jaw = u64::from_le_bytes(bytes[20..28].try_into().expect("8 bytes")) as usize;
        let pose = u64::from_le_bytes(bytes[28..36].try_into().expect("8 bytes")) as usize;
        let fps = f64::from_le_bytes(bytes[36..44].try_into().expect("8 bytes"));
        let groups = MotionGroups { exp, jaw, pose };
        let expected = 44 + t * groups.total() * 8;
        if bytes.len() != expected {
            return Err(perr(format!(
                "payload holds {} bytes, expected {expected} for T={t} P={}",
                bytes.len(),
                groups.total()
            )));
        }
        let frames = floats_le(&bytes[44..]);
        MotionSeq::new(frames, t, groups, fps)
    }

    pub fn resample(&self, t_out: usize) -> Result<Vec<f64>, MotionError> {
        resample_rows(&self.frames, self.len, self.params(), t_out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionGroup {
    Exp,
    Jaw,
    Pose,
}

impl MotionGroup {
    pub const ALL: [MotionGroup; 3] = [MotionGroup::Exp, MotionGroup::Jaw, MotionGroup::Pose];

    pub fn name(&self) -> &'static str {
        match self {
            MotionGroup::Exp => "EXP",
            MotionGroup::Jaw => "JAW",
            MotionGroup::Pose => "POSE",
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, MotionError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MotionError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })?;
    Ok(bytes)
}

fn floats_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

/// Resample T×d rows to `t_out` rows by linear interpolation over the
/// normalized span; endpoints map exactly.
pub fn resample_rows(
    data: &[f64],
    t_in: usize,
    dim: usize,
    t_out: usize,
) -> Result<Vec<f64>, MotionError> {
    if t_in == 0 || t_out == 0 {
        return Err(MotionError::Resample {
            what: format!("cannot resample {t_in} frames to {t_out}"),
        });
    }
    if t_in == t_out {
        return Ok(data.to_vec());
    }
    let mut out = Vec::with_capacity(t_out * dim);
    for i in 0..t_out {
        let pos = if t_out == 1 {
            0.0
        } else {
            i as f64 * (t_in - 1) as f64 / (t_out - 1) as f64
        };
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t_in - 1);
        let frac = pos - lo as f64;
        for k in 0..dim {
            out.push(data[lo * dim + k] * (1.0 - frac) + data[hi * dim + k] * frac);
        }
    }
    Ok(out)
}

/// Frame count after resampling a sequence at `source_fps` to `target_fps`.
pub fn aligned_length(len: usize, source_fps: f64, target_fps: f64) -> Result<usize, MotionError> {
    if source_fps <= 0.0 || target_fps <= 0.0 {
        return Err(MotionError::Resample {
            what: format!("irreconcilable frame rates {source_fps} -> {target_fps}"),
        });
    }
    Ok(((len as f64 * target_fps / source_fps).round() as usize).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audio_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.aft");
        let seq = AudioFeatureSeq::new(vec![0.5, -1.0, 2.0, 3.5, 0.0, 1.0], 3, 2, 50.0).unwrap();
        seq.save(&path).unwrap();
        let back = AudioFeatureSeq::load(&path).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn motion_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.msq");
        let groups = MotionGroups {
            exp: 2,
            jaw: 1,
            pose: 6,
        };
        let seq = MotionSeq::new((0..18).map(f64::from).collect(), 2, groups, 25.0).unwrap();
        seq.save(&path).unwrap();
        let back = MotionSeq::load(&path).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.aft");
        std::fs::write(&path, b"XXXX0000000000000000000000000000").unwrap();
        assert!(matches!(
            AudioFeatureSeq::load(&path),
            Err(MotionError::Parse { .. })
        ));
    }

    #[test]
    fn resample_preserves_endpoints_and_linearity() {
        let data = vec![0.0, 10.0, 20.0, 30.0]; // 4 frames, 1 dim
        let out = resample_rows(&data, 4, 1, 7).unwrap();
        assert_eq!(out.len(), 7);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[6], 30.0);
        for w in out.windows(2) {
            assert!((w[1] - w[0] - 5.0).abs() < 1e-12, "{out:?}");
        }
    }

    #[test]
    fn resample_identity_when_lengths_match() {
        let data = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(resample_rows(&data, 2, 2, 2).unwrap(), data);
    }

    #[test]
    fn aligned_length_validates_rates() {
        assert_eq!(aligned_length(50, 50.0, 25.0).unwrap(), 25);
        assert_eq!(aligned_length(1, 100.0, 25.0).unwrap(), 1);
        assert!(aligned_length(10, 0.0, 25.0).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(AudioFeatureSeq::new(vec![f64::NAN, 0.0], 1, 2, 25.0).is_err());
    }
}
