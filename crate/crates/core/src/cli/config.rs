//! Run configuration files and the echoed run manifests.

use super::CliError;
use crate::motiongen::MotionGenConfig;
use crate::social::SocialConfig;
use crate::training::{LossWeights, StageConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Training configuration file. Unknown keys are rejected. The mesh defines
/// the anchor count, so it is mandatory for every training stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFileConfig {
    pub motion: MotionGenConfig,
    pub social: SocialConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub stage3: StageConfig,
    pub weights: LossWeights,
    pub mesh: Option<PathBuf>,
    pub basis: Option<PathBuf>,
    pub background: [f64; 3],
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        TrainFileConfig {
            motion: MotionGenConfig::default(),
            social: SocialConfig::default(),
            stage1: StageConfig::stage1(),
            stage2: StageConfig::stage2(),
            stage3: StageConfig::stage3(),
            weights: LossWeights::default(),
            mesh: None,
            basis: None,
            background: [0.0, 0.0, 0.0],
        }
    }
}

/// Echo of a fully resolved run, written next to every command's outputs.
/// Re-launching with `--config <manifest>` reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<u8>,
    pub inputs: serde_json::Value,
    pub config: TrainFileConfig,
}

impl TrainFileConfig {
    /// Load a config file, accepting either a bare config or an emitted run
    /// manifest (recognized by its `command` key).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
            CliError::input(format!(
                "parse failure in {} at line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        let config_value = if value.get("command").is_some() {
            value
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::input("run manifest is missing its config block"))?
        } else {
            value
        };
        serde_json::from_value(config_value)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        fix(&mut self.mesh);
        fix(&mut self.basis);
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(
        path,
        serde_json::to_string_pretty(manifest).expect("manifest serializes"),
    )
    .map_err(|e| CliError::input(format!("cannot write manifest {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"bogus_key": 1}"#).unwrap();
        assert!(TrainFileConfig::load(&path).is_err());
    }

    #[test]
    fn defaults_round_trip_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainFileConfig::default();
        let manifest = RunManifest {
            command: "train".into(),
            seed: 7,
            stage: Some(1),
            inputs: serde_json::json!({"manifest": "data.json"}),
            config: cfg.clone(),
        };
        let path = dir.path().join("run_manifest.json");
        write_manifest(&manifest, &path).unwrap();
        let back = TrainFileConfig::load(&path).unwrap();
        assert_eq!(back.motion.d_model, cfg.motion.d_model);
        assert_eq!(back.stage3.steps, cfg.stage3.steps);
    }

    #[test]
    fn loss_constants_are_the_defaults() {
        let cfg = TrainFileConfig::default();
        assert_eq!(cfg.weights.dssim_lambda, 0.2);
        assert_eq!(cfg.weights.lambda1, 0.5);
        assert_eq!(cfg.weights.lambda2, 0.01);
        assert_eq!(cfg.weights.lambda3, 0.01);
        assert_eq!(cfg.weights.eps_pos, 1.0);
        assert_eq!(cfg.weights.eps_offset, 1.0);
    }
}
