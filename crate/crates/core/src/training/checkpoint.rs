//! Versioned binary checkpoints: magic, schema version, a JSON metadata
//! blob, then named parameter blobs (name, group tag, shape, f64-LE data).

use super::TrainError;
use crate::numcore::{ParamGroup, ParamStore, Tensor};
use std::io::Read;
use std::path::Path;

pub const CKPT_MAGIC: &[u8; 8] = b"RSATCKPT";
pub const CKPT_VERSION: u32 = 1;

fn group_tag(g: ParamGroup) -> u8 {
    match g {
        ParamGroup::Gaussian => 0,
        ParamGroup::Network => 1,
        ParamGroup::SpeechSurrogate => 2,
    }
}

fn group_from_tag(tag: u8) -> Result<ParamGroup, TrainError> {
    match tag {
        0 => Ok(ParamGroup::Gaussian),
        1 => Ok(ParamGroup::Network),
        2 => Ok(ParamGroup::SpeechSurrogate),
        other => Err(TrainError::Parse {
            path: String::new(),
            what: format!("unknown parameter group tag {other}"),
        }),
    }
}

pub struct CheckpointParam {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: Vec<CheckpointParam>,
}

pub fn save_checkpoint(
    store: &ParamStore,
    meta: &serde_json::Value,
    path: &Path,
) -> Result<(), TrainError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CKPT_MAGIC);
    bytes.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    let meta_bytes = serde_json::to_vec(meta).expect("metadata serializes");
    bytes.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&meta_bytes);
    bytes.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for e in store.entries() {
        let name = e.name.as_bytes();
        bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(name);
        bytes.push(group_tag(e.group));
        bytes.extend_from_slice(&(e.value.shape().len() as u32).to_le_bytes());
        for &d in e.value.shape() {
            bytes.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in e.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        what: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })?;
    let perr = |what: String| TrainError::Parse {
        path: path.display().to_string(),
        what,
    };
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], TrainError> {
        if *pos + n > bytes.len() {
            return Err(TrainError::Parse {
                path: path.display().to_string(),
                what: format!("truncated checkpoint at byte {pos}"),
            });
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != CKPT_MAGIC {
        return Err(perr("missing RSATCKPT magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes"));
    if version != CKPT_VERSION {
        return Err(perr(format!(
            "unsupported checkpoint version {version}, expected {CKPT_VERSION}"
        )));
    }
    let meta_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
    let meta: serde_json::Value = serde_json::from_slice(take(&mut pos, meta_len)?)
        .map_err(|e| perr(format!("bad metadata JSON: {e}")))?;
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|e| perr(format!("bad parameter name: {e}")))?;
        let group = group_from_tag(take(&mut pos, 1)?[0])?;
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape
                .push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().expect("8 bytes")) as usize);
        }
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = take(&mut pos, numel * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.push(CheckpointParam {
            name,
            group,
            shape,
            data,
        });
    }
    Ok(Checkpoint { meta, params })
}

impl Checkpoint {
    /// Copy matching parameters (by name) into the store. Errors if a
    /// matched name disagrees on shape. Returns how many were applied.
    pub fn apply_filtered(
        &self,
        store: &mut ParamStore,
        filter: impl Fn(&str) -> bool,
    ) -> Result<usize, TrainError> {
        let mut applied = 0;
        for p in &self.params {
            if !filter(&p.name) {
                continue;
            }
            let Some(id) = store.find(&p.name) else {
                continue;
            };
            let t = store.get_mut(id);
            if t.shape() != p.shape.as_slice() {
                return Err(TrainError::Config {
                    what: format!(
                        "checkpoint parameter {} has shape {:?}, store expects {:?}",
                        p.name,
                        p.shape,
                        t.shape()
                    ),
                });
            }
            t.data_mut().copy_from_slice(&p.data);
            applied += 1;
        }
        Ok(applied)
    }

    /// Restore every parameter in the store; errors if one is missing.
    pub fn apply_all(&self, store: &mut ParamStore) -> Result<(), TrainError> {
        let have: std::collections::HashSet<&str> =
            self.params.iter().map(|p| p.name.as_str()).collect();
        for e in store.entries() {
            if !have.contains(e.name.as_str()) {
                return Err(TrainError::Config {
                    what: format!("checkpoint is missing parameter {}", e.name),
                });
            }
        }
        self.apply_filtered(store, |_| true).map(|_| ())
    }

    /// Rebuild a store exactly as serialized.
    pub fn into_store(self) -> Result<ParamStore, TrainError> {
        let mut store = ParamStore::new();
        for p in self.params {
            let t = Tensor::new(p.shape.clone(), p.data).map_err(|e| TrainError::Config {
                what: format!("checkpoint parameter {}: {e}", p.name),
            })?;
            store.add(p.name, p.group, t);
        }
        Ok(store)
    }
}
