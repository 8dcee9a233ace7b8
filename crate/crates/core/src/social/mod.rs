//! Socially-aware conditioning: the two-axis relationship taxonomy, the
//! learnable embedding sets and query fusion, the motion socialnet, and the
//! Gaussian offsetnet.

use crate::numcore::{
    Activation, Binding, Linear, Mlp2, NumError, ParamGroup, ParamStore, Rng, Tape, Tensor, Var,
};
use serde::{Deserialize, Serialize};

/// Relationship between the two interlocutors: blood/non-blood crossed with
/// equal/non-equal. Exactly four joint states exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SocialRelationship {
    pub blood: bool,
    pub equal: bool,
}

impl SocialRelationship {
    pub const ALL: [SocialRelationship; 4] = [
        SocialRelationship {
            blood: true,
            equal: true,
        },
        SocialRelationship {
            blood: true,
            equal: false,
        },
        SocialRelationship {
            blood: false,
            equal: true,
        },
        SocialRelationship {
            blood: false,
            equal: false,
        },
    ];

    pub fn class_index(&self) -> usize {
        (if self.blood { 0 } else { 2 }) + (if self.equal { 0 } else { 1 })
    }
}

impl std::fmt::Display for SocialRelationship {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}",
            if self.blood { "blood" } else { "non-blood" },
            if self.equal { "equal" } else { "non-equal" }
        )
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialConfig {
    /// Embedding width per taxonomy axis.
    pub d_s: usize,
    /// Fused query width.
    pub d_q: usize,
    /// Motion social feature width (attention query width downstream).
    pub d_model: usize,
    /// Hidden width of the two MLPs.
    pub d_hidden: usize,
    /// Anchor count the offsetnet is sized for.
    pub anchor_count: usize,
    /// Sinusoidal pairs in the timestep encoding.
    pub time_pairs: usize,
}

impl Default for SocialConfig {
    fn default() -> Self {
        SocialConfig {
            d_s: 16,
            d_q: 32,
            d_model: 64,
            d_hidden: 64,
            anchor_count: 0,
            time_pairs: 8,
        }
    }
}

/// Two orthogonal learnable vectors per taxonomy axis plus the fusion
/// projection and the two MLP heads. All parameters are learnable.
pub struct SocialModule {
    pub cfg: SocialConfig,
    /// \[blood, non-blood\]
    pub blood_embed: [crate::numcore::ParamId; 2],
    /// \[equal, non-equal\]
    pub equality_embed: [crate::numcore::ParamId; 2],
    pub query_proj: Linear,
    pub motion_socialnet: Mlp2,
    pub offsetnet: Mlp2,
}

/// Two vectors with exact-zero dot product: random first direction, second
/// Gram-Schmidt-orthogonalized against it.
fn orthogonal_pair(rng: &mut Rng, d: usize) -> (Vec<f64>, Vec<f64>) {
    let a = rng.normal_vec(d, 1.0);
    let mut b = rng.normal_vec(d, 1.0);
    let aa: f64 = a.iter().map(|v| v * v).sum();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    for (bv, av) in b.iter_mut().zip(&a) {
        *bv -= ab / aa * av;
    }
    // compensated pass against accumulated rounding
    let ab2: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    for (bv, av) in b.iter_mut().zip(&a) {
        *bv -= ab2 / aa * av;
    }
    (a, b)
}

impl SocialModule {
    pub fn new(store: &mut ParamStore, rng: &mut Rng, cfg: SocialConfig) -> Self {
        let d = cfg.d_s;
        let (b0, b1) = orthogonal_pair(rng, d);
        let (e0, e1) = orthogonal_pair(rng, d);
        let blood_embed = [
            store.add(
                "social.embed.blood",
                ParamGroup::Network,
                Tensor::new(vec![1, d], b0).expect("embedding shape"),
            ),
            store.add(
                "social.embed.non_blood",
                ParamGroup::Network,
                Tensor::new(vec![1, d], b1).expect("embedding shape"),
            ),
        ];
        let equality_embed = [
            store.add(
                "social.embed.equal",
                ParamGroup::Network,
                Tensor::new(vec![1, d], e0).expect("embedding shape"),
            ),
            store.add(
                "social.embed.non_equal",
                ParamGroup::Network,
                Tensor::new(vec![1, d], e1).expect("embedding shape"),
            ),
        ];
        let query_proj = Linear::new(store, rng, "social.query_proj", 2 * d, cfg.d_q);
        let motion_socialnet = Mlp2::new(
            store,
            rng,
            "social.socialnet",
            cfg.d_q,
            cfg.d_hidden,
            cfg.d_model,
            Activation::Relu,
        );
        let time_dims = 1 + 2 * cfg.time_pairs;
        let offsetnet = Mlp2::new(
            store,
            rng,
            "social.offsetnet",
            cfg.d_q + time_dims,
            cfg.d_hidden,
            3 * cfg.anchor_count,
            Activation::Relu,
        );
        SocialModule {
            cfg,
            blood_embed,
            equality_embed,
            query_proj,
            motion_socialnet,
            offsetnet,
        }
    }

    /// Retrieve the two axis embeddings and fuse them into the query q.
    pub fn build_query(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        rel: SocialRelationship,
    ) -> Result<Var, NumError> {
        let b = bind.var(self.blood_embed[if rel.blood { 0 } else { 1 }]);
        let e = bind.var(self.equality_embed[if rel.equal { 0 } else { 1 }]);
        let joint = tape.concat_cols(&[b, e])?;
        self.query_proj.forward(tape, bind, joint)
    }

    /// Motion social feature s (1 × d_model), the attention query downstream.
    pub fn motion_socialnet(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        q: Var,
    ) -> Result<Var, NumError> {
        self.motion_socialnet.forward(tape, bind, q)
    }

    /// Normalized-time encoding: `t` followed by sin/cos pairs at
    /// geometrically spaced frequencies.
    pub fn encode_time(&self, t: f64) -> Vec<f64> {
        let mut enc = Vec::with_capacity(1 + 2 * self.cfg.time_pairs);
        enc.push(t);
        for k in 0..self.cfg.time_pairs {
            let freq = (1u64 << k) as f64;
            let arg = 2.0 * std::f64::consts::PI * freq * t;
            enc.push(arg.sin());
            enc.push(arg.cos());
        }
        enc
    }

    /// Per-anchor offset corrections c = GON(q, t), reshaped to N×3.
    pub fn gaussian_offsetnet(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        q: Var,
        t: f64,
    ) -> Result<Var, NumError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(NumError::Contract {
                what: format!("offsetnet timestep must lie in [0,1], got {t}"),
            });
        }
        let enc = self.encode_time(t);
        let enc_len = enc.len();
        let t_var = tape.constant(enc, vec![1, enc_len]);
        let joint = tape.concat_cols(&[q, t_var])?;
        let flat = self.offsetnet.forward(tape, bind, joint)?;
        tape.reshape(flat, vec![self.cfg.anchor_count, 3])
    }
}
