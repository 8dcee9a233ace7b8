//! The speaker–listener motion generator.
//!
//! Speaker-A audio attends over encoded speaker-A motion (queries from the
//! audio features), the fused stream is concatenated with speaker-B audio
//! and re-encoded, the motion social feature queries that encoding, and a
//! causal decoder emits speaker-B's motion parameters.

use super::seq::{aligned_length, AudioFeatureSeq, MotionSeq};
use super::transformer::{
    AttnMask, DecoderLayer, EncoderLayer, LayerNormParams, MultiHeadAttention, PositionalTable,
};
use super::MotionError;
use crate::numcore::{Binding, Linear, NumError, ParamGroup, ParamStore, Rng, Tape, Var};
use crate::rigging::MotionGroups;
use crate::social::{SocialModule, SocialRelationship};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionGenConfig {
    pub d_audio: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_mult: usize,
    pub layers: usize,
    pub max_len: usize,
    pub groups: MotionGroups,
    /// Target frame rate all sequences are resampled to.
    pub motion_fps: f64,
}

impl Default for MotionGenConfig {
    fn default() -> Self {
        MotionGenConfig {
            d_audio: 32,
            d_model: 64,
            n_heads: 4,
            ff_mult: 4,
            layers: 2,
            max_len: 512,
            groups: MotionGroups::default(),
            motion_fps: 25.0,
        }
    }
}

pub struct MotionGenerator {
    pub cfg: MotionGenConfig,
    // speaker-A motion encoder
    motion_embed: Linear,
    motion_pe: PositionalTable,
    motion_layers: Vec<EncoderLayer>,
    motion_ln: LayerNormParams,
    // frozen-by-default stand-ins for the pretrained speech encoder heads
    audio_proj_a: Linear,
    audio_proj_b: Linear,
    // audio-queries-motion fusion
    fuse_attn: MultiHeadAttention,
    // socially-aware fusion
    concat_proj: Linear,
    fusion_pe: PositionalTable,
    fusion_layers: Vec<EncoderLayer>,
    fusion_ln: LayerNormParams,
    /// zero-initialized so a zero social feature yields uniform attention
    social_query_pe: PositionalTable,
    social_attn: MultiHeadAttention,
    // decoder
    token_embed: Linear,
    decoder_pe: PositionalTable,
    decoder_layers: Vec<DecoderLayer>,
    decoder_ln: LayerNormParams,
    head: Linear,
}

impl MotionGenerator {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        cfg: MotionGenConfig,
    ) -> Result<Self, NumError> {
        let d = cfg.d_model;
        let p = cfg.groups.total();
        let d_ff = cfg.ff_mult * d;
        let mk_layers = |store: &mut ParamStore,
                         rng: &mut Rng,
                         prefix: &str|
         -> Result<Vec<EncoderLayer>, NumError> {
            (0..cfg.layers)
                .map(|i| {
                    EncoderLayer::new(store, rng, &format!("{prefix}{i}"), d, cfg.n_heads, d_ff)
                })
                .collect()
        };
        Ok(MotionGenerator {
            cfg,
            motion_embed: Linear::new(store, rng, "mg.motion_embed", p, d),
            motion_pe: PositionalTable::new(store, rng, "mg.motion_pe", cfg.max_len, d, 0.02),
            motion_layers: mk_layers(store, rng, "mg.menc")?,
            motion_ln: LayerNormParams::new(store, "mg.menc_ln", d),
            audio_proj_a: Linear::in_group(
                store,
                rng,
                "mg.audio_proj_a",
                cfg.d_audio,
                d,
                ParamGroup::SpeechSurrogate,
            ),
            audio_proj_b: Linear::in_group(
                store,
                rng,
                "mg.audio_proj_b",
                cfg.d_audio,
                d,
                ParamGroup::SpeechSurrogate,
            ),
            fuse_attn: MultiHeadAttention::new(store, rng, "mg.fuse", d, cfg.n_heads)?,
            concat_proj: Linear::new(store, rng, "mg.concat_proj", 2 * d, d),
            fusion_pe: PositionalTable::new(store, rng, "mg.fusion_pe", cfg.max_len, d, 0.02),
            fusion_layers: mk_layers(store, rng, "mg.fenc")?,
            fusion_ln: LayerNormParams::new(store, "mg.fenc_ln", d),
            social_query_pe: PositionalTable::new(store, rng, "mg.social_pe", cfg.max_len, d, 0.0),
            social_attn: MultiHeadAttention::new(store, rng, "mg.social", d, cfg.n_heads)?,
            token_embed: Linear::new(store, rng, "mg.token_embed", p, d),
            decoder_pe: PositionalTable::new(store, rng, "mg.decoder_pe", cfg.max_len, d, 0.02),
            decoder_layers: (0..cfg.layers)
                .map(|i| DecoderLayer::new(store, rng, &format!("mg.dec{i}"), d, cfg.n_heads, d_ff))
                .collect::<Result<_, _>>()?,
            decoder_ln: LayerNormParams::new(store, "mg.dec_ln", d),
            head: Linear::new(store, rng, "mg.head", d, p),
        })
    }

    /// Per-frame embedding + learned positions + encoder stack.
    pub fn motion_encoder(&self, tape: &mut Tape, bind: &Binding, m: Var) -> Result<Var, NumError> {
        let mut x = self.motion_embed.forward(tape, bind, m)?;
        x = self.motion_pe.add_to(tape, bind, x)?;
        for layer in &self.motion_layers {
            x = layer.forward(tape, bind, x)?;
        }
        self.motion_ln.forward(tape, bind, x)
    }

    /// f_A: speaker-A audio queries attend over the encoded motion.
    pub fn fuse_speaker_a(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        a_a: Var,
        m_a: Var,
    ) -> Result<Var, NumError> {
        let q = self.audio_proj_a.forward(tape, bind, a_a)?;
        let kv = self.motion_encoder(tape, bind, m_a)?;
        self.fuse_attn
            .forward(tape, bind, q, kv, kv, AttnMask::None)
    }

    /// z: concatenate f_A with projected speaker-B audio, encode, and let
    /// per-frame copies of the social feature s query the result.
    pub fn socially_aware_fusion(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        f_a: Var,
        a_b: Var,
        s: Var,
    ) -> Result<Var, NumError> {
        let t = tape.shape(f_a)[0];
        let b = self.audio_proj_b.forward(tape, bind, a_b)?;
        let joint = tape.concat_cols(&[f_a, b])?;
        let mut x = self.concat_proj.forward(tape, bind, joint)?;
        x = self.fusion_pe.add_to(tape, bind, x)?;
        for layer in &self.fusion_layers {
            x = layer.forward(tape, bind, x)?;
        }
        let encoded = self.fusion_ln.forward(tape, bind, x)?;

        let s_rows = tape.repeat_row(s, t);
        let pe = self.social_query_pe.rows(tape, bind, t)?;
        let queries = tape.add(s_rows, pe)?;
        self.social_attn
            .forward(tape, bind, queries, encoded, encoded, AttnMask::None)
    }

    /// Decode motion from z given the (shifted) target tokens; causal in
    /// both self- and cross-attention so generation can stream.
    pub fn motion_decoder(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        z: Var,
        tokens: Var,
    ) -> Result<Var, NumError> {
        let mut x = self.token_embed.forward(tape, bind, tokens)?;
        x = self.decoder_pe.add_to(tape, bind, x)?;
        for layer in &self.decoder_layers {
            x = layer.forward(tape, bind, x, z)?;
        }
        let x = self.decoder_ln.forward(tape, bind, x)?;
        self.head.forward(tape, bind, x)
    }

    /// Teacher-forced pass: ground-truth tokens shifted right by one frame
    /// (zero start token). Inputs are raw sequences already resampled to a
    /// common length.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_teacher(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        social: &SocialModule,
        rel: SocialRelationship,
        a_a: Var,
        a_b: Var,
        m_a: Var,
        gt: Var,
    ) -> Result<Var, NumError> {
        let t = tape.shape(gt)[0];
        let p = tape.shape(gt)[1];
        let f_a = self.fuse_speaker_a(tape, bind, a_a, m_a)?;
        let q = social.build_query(tape, bind, rel)?;
        let s = social.motion_socialnet(tape, bind, q)?;
        let z = self.socially_aware_fusion(tape, bind, f_a, a_b, s)?;
        // shift right: zero start token, drop the last frame
        let tokens = if t == 1 {
            tape.constant(vec![0.0; p], vec![1, p])
        } else {
            let head = tape.constant(vec![0.0; p], vec![1, p]);
            let body = tape.slice_rows(gt, 0, t - 1)?;
            let rows = [head, body];
            concat_rows(tape, &rows)?
        };
        self.motion_decoder(tape, bind, z, tokens)
    }

    /// Autoregressive generation. All inputs are resampled to the length
    /// implied by speaker-B's audio at the configured motion frame rate.
    pub fn generate(
        &self,
        store: &ParamStore,
        social: &SocialModule,
        speech_a: &AudioFeatureSeq,
        speech_b: &AudioFeatureSeq,
        m_a: &MotionSeq,
        rel: SocialRelationship,
    ) -> Result<MotionSeq, MotionError> {
        let t = aligned_length(speech_b.len, speech_b.frame_rate, self.cfg.motion_fps)?;
        self.check_dims(speech_a, speech_b, m_a)?;
        let a_a = speech_a.resample(t)?;
        let a_b = speech_b.resample(t)?;
        let m_a_r = m_a.resample(t)?;
        let p = self.cfg.groups.total();

        // the fused memory does not depend on decoded tokens: compute once
        let z_values = {
            let mut tape = Tape::new();
            let bind = store.bind(&mut tape);
            let va = tape.constant(a_a, vec![t, self.cfg.d_audio]);
            let vb = tape.constant(a_b, vec![t, self.cfg.d_audio]);
            let vm = tape.constant(m_a_r, vec![t, p]);
            let f_a = self.fuse_speaker_a(&mut tape, &bind, va, vm)?;
            let q = social.build_query(&mut tape, &bind, rel)?;
            let s = social.motion_socialnet(&mut tape, &bind, q)?;
            let z = self.socially_aware_fusion(&mut tape, &bind, f_a, vb, s)?;
            tape.value(z).to_vec()
        };

        let mut produced: Vec<f64> = Vec::with_capacity(t * p);
        for step in 0..t {
            let mut tape = Tape::new();
            let bind = store.bind(&mut tape);
            let z = tape.constant(z_values.clone(), vec![t, self.cfg.d_model]);
            let z = tape.slice_rows(z, 0, step + 1)?;
            let mut token_data = vec![0.0; p];
            token_data.extend_from_slice(&produced[..step * p]);
            let tokens = tape.constant(token_data, vec![step + 1, p]);
            let out = self.motion_decoder(&mut tape, &bind, z, tokens)?;
            let last = &tape.value(out)[step * p..(step + 1) * p];
            produced.extend_from_slice(last);
        }
        MotionSeq::new(produced, t, self.cfg.groups, self.cfg.motion_fps)
    }

    fn check_dims(
        &self,
        speech_a: &AudioFeatureSeq,
        speech_b: &AudioFeatureSeq,
        m_a: &MotionSeq,
    ) -> Result<(), MotionError> {
        if speech_a.dim != self.cfg.d_audio || speech_b.dim != self.cfg.d_audio {
            return Err(MotionError::Contract {
                what: format!(
                    "audio feature width {} / {} does not match model d_audio {}",
                    speech_a.dim, speech_b.dim, self.cfg.d_audio
                ),
            });
        }
        if m_a.params() != self.cfg.groups.total() {
            return Err(MotionError::Contract {
                what: format!(
                    "motion parameter count {} does not match model {}",
                    m_a.params(),
                    self.cfg.groups.total()
                ),
            });
        }
        Ok(())
    }
}

/// Stack 2-D blocks vertically. Lives here because only sequence assembly
/// needs it; implemented via transposes around `concat_cols`.
pub(crate) fn concat_rows(tape: &mut Tape, parts: &[Var]) -> Result<Var, NumError> {
    let transposed: Vec<Var> = parts.iter().map(|&p| tape.transpose(p)).collect();
    let joined = tape.concat_cols(&transposed)?;
    Ok(tape.transpose(joined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{finite_diff_check_multi, Tensor};
    use crate::social::SocialConfig;

    fn tiny_cfg() -> MotionGenConfig {
        MotionGenConfig {
            d_audio: 5,
            d_model: 8,
            n_heads: 2,
            ff_mult: 2,
            layers: 1,
            max_len: 16,
            groups: MotionGroups {
                exp: 2,
                jaw: 1,
                pose: 6,
            },
            motion_fps: 25.0,
        }
    }

    fn build(seed: u64) -> (ParamStore, MotionGenerator, SocialModule) {
        let mut store = ParamStore::new();
        let mut rng = Rng::seed_from(seed);
        let cfg = tiny_cfg();
        let model = MotionGenerator::new(&mut store, &mut rng, cfg).unwrap();
        let social = SocialModule::new(
            &mut store,
            &mut rng,
            SocialConfig {
                d_s: 4,
                d_q: 6,
                d_model: cfg.d_model,
                d_hidden: 8,
                anchor_count: 2,
                time_pairs: 2,
            },
        );
        (store, model, social)
    }

    #[test]
    fn motion_encoder_shape_contract() {
        let (store, model, _) = build(1);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape);
        let m = tape.constant(vec![0.1; 9], vec![1, 9]);
        let out = model.motion_encoder(&mut tape, &bind, m).unwrap();
        assert_eq!(tape.shape(out), &[1, 8]);
    }

    #[test]
    fn motion_encoder_zero_input_deterministic() {
        let (store, model, _) = build(2);
        let run = || -> Vec<f64> {
            let mut tape = Tape::new();
            let bind = store.bind(&mut tape);
            let m = tape.constant(vec![0.0; 3 * 9], vec![3, 9]);
            let out = model.motion_encoder(&mut tape, &bind, m).unwrap();
            tape.value(out).to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fusion_with_zero_social_feature_is_uniform_attention() {
        // zero s and zero-initialized query positions give constant scores;
        // each output frame must then equal every other
        let (store, model, _) = build(3);
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape);
        let mut rng = Rng::seed_from(50);
        let f_a = tape.constant(rng.normal_vec(4 * 8, 1.0), vec![4, 8]);
        let a_b = tape.constant(rng.normal_vec(4 * 5, 1.0), vec![4, 5]);
        let s = tape.constant(vec![0.0; 8], vec![1, 8]);
        let z = model
            .socially_aware_fusion(&mut tape, &bind, f_a, a_b, s)
            .unwrap();
        let v = tape.value(z);
        for t in 1..4 {
            for c in 0..8 {
                assert!(
                    (v[t * 8 + c] - v[c]).abs() < 1e-12,
                    "frame {t} differs at {c}"
                );
            }
        }
    }

    #[test]
    fn decoder_causality_under_z_perturbation() {
        let (store, model, _) = build(4);
        let t = 5;
        let run = |z_data: Vec<f64>| -> Vec<f64> {
            let mut tape = Tape::new();
            let bind = store.bind(&mut tape);
            let z = tape.constant(z_data, vec![t, 8]);
            let tokens = tape.constant(vec![0.25; t * 9], vec![t, 9]);
            let out = model.motion_decoder(&mut tape, &bind, z, tokens).unwrap();
            tape.value(out).to_vec()
        };
        let mut rng = Rng::seed_from(60);
        let base = rng.normal_vec(t * 8, 1.0);
        let mut perturbed = base.clone();
        for c in 0..8 {
            perturbed[3 * 8 + c] += 10.0; // frame 3 only
        }
        let a = run(base);
        let b = run(perturbed);
        for frame in 0..3 {
            for c in 0..9 {
                assert_eq!(a[frame * 9 + c], b[frame * 9 + c], "frame {frame} leaked");
            }
        }
        assert!(
            (0..9).any(|c| a[3 * 9 + c] != b[3 * 9 + c]),
            "perturbation had no effect at its own frame"
        );
    }

    #[test]
    fn generate_is_deterministic_and_drives_blendshapes() {
        let (store, model, social) = build(5);
        let mut rng = Rng::seed_from(70);
        let speech_a = AudioFeatureSeq::new(rng.normal_vec(8 * 5, 1.0), 8, 5, 50.0).unwrap();
        let speech_b = AudioFeatureSeq::new(rng.normal_vec(8 * 5, 1.0), 8, 5, 50.0).unwrap();
        let m_a = MotionSeq::new(
            rng.normal_vec(4 * 9, 0.5),
            4,
            MotionGroups {
                exp: 2,
                jaw: 1,
                pose: 6,
            },
            25.0,
        )
        .unwrap();
        let rel = SocialRelationship {
            blood: true,
            equal: false,
        };
        let out1 = model
            .generate(&store, &social, &speech_a, &speech_b, &m_a, rel)
            .unwrap();
        let out2 = model
            .generate(&store, &social, &speech_a, &speech_b, &m_a, rel)
            .unwrap();
        assert_eq!(out1, out2);
        // 8 audio frames at 50 fps → 4 motion frames at 25 fps
        assert_eq!(out1.len, 4);

        // flipping the relationship changes the output
        let out3 = model
            .generate(
                &store,
                &social,
                &speech_a,
                &speech_b,
                &m_a,
                SocialRelationship {
                    blood: false,
                    equal: true,
                },
            )
            .unwrap();
        assert_ne!(out1.frames, out3.frames);

        // frames drive the blendshape rig without shape errors
        let mesh = crate::rigging::mesh::fan_mesh(3);
        let basis = crate::rigging::BlendshapeBasis::zeros(mesh.vertices.len(), 9);
        for t in 0..out1.len {
            crate::rigging::blendshape_apply(&mesh, &basis, &out1.groups, out1.frame(t), None)
                .unwrap();
        }
    }

    #[test]
    fn teacher_forced_stack_gradients_match_finite_differences() {
        // T=3, d_model=8 end-to-end check through fusion, social module and
        // decoder; every parameter participates
        let (store, model, social) = build(6);
        let mut rng = Rng::seed_from(80);
        let t = 3;
        let a_a = rng.normal_vec(t * 5, 1.0);
        let a_b = rng.normal_vec(t * 5, 1.0);
        let m_a = rng.normal_vec(t * 9, 1.0);
        let gt = rng.normal_vec(t * 9, 1.0);
        let tensors: Vec<Tensor> = store.entries().iter().map(|e| e.value.clone()).collect();
        let rel = SocialRelationship {
            blood: false,
            equal: false,
        };
        let diff = finite_diff_check_multi(&tensors, 1e-5, move |tape, vars| {
            let bind = Binding::from_vars(vars.to_vec());
            let va = tape.constant(a_a.clone(), vec![t, 5]);
            let vb = tape.constant(a_b.clone(), vec![t, 5]);
            let vm = tape.constant(m_a.clone(), vec![t, 9]);
            let vg = tape.constant(gt.clone(), vec![t, 9]);
            let pred = model
                .forward_teacher(tape, &bind, &social, rel, va, vb, vm, vg)
                .unwrap();
            let d = tape.sub(pred, vg).unwrap();
            let sq = tape.mul(d, d).unwrap();
            tape.mean(sq)
        })
        .unwrap();
        assert!(diff < 1e-5, "full stack grad discrepancy {diff}");
    }
}
