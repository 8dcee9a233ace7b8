//! The three-stage training procedure: motion-generator cold start,
//! renderer cold start, then end-to-end joint training.

use super::dataset::TrainClip;
use super::losses::{l_image, l_joint, l_mesh, l_offset, l_pos, LossWeights};
use super::TrainError;
use crate::gsplat::backward::{render_on_tape, RenderStats};
use crate::motiongen::{aligned_length, MotionGenConfig, MotionGenerator};
use crate::numcore::{
    Binding, LearningRates, Optimizer, ParamGroup, ParamId, ParamStore, Rng, Tape, Tensor, Var,
};
use crate::rigging::{
    blendshape_apply, compute_binding_frames, densify, BlendshapeBasis, BoundGaussianSet,
    DensifyThresholds, TriangleMesh,
};
use crate::social::{SocialConfig, SocialModule};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::rc::Rc;

/// Motion generator plus socially-aware module sharing one parameter store.
pub struct ModelBundle {
    pub store: ParamStore,
    pub motiongen: MotionGenerator,
    pub social: SocialModule,
}

pub fn build_model(
    motion_cfg: MotionGenConfig,
    social_cfg: SocialConfig,
    seed: u64,
) -> Result<ModelBundle, TrainError> {
    if social_cfg.d_model != motion_cfg.d_model {
        return Err(TrainError::Config {
            what: format!(
                "social d_model {} must match motion generator d_model {}",
                social_cfg.d_model, motion_cfg.d_model
            ),
        });
    }
    let mut store = ParamStore::new();
    let mut rng = Rng::seed_from(seed);
    let motiongen = MotionGenerator::new(&mut store, &mut rng, motion_cfg)?;
    let social = SocialModule::new(&mut store, &mut rng, social_cfg);
    Ok(ModelBundle {
        store,
        motiongen,
        social,
    })
}

/// Everything the renderer needs: rig inputs and the bound Gaussian set.
pub struct RendererBundle {
    pub mesh: TriangleMesh,
    pub basis: BlendshapeBasis,
    pub set: BoundGaussianSet,
    pub background: [f64; 3],
}

/// Canonical Gaussian parameters mirrored into a trainable store.
pub struct GaussianParams {
    pub store: ParamStore,
    pub mu: ParamId,
    pub quat: ParamId,
    pub log_scale: ParamId,
    pub opacity: ParamId,
    pub color: ParamId,
}

impl GaussianParams {
    pub fn from_set(set: &BoundGaussianSet) -> Self {
        let g = set.gaussian_count();
        let mut mu = Vec::with_capacity(g * 3);
        let mut quat = Vec::with_capacity(g * 4);
        let mut ls = Vec::with_capacity(g * 3);
        let mut op = Vec::with_capacity(g);
        let mut col = Vec::with_capacity(g * 3);
        for p in set.iter_params() {
            mu.extend_from_slice(&p.position);
            quat.extend_from_slice(&p.rotation);
            ls.extend_from_slice(&p.log_scale);
            op.push(p.opacity_logit);
            col.extend_from_slice(&p.color);
        }
        let mut store = ParamStore::new();
        let t =
            |shape: Vec<usize>, data: Vec<f64>| Tensor::new(shape, data).expect("gaussian tensors");
        let mu = store.add("g.mu", ParamGroup::Gaussian, t(vec![g, 3], mu));
        let quat = store.add("g.quat", ParamGroup::Gaussian, t(vec![g, 4], quat));
        let log_scale = store.add("g.log_scale", ParamGroup::Gaussian, t(vec![g, 3], ls));
        let opacity = store.add("g.opacity", ParamGroup::Gaussian, t(vec![g], op));
        let color = store.add("g.color", ParamGroup::Gaussian, t(vec![g, 3], col));
        GaussianParams {
            store,
            mu,
            quat,
            log_scale,
            opacity,
            color,
        }
    }

    pub fn write_back(&self, set: &mut BoundGaussianSet) {
        let mu = self.store.get(self.mu).data();
        let quat = self.store.get(self.quat).data();
        let ls = self.store.get(self.log_scale).data();
        let op = self.store.get(self.opacity).data();
        let col = self.store.get(self.color).data();
        for (i, p) in set.iter_params_mut().enumerate() {
            p.position = [mu[i * 3], mu[i * 3 + 1], mu[i * 3 + 2]];
            p.rotation = [
                quat[i * 4],
                quat[i * 4 + 1],
                quat[i * 4 + 2],
                quat[i * 4 + 3],
            ];
            p.log_scale = [ls[i * 3], ls[i * 3 + 1], ls[i * 3 + 2]];
            p.opacity_logit = op[i];
            p.color = [col[i * 3], col[i * 3 + 1], col[i * 3 + 2]];
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_gaussian: f64,
    pub lr_network: f64,
    /// Steps between density-control events; 0 disables densification.
    pub densify_interval: usize,
    /// Densification stops after this fraction of the stage.
    pub densify_stop_frac: f64,
    pub densify_grad_threshold: f64,
    /// The speech-feature stand-in projections stay frozen unless cleared.
    pub freeze_speech_surrogate: bool,
    pub weights: LossWeights,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            steps: 2000,
            batch_size: 4,
            lr_gaussian: 5e-3,
            lr_network: 1e-4,
            densify_interval: 100,
            densify_stop_frac: 0.6,
            densify_grad_threshold: 2e-4,
            freeze_speech_surrogate: true,
            weights: LossWeights::default(),
        }
    }
}

impl StageConfig {
    pub fn stage1() -> Self {
        StageConfig {
            densify_interval: 0,
            ..Default::default()
        }
    }

    pub fn stage2() -> Self {
        StageConfig::default()
    }

    pub fn stage3() -> Self {
        StageConfig {
            steps: 1000,
            densify_interval: 0,
            ..Default::default()
        }
    }

    fn rates(&self) -> LearningRates {
        LearningRates {
            gaussian: self.lr_gaussian,
            network: self.lr_network,
            speech_surrogate: self.lr_network,
        }
    }
}

/// Per-step loss log; the last column is always the total and every row's
/// terms sum to it.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub columns: Vec<String>,
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl TrainLog {
    fn new(columns: &[&str]) -> Self {
        TrainLog {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (step, vals) in &self.rows {
            out.push_str(&step.to_string());
            for v in vals {
                out.push(',');
                out.push_str(&format!("{v:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv()).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            what: e.to_string(),
        })
    }

    pub fn final_total(&self) -> Option<f64> {
        self.rows
            .last()
            .map(|(_, vals)| *vals.last().expect("total column"))
    }
}

fn ensure_finite(step: usize, name: &str, value: f64) -> Result<(), TrainError> {
    if !value.is_finite() {
        return Err(TrainError::Numerical {
            what: format!("{name} became {value} at step {step}"),
        });
    }
    Ok(())
}

/// Bind clip tensors for one teacher-forced pass at the aligned length.
fn clip_vars(
    tape: &mut Tape,
    cfg: &MotionGenConfig,
    clip: &TrainClip,
) -> Result<(Var, Var, Var, Var, usize), TrainError> {
    let t = aligned_length(clip.audio_b.len, clip.audio_b.frame_rate, cfg.motion_fps)?;
    let p = cfg.groups.total();
    let a_a = clip.audio_a.resample(t)?;
    let a_b = clip.audio_b.resample(t)?;
    let m_a = clip.motion_a.resample(t)?;
    let gt = clip.motion_b.resample(t)?;
    let va = tape.constant(a_a, vec![t, cfg.d_audio]);
    let vb = tape.constant(a_b, vec![t, cfg.d_audio]);
    let vm = tape.constant(m_a, vec![t, p]);
    let vg = tape.constant(gt, vec![t, p]);
    Ok((va, vb, vm, vg, t))
}

/// Stage 1: cold-start the motion generator on L_mesh alone. The social
/// module conditions the fusion but no image terms are involved.
pub fn run_stage1(
    model: &mut ModelBundle,
    dataset: &[TrainClip],
    cfg: &StageConfig,
    seed: u64,
) -> Result<TrainLog, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Config {
            what: "stage 1 requires a non-empty dataset".into(),
        });
    }
    cfg.weights.validate()?;
    let mut opt = Optimizer::new(&model.store, cfg.rates());
    if cfg.freeze_speech_surrogate {
        opt.freeze_group(&model.store, ParamGroup::SpeechSurrogate);
    }
    let mut rng = Rng::seed_from(seed);
    let mut log = TrainLog::new(&["l_mesh", "total"]);

    for step in 0..cfg.steps {
        let mut tape = Tape::new();
        let bind = model.store.bind(&mut tape);
        let mut loss_acc: Option<Var> = None;
        for _ in 0..cfg.batch_size {
            let clip = &dataset[rng.index(dataset.len())];
            let (va, vb, vm, vg, _t) = clip_vars(&mut tape, &model.motiongen.cfg, clip)?;
            let pred = model.motiongen.forward_teacher(
                &mut tape,
                &bind,
                &model.social,
                clip.relationship,
                va,
                vb,
                vm,
                vg,
            )?;
            let l = l_mesh(&mut tape, pred, vg)?;
            loss_acc = Some(match loss_acc {
                None => l,
                Some(acc) => tape.add(acc, l)?,
            });
        }
        let total = tape.scale(
            loss_acc.expect("batch_size >= 1"),
            1.0 / cfg.batch_size as f64,
        );
        let total_val = tape.scalar_value(total);
        ensure_finite(step, "L_mesh", total_val)?;
        let grads = tape.backward(total)?;
        let grad_vec = model.store.collect_grads(&bind, &grads);
        opt.step(&mut model.store, &grad_vec)?;
        log.rows.push((step, vec![total_val, total_val]));
    }
    Ok(log)
}

/// One ground-truth view for renderer training.
#[derive(Debug, Clone)]
pub struct Stage2Frame {
    pub camera: crate::gsplat::Camera,
    pub image: crate::gsplat::Image,
    pub motion_params: Vec<f64>,
    pub relationship: crate::social::SocialRelationship,
    /// Normalized clip time in [0, 1].
    pub t_norm: f64,
}

/// Flatten dataset clips into renderable frames.
pub fn stage2_frames(dataset: &[TrainClip]) -> Vec<Stage2Frame> {
    let mut frames = Vec::new();
    for clip in dataset {
        let denom = (clip.motion_b.len.max(2) - 1) as f64;
        for f in &clip.frames {
            frames.push(Stage2Frame {
                camera: f.camera.clone(),
                image: f.image.clone(),
                motion_params: clip.motion_b.frame(f.motion_index).to_vec(),
                relationship: clip.relationship,
                t_norm: (f.motion_index as f64 / denom).clamp(0.0, 1.0),
            });
        }
    }
    frames
}

struct RenderedLossTerms {
    image: Var,
    pos: Var,
    offset: Var,
}

/// Shared render path for stages 2 and 3: pose the mesh, bind frames,
/// produce offsets from the social module, transform to world space, render
/// and compare against the ground-truth view.
#[allow(clippy::too_many_arguments)]
fn render_loss_terms(
    tape: &mut Tape,
    model: &ModelBundle,
    model_bind: &Binding,
    renderer: &RendererBundle,
    gauss: &GaussianParams,
    gauss_bind: &Binding,
    posed_params: &[f64],
    frame: &Stage2Frame,
    stats: Option<Rc<RefCell<RenderStats>>>,
    weights: &LossWeights,
) -> Result<RenderedLossTerms, TrainError> {
    let posed = blendshape_apply(
        &renderer.mesh,
        &renderer.basis,
        &model.motiongen.cfg.groups,
        posed_params,
        None,
    )?;
    let frames = compute_binding_frames(&posed)?;
    let q = model
        .social
        .build_query(tape, model_bind, frame.relationship)?;
    let offsets = model
        .social
        .gaussian_offsetnet(tape, model_bind, q, frame.t_norm)?;
    let (pos, quat, ls) = crate::rigging::to_deformable_on_tape(
        tape,
        gauss_bind.var(gauss.mu),
        gauss_bind.var(gauss.quat),
        gauss_bind.var(gauss.log_scale),
        offsets,
        &frames,
        &renderer.set.face_map(),
        &renderer.set.anchor_map(),
    )?;
    let img = render_on_tape(
        tape,
        &frame.camera,
        &renderer.background,
        pos,
        quat,
        ls,
        gauss_bind.var(gauss.opacity),
        gauss_bind.var(gauss.color),
        stats,
    );
    let image = l_image(tape, img, &frame.image, weights)?;
    let pos_term = l_pos(tape, gauss_bind.var(gauss.mu), weights.eps_pos);
    let offset_term = l_offset(tape, offsets, weights.eps_offset);
    Ok(RenderedLossTerms {
        image,
        pos: pos_term,
        offset: offset_term,
    })
}

/// Stage 2: cold-start the renderer by reconstruction. Optimizes Gaussian
/// canonical parameters and the offsetnet; the rest of the model store is
/// frozen. Returns the loss log; the trained set is written back into the
/// renderer bundle.
pub fn run_stage2(
    model: &mut ModelBundle,
    renderer: &mut RendererBundle,
    frames_data: &[Stage2Frame],
    cfg: &StageConfig,
    seed: u64,
) -> Result<TrainLog, TrainError> {
    if frames_data.is_empty() {
        return Err(TrainError::Config {
            what: "stage 2 requires at least one ground-truth frame".into(),
        });
    }
    cfg.weights.validate()?;
    for f in frames_data {
        if f.motion_params.len() != model.motiongen.cfg.groups.total() {
            return Err(TrainError::Config {
                what: format!(
                    "frame motion has {} parameters, rig expects {}",
                    f.motion_params.len(),
                    model.motiongen.cfg.groups.total()
                ),
            });
        }
    }

    let mut gauss = GaussianParams::from_set(&renderer.set);
    let mut opt_g = Optimizer::new(&gauss.store, cfg.rates());
    let mut opt_m = new_offsetnet_only_optimizer(model, cfg);
    let mut rng = Rng::seed_from(seed);
    let stats = Rc::new(RefCell::new(RenderStats::new(
        renderer.set.gaussian_count(),
    )));
    let thresholds = DensifyThresholds {
        grad_threshold: cfg.densify_grad_threshold,
        ..DensifyThresholds::for_extent(renderer.mesh.extent())
    };
    let mut log = TrainLog::new(&["l_image", "l_pos_w", "l_offset_w", "total"]);

    for step in 0..cfg.steps {
        let frame = &frames_data[rng.index(frames_data.len())];
        let mut tape = Tape::new();
        let model_bind = model.store.bind(&mut tape);
        let gauss_bind = gauss.store.bind(&mut tape);
        let terms = render_loss_terms(
            &mut tape,
            model,
            &model_bind,
            renderer,
            &gauss,
            &gauss_bind,
            &frame.motion_params,
            frame,
            Some(stats.clone()),
            &cfg.weights,
        )?;
        let pos_w = tape.scale(terms.pos, cfg.weights.lambda2);
        let off_w = tape.scale(terms.offset, cfg.weights.lambda3);
        let partial = tape.add(terms.image, pos_w)?;
        let total = tape.add(partial, off_w)?;
        let total_val = tape.scalar_value(total);
        ensure_finite(step, "stage-2 loss", total_val)?;
        let grads = tape.backward(total)?;
        let g_model = model.store.collect_grads(&model_bind, &grads);
        let g_gauss = gauss.store.collect_grads(&gauss_bind, &grads);
        opt_m.step(&mut model.store, &g_model)?;
        opt_g.step(&mut gauss.store, &g_gauss)?;
        log.rows.push((
            step,
            vec![
                tape.scalar_value(terms.image),
                tape.scalar_value(pos_w),
                tape.scalar_value(off_w),
                total_val,
            ],
        ));

        let in_densify_window =
            cfg.densify_interval > 0 && (step as f64) < cfg.densify_stop_frac * cfg.steps as f64;
        if in_densify_window && step > 0 && step % cfg.densify_interval == 0 {
            gauss.write_back(&mut renderer.set);
            let posed = blendshape_apply(
                &renderer.mesh,
                &renderer.basis,
                &model.motiongen.cfg.groups,
                &frames_data[0].motion_params,
                None,
            )?;
            let bind_frames = compute_binding_frames(&posed)?;
            let mean_grads = stats.borrow().mean_norms();
            densify(
                &mut renderer.set,
                &bind_frames,
                &mean_grads,
                &thresholds,
                &mut rng,
            )?;
            gauss = GaussianParams::from_set(&renderer.set);
            opt_g = Optimizer::new(&gauss.store, cfg.rates());
            *stats.borrow_mut() = RenderStats::new(renderer.set.gaussian_count());
        }
    }
    gauss.write_back(&mut renderer.set);
    Ok(log)
}

fn new_offsetnet_only_optimizer(model: &ModelBundle, cfg: &StageConfig) -> Optimizer {
    let mut opt = Optimizer::new(&model.store, cfg.rates());
    opt.freeze_by(&model.store, |e| !e.name.starts_with("social.offsetnet"));
    opt
}

/// Stage 3: end-to-end joint training of everything except the frozen
/// speech-feature stand-in. Each step decodes motion under teacher forcing,
/// poses the rig with a predicted frame, renders, and minimizes L_joint.
pub fn run_stage3(
    model: &mut ModelBundle,
    renderer: &mut RendererBundle,
    dataset: &[TrainClip],
    cfg: &StageConfig,
    seed: u64,
) -> Result<TrainLog, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Config {
            what: "stage 3 requires a non-empty dataset".into(),
        });
    }
    let renderable: Vec<&TrainClip> = dataset.iter().filter(|c| !c.frames.is_empty()).collect();
    if renderable.is_empty() {
        return Err(TrainError::Config {
            what: "stage 3 requires clips with ground-truth frames".into(),
        });
    }
    cfg.weights.validate()?;

    let mut gauss = GaussianParams::from_set(&renderer.set);
    let mut opt_g = Optimizer::new(&gauss.store, cfg.rates());
    let mut opt_m = Optimizer::new(&model.store, cfg.rates());
    if cfg.freeze_speech_surrogate {
        opt_m.freeze_group(&model.store, ParamGroup::SpeechSurrogate);
    }
    let mut rng = Rng::seed_from(seed);
    let stats = Rc::new(RefCell::new(RenderStats::new(
        renderer.set.gaussian_count(),
    )));
    let thresholds = DensifyThresholds {
        grad_threshold: cfg.densify_grad_threshold,
        ..DensifyThresholds::for_extent(renderer.mesh.extent())
    };
    let mut log = TrainLog::new(&["l_mesh", "l_image_w", "l_pos_w", "l_offset_w", "total"]);

    for step in 0..cfg.steps {
        let clip = renderable[rng.index(renderable.len())];
        let gt_frame = &clip.frames[rng.index(clip.frames.len())];

        let mut tape = Tape::new();
        let model_bind = model.store.bind(&mut tape);
        let gauss_bind = gauss.store.bind(&mut tape);
        let (va, vb, vm, vg, t) = clip_vars(&mut tape, &model.motiongen.cfg, clip)?;
        let pred = model.motiongen.forward_teacher(
            &mut tape,
            &model_bind,
            &model.social,
            clip.relationship,
            va,
            vb,
            vm,
            vg,
        )?;
        let mesh_term = l_mesh(&mut tape, pred, vg)?;

        // pose the rig with the predicted frame nearest the ground-truth view
        let p = model.motiongen.cfg.groups.total();
        let src_len = clip.motion_b.len.max(1);
        let mapped = if src_len == 1 {
            0
        } else {
            ((gt_frame.motion_index as f64) * (t as f64 - 1.0) / (src_len as f64 - 1.0)).round()
                as usize
        }
        .min(t - 1);
        let pred_vals = tape.value(pred);
        let posed_params = pred_vals[mapped * p..(mapped + 1) * p].to_vec();
        let denom = (src_len.max(2) - 1) as f64;
        let frame = Stage2Frame {
            camera: gt_frame.camera.clone(),
            image: gt_frame.image.clone(),
            motion_params: posed_params.clone(),
            relationship: clip.relationship,
            t_norm: (gt_frame.motion_index as f64 / denom).clamp(0.0, 1.0),
        };
        let terms = render_loss_terms(
            &mut tape,
            model,
            &model_bind,
            renderer,
            &gauss,
            &gauss_bind,
            &posed_params,
            &frame,
            Some(stats.clone()),
            &cfg.weights,
        )?;
        let total = l_joint(
            &mut tape,
            mesh_term,
            terms.image,
            terms.pos,
            terms.offset,
            &cfg.weights,
        )?;
        let total_val = tape.scalar_value(total);
        ensure_finite(step, "L_joint", total_val)?;
        let grads = tape.backward(total)?;
        let g_model = model.store.collect_grads(&model_bind, &grads);
        let g_gauss = gauss.store.collect_grads(&gauss_bind, &grads);
        opt_m.step(&mut model.store, &g_model)?;
        opt_g.step(&mut gauss.store, &g_gauss)?;
        log.rows.push((
            step,
            vec![
                tape.scalar_value(mesh_term),
                cfg.weights.lambda1 * tape.scalar_value(terms.image),
                cfg.weights.lambda2 * tape.scalar_value(terms.pos),
                cfg.weights.lambda3 * tape.scalar_value(terms.offset),
                total_val,
            ],
        ));

        let in_densify_window =
            cfg.densify_interval > 0 && (step as f64) < cfg.densify_stop_frac * cfg.steps as f64;
        if in_densify_window && step > 0 && step % cfg.densify_interval == 0 {
            gauss.write_back(&mut renderer.set);
            let posed = blendshape_apply(
                &renderer.mesh,
                &renderer.basis,
                &model.motiongen.cfg.groups,
                &posed_params,
                None,
            )?;
            let bind_frames = compute_binding_frames(&posed)?;
            let mean_grads = stats.borrow().mean_norms();
            densify(
                &mut renderer.set,
                &bind_frames,
                &mean_grads,
                &thresholds,
                &mut rng,
            )?;
            gauss = GaussianParams::from_set(&renderer.set);
            opt_g = Optimizer::new(&gauss.store, cfg.rates());
            *stats.borrow_mut() = RenderStats::new(renderer.set.gaussian_count());
        }
    }
    gauss.write_back(&mut renderer.set);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::dataset::{synthetic_social_dataset, SyntheticSocialSpec};

    fn tiny_model(seed: u64) -> ModelBundle {
        let spec = SyntheticSocialSpec::default();
        build_model(
            MotionGenConfig {
                d_audio: spec.d_audio,
                d_model: 16,
                n_heads: 2,
                ff_mult: 2,
                layers: 1,
                max_len: 32,
                groups: spec.groups,
                motion_fps: spec.fps,
            },
            SocialConfig {
                d_s: 8,
                d_q: 8,
                d_model: 16,
                d_hidden: 16,
                anchor_count: 4,
                time_pairs: 4,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn stage1_loss_decreases_on_synthetic_set() {
        let spec = SyntheticSocialSpec {
            clips_per_class: 3,
            ..Default::default()
        };
        let dataset = synthetic_social_dataset(1, &spec);
        let mut model = tiny_model(2);
        let cfg = StageConfig {
            steps: 60,
            batch_size: 4,
            lr_network: 2e-3,
            ..StageConfig::stage1()
        };
        let log = run_stage1(&mut model, &dataset, &cfg, 3).unwrap();
        // 10-step moving average decreasing between the start and the end
        let avg = |rows: &[(usize, Vec<f64>)]| -> f64 {
            rows.iter().map(|(_, v)| v[0]).sum::<f64>() / rows.len() as f64
        };
        let head = avg(&log.rows[0..10]);
        let tail = avg(&log.rows[log.rows.len() - 10..]);
        assert!(tail < head, "no learning: head {head}, tail {tail}");
    }

    #[test]
    fn stage1_empty_dataset_is_config_error() {
        let mut model = tiny_model(4);
        assert!(matches!(
            run_stage1(&mut model, &[], &StageConfig::stage1(), 0),
            Err(TrainError::Config { .. })
        ));
    }

    #[test]
    fn stage1_frozen_surrogate_unchanged() {
        let spec = SyntheticSocialSpec {
            clips_per_class: 1,
            ..Default::default()
        };
        let dataset = synthetic_social_dataset(5, &spec);
        let mut model = tiny_model(6);
        let frozen_id = model.store.find("mg.audio_proj_a.w").unwrap();
        let before = model.store.get(frozen_id).data().to_vec();
        let trainable_id = model.store.find("mg.head.w").unwrap();
        let before_head = model.store.get(trainable_id).data().to_vec();
        let cfg = StageConfig {
            steps: 5,
            ..StageConfig::stage1()
        };
        run_stage1(&mut model, &dataset, &cfg, 7).unwrap();
        assert_eq!(model.store.get(frozen_id).data(), &before[..]);
        assert_ne!(model.store.get(trainable_id).data(), &before_head[..]);
    }

    #[test]
    fn stage1_is_deterministic() {
        let spec = SyntheticSocialSpec {
            clips_per_class: 2,
            ..Default::default()
        };
        let dataset = synthetic_social_dataset(8, &spec);
        let cfg = StageConfig {
            steps: 8,
            ..StageConfig::stage1()
        };
        let mut m1 = tiny_model(9);
        let log1 = run_stage1(&mut m1, &dataset, &cfg, 10).unwrap();
        let mut m2 = tiny_model(9);
        let log2 = run_stage1(&mut m2, &dataset, &cfg, 10).unwrap();
        assert_eq!(log1.to_csv(), log2.to_csv());
    }
}
