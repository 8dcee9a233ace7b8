//! Implementations behind the CLI subcommands.

use super::config::{write_manifest, RunManifest, TrainFileConfig};
use super::{parse_relationship, parse_resolution, CliError};
use crate::gsplat::scene::load_camera;
use crate::gsplat::{rasterize, Camera, Scene};
use crate::motiongen::{AudioFeatureSeq, MotionGroup, MotionSeq};
use crate::rigging::{
    blendshape_apply, compute_binding_frames, init_anchors, load_bound_set, save_bound_set,
    to_deformable, BlendshapeBasis, TriangleMesh,
};
use crate::training::{
    build_model, load_checkpoint, metric_fd, metric_l1, metric_mse_motion, metric_pfd, metric_psnr,
    metric_ssim, run_stage1, run_stage2, run_stage3, save_checkpoint, stage2_frames,
    DatasetManifest, ModelBundle, RendererBundle, TrainClip,
};
use std::path::{Path, PathBuf};

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::input(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn scaled_camera(cam: &Camera, resolution: Option<&str>) -> Result<Camera, CliError> {
    let Some(spec) = resolution else {
        return Ok(cam.clone());
    };
    let (w, h) = parse_resolution(spec)?;
    let sx = w as f64 / cam.width as f64;
    let sy = h as f64 / cam.height as f64;
    Camera::new(
        cam.world_to_camera_matrix(),
        cam.fx * sx,
        cam.fy * sy,
        cam.cx * sx,
        cam.cy * sy,
        w,
        h,
        cam.near,
    )
    .map_err(CliError::from)
}

pub fn cmd_render(
    scene_path: &Path,
    camera_path: &Path,
    out: &Path,
    resolution: Option<&str>,
) -> Result<(), CliError> {
    require_exists(scene_path, "scene file")?;
    require_exists(camera_path, "camera file")?;
    let scene = Scene::load(scene_path)?;
    let cam = scaled_camera(&load_camera(camera_path)?, resolution)?;
    let img = rasterize(&scene.gaussians, &cam, &scene.background);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    img.write(out)?;
    let manifest = RunManifest {
        command: "render".into(),
        seed: 0,
        stage: None,
        inputs: serde_json::json!({
            "scene": scene_path,
            "camera": camera_path,
            "out": out,
            "resolution": resolution,
        }),
        config: TrainFileConfig::default(),
    };
    write_manifest(&manifest, &out.with_extension("manifest.json"))
}

pub struct AnimateArgs {
    pub mesh: PathBuf,
    pub basis: PathBuf,
    pub motion: PathBuf,
    pub boundset: PathBuf,
    pub camera: PathBuf,
    pub out: PathBuf,
    pub frames: Option<usize>,
    pub resolution: Option<String>,
    pub background: [f64; 3],
    pub png: bool,
}

pub fn cmd_animate(args: AnimateArgs) -> Result<(), CliError> {
    for (p, what) in [
        (&args.mesh, "mesh"),
        (&args.basis, "basis"),
        (&args.motion, "motion file"),
        (&args.boundset, "bound-set checkpoint"),
        (&args.camera, "camera file"),
    ] {
        require_exists(p, what)?;
    }
    let mesh = TriangleMesh::load_obj(&args.mesh)?;
    let basis = BlendshapeBasis::load(&args.basis)?;
    let motion = MotionSeq::load(&args.motion)?;
    let set = load_bound_set(&args.boundset)?;
    set.validate(mesh.faces.len())
        .map_err(|e| CliError::input(format!("bound set does not match mesh: {e}")))?;
    let cam = scaled_camera(&load_camera(&args.camera)?, args.resolution.as_deref())?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", args.out.display())))?;
    let count = args.frames.unwrap_or(motion.len).min(motion.len);
    let ext = if args.png { "png" } else { "ppm" };
    for t in 0..count {
        let posed = blendshape_apply(&mesh, &basis, &motion.groups, motion.frame(t), None)?;
        let frames = compute_binding_frames(&posed)?;
        let world = to_deformable(&set, &frames)?;
        let img = rasterize(&world, &cam, &args.background);
        img.write(&args.out.join(format!("frame-{t:05}.{ext}")))?;
    }
    let manifest = RunManifest {
        command: "animate".into(),
        seed: 0,
        stage: None,
        inputs: serde_json::json!({
            "mesh": args.mesh, "basis": args.basis, "motion": args.motion,
            "boundset": args.boundset, "camera": args.camera, "out": args.out,
            "frames": count, "background": args.background,
        }),
        config: TrainFileConfig::default(),
    };
    write_manifest(&manifest, &args.out.join("run_manifest.json"))
}

pub struct TrainArgs {
    pub stage: u8,
    pub manifest: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub ckpt1: Option<PathBuf>,
    pub ckpt2: Option<PathBuf>,
}

fn load_train_inputs(
    args: &TrainArgs,
) -> Result<
    (
        TrainFileConfig,
        Vec<TrainClip>,
        TriangleMesh,
        Option<BlendshapeBasis>,
    ),
    CliError,
> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_exists(path, "config file")?;
            let mut c = TrainFileConfig::load(path)?;
            c.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
            c
        }
        None => TrainFileConfig::default(),
    };
    require_exists(&args.manifest, "dataset manifest")?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let clips = manifest.load_clips(&args.manifest)?;
    if clips.is_empty() {
        return Err(CliError::input("dataset manifest lists no clips"));
    }
    for clip in &clips {
        if clip.motion_b.params() != cfg.motion.groups.total() {
            return Err(CliError::input(format!(
                "clip {} motion has {} parameters, config expects {}",
                clip.id,
                clip.motion_b.params(),
                cfg.motion.groups.total()
            )));
        }
        if clip.audio_a.dim != cfg.motion.d_audio || clip.audio_b.dim != cfg.motion.d_audio {
            return Err(CliError::input(format!(
                "clip {} audio width does not match config d_audio {}",
                clip.id, cfg.motion.d_audio
            )));
        }
    }
    let mesh_path = cfg.mesh.clone().ok_or_else(|| {
        CliError::input("training config must name a mesh (its facets size the offsetnet)")
    })?;
    require_exists(&mesh_path, "mesh")?;
    let mesh = TriangleMesh::load_obj(&mesh_path)?;
    cfg.social.anchor_count = mesh.faces.len();
    let basis = match &cfg.basis {
        Some(p) => {
            require_exists(p, "blendshape basis")?;
            Some(BlendshapeBasis::load(p)?)
        }
        None => None,
    };
    Ok((cfg, clips, mesh, basis))
}

fn ckpt_meta(stage: u8, cfg: &TrainFileConfig, seed: u64) -> serde_json::Value {
    serde_json::json!({
        "stage": stage,
        "motion": cfg.motion,
        "social": cfg.social,
        "seed": seed,
        "background": cfg.background,
    })
}

fn model_from_ckpt(path: &Path) -> Result<(ModelBundle, serde_json::Value), CliError> {
    let ckpt = load_checkpoint(path)?;
    let motion: crate::motiongen::MotionGenConfig = serde_json::from_value(
        ckpt.meta
            .get("motion")
            .cloned()
            .ok_or_else(|| CliError::state("checkpoint lacks a motion config"))?,
    )
    .map_err(|e| CliError::state(format!("bad motion config in checkpoint: {e}")))?;
    let social: crate::social::SocialConfig = serde_json::from_value(
        ckpt.meta
            .get("social")
            .cloned()
            .ok_or_else(|| CliError::state("checkpoint lacks a social config"))?,
    )
    .map_err(|e| CliError::state(format!("bad social config in checkpoint: {e}")))?;
    let mut model = build_model(motion, social, 0)?;
    ckpt.apply_all(&mut model.store)
        .map_err(|e| CliError::state(format!("checkpoint does not fit the model: {e}")))?;
    Ok((model, ckpt.meta))
}

pub fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let (cfg, clips, mesh, basis) = load_train_inputs(&args)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", args.out.display())))?;

    let log =
        match args.stage {
            1 => {
                let mut model = build_model(cfg.motion, cfg.social, args.seed)?;
                let log = run_stage1(&mut model, &clips, &cfg.stage1, args.seed)?;
                save_checkpoint(
                    &model.store,
                    &ckpt_meta(1, &cfg, args.seed),
                    &args.out.join("stage1.ckpt"),
                )?;
                log
            }
            2 => {
                let basis = basis.ok_or_else(|| {
                    CliError::input("stage 2 requires a blendshape basis in the config")
                })?;
                let mut model = build_model(cfg.motion, cfg.social, args.seed)?;
                let mut renderer = RendererBundle {
                    set: init_anchors(&mesh)?,
                    mesh,
                    basis,
                    background: cfg.background,
                };
                let frames = stage2_frames(&clips);
                if frames.is_empty() {
                    return Err(CliError::input(
                        "stage 2 requires clips with ground-truth frames (camera + image)",
                    ));
                }
                let log = run_stage2(&mut model, &mut renderer, &frames, &cfg.stage2, args.seed)?;
                save_checkpoint(
                    &model.store,
                    &ckpt_meta(2, &cfg, args.seed),
                    &args.out.join("stage2.ckpt"),
                )?;
                save_bound_set(&renderer.set, &args.out.join("stage2.boundset.json"))?;
                log
            }
            3 => {
                let ckpt1 = args.ckpt1.as_ref().ok_or_else(|| {
                    CliError::state("stage 3 requires --ckpt1 (stage-1 checkpoint)")
                })?;
                let ckpt2 = args.ckpt2.as_ref().ok_or_else(|| {
                    CliError::state("stage 3 requires --ckpt2 (stage-2 checkpoint)")
                })?;
                for (p, what) in [(ckpt1, "stage-1 checkpoint"), (ckpt2, "stage-2 checkpoint")] {
                    if !p.exists() {
                        return Err(CliError::state(format!(
                            "{what} not found: {}",
                            p.display()
                        )));
                    }
                }
                let basis = basis.ok_or_else(|| {
                    CliError::input("stage 3 requires a blendshape basis in the config")
                })?;
                let (mut model, _meta) = model_from_ckpt(ckpt1)?;
                // the offsetnet comes from the renderer cold start
                let stage2 = load_checkpoint(ckpt2)?;
                stage2.apply_filtered(&mut model.store, |name| {
                    name.starts_with("social.offsetnet")
                })?;
                let boundset_path = ckpt2.with_extension("boundset.json");
                if !boundset_path.exists() {
                    return Err(CliError::state(format!(
                        "stage-2 bound set not found next to the checkpoint: {}",
                        boundset_path.display()
                    )));
                }
                let set = load_bound_set(&boundset_path)?;
                set.validate(mesh.faces.len())
                    .map_err(|e| CliError::state(format!("bound set does not match mesh: {e}")))?;
                let mut renderer = RendererBundle {
                    set,
                    mesh,
                    basis,
                    background: cfg.background,
                };
                let log = run_stage3(&mut model, &mut renderer, &clips, &cfg.stage3, args.seed)?;
                save_checkpoint(
                    &model.store,
                    &ckpt_meta(3, &cfg, args.seed),
                    &args.out.join("stage3.ckpt"),
                )?;
                save_bound_set(&renderer.set, &args.out.join("stage3.boundset.json"))?;
                log
            }
            other => return Err(CliError::input(format!("unknown stage {other}"))),
        };

    log.write_csv(&args.out.join("loss_log.csv"))?;
    let manifest = RunManifest {
        command: "train".into(),
        seed: args.seed,
        stage: Some(args.stage),
        inputs: serde_json::json!({
            "manifest": args.manifest,
            "ckpt1": args.ckpt1,
            "ckpt2": args.ckpt2,
            "out": args.out,
        }),
        config: cfg,
    };
    write_manifest(&manifest, &args.out.join("run_manifest.json"))
}

fn psnr_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::json!("inf")
    }
}

pub fn cmd_eval(pred_path: &Path, gt_path: &Path, out: &Path) -> Result<(), CliError> {
    require_exists(pred_path, "prediction manifest")?;
    require_exists(gt_path, "ground-truth manifest")?;
    let pred_clips = DatasetManifest::load(pred_path)?.load_clips(pred_path)?;
    let gt_clips = DatasetManifest::load(gt_path)?.load_clips(gt_path)?;

    let gt_by_id: std::collections::BTreeMap<&str, &TrainClip> =
        gt_clips.iter().map(|c| (c.id.as_str(), c)).collect();
    let pred_ids: std::collections::BTreeSet<&str> =
        pred_clips.iter().map(|c| c.id.as_str()).collect();
    let gt_ids: std::collections::BTreeSet<&str> = gt_by_id.keys().cloned().collect();
    if pred_ids != gt_ids {
        let missing: Vec<&&str> = gt_ids.difference(&pred_ids).collect();
        let extra: Vec<&&str> = pred_ids.difference(&gt_ids).collect();
        return Err(CliError::input(format!(
            "clip lists are not aligned; missing from predictions: {missing:?}, unmatched extras: {extra:?}"
        )));
    }

    // motion metrics on clip pairs, predictions resampled to ground truth
    let mut pred_motions = Vec::new();
    let mut gt_motions = Vec::new();
    let mut partners = Vec::new();
    for clip in &pred_clips {
        let gt = gt_by_id[clip.id.as_str()];
        let resampled = MotionSeq::new(
            clip.motion_b.resample(gt.motion_b.len)?,
            gt.motion_b.len,
            gt.motion_b.groups,
            gt.motion_b.frame_rate,
        )?;
        pred_motions.push(resampled);
        gt_motions.push(gt.motion_b.clone());
        partners.push(gt.motion_a.clone());
    }
    let pred_refs: Vec<&MotionSeq> = pred_motions.iter().collect();
    let gt_refs: Vec<&MotionSeq> = gt_motions.iter().collect();
    let partner_refs: Vec<&MotionSeq> = partners.iter().collect();

    let mut motion_report = serde_json::Map::new();
    for group in MotionGroup::ALL {
        let fd = metric_fd(&pred_refs, &gt_refs, group)?;
        let pfd = metric_pfd(&pred_refs, &gt_refs, &partner_refs, group)?;
        let mse = metric_mse_motion(&pred_refs, &gt_refs, group)?;
        motion_report.insert(
            group.name().to_string(),
            serde_json::json!({"fd": fd, "pfd": pfd, "mse": mse}),
        );
    }

    // image metrics over frame pairs, matched by frame order
    let mut l1s = Vec::new();
    let mut psnrs = Vec::new();
    let mut ssims = Vec::new();
    for clip in &pred_clips {
        let gt = gt_by_id[clip.id.as_str()];
        for (pf, gf) in clip.frames.iter().zip(&gt.frames) {
            l1s.push(metric_l1(&pf.image, &gf.image)?);
            psnrs.push(metric_psnr(&pf.image, &gf.image)?);
            ssims.push(metric_ssim(&pf.image, &gf.image)?);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let image_report = if l1s.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::json!({
            "frames": l1s.len(),
            "l1": mean(&l1s),
            "psnr": psnr_json(mean(&psnrs)),
            "ssim": mean(&ssims),
        })
    };

    let report = serde_json::json!({
        "clips": pred_clips.len(),
        "motion": motion_report,
        "image": image_report,
    });
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(
        out,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(|e| CliError::input(format!("cannot write report {}: {e}", out.display())))?;
    let manifest = RunManifest {
        command: "eval".into(),
        seed: 0,
        stage: None,
        inputs: serde_json::json!({"pred": pred_path, "gt": gt_path, "out": out}),
        config: TrainFileConfig::default(),
    };
    write_manifest(&manifest, &out.with_extension("manifest.json"))
}

pub struct GenerateArgs {
    pub audio_a: PathBuf,
    pub audio_b: PathBuf,
    pub motion_a: PathBuf,
    pub relationship: Vec<String>,
    pub ckpt: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    for (p, what) in [
        (&args.audio_a, "speaker-A audio"),
        (&args.audio_b, "speaker-B audio"),
        (&args.motion_a, "speaker-A motion"),
    ] {
        require_exists(p, what)?;
    }
    if !args.ckpt.exists() {
        return Err(CliError::state(format!(
            "checkpoint not found: {}",
            args.ckpt.display()
        )));
    }
    let rel = parse_relationship(&args.relationship)?;
    let (model, _meta) = model_from_ckpt(&args.ckpt)?;
    let audio_a = AudioFeatureSeq::load(&args.audio_a)?;
    let audio_b = AudioFeatureSeq::load(&args.audio_b)?;
    let motion_a = MotionSeq::load(&args.motion_a)?;
    let out_seq = model.motiongen.generate(
        &model.store,
        &model.social,
        &audio_a,
        &audio_b,
        &motion_a,
        rel,
    )?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    out_seq.save(&args.out)?;
    let manifest = RunManifest {
        command: "generate".into(),
        seed: args.seed,
        stage: None,
        inputs: serde_json::json!({
            "audio_a": args.audio_a, "audio_b": args.audio_b,
            "motion_a": args.motion_a, "relationship": args.relationship,
            "ckpt": args.ckpt, "out": args.out,
        }),
        config: TrainFileConfig::default(),
    };
    write_manifest(&manifest, &args.out.with_extension("manifest.json"))
}
