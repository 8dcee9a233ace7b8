//! Write a complete toy dataset to a directory: mesh, blendshape basis,
//! camera, audio features, motion sequences, ground-truth frames rendered
//! from a known Gaussian configuration, the dataset manifest, and a
//! matching training config.
//!
//!     cargo run --example synth_dataset -- <out-dir> [clips]

use rsat_core::gsplat::scene::save_camera;
use rsat_core::gsplat::{rasterize, Camera};
use rsat_core::motiongen::{AudioFeatureSeq, MotionSeq};
use rsat_core::numcore::Rng;
use rsat_core::rigging::mesh::fan_mesh;
use rsat_core::rigging::{
    blendshape_apply, compute_binding_frames, init_anchors, to_deformable, BlendshapeBasis,
    MotionGroups,
};
use rsat_core::social::SocialRelationship;
use rsat_core::training::dataset::{ClipEntry, DatasetManifest, FrameEntry};
use std::path::Path;

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "synth_data".into());
    let clips: usize = args.next().and_then(|v| v.parse().ok()).unwrap_or(4);
    let dir = Path::new(&out);
    std::fs::create_dir_all(dir).expect("create output dir");

    let groups = MotionGroups { exp: 4, jaw: 1, pose: 6 };
    let d_audio = 8;
    let frames = 8;
    let fps = 25.0;

    let mesh = fan_mesh(12);
    mesh.save_obj(&dir.join("head.obj")).unwrap();

    let mut rng = Rng::seed_from(7);
    let mut basis = BlendshapeBasis::zeros(mesh.vertices.len(), groups.total());
    for vi in 0..mesh.vertices.len() {
        for c in 0..3 {
            for p in 0..groups.exp {
                basis.set(vi, c, p, rng.normal() * 0.02);
            }
        }
    }
    basis.save(&dir.join("head.bsb")).unwrap();

    let w = [
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, -0.5, //
        0.0, 0.0, 1.0, 3.0, //
        0.0, 0.0, 0.0, 1.0,
    ];
    let cam = Camera::new(w, 24.0, 24.0, 16.0, 16.0, 32, 32, 0.1).unwrap();
    save_camera(&cam, &dir.join("cam.json")).unwrap();

    // ground-truth renderer state the training should rediscover
    let mut gt_set = init_anchors(&mesh).unwrap();
    for (i, a) in gt_set.anchors.iter_mut().enumerate() {
        let t = i as f64 / 12.0;
        a.params.color = [0.2 + 0.7 * t, 0.9 - 0.6 * t, 0.4];
        a.params.opacity_logit = 1.2;
        a.params.log_scale = [-0.9; 3];
    }

    let mut entries = Vec::new();
    for ci in 0..clips {
        let t_audio = frames * 2;
        let audio = |rng: &mut Rng| {
            AudioFeatureSeq::new(rng.normal_vec(t_audio * d_audio, 1.0), t_audio, d_audio, 50.0)
                .unwrap()
        };
        audio(&mut rng).save(&dir.join(format!("c{ci}_aa.aft"))).unwrap();
        audio(&mut rng).save(&dir.join(format!("c{ci}_ab.aft"))).unwrap();
        let motion = |rng: &mut Rng| {
            MotionSeq::new(rng.normal_vec(frames * groups.total(), 0.2), frames, groups, fps)
                .unwrap()
        };
        motion(&mut rng).save(&dir.join(format!("c{ci}_ma.msq"))).unwrap();
        let motion_b = motion(&mut rng);
        motion_b.save(&dir.join(format!("c{ci}_mb.msq"))).unwrap();

        let mut frame_entries = Vec::new();
        for fi in [0usize, frames / 2] {
            let posed =
                blendshape_apply(&mesh, &basis, &groups, motion_b.frame(fi), None).unwrap();
            let bf = compute_binding_frames(&posed).unwrap();
            let world = to_deformable(&gt_set, &bf).unwrap();
            let img = rasterize(&world, &cam, &[0.0; 3]);
            let name = format!("c{ci}_f{fi}.ppm");
            img.write_ppm(&dir.join(&name)).unwrap();
            frame_entries.push(FrameEntry {
                camera: "cam.json".into(),
                image: name.into(),
                motion_index: fi,
            });
        }

        entries.push(ClipEntry {
            audio_a: format!("c{ci}_aa.aft").into(),
            audio_b: format!("c{ci}_ab.aft").into(),
            motion_a: format!("c{ci}_ma.msq").into(),
            motion_b: format!("c{ci}_mb.msq").into(),
            relationship: SocialRelationship {
                blood: ci % 2 == 0,
                equal: ci % 4 < 2,
            },
            frames: Some(frame_entries),
            id: Some(format!("clip{ci}")),
        });
    }
    DatasetManifest { clips: entries }
        .save(&dir.join("dataset.json"))
        .unwrap();

    let config = serde_json::json!({
        "motion": {
            "d_audio": d_audio, "d_model": 16, "n_heads": 2, "ff_mult": 2,
            "layers": 1, "max_len": 32,
            "groups": {"exp": groups.exp, "jaw": groups.jaw, "pose": groups.pose},
            "motion_fps": fps
        },
        "social": {"d_s": 8, "d_q": 8, "d_model": 16, "d_hidden": 16, "time_pairs": 4},
        "stage1": {"steps": 200, "batch_size": 2, "lr_network": 1e-3, "densify_interval": 0},
        "stage2": {"steps": 300},
        "stage3": {"steps": 100, "densify_interval": 0},
        "mesh": "head.obj",
        "basis": "head.bsb",
        "background": [0.0, 0.0, 0.0]
    });
    std::fs::write(
        dir.join("train_config.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();
    println!(
        "wrote {clips} clips, mesh, basis, camera, manifest and config under {}",
        dir.display()
    );
}
