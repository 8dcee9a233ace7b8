//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)]

use rsat_core::gsplat::scene::{save_camera, CameraDoc};
use rsat_core::gsplat::{Camera, Gaussian3D, Image, Scene};
use rsat_core::motiongen::{AudioFeatureSeq, MotionSeq};
use rsat_core::numcore::Rng;
use rsat_core::rigging::mesh::fan_mesh;
use rsat_core::rigging::{BlendshapeBasis, MotionGroups, TriangleMesh};
use rsat_core::social::SocialRelationship;
use rsat_core::training::dataset::{ClipEntry, DatasetManifest, FrameEntry};
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn rsat_bin() -> &'static str {
    env!("CARGO_BIN_EXE_rsat")
}

pub struct CliOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliOutput {
    let out = Command::new(rsat_bin())
        .args(args)
        .output()
        .expect("binary runs");
    CliOutput {
        status: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Camera at z = +3 looking down +z with the mesh near the origin.
pub fn test_camera(width: usize, height: usize, focal: f64) -> Camera {
    let w = [
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, -0.5, //
        0.0, 0.0, 1.0, 3.0, //
        0.0, 0.0, 0.0, 1.0,
    ];
    Camera::new(
        w,
        focal,
        focal,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
        0.1,
    )
    .expect("valid test camera")
}

pub fn random_gaussian(rng: &mut Rng) -> Gaussian3D {
    Gaussian3D {
        position: [
            rng.range(-0.6, 0.6),
            rng.range(-0.4, 0.8),
            rng.range(2.0, 4.5),
        ],
        rotation: [
            rng.range(0.5, 1.0),
            rng.range(-0.5, 0.5),
            rng.range(-0.5, 0.5),
            rng.range(-0.5, 0.5),
        ],
        log_scale: [
            rng.range(-2.5, -1.0),
            rng.range(-2.5, -1.0),
            rng.range(-2.5, -1.0),
        ],
        opacity_logit: rng.range(-1.0, 2.0),
        color: [rng.uniform(), rng.uniform(), rng.uniform()],
    }
}

pub fn random_scene(seed: u64, n: usize) -> Vec<Gaussian3D> {
    let mut rng = Rng::seed_from(seed);
    (0..n).map(|_| random_gaussian(&mut rng)).collect()
}

pub struct DyadFiles {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub mesh: PathBuf,
    pub basis: PathBuf,
    pub camera: PathBuf,
    pub groups: MotionGroups,
    pub d_audio: usize,
    pub frames: usize,
}

/// Write a tiny on-disk dataset: mesh, blendshape basis, cameras, audio and
/// motion files, ground-truth images rendered from a known bound set, and
/// the manifest tying it together.
pub fn write_dyad_dataset(dir: &Path, clips: usize, with_frames: bool) -> DyadFiles {
    let groups = MotionGroups {
        exp: 4,
        jaw: 1,
        pose: 6,
    };
    let d_audio = 8;
    let frames = 6;
    let fps = 25.0;
    std::fs::create_dir_all(dir).unwrap();

    let mesh = fan_mesh(6);
    let mesh_path = dir.join("head.obj");
    mesh.save_obj(&mesh_path).unwrap();

    let mut basis = BlendshapeBasis::zeros(mesh.vertices.len(), groups.total());
    // gentle expression columns so posed meshes stay valid
    let mut rng = Rng::seed_from(4242);
    for vi in 0..mesh.vertices.len() {
        for c in 0..3 {
            for p in 0..groups.exp {
                basis.set(vi, c, p, rng.normal() * 0.02);
            }
        }
    }
    let basis_path = dir.join("head.bsb");
    basis.save(&basis_path).unwrap();

    let cam = test_camera(24, 24, 18.0);
    let cam_path = dir.join("cam.json");
    save_camera(&cam, &cam_path).unwrap();

    // ground-truth renderer state: anchors with distinctive colors
    let mut gt_set = rsat_core::rigging::init_anchors(&mesh).unwrap();
    for (i, a) in gt_set.anchors.iter_mut().enumerate() {
        let t = i as f64 / 6.0;
        a.params.color = [t, 1.0 - t, 0.4];
        a.params.opacity_logit = 1.2;
        a.params.log_scale = [-0.8; 3];
    }

    let mut entries = Vec::new();
    for ci in 0..clips {
        let mut rng = Rng::seed_from(1000 + ci as u64);
        let t_audio = frames * 2; // 50 fps audio against 25 fps motion
        let mk_audio = |rng: &mut Rng| {
            AudioFeatureSeq::new(
                rng.normal_vec(t_audio * d_audio, 1.0),
                t_audio,
                d_audio,
                50.0,
            )
            .unwrap()
        };
        let audio_a = mk_audio(&mut rng);
        let audio_b = mk_audio(&mut rng);
        let motion_a = MotionSeq::new(
            rng.normal_vec(frames * groups.total(), 0.2),
            frames,
            groups,
            fps,
        )
        .unwrap();
        let motion_b = MotionSeq::new(
            rng.normal_vec(frames * groups.total(), 0.2),
            frames,
            groups,
            fps,
        )
        .unwrap();

        let paths = [
            (format!("c{ci}_aa.aft"), &audio_a),
            (format!("c{ci}_ab.aft"), &audio_b),
        ];
        for (name, seq) in paths {
            seq.save(&dir.join(name)).unwrap();
        }
        motion_a.save(&dir.join(format!("c{ci}_ma.msq"))).unwrap();
        motion_b.save(&dir.join(format!("c{ci}_mb.msq"))).unwrap();

        let frame_entries = if with_frames {
            let mut list = Vec::new();
            for fi in [0usize, frames / 2] {
                let posed = rsat_core::rigging::blendshape_apply(
                    &mesh,
                    &basis,
                    &groups,
                    motion_b.frame(fi),
                    None,
                )
                .unwrap();
                let bf = rsat_core::rigging::compute_binding_frames(&posed).unwrap();
                let world = rsat_core::rigging::to_deformable(&gt_set, &bf).unwrap();
                let img = rsat_core::gsplat::rasterize(&world, &cam, &[0.0, 0.0, 0.0]);
                let img_path = dir.join(format!("c{ci}_f{fi}.ppm"));
                img.write_ppm(&img_path).unwrap();
                list.push(FrameEntry {
                    camera: "cam.json".into(),
                    image: img_path.file_name().unwrap().to_str().unwrap().into(),
                    motion_index: fi,
                });
            }
            Some(list)
        } else {
            None
        };

        entries.push(ClipEntry {
            audio_a: format!("c{ci}_aa.aft").into(),
            audio_b: format!("c{ci}_ab.aft").into(),
            motion_a: format!("c{ci}_ma.msq").into(),
            motion_b: format!("c{ci}_mb.msq").into(),
            relationship: SocialRelationship {
                blood: ci % 2 == 0,
                equal: ci % 4 < 2,
            },
            frames: frame_entries,
            id: Some(format!("clip{ci}")),
        });
    }

    let manifest = DatasetManifest { clips: entries };
    let manifest_path = dir.join("dataset.json");
    manifest.save(&manifest_path).unwrap();

    DyadFiles {
        dir: dir.to_path_buf(),
        manifest: manifest_path,
        mesh: mesh_path,
        basis: basis_path,
        camera: cam_path,
        groups,
        d_audio,
        frames,
    }
}

/// Training config JSON matched to the dyad dataset above, desk-scale tiny.
pub fn write_tiny_train_config(dir: &Path, files: &DyadFiles, steps: [usize; 3]) -> PathBuf {
    let cfg = serde_json::json!({
        "motion": {
            "d_audio": files.d_audio,
            "d_model": 16,
            "n_heads": 2,
            "ff_mult": 2,
            "layers": 1,
            "max_len": 32,
            "groups": {"exp": files.groups.exp, "jaw": files.groups.jaw, "pose": files.groups.pose},
            "motion_fps": 25.0
        },
        "social": {"d_s": 8, "d_q": 8, "d_model": 16, "d_hidden": 16, "anchor_count": 0, "time_pairs": 4},
        "stage1": {"steps": steps[0], "batch_size": 2, "lr_network": 1e-3, "densify_interval": 0},
        "stage2": {"steps": steps[1], "densify_interval": 0},
        "stage3": {"steps": steps[2], "densify_interval": 0},
        "mesh": files.mesh,
        "basis": files.basis,
        "background": [0.0, 0.0, 0.0]
    });
    let path = dir.join("train_config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn write_scene(path: &Path, gaussians: Vec<Gaussian3D>, background: [f64; 3]) {
    Scene {
        background,
        gaussians,
    }
    .save(path)
    .unwrap();
}

pub fn write_simple_camera(path: &Path, width: usize, height: usize, focal: f64) {
    let cam = Camera::simple(width, height, focal, 0.1);
    save_camera(&cam, path).unwrap();
}

pub fn save_camera_doc(cam: &Camera, path: &Path) {
    let doc = CameraDoc::from_camera(cam);
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
}

pub fn read_image(path: &Path) -> Image {
    Image::read(path).unwrap()
}

pub fn max_pixel_diff(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Rigid transform applied to a mesh.
pub fn transform_mesh(mesh: &TriangleMesh, rot: &[[f64; 3]; 3], t: &[f64; 3]) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh
            .vertices
            .iter()
            .map(|v| {
                let r = rsat_core::gsplat::math::mat3_mul_vec(rot, v);
                [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
            })
            .collect(),
        faces: mesh.faces.clone(),
    }
}
