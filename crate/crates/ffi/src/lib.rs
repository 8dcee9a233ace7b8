//! C ABI for the avatar pipeline: opaque handles, integer status codes, and
//! a thread-local last-error message. The header is generated into
//! `include/rsat.h` by cbindgen at build time.

use rsat_core::gsplat::scene::load_camera;
use rsat_core::gsplat::{rasterize, Camera, Scene};
use rsat_core::motiongen::{AudioFeatureSeq, MotionSeq};
use rsat_core::rigging::{
    blendshape_apply, compute_binding_frames, load_bound_set, to_deformable, BlendshapeBasis,
    BoundGaussianSet, TriangleMesh,
};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsatStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    RenderError = 4,
    BufferTooSmall = 5,
    GenerateError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg).unwrap_or_default();
    });
}

fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, RsatStatus> {
    if ptr.is_null() {
        set_error("null path argument");
        return Err(RsatStatus::NullArgument);
    }
    let s = unsafe { CStr::from_ptr(ptr) };
    match s.to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(RsatStatus::InvalidUtf8)
        }
    }
}

/// Library version string; static storage, never freed.
#[no_mangle]
pub extern "C" fn rsat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsat_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque Gaussian scene handle.
pub struct RsatScene {
    inner: Scene,
}

/// Opaque camera handle.
pub struct RsatCamera {
    inner: Camera,
}

/// Opaque rigged-avatar handle: mesh, blendshape rig and bound Gaussians.
pub struct RsatAvatar {
    mesh: TriangleMesh,
    basis: BlendshapeBasis,
    groups: rsat_core::rigging::MotionGroups,
    set: BoundGaussianSet,
}

/// Load a scene JSON. On success writes a heap handle into `out`; release
/// it with `rsat_scene_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsat_scene_load(
    path: *const c_char,
    out: *mut *mut RsatScene,
) -> RsatStatus {
    if out.is_null() {
        set_error("null output handle");
        return RsatStatus::NullArgument;
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match Scene::load(path) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(RsatScene { inner })) };
            RsatStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RsatStatus::ParseError
        }
    }
}

/// # Safety
/// `scene` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rsat_scene_free(scene: *mut RsatScene) {
    if !scene.is_null() {
        drop(unsafe { Box::from_raw(scene) });
    }
}

/// # Safety
/// `scene` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rsat_scene_gaussian_count(scene: *const RsatScene) -> usize {
    if scene.is_null() {
        return 0;
    }
    unsafe { &*scene }.inner.gaussians.len()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rsat_camera_load(
    path: *const c_char,
    out: *mut *mut RsatCamera,
) -> RsatStatus {
    if out.is_null() {
        set_error("null output handle");
        return RsatStatus::NullArgument;
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_camera(path) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(RsatCamera { inner })) };
            RsatStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            RsatStatus::ParseError
        }
    }
}

/// # Safety
/// `camera` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rsat_camera_free(camera: *mut RsatCamera) {
    if !camera.is_null() {
        drop(unsafe { Box::from_raw(camera) });
    }
}

/// # Safety
/// `camera` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rsat_camera_width(camera: *const RsatCamera) -> u32 {
    if camera.is_null() {
        return 0;
    }
    unsafe { &*camera }.inner.width as u32
}

/// # Safety
/// `camera` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rsat_camera_height(camera: *const RsatCamera) -> u32 {
    if camera.is_null() {
        return 0;
    }
    unsafe { &*camera }.inner.height as u32
}

/// Render the scene into a caller-owned interleaved RGB8 buffer of at least
/// width·height·3 bytes.
///
/// # Safety
/// `buffer` must point to `buffer_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rsat_render_rgb8(
    scene: *const RsatScene,
    camera: *const RsatCamera,
    buffer: *mut u8,
    buffer_len: usize,
) -> RsatStatus {
    if scene.is_null() || camera.is_null() || buffer.is_null() {
        set_error("null argument to rsat_render_rgb8");
        return RsatStatus::NullArgument;
    }
    let scene = unsafe { &*scene };
    let camera = unsafe { &*camera };
    let needed = camera.inner.width * camera.inner.height * 3;
    if buffer_len < needed {
        set_error(format!(
            "render buffer holds {buffer_len} bytes, needs {needed}"
        ));
        return RsatStatus::BufferTooSmall;
    }
    let img = rasterize(
        &scene.inner.gaussians,
        &camera.inner,
        &scene.inner.background,
    );
    let rgb = img.to_rgb8();
    unsafe { std::ptr::copy_nonoverlapping(rgb.as_ptr(), buffer, needed) };
    RsatStatus::Ok
}

/// Load a rigged avatar: mesh (OBJ), blendshape basis (BSB1), bound-set
/// checkpoint (JSON + sibling payload), and the EXP/JAW/POSE group sizes of
/// the rig (they must sum to the basis parameter count).
/// # Safety
/// All path arguments must be NUL-terminated strings and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rsat_avatar_load(
    mesh_path: *const c_char,
    basis_path: *const c_char,
    boundset_path: *const c_char,
    exp_dims: usize,
    jaw_dims: usize,
    pose_dims: usize,
    out: *mut *mut RsatAvatar,
) -> RsatStatus {
    if out.is_null() {
        set_error("null output handle");
        return RsatStatus::NullArgument;
    }
    let (mesh_path, basis_path, boundset_path) = match (
        path_arg(mesh_path),
        path_arg(basis_path),
        path_arg(boundset_path),
    ) {
        (Ok(a), Ok(b), Ok(c)) => (a, b, c),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    let groups = rsat_core::rigging::MotionGroups {
        exp: exp_dims,
        jaw: jaw_dims,
        pose: pose_dims,
    };
    let loaded = (|| -> Result<RsatAvatar, String> {
        let mesh = TriangleMesh::load_obj(mesh_path).map_err(|e| e.to_string())?;
        let basis = BlendshapeBasis::load(basis_path).map_err(|e| e.to_string())?;
        if basis.param_count != groups.total() {
            return Err(format!(
                "group sizes sum to {}, basis has {} parameters",
                groups.total(),
                basis.param_count
            ));
        }
        let set = load_bound_set(boundset_path).map_err(|e| e.to_string())?;
        set.validate(mesh.faces.len()).map_err(|e| e.to_string())?;
        Ok(RsatAvatar {
            mesh,
            basis,
            groups,
            set,
        })
    })();
    match loaded {
        Ok(avatar) => {
            unsafe { *out = Box::into_raw(Box::new(avatar)) };
            RsatStatus::Ok
        }
        Err(e) => {
            set_error(e);
            RsatStatus::ParseError
        }
    }
}

/// # Safety
/// `avatar` must be a handle returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn rsat_avatar_free(avatar: *mut RsatAvatar) {
    if !avatar.is_null() {
        drop(unsafe { Box::from_raw(avatar) });
    }
}

/// Pose the avatar with one motion-parameter frame and render it.
///
/// # Safety
/// `params` must point to `param_count` readable doubles, `background` to 3
/// readable doubles, and `buffer` to `buffer_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rsat_avatar_render_rgb8(
    avatar: *const RsatAvatar,
    camera: *const RsatCamera,
    params: *const f64,
    param_count: usize,
    background: *const f64,
    buffer: *mut u8,
    buffer_len: usize,
) -> RsatStatus {
    if avatar.is_null()
        || camera.is_null()
        || params.is_null()
        || background.is_null()
        || buffer.is_null()
    {
        set_error("null argument to rsat_avatar_render_rgb8");
        return RsatStatus::NullArgument;
    }
    let avatar = unsafe { &*avatar };
    let camera = unsafe { &*camera };
    let params = unsafe { std::slice::from_raw_parts(params, param_count) };
    let bg = unsafe { std::slice::from_raw_parts(background, 3) };
    let needed = camera.inner.width * camera.inner.height * 3;
    if buffer_len < needed {
        set_error(format!(
            "render buffer holds {buffer_len} bytes, needs {needed}"
        ));
        return RsatStatus::BufferTooSmall;
    }
    let rendered = (|| -> Result<Vec<u8>, String> {
        let posed = blendshape_apply(&avatar.mesh, &avatar.basis, &avatar.groups, params, None)
            .map_err(|e| e.to_string())?;
        let frames = compute_binding_frames(&posed).map_err(|e| e.to_string())?;
        let world = to_deformable(&avatar.set, &frames).map_err(|e| e.to_string())?;
        let img = rasterize(&world, &camera.inner, &[bg[0], bg[1], bg[2]]);
        Ok(img.to_rgb8())
    })();
    match rendered {
        Ok(rgb) => {
            unsafe { std::ptr::copy_nonoverlapping(rgb.as_ptr(), buffer, needed) };
            RsatStatus::Ok
        }
        Err(e) => {
            set_error(e);
            RsatStatus::RenderError
        }
    }
}

/// Run motion generation end to end on files: loads a model checkpoint,
/// both speakers' audio features (AFT1) and speaker-A motion (MSQ1), and
/// writes speaker-B's predicted motion (MSQ1) to `out_path`. `blood` and
/// `equal` select the relationship class (0 or 1 each).
/// # Safety
/// All path arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rsat_generate_motion(
    ckpt_path: *const c_char,
    audio_a_path: *const c_char,
    audio_b_path: *const c_char,
    motion_a_path: *const c_char,
    blood: i32,
    equal: i32,
    out_path: *const c_char,
) -> RsatStatus {
    let paths = [
        path_arg(ckpt_path),
        path_arg(audio_a_path),
        path_arg(audio_b_path),
        path_arg(motion_a_path),
        path_arg(out_path),
    ];
    let mut resolved = Vec::with_capacity(5);
    for p in paths {
        match p {
            Ok(p) => resolved.push(p),
            Err(s) => return s,
        }
    }
    let result = (|| -> Result<(), String> {
        let ckpt = rsat_core::training::load_checkpoint(resolved[0]).map_err(|e| e.to_string())?;
        let motion_cfg: rsat_core::motiongen::MotionGenConfig = serde_json::from_value(
            ckpt.meta
                .get("motion")
                .cloned()
                .ok_or("checkpoint lacks a motion config")?,
        )
        .map_err(|e| e.to_string())?;
        let social_cfg: rsat_core::social::SocialConfig = serde_json::from_value(
            ckpt.meta
                .get("social")
                .cloned()
                .ok_or("checkpoint lacks a social config")?,
        )
        .map_err(|e| e.to_string())?;
        let mut model = rsat_core::training::build_model(motion_cfg, social_cfg, 0)
            .map_err(|e| e.to_string())?;
        ckpt.apply_all(&mut model.store)
            .map_err(|e| e.to_string())?;
        let audio_a = AudioFeatureSeq::load(resolved[1]).map_err(|e| e.to_string())?;
        let audio_b = AudioFeatureSeq::load(resolved[2]).map_err(|e| e.to_string())?;
        let motion_a = MotionSeq::load(resolved[3]).map_err(|e| e.to_string())?;
        let rel = rsat_core::social::SocialRelationship {
            blood: blood != 0,
            equal: equal != 0,
        };
        let out = model
            .motiongen
            .generate(
                &model.store,
                &model.social,
                &audio_a,
                &audio_b,
                &motion_a,
                rel,
            )
            .map_err(|e| e.to_string())?;
        out.save(resolved[4]).map_err(|e| e.to_string())
    })();
    match result {
        Ok(()) => RsatStatus::Ok,
        Err(e) => {
            set_error(e);
            RsatStatus::GenerateError
        }
    }
}
