//! Mesh-facet rigging: binding frames, canonical-to-deformable conversion,
//! adaptive density control, and the linear blendshape rig.

pub mod blendshape;
pub mod bound;
pub mod densify;
pub mod frames;
pub mod mesh;

pub use blendshape::{blendshape_apply, BlendshapeBasis, MotionGroups};
pub use bound::{
    init_anchors, load_bound_set, save_bound_set, to_deformable, to_deformable_on_tape,
    AnchorGaussian, BoundGaussianSet, NeuralGaussian,
};
pub use densify::{densify, DensifyReport, DensifyThresholds};
pub use frames::{compute_binding_frames, BindingFrame};
pub use mesh::TriangleMesh;

#[derive(Debug, thiserror::Error)]
pub enum RigError {
    #[error("degenerate faces (zero area): {faces:?}")]
    DegenerateFaces { faces: Vec<usize> },
    #[error("mesh validation failed: {what}")]
    Validation { what: String },
    #[error("i/o failed on {path}: {what}")]
    Io { path: String, what: String },
    #[error("parse failure in {path} (line {line}): {what}")]
    Parse {
        path: String,
        line: usize,
        what: String,
    },
}
