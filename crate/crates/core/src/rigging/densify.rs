//! Adaptive density control over the anchor–neural structure.
//!
//! Clone and split decisions follow splatting practice: high screen-space
//! positional gradient marks an under-fitting Gaussian; its world-space size
//! decides between cloning (small) and splitting (large). Anchors are
//! immortal — every facet keeps its Gaussian — so pruning and split removal
//! only ever touch neurals.

use super::{BindingFrame, BoundGaussianSet, NeuralGaussian, RigError};
use crate::gsplat::math::{mat3_mul_vec, quat_normalize, quat_to_mat};
use crate::numcore::Rng;

#[derive(Debug, Clone, Copy)]
pub struct DensifyThresholds {
    /// Mean screen-space positional gradient norm above which a Gaussian is
    /// considered under-fitting.
    pub grad_threshold: f64,
    /// World-units size boundary between cloning and splitting.
    pub size_threshold: f64,
    /// Neurals with opacity below this are pruned.
    pub alpha_min: f64,
    /// Scale divisor for split children.
    pub split_factor: f64,
}

impl Default for DensifyThresholds {
    fn default() -> Self {
        DensifyThresholds {
            grad_threshold: 2e-4,
            size_threshold: 0.01,
            alpha_min: 0.005,
            split_factor: 1.6,
        }
    }
}

impl DensifyThresholds {
    /// Express the size threshold as 1% of a scene extent.
    pub fn for_extent(extent: f64) -> Self {
        DensifyThresholds {
            size_threshold: 0.01 * extent,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

fn world_max_scale(g: &crate::gsplat::Gaussian3D, lambda: f64) -> f64 {
    let ls = g.log_scale[0].max(g.log_scale[1]).max(g.log_scale[2]);
    lambda * ls.exp()
}

/// Sample a point from the Gaussian's own canonical distribution.
fn sample_canonical(g: &crate::gsplat::Gaussian3D, rng: &mut Rng) -> [f64; 3] {
    let r = quat_to_mat(&quat_normalize(&g.rotation));
    let local = [
        rng.normal() * g.log_scale[0].exp(),
        rng.normal() * g.log_scale[1].exp(),
        rng.normal() * g.log_scale[2].exp(),
    ];
    let rotated = mat3_mul_vec(&r, &local);
    [
        g.position[0] + rotated[0],
        g.position[1] + rotated[1],
        g.position[2] + rotated[2],
    ]
}

/// One density-control event. `mean_grads` holds the accumulated mean
/// screen-space gradient norm per Gaussian in anchors-then-neurals order
/// (matching [`BoundGaussianSet::face_map`]).
pub fn densify(
    set: &mut BoundGaussianSet,
    frames: &[BindingFrame],
    mean_grads: &[f64],
    thresholds: &DensifyThresholds,
    rng: &mut Rng,
) -> Result<DensifyReport, RigError> {
    let total = set.gaussian_count();
    if mean_grads.len() != total {
        return Err(RigError::Validation {
            what: format!(
                "gradient stats cover {} Gaussians, set holds {total}",
                mean_grads.len()
            ),
        });
    }
    let face_map = set.face_map();
    let mut report = DensifyReport::default();
    let mut new_neurals: Vec<NeuralGaussian> = Vec::new();
    let shrink = thresholds.split_factor.ln();

    // anchors: clone spawns a bound neural; split shrinks the anchor in
    // place and spawns one sampled child, keeping one Gaussian per facet
    for (ai, anchor) in set.anchors.iter_mut().enumerate() {
        if mean_grads[ai] <= thresholds.grad_threshold {
            continue;
        }
        let lambda = frames[anchor.face_index].lambda;
        if world_max_scale(&anchor.params, lambda) <= thresholds.size_threshold {
            new_neurals.push(NeuralGaussian {
                params: anchor.params.clone(),
                anchor_index: ai,
            });
            report.cloned += 1;
        } else {
            let mut child = anchor.params.clone();
            child.position = sample_canonical(&anchor.params, rng);
            for k in 0..3 {
                child.log_scale[k] -= shrink;
                anchor.params.log_scale[k] -= shrink;
            }
            new_neurals.push(NeuralGaussian {
                params: child,
                anchor_index: ai,
            });
            report.split += 1;
        }
    }

    // neurals: clone duplicates, split replaces the source with two children
    let mut kept: Vec<NeuralGaussian> = Vec::with_capacity(set.neurals.len());
    for (ni, neural) in set.neurals.drain(..).enumerate() {
        let grad = mean_grads[set.anchors.len() + ni];
        let face = face_map[set.anchors.len() + ni];
        let lambda = frames[face].lambda;
        if grad > thresholds.grad_threshold {
            if world_max_scale(&neural.params, lambda) <= thresholds.size_threshold {
                new_neurals.push(NeuralGaussian {
                    params: neural.params.clone(),
                    anchor_index: neural.anchor_index,
                });
                kept.push(neural);
                report.cloned += 1;
            } else {
                for _ in 0..2 {
                    let mut child = neural.params.clone();
                    child.position = sample_canonical(&neural.params, rng);
                    for k in 0..3 {
                        child.log_scale[k] -= shrink;
                    }
                    new_neurals.push(NeuralGaussian {
                        params: child,
                        anchor_index: neural.anchor_index,
                    });
                }
                report.split += 1;
                // source removed: not pushed to kept
            }
        } else {
            kept.push(neural);
        }
    }

    // prune low-opacity neurals (anchors are never pruned)
    let before = kept.len() + new_neurals.len();
    kept.retain(|n| n.params.opacity() >= thresholds.alpha_min);
    new_neurals.retain(|n| n.params.opacity() >= thresholds.alpha_min);
    report.pruned = before - kept.len() - new_neurals.len();

    kept.extend(new_neurals);
    set.neurals = kept;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::{compute_binding_frames, init_anchors, mesh::fan_mesh};
    use super::*;

    #[test]
    fn zero_gradients_leave_set_unchanged() {
        let mesh = fan_mesh(4);
        let mut set = init_anchors(&mesh).unwrap();
        let frames = compute_binding_frames(&mesh).unwrap();
        let mut rng = Rng::seed_from(1);
        let report = densify(
            &mut set,
            &frames,
            &[0.0; 4],
            &DensifyThresholds::for_extent(2.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report, DensifyReport::default());
        assert_eq!(set.anchors.len(), 4);
        assert!(set.neurals.is_empty());
    }

    #[test]
    fn small_hot_anchor_clones_into_neural() {
        let mesh = fan_mesh(3);
        let mut set = init_anchors(&mesh).unwrap();
        // keep it below the size threshold so the clone branch fires
        for g in set.iter_params_mut() {
            g.log_scale = [-6.0; 3];
        }
        let frames = compute_binding_frames(&mesh).unwrap();
        let mut grads = vec![0.0; 3];
        grads[1] = 1.0;
        let mut rng = Rng::seed_from(2);
        let report = densify(
            &mut set,
            &frames,
            &grads,
            &DensifyThresholds::for_extent(2.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.cloned, 1);
        assert_eq!(set.anchors.len(), 3);
        assert_eq!(set.neurals.len(), 1);
        assert_eq!(set.neurals[0].anchor_index, 1);
        assert_eq!(set.neurals[0].params, set.anchors[1].params);
    }

    #[test]
    fn large_hot_neural_splits_into_two_children() {
        let mesh = fan_mesh(2);
        let mut set = init_anchors(&mesh).unwrap();
        set.neurals.push(NeuralGaussian {
            params: set.anchors[0].params.clone(),
            anchor_index: 0,
        });
        // unit canonical scale × λ is far above 1% of the extent
        let frames = compute_binding_frames(&mesh).unwrap();
        let grads = vec![0.0, 0.0, 1.0];
        let mut rng = Rng::seed_from(3);
        let before_scale = set.neurals[0].params.log_scale[0];
        let report = densify(
            &mut set,
            &frames,
            &grads,
            &DensifyThresholds::for_extent(2.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.split, 1);
        assert_eq!(set.neurals.len(), 2, "source removed, two children");
        for child in &set.neurals {
            assert_eq!(child.anchor_index, 0);
            assert!((child.params.log_scale[0] - (before_scale - 1.6f64.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn transparent_neurals_pruned_anchors_kept() {
        let mesh = fan_mesh(2);
        let mut set = init_anchors(&mesh).unwrap();
        set.anchors[0].params.opacity_logit = -20.0; // α ≈ 0, still kept
        set.neurals.push(NeuralGaussian {
            params: {
                let mut g = set.anchors[0].params.clone();
                g.opacity_logit = -20.0;
                g
            },
            anchor_index: 0,
        });
        let frames = compute_binding_frames(&mesh).unwrap();
        let mut rng = Rng::seed_from(4);
        let report = densify(
            &mut set,
            &frames,
            &[0.0; 3],
            &DensifyThresholds::for_extent(2.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.pruned, 1);
        assert_eq!(set.anchors.len(), 2);
        assert!(set.neurals.is_empty());
    }

    #[test]
    fn binding_graph_survives_random_densify_sequence() {
        let mesh = fan_mesh(6);
        let mut set = init_anchors(&mesh).unwrap();
        let frames = compute_binding_frames(&mesh).unwrap();
        let mut rng = Rng::seed_from(5);
        let thresholds = DensifyThresholds::for_extent(mesh.extent());
        for _ in 0..30 {
            let n = set.gaussian_count();
            let grads: Vec<f64> = (0..n)
                .map(|_| if rng.uniform() < 0.3 { 1.0 } else { 0.0 })
                .collect();
            // randomly damp some opacities to trigger pruning
            for g in set.iter_params_mut() {
                if rng.uniform() < 0.05 {
                    g.opacity_logit = -12.0;
                }
            }
            densify(&mut set, &frames, &grads, &thresholds, &mut rng).unwrap();
            set.validate(mesh.faces.len()).unwrap();
            assert_eq!(set.anchors.len(), mesh.faces.len());
            for n in &set.neurals {
                assert!(n.anchor_index < set.anchors.len());
            }
            // keep the set from exploding
            if set.neurals.len() > 200 {
                set.neurals.truncate(200);
            }
        }
    }
}
