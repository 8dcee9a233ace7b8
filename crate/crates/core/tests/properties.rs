//! Property tests over the pipeline's structural invariants.

mod common;

use proptest::prelude::*;
use rsat_core::gsplat::{rasterize, rasterize_naive, Camera, Gaussian3D};
use rsat_core::motiongen::{AudioFeatureSeq, MotionSeq};
use rsat_core::numcore::{AdamState, Tape};
use rsat_core::rigging::MotionGroups;
use rsat_core::training::frechet_distance_sq;

fn finite_f64(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL.prop_map(move |v| lo + (hi - lo) * (v.abs() % 1.0))
}

fn arb_gaussian() -> impl Strategy<Value = Gaussian3D> {
    (
        prop::array::uniform3(finite_f64(-1.0, 1.0)),
        prop::array::uniform4(finite_f64(-1.0, 1.0)),
        prop::array::uniform3(finite_f64(-2.5, -0.5)),
        finite_f64(-2.0, 3.0),
        prop::array::uniform3(finite_f64(0.0, 1.0)),
    )
        .prop_map(
            |(mut position, rotation, log_scale, opacity_logit, color)| {
                position[2] = 2.0 + position[2].abs(); // keep in front of the camera
                let rotation = if rotation.iter().all(|v| v.abs() < 1e-6) {
                    [1.0, 0.0, 0.0, 0.0]
                } else {
                    rotation
                };
                Gaussian3D {
                    position,
                    rotation,
                    log_scale,
                    opacity_logit,
                    color,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_always_sum_to_one(rows in 1usize..5, cols in 1usize..6,
                                      seed in any::<u64>()) {
        let mut rng = rsat_core::numcore::Rng::seed_from(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.range(-300.0, 300.0)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(data, vec![rows, cols]);
        let y = tape.softmax(x);
        for r in 0..rows {
            let s: f64 = tape.value(y)[r * cols..(r + 1) * cols].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "row {r} sums to {s}");
        }
    }

    #[test]
    fn tiled_render_always_matches_naive(scene in prop::collection::vec(arb_gaussian(), 0..12),
                                         bg in prop::array::uniform3(finite_f64(0.0, 1.0))) {
        let cam = Camera::simple(24, 20, 14.0, 0.1);
        let tiled = rasterize(&scene, &cam, &bg);
        let naive = rasterize_naive(&scene, &cam, &bg);
        prop_assert_eq!(tiled.data, naive.data);
    }

    #[test]
    fn black_background_energy_bound(scene in prop::collection::vec(arb_gaussian(), 1..10)) {
        let cam = Camera::simple(16, 16, 10.0, 0.1);
        let img = rasterize(&scene, &cam, &[0.0; 3]);
        let max_color = scene
            .iter()
            .flat_map(|g| g.color.iter())
            .cloned()
            .fold(0.0, f64::max);
        for v in &img.data {
            prop_assert!(*v <= max_color + 1e-12);
        }
    }

    #[test]
    fn adam_zero_grad_is_fixed_point(params in prop::collection::vec(finite_f64(-5.0, 5.0), 1..20),
                                     lr in finite_f64(1e-5, 0.5)) {
        let mut state = AdamState::new(params.len(), lr.max(1e-6));
        let mut p = params.clone();
        for _ in 0..3 {
            state.step(&mut p, &vec![0.0; params.len()]).unwrap();
        }
        prop_assert_eq!(p, params);
    }

    #[test]
    fn frechet_distance_symmetric_and_nonnegative(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = rsat_core::numcore::Rng::seed_from(seed);
        let sample = |rng: &mut rsat_core::numcore::Rng| -> (Vec<f64>, Vec<f64>) {
            let rows: Vec<Vec<f64>> = (0..(d + 4) * 3).map(|_| rng.normal_vec(d, 1.0)).collect();
            rsat_core::training::fd::fit_gaussian(&rows).unwrap()
        };
        let (mu1, c1) = sample(&mut rng);
        let (mu2, c2) = sample(&mut rng);
        let ab = frechet_distance_sq(&mu1, &c1, &mu2, &c2).unwrap();
        let ba = frechet_distance_sq(&mu2, &c2, &mu1, &c1).unwrap();
        prop_assert!((ab - ba).abs() < 1e-8, "asymmetry {ab} vs {ba}");
        prop_assert!(ab > -1e-9, "negative distance {ab}");
    }

    #[test]
    fn sequence_files_round_trip(t in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rsat_core::numcore::Rng::seed_from(seed);
        let audio = AudioFeatureSeq::new(rng.normal_vec(t * d, 1.0), t, d, 50.0).unwrap();
        let ap = dir.path().join("a.aft");
        audio.save(&ap).unwrap();
        prop_assert_eq!(AudioFeatureSeq::load(&ap).unwrap(), audio);

        let groups = MotionGroups { exp: d, jaw: 1, pose: 6 };
        let motion = MotionSeq::new(rng.normal_vec(t * groups.total(), 1.0), t, groups, 25.0).unwrap();
        let mp = dir.path().join("m.msq");
        motion.save(&mp).unwrap();
        prop_assert_eq!(MotionSeq::load(&mp).unwrap(), motion);
    }
}
