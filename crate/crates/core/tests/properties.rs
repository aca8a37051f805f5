//! Randomized invariants of the numerical and sensing layers.

use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;

use quadnav::estimator::{build_augmented, kf_step, AugmentedEstimate, AUG_DIM};
use quadnav::model::{build_discrete_model, ControlInput, PlantState, QuadrotorParams};
use quadnav::numerics::{dare_residual, discretize_zoh, norm_inf, solve_dare, Matrix, Spd, Vector};
use quadnav::sensors::{
    solve_spheres, AnchorSet, AvailabilityMask, LandmarkSet, MeasurementFrame, MeasurementVector,
};

fn finite(range: f64) -> impl Strategy<Value = f64> {
    -range..range
}

fn point(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (finite(range), finite(range), finite(range)).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn box_anchors() -> AnchorSet {
    let mut v = Vec::new();
    for x in [-5.0, 5.0] {
        for y in [-5.0, 5.0] {
            for z in [0.0, 4.0] {
                v.push(Vector3::new(x, y, z));
            }
        }
    }
    AnchorSet::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_multilateration_is_exact(p in point(4.0)) {
        let anchors = box_anchors();
        let ranges: Vec<f64> = anchors.positions().iter().map(|a| (p - a).norm()).collect();
        let est = solve_spheres(anchors.positions(), &ranges, None).unwrap();
        prop_assert!((est - p).norm() < 1e-8, "error {}", (est - p).norm());
    }

    #[test]
    fn three_sphere_fix_returns_truth_with_nearby_hint(
        p in point(3.0),
        nudge in point(0.05),
    ) {
        // landmarks on a wall, tag off the wall so the mirror root is distinct
        let centers = [
            Vector3::new(6.0, -2.0, 0.5),
            Vector3::new(6.0, 2.5, 1.0),
            Vector3::new(6.0, 0.0, 3.5),
        ];
        let ranges: Vec<f64> = centers.iter().map(|c| (p - c).norm()).collect();
        let est = solve_spheres(&centers, &ranges, Some(p + nudge)).unwrap();
        prop_assert!((est - p).norm() < 1e-6, "error {}", (est - p).norm());
    }

    #[test]
    fn narrowing_visibility_never_adds_landmarks(
        pos in point(3.0),
        yaw in -3.0f64..3.0,
        range in 1.0f64..15.0,
        fov in 0.1f64..1.5,
        shrink in 0.1f64..1.0,
    ) {
        let pts: Vec<Vector3<f64>> = (0..16)
            .map(|i| {
                let a = i as f64 * 0.4;
                Vector3::new(6.0 * a.cos(), 6.0 * a.sin(), 1.0 + (i % 3) as f64)
            })
            .collect();
        let wide = LandmarkSet::new(pts, range, fov).unwrap();
        let narrow = wide.with_visibility(range * shrink, fov * shrink).unwrap();
        let mut s = PlantState::hover_at(pos);
        s.attitude.z = yaw;
        let w = wide.visible_from(&s);
        let n = narrow.visible_from(&s);
        prop_assert!(n.len() <= w.len());
        prop_assert!(n.iter().all(|p| w.contains(p)));
    }

    #[test]
    fn zoh_composes_over_split_periods(h1 in 0.001f64..0.2, h2 in 0.001f64..0.2, seed in 0u64..1000) {
        let a = DMatrix::from_fn(4, 4, |i, j| (((seed + 7 * i as u64 + 3 * j as u64) % 11) as f64 - 5.0) * 0.2);
        let b = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.3 - 0.5);
        let (p1, g1) = discretize_zoh(&a, &b, h1).unwrap();
        let (p2, g2) = discretize_zoh(&a, &b, h2).unwrap();
        let (p12, g12) = discretize_zoh(&a, &b, h1 + h2).unwrap();
        prop_assert!((&p2 * &p1 - &p12).amax() < 1e-10);
        prop_assert!((&p2 * &g1 + &g2 - &g12).amax() < 1e-10);
    }

    #[test]
    fn dare_solution_is_a_fixed_point(entries in prop::collection::vec(-1.5f64..1.5, 24)) {
        let phi = Matrix::from_row_slice(4, 4, &entries[..16]);
        let gamma = Matrix::from_row_slice(4, 2, &entries[16..]);
        // full-rank Γ plus the identity Q keeps most draws stabilizable
        let gamma = gamma + Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let q = Spd::identity(4);
        let r = Spd::identity(2);
        if let Ok(s) = solve_dare(&phi, &gamma, &q, &r) {
            let res = dare_residual(&phi, &gamma, &q, &r, s.matrix()).unwrap();
            prop_assert!(res <= 1e-9 * (1.0 + norm_inf(s.matrix())), "residual {res}");
            let eig = s.matrix().clone().symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() > 0.0);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd(masks in prop::collection::vec(0u8..8, 1..40)) {
        let p = QuadrotorParams::default();
        let w = Spd::identity(12);
        let v = Spd::from_diagonal(&[0.05, 0.05, 0.05, 0.08, 0.08, 0.08, 0.01, 0.01, 0.01]).unwrap();
        let am = build_augmented(&build_discrete_model(&p, w, v).unwrap()).unwrap();
        let mut est = AugmentedEstimate::new(
            Vector::zeros(AUG_DIM),
            Spd::identity(AUG_DIM),
        ).unwrap();
        for m in masks {
            let mask = AvailabilityMask::new(m & 1 != 0, m & 2 != 0, m & 4 != 0);
            let frame = MeasurementFrame { y: MeasurementVector::zeros(), mask };
            est = kf_step(&est, &am, &frame, &ControlInput::default(), &Vector3::zeros()).unwrap();
            let pm = est.p.matrix();
            prop_assert!((pm - pm.transpose()).amax() <= 1e-9 * pm.amax().max(1.0));
            let eig = pm.clone().symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() >= -1e-8 * eig.max().max(1.0));
        }
    }
}
