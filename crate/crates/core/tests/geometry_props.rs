//! Property tests for the motion-field geometry and pose algebra.

use egoflow::egosolver::{recover_rotation, recover_translation};
use egoflow::geometry::{
    a_matrix, integrate_trajectory, motion_field, relative_egomotion, rotational_field, so3_exp,
    so3_log, translational_field, CameraModel, EgoMotion, FlowField, InverseDepthMap, Pose,
};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn small_axis_angle() -> impl Strategy<Value = Vector3<f64>> {
    (vec3(1.0), 0.0..(std::f64::consts::PI - 1e-3)).prop_map(|(dir, angle)| {
        if dir.norm() < 1e-6 {
            Vector3::zeros()
        } else {
            dir.normalize() * angle
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn motion_field_superposes(
        t1 in vec3(1.0),
        t2 in vec3(1.0),
        w1 in vec3(0.1),
        w2 in vec3(0.1),
        rho_scale in 0.01f64..0.5,
    ) {
        let cam = CameraModel::centered(8, 6);
        let rho = InverseDepthMap::from_fn(8, 6, |r, c| rho_scale * (1.0 + ((r * 8 + c) as f64) * 0.05));
        let combined = motion_field(
            &EgoMotion::new(t1 + t2, w1 + w2), &rho, &cam).unwrap();
        let a = motion_field(&EgoMotion::new(t1, w1), &rho, &cam).unwrap();
        let b = motion_field(&EgoMotion::new(t2, w2), &rho, &cam).unwrap();
        let sum = a.add(&b);
        for (row, col, v) in combined.iter() {
            prop_assert!((v - sum.at(row, col)).norm() < 1e-12);
        }
    }

    #[test]
    fn rotational_part_ignores_depth(
        t in vec3(1.0),
        w in vec3(0.1),
        rho_a in 0.01f64..0.5,
        rho_b in 0.01f64..0.5,
    ) {
        let cam = CameraModel::centered(6, 6);
        let ego = EgoMotion::new(t, w);
        let field_a = motion_field(&ego, &InverseDepthMap::uniform(6, 6, rho_a), &cam).unwrap();
        let field_b = motion_field(&ego, &InverseDepthMap::uniform(6, 6, rho_b), &cam).unwrap();
        let trans = translational_field(t, &cam);
        // Subtracting each depth-scaled translational part leaves the same
        // rotational field.
        for (row, col, va) in field_a.iter() {
            let ra = va - trans.at(row, col) * rho_a;
            let rb = field_b.at(row, col) - trans.at(row, col) * rho_b;
            prop_assert!((ra - rb).norm() < 1e-12);
        }
    }

    #[test]
    fn a_matrix_annihilates_rays(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = Vector2::new(x, y);
        let residual = a_matrix(p) * Vector3::new(x, y, 1.0);
        prop_assert!(residual.norm() < 1e-12);
    }

    #[test]
    fn exp_log_inverse_below_pi(w in small_axis_angle()) {
        let back = so3_log(&so3_exp(w)).unwrap();
        prop_assert!((back - w).norm() < 1e-9);
    }

    #[test]
    fn zero_motion_zero_field_and_back(rho in 0.01f64..0.5) {
        let cam = CameraModel::centered(8, 8);
        let field = motion_field(
            &EgoMotion::zero(),
            &InverseDepthMap::uniform(8, 8, rho),
            &cam,
        ).unwrap();
        prop_assert_eq!(field.norm_squared(), 0.0);
        // A zero field with positive depth everywhere can only come from
        // zero motion: both solvers return exactly zero.
        let t = recover_translation(&field, &cam).unwrap();
        let w = recover_rotation(&field, &cam).unwrap();
        prop_assert_eq!(t, Vector3::zeros());
        prop_assert_eq!(w, Vector3::zeros());
    }

    #[test]
    fn trajectory_fold_unfold(
        motions in proptest::collection::vec(
            (vec3(1.0), small_axis_angle()).prop_map(|(t, w)| EgoMotion::new(t, w)),
            1..6,
        ),
    ) {
        let traj = integrate_trajectory(&motions, &Pose::identity());
        prop_assert_eq!(traj.len(), motions.len() + 1);
        for (i, m) in motions.iter().enumerate() {
            let rec = relative_egomotion(&traj[i], &traj[i + 1]).unwrap();
            prop_assert!((rec.translation - m.translation).norm() < 1e-10);
            prop_assert!((rec.rotation - m.rotation).norm() < 1e-10);
        }
    }

    #[test]
    fn partial_fields_recovered_exactly(t in vec3(1.5), w in vec3(0.3)) {
        let cam = CameraModel::centered(10, 8);
        let rec_t = recover_translation(&translational_field(t, &cam), &cam).unwrap();
        let rec_w = recover_rotation(&rotational_field(w, &cam), &cam).unwrap();
        prop_assert!((rec_t - t).norm() < 1e-10);
        prop_assert!((rec_w - w).norm() < 1e-10);
    }

    #[test]
    fn translation_recovery_scale_covariant(t in vec3(1.0), c in 0.01f64..50.0) {
        let cam = CameraModel::centered(9, 7);
        let field = translational_field(t, &cam).scale(c);
        let rec = recover_translation(&field, &cam).unwrap();
        prop_assert!((rec - t * c).norm() < 1e-8 * (1.0 + c));
    }
}

#[test]
fn zero_field_from_zero_motion_any_grid() {
    for (w, h) in [(8, 8), (16, 4), (3, 9)] {
        let cam = CameraModel::centered(w, h);
        let zero = FlowField::zeros(w, h);
        assert_eq!(translational_field(Vector3::zeros(), &cam), zero);
        assert_eq!(rotational_field(Vector3::zeros(), &cam), zero);
    }
}
