//! Round-trip properties of the binary containers and pose files.

use egoflow::dataio::{
    read_depth, read_flow, read_mask, read_pose_file, write_depth, write_flow, write_mask,
    write_pose_file,
};
use egoflow::geometry::{so3_exp, FlowField, InverseDepthMap, MaskGrid, Pose};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn flow_strategy() -> impl Strategy<Value = FlowField> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), w * h).prop_map(
            move |values| {
                FlowField::from_vec(
                    w,
                    h,
                    values.into_iter().map(|(u, v)| Vector2::new(u, v)).collect(),
                )
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_round_trip_is_f32_exact(field in flow_strategy()) {
        let mut buf = Vec::new();
        write_flow(&mut buf, &field).unwrap();
        prop_assert_eq!(buf.len(), 12 + 8 * field.len());
        let back = read_flow(buf.as_slice()).unwrap();
        for (row, col, v) in field.iter() {
            prop_assert_eq!(back.at(row, col).x, v.x as f32 as f64);
            prop_assert_eq!(back.at(row, col).y, v.y as f32 as f64);
        }
    }

    #[test]
    fn depth_round_trip_is_f32_exact(
        w in 1usize..12,
        h in 1usize..12,
        scale in 0.0f64..10.0,
    ) {
        let map = InverseDepthMap::from_fn(w, h, |r, c| scale * ((r * w + c) as f64).sin().abs());
        let mut buf = Vec::new();
        write_depth(&mut buf, &map).unwrap();
        let back = read_depth(buf.as_slice()).unwrap();
        for (a, b) in map.as_slice().iter().zip(back.as_slice()) {
            prop_assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn mask_round_trip_identity(
        w in 1usize..12,
        h in 1usize..12,
        bits in proptest::collection::vec(any::<bool>(), 144),
    ) {
        let mask = MaskGrid::from_vec(w, h, bits[..w * h].to_vec());
        let mut buf = Vec::new();
        write_mask(&mut buf, &mask).unwrap();
        prop_assert_eq!(read_mask(buf.as_slice()).unwrap(), mask);
    }

    #[test]
    fn pose_file_round_trip(
        axes in proptest::collection::vec(
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..3.0, -50.0f64..50.0,
             -50.0f64..50.0, -50.0f64..50.0),
            1..6,
        ),
    ) {
        let trajectory: Vec<Pose> = axes
            .into_iter()
            .map(|(x, y, z, angle, tx, ty, tz)| {
                let axis = Vector3::new(x, y, z);
                let rotation = if axis.norm() < 1e-6 {
                    so3_exp(Vector3::zeros())
                } else {
                    so3_exp(axis.normalize() * angle)
                };
                Pose::new(rotation, Vector3::new(tx, ty, tz))
            })
            .collect();
        let mut buf = Vec::new();
        write_pose_file(&mut buf, &trajectory).unwrap();
        let back = read_pose_file(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), trajectory.len());
        for (a, b) in trajectory.iter().zip(&back) {
            prop_assert!((a.rotation - b.rotation).norm() < 1e-6);
            prop_assert!((a.translation - b.translation).norm() < 1e-6);
            // Loaded rotations are exactly orthonormal again.
            b.validate(1e-9).unwrap();
        }
    }
}
