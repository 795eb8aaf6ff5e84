mod common;

use proptest::prelude::*;
use rand::Rng;
use uav_inspect::geometry::{fit_plane_tls, point_plane_distance, Mat3};
use uav_inspect::{Plane, Vec3};

fn sq_cost(plane: &Plane, pts: &[Vec3]) -> f64 {
    pts.iter().map(|&p| point_plane_distance(plane, p).powi(2)).sum()
}

fn unit(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z).normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0))
}

proptest! {
    #![proptest_config(common::cases(64))]

    #[test]
    fn tls_is_rigidly_equivariant(
        seed in any::<u64>(),
        n in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
        axis in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        angle in -3.1f64..3.1,
        t in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
    ) {
        let pts = common::noisy_plane_points(seed, 300, unit(n.0, n.1, n.2), 3.0, 10.0, 0.2);
        let r = Mat3::from_axis_angle(unit(axis.0, axis.1, axis.2), angle);
        let t = Vec3::new(t.0, t.1, t.2);
        let moved: Vec<Vec3> = pts.iter().map(|&p| r.mul_vec(p) + t).collect();

        let fit = fit_plane_tls(&pts).unwrap();
        let fit_moved = fit_plane_tls(&moved).unwrap();
        let rn = r.mul_vec(fit.normal);
        let expected = Plane { normal: rn, offset: fit.offset - rn.dot(t) }.canonical();
        prop_assert!((fit_moved.normal - expected.normal).norm() < 1e-6, "{fit_moved:?} vs {expected:?}");
        prop_assert!((fit_moved.offset - expected.offset).abs() < 1e-6);
    }

    #[test]
    fn tls_beats_random_perturbations(seed in any::<u64>(), n in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0)) {
        let pts = common::noisy_plane_points(seed, 200, unit(n.0, n.1, n.2), -7.0, 8.0, 0.3);
        let fit = fit_plane_tls(&pts).unwrap();
        let best = sq_cost(&fit, &pts);
        let mut r = common::rng(seed ^ 0x5eed);
        for _ in 0..100 {
            let dn = Vec3::new(r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05), r.gen_range(-0.05..0.05));
            let normal = (fit.normal + dn).normalized().unwrap();
            let other = Plane { normal, offset: fit.offset + r.gen_range(-0.2..0.2) };
            prop_assert!(sq_cost(&other, &pts) >= best - 1e-9 * best.max(1.0));
        }
    }
}
