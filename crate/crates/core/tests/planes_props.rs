mod common;

use proptest::prelude::*;
use uav_inspect::cloud::PointCloud;
use uav_inspect::distance::Mode;
use uav_inspect::planes::{default_bin_width, euclidean_clusters, extract_parallel_planes, ransac_plane, RansacConfig};
use uav_inspect::synth::{gen_building_pair, SceneSpec};
use uav_inspect::{Exec, Vec3};

fn cfg(seed: u64, iterations: usize, threshold: f64) -> RansacConfig {
    RansacConfig {
        iterations,
        inlier_threshold: threshold,
        min_inliers: 3,
        min_inlier_fraction: 0.0,
        rng_seed: seed,
        exec: Exec::Sequential,
    }
}

/// Two planes plus uniform clutter.
fn cluttered_planes(seed: u64) -> PointCloud {
    let mut pts = common::noisy_plane_points(seed, 300, Vec3::new(0.0, 0.0, 1.0), -2.0, 10.0, 0.05);
    pts.extend(common::noisy_plane_points(
        seed ^ 1,
        150,
        Vec3::new(1.0, 0.2, 0.0),
        4.0,
        6.0,
        0.05,
    ));
    pts.extend(common::blob_cloud(seed ^ 2, 100, 1, 1.0, 8.0).points);
    PointCloud::new(pts)
}

fn sorted_partition(mut groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    groups
}

proptest! {
    #![proptest_config(common::cases(48))]

    #[test]
    fn clustering_matches_union_find(
        seed in any::<u64>(),
        n in 2usize..=500,
        k in 1usize..6,
        radius in 0.2f64..2.0,
        min_size in 1usize..8,
    ) {
        let cloud = common::blob_cloud(seed, n, k, 20.0, 1.0);
        let got: Vec<Vec<usize>> = euclidean_clusters(&cloud, radius, min_size)
            .unwrap()
            .into_iter()
            .map(|c| c.indices)
            .collect();
        let want: Vec<Vec<usize>> = common::union_find_components(&cloud.points, radius)
            .into_iter()
            .filter(|g| g.len() >= min_size)
            .collect();
        prop_assert_eq!(sorted_partition(got.clone()), sorted_partition(want));
        for w in got.windows(2) {
            prop_assert!(w[0].len() >= w[1].len());
        }
    }

    #[test]
    fn ransac_is_deterministic_per_seed(seed in any::<u64>()) {
        let cloud = cluttered_planes(seed);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        let a = ransac_plane(&cloud, &idx, &cfg(seed, 200, 0.1), None).unwrap();
        let b = ransac_plane(&cloud, &idx, &cfg(seed, 200, 0.1), None).unwrap();
        let par = RansacConfig { exec: Exec::Parallel, ..cfg(seed, 200, 0.1) };
        let c = ransac_plane(&cloud, &idx, &par, None).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a, &c);
    }

    #[test]
    fn more_iterations_never_lose_inliers(seed in any::<u64>(), it1 in 1usize..300, extra in 0usize..300) {
        let cloud = cluttered_planes(seed);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        let a = ransac_plane(&cloud, &idx, &cfg(seed, it1, 0.1), None).unwrap();
        let b = ransac_plane(&cloud, &idx, &cfg(seed, it1 + extra, 0.1), None).unwrap();
        prop_assert!(b.inlier_count >= a.inlier_count);
    }

    #[test]
    fn inliers_monotone_in_threshold(seed in any::<u64>(), t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let cloud = cluttered_planes(seed);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        let a = ransac_plane(&cloud, &idx, &cfg(seed, 150, lo), None).unwrap();
        let b = ransac_plane(&cloud, &idx, &cfg(seed, 150, hi), None).unwrap();
        prop_assert!(b.inlier_count >= a.inlier_count);
    }
}

#[test]
fn slab_planes_are_mutually_parallel() {
    for (seed, mode) in [(1u64, Mode::InBetween), (2, Mode::Frontal), (3, Mode::Roof)] {
        let mut spec = SceneSpec::for_mode(mode, 14.0, seed);
        spec.density = 4.0;
        let (cloud, _) = gen_building_pair(&spec).unwrap();
        let clusters = euclidean_clusters(&cloud, 1.5, 50).unwrap();
        let axis = spec.separation_axis;
        let max_angle = 15.0;
        for c in clusters.iter().take(2) {
            let rc = RansacConfig {
                min_inliers: 20,
                rng_seed: seed,
                ..RansacConfig::default()
            };
            let planes = extract_parallel_planes(&cloud, c, axis, default_bin_width(c, axis), &rc, max_angle).unwrap();
            for a in &planes {
                for b in &planes {
                    assert!(a.plane.angle_deg(&b.plane) <= 2.0 * max_angle, "{mode}: {a:?} vs {b:?}");
                }
            }
        }
    }
}
