#![allow(dead_code)]

use proptest::test_runner::Config;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_inspect::cloud::PointCloud;
use uav_inspect::Vec3;

pub fn cases(n: u32) -> Config {
    Config {
        cases: n,
        failure_persistence: None,
        ..Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian-ish blobs: `k` centres in a `span` cube, points spread `sigma` around them.
pub fn blob_cloud(seed: u64, n: usize, k: usize, span: f64, sigma: f64) -> PointCloud {
    let mut r = rng(seed);
    let centres: Vec<Vec3> = (0..k.max(1))
        .map(|_| Vec3::new(r.gen_range(0.0..span), r.gen_range(0.0..span), r.gen_range(0.0..span)))
        .collect();
    let pts = (0..n)
        .map(|i| {
            let c = centres[i % centres.len()];
            // sum of three uniforms, roughly bell shaped
            let mut d = || (0..3).map(|_| r.gen_range(-1.0..1.0)).sum::<f64>() * sigma;
            c + Vec3::new(d(), d(), d())
        })
        .collect();
    PointCloud::new(pts)
}

/// Brute-force single-linkage components (pairs within `radius`, inclusive).
pub fn union_find_components(points: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let r2 = radius * radius;
    for i in 0..n {
        for j in i + 1..n {
            if (points[i] - points[j]).norm_squared() <= r2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Points on `normal . p + offset = 0` spread over `half` in-plane, plus noise.
pub fn noisy_plane_points(seed: u64, n: usize, normal: Vec3, offset: f64, half: f64, noise: f64) -> Vec<Vec3> {
    let mut r = rng(seed);
    let nrm = normal.normalized().unwrap();
    let helper = if nrm.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let u = nrm.cross(helper).normalized().unwrap();
    let v = nrm.cross(u);
    let base = nrm * -offset;
    (0..n)
        .map(|_| base + u * r.gen_range(-half..half) + v * r.gen_range(-half..half) + nrm * r.gen_range(-noise..noise))
        .collect()
}
