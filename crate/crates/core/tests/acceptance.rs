//! End-to-end acceptance checks on synthetic fixtures with known truth.
//! Runs as a plain binary and prints one PASS/FAIL line per criterion.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use uav_inspect::cloud::{load_point_cloud, CloudFormat};
use uav_inspect::distance::{estimate_distances, Mode, ModeConfig};
use uav_inspect::geometry::{fit_plane_tls, point_plane_distance};
use uav_inspect::imaging::{load_mask, load_raster, BinaryMask, CameraIntrinsics, Raster};
use uav_inspect::planes::{euclidean_clusters, ransac_plane, RansacConfig};
use uav_inspect::report::{InspectionReport, RoofAreaSection, ScaleSection, StitchSection};
use uav_inspect::roof::{occupancy_percent, prepare_mask, roof_area};
use uav_inspect::scale::{estimate_scale, load_pose_track, parse_flight_log, sync_poses, SyncConfig};
use uav_inspect::stitching::{compose, list_frames, stitch_sequence, AffineTransform, StitchConfig};
use uav_inspect::synth::{
    gen_building_pair, gen_flight_fixture, gen_occupancy_fixture, gen_roof_sequence, l_shaped_roof, lawnmower,
    render_roof_image, survey_steps, write_distance_fixture, write_occupancy_fixture, write_roof_area_fixture,
    write_stitch_fixture, RoofRenderSpec, SceneSpec,
};
use uav_inspect::{Exec, Plane, Vec3};

type Outcome = (bool, String);

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("distance accuracy", distance_accuracy),
        ("scale recovery", scale_recovery),
        ("roof area", roof_area_accuracy),
        ("stitching", stitching_accuracy),
        ("occupancy", occupancy_accuracy),
        ("robust estimation", robust_estimation),
        ("report reproducibility", report_reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail} [{:.1} s]", t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn distance_accuracy() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for mode in Mode::ALL {
        let mut r = common::rng(0xd157 ^ mode as u64);
        let mut errs = Vec::new();
        for seed in 0..20u64 {
            let gap = r.gen_range(10.0..35.0);
            let spec = SceneSpec::for_mode(mode, gap, 1000 + seed);
            assert_eq!(spec.noise_sigma, 0.05);
            assert_eq!(spec.outlier_fraction, 0.05);
            let (cloud, truth) = gen_building_pair(&spec).unwrap();
            let rc = RansacConfig {
                rng_seed: seed,
                ..RansacConfig::default()
            };
            let rep = match estimate_distances(&cloud, mode, &ModeConfig::for_mode(mode), &rc, 1.0) {
                Ok(rep) => rep,
                Err(e) => return (false, format!("{mode} seed {seed}: {e}")),
            };
            errs.push((rep.mean_metric() - truth.gap).abs() / truth.gap * 100.0);
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        ok &= mean <= 1.0;
        parts.push(format!("{mode} {mean:.3}%"));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    (
        ok,
        format!(
            "mean abs error {} (limit 1%), {secs:.1} s for 60 fixtures (limit 30 s)",
            parts.join(", ")
        ),
    )
}

fn scale_recovery() -> Outcome {
    let (traj, times) = lawnmower(3, 60.0, 15.0, 5.0, 40.0);
    let truth = 0.37;
    let recover = |sigma: f64, seed: u64| {
        let f = gen_flight_fixture(&traj, truth, &times, sigma, seed).unwrap();
        let pairs = sync_poses(&f.poses, &f.log, &SyncConfig::default()).unwrap();
        estimate_scale(&pairs, 2.0).unwrap()
    };
    let within = (0..20u64)
        .filter(|&s| ((recover(0.5, s) - truth) / truth).abs() <= 0.01)
        .count();
    let noiseless = ((recover(0.0, 7) - truth) / truth).abs();
    let ok = within >= 18 && noiseless <= 1e-6;
    (ok, format!("{within}/20 seeds within 1% at 0.5 m GPS noise (need 18), noiseless relative error {noiseless:.2e} (limit 1e-6)"))
}

fn roof_area_accuracy() -> Outcome {
    // constructed masks against C (D/f)^2 computed here
    let mut worst_exact: f64 = 0.0;
    let shapes: [(usize, usize, fn(usize, usize) -> bool); 3] = [
        (1000, 1000, |_, _| true),
        (300, 200, |x, y| (40..260).contains(&x) && (30..170).contains(&y)),
        (400, 400, |x, y| {
            let (dx, dy) = (x as f64 - 200.0, y as f64 - 200.0);
            dx * dx + dy * dy <= 150.0 * 150.0
        }),
    ];
    for (w, h, f) in shapes {
        let mask = BinaryMask::from_fn(w, h, f);
        let count = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| f(x, y))
            .count();
        for (d, focal) in [(50.0, 1000.0), (75.0, 1200.0), (100.0, 3500.0)] {
            let want = count as f64 * (d / focal) * (d / focal);
            let got = roof_area(&mask, d, focal).unwrap().area_m2;
            worst_exact = worst_exact.max(((got - want) / want).abs());
        }
    }

    let mut worst_render: f64 = 0.0;
    let mut parts = Vec::new();
    for d in [50.0, 75.0, 100.0] {
        let spec = render_spec(d);
        let (img, truth) = render_roof_image(&spec).unwrap();
        let mask = prepare_mask(&img, Some(&spec.intrinsics), false, 125).unwrap();
        let got = roof_area(&mask, d, spec.intrinsics.fx).unwrap().area_m2;
        let rel = ((got - truth) / truth).abs();
        worst_render = worst_render.max(rel);
        parts.push(format!("D={d} {:.2}%", rel * 100.0));
    }
    let ok = worst_exact <= 1e-9 && worst_render <= 0.05;
    (
        ok,
        format!(
            "constructed masks worst relative error {worst_exact:.1e} (limit 1e-9); rendered {} (limit 5%)",
            parts.join(", ")
        ),
    )
}

fn render_spec(depth: f64) -> RoofRenderSpec {
    RoofRenderSpec {
        polygon_m: l_shaped_roof(30.0, 22.0, 17.0),
        depth_m: depth,
        intrinsics: CameraIntrinsics {
            k1: -0.08,
            k2: 0.01,
            p1: 0.0005,
            p2: -0.0003,
            ..CameraIntrinsics::pinhole(1000.0, 1000.0, 499.5, 399.5)
        },
        width: 1000,
        height: 800,
        supersample: 2,
        roof_level: 220,
        background_level: 30,
    }
}

fn corner_rms(got: &[AffineTransform], want: &[AffineTransform], w: usize, h: usize) -> f64 {
    let (mw, mh) = ((w - 1) as f64, (h - 1) as f64);
    let mut sum = 0.0;
    let mut n = 0;
    for (g, t) in got.iter().zip(want) {
        for (x, y) in [(0.0, 0.0), (mw, 0.0), (0.0, mh), (mw, mh)] {
            let (a, b) = (g.apply(x, y), t.apply(x, y));
            sum += (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
            n += 1;
        }
    }
    (sum / n as f64).sqrt()
}

fn stitching_accuracy() -> Outcome {
    let (w, h) = (640, 480);
    let steps = survey_steps((w, h), 14);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10, 98] {
        let seq = gen_roof_sequence(5 + n as u64, n, &steps, (w, h)).unwrap();
        let frames: Vec<Raster> = seq.frames.iter().cloned().map(Raster::from).collect();
        let t = Instant::now();
        let out = match stitch_sequence(&frames, &StitchConfig::default()) {
            Ok(o) => o,
            Err(e) => return (false, format!("{n} frames: {e}")),
        };
        let secs = t.elapsed().as_secs_f64();
        let rms = corner_rms(&out.transforms, &seq.truth, w, h);
        ok &= rms <= 2.0;
        if n == 98 {
            ok &= secs < 120.0;
        }
        parts.push(format!("{n} frames RMS {rms:.3} px in {secs:.1} s"));
    }

    let mut r = common::rng(0xaff1);
    let mut rand_affine = || {
        AffineTransform::new(
            r.gen_range(0.5..1.5),
            r.gen_range(-0.5..0.5),
            r.gen_range(-100.0..100.0),
            r.gen_range(-0.5..0.5),
            r.gen_range(0.5..1.5),
            r.gen_range(-100.0..100.0),
        )
    };
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (a, b, c) = (rand_affine(), rand_affine(), rand_affine());
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        worst = worst.max(left.max_abs_diff(&right));
        worst = worst.max(compose(&AffineTransform::IDENTITY, &a).max_abs_diff(&a));
        worst = worst.max(compose(&a, &AffineTransform::IDENTITY).max_abs_diff(&a));
    }
    ok &= worst <= 1e-9;
    (
        ok,
        format!(
            "{} (limits 2 px, 120 s); compose associativity/identity worst {worst:.1e} (limit 1e-9)",
            parts.join(", ")
        ),
    )
}

fn occupancy_accuracy() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, pct) in [0.0, 25.0, 38.73, 100.0].into_iter().enumerate() {
        let fx = gen_occupancy_fixture(31 + i as u64, 400, 300, pct, 6, 40).unwrap();
        let got = occupancy_percent(&fx.objects, &fx.roof).unwrap().percentage;
        worst = worst.max((got - pct).abs());
        parts.push(format!("{pct}% -> {got:.3}%"));
    }
    (
        worst <= 0.1,
        format!("{}; worst {worst:.3} pp (limit 0.1)", parts.join(", ")),
    )
}

fn ransac_cfg(seed: u64, iterations: usize, threshold: f64, exec: Exec) -> RansacConfig {
    RansacConfig {
        iterations,
        inlier_threshold: threshold,
        min_inliers: 3,
        min_inlier_fraction: 0.0,
        rng_seed: seed,
        exec,
    }
}

fn sorted_partition(mut groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for g in &mut groups {
        g.sort_unstable();
    }
    groups.sort();
    groups
}

fn robust_estimation() -> Outcome {
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let mut pts = common::noisy_plane_points(seed, 300, Vec3::new(0.1, 0.0, 1.0), -2.0, 10.0, 0.05);
        pts.extend(common::blob_cloud(seed ^ 2, 120, 1, 1.0, 8.0).points);
        let cloud = uav_inspect::cloud::PointCloud::new(pts);
        let idx: Vec<usize> = (0..cloud.len()).collect();

        let a = ransac_plane(&cloud, &idx, &ransac_cfg(seed, 200, 0.1, Exec::Sequential), None).unwrap();
        let b = ransac_plane(&cloud, &idx, &ransac_cfg(seed, 200, 0.1, Exec::Sequential), None).unwrap();
        let c = ransac_plane(&cloud, &idx, &ransac_cfg(seed, 200, 0.1, Exec::Parallel), None).unwrap();
        if a != b || a != c {
            failures.push(format!("ransac not deterministic for seed {seed}"));
        }

        let mut last = 0;
        for t in [0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let m = ransac_plane(&cloud, &idx, &ransac_cfg(seed, 150, t, Exec::Sequential), None).unwrap();
            if m.inlier_count < last {
                failures.push(format!("inliers dropped at threshold {t} for seed {seed}"));
            }
            last = m.inlier_count;
        }

        let plane_pts = common::noisy_plane_points(seed, 200, Vec3::new(0.3, -0.2, 1.0), -7.0, 8.0, 0.3);
        let fit = fit_plane_tls(&plane_pts).unwrap();
        let cost = |p: &Plane| {
            plane_pts
                .iter()
                .map(|&q| point_plane_distance(p, q).powi(2))
                .sum::<f64>()
        };
        let best = cost(&fit);
        let mut r = common::rng(seed ^ 0x5eed);
        for _ in 0..100 {
            let dn = Vec3::new(
                r.gen_range(-0.05..0.05),
                r.gen_range(-0.05..0.05),
                r.gen_range(-0.05..0.05),
            );
            let other = Plane {
                normal: (fit.normal + dn).normalized().unwrap(),
                offset: fit.offset + r.gen_range(-0.2..0.2),
            };
            if cost(&other) < best - 1e-9 * best.max(1.0) {
                failures.push(format!("perturbed plane beats TLS for seed {seed}"));
                break;
            }
        }

        let n = 50 + (seed as usize * 23) % 451;
        let blobs = common::blob_cloud(seed, n, 1 + seed as usize % 5, 20.0, 1.0);
        let radius = 0.3 + 0.08 * seed as f64;
        let got: Vec<Vec<usize>> = euclidean_clusters(&blobs, radius, 1)
            .unwrap()
            .into_iter()
            .map(|c| c.indices)
            .collect();
        let want = common::union_find_components(&blobs.points, radius);
        if sorted_partition(got) != sorted_partition(want) {
            failures.push(format!(
                "clustering differs from union-find for seed {seed} ({n} points)"
            ));
        }
    }
    if failures.is_empty() {
        (true, "20 seeds: RANSAC deterministic and threshold-monotone, TLS beats 100 perturbations, clusters equal union-find (n <= 500)".into())
    } else {
        (false, failures.join("; "))
    }
}

fn distance_report(dir: &Path, mode: Mode) -> String {
    let mut rep = InspectionReport::new("distances");
    let cloud_path = dir.join("cloud.ply");
    rep.add_input("cloud", &cloud_path).unwrap();
    rep.add_input("flight_log", &dir.join("flight_log.csv")).unwrap();
    rep.add_input("poses", &dir.join("poses.txt")).unwrap();
    let cloud = load_point_cloud(&cloud_path, CloudFormat::AsciiPly).unwrap();
    let log = parse_flight_log(dir.join("flight_log.csv")).unwrap();
    let poses = load_pose_track(dir.join("poses.txt")).unwrap();
    let pairs = sync_poses(&poses, &log.records, &SyncConfig::default()).unwrap();
    let scale = estimate_scale(&pairs, 2.0).unwrap();
    let mc = ModeConfig::for_mode(mode);
    let rc = RansacConfig::default();
    rep.param("mode", mode);
    rep.param("mode_config", mc);
    rep.body.sections.scale = Some(ScaleSection {
        source: "flight_log".into(),
        scale,
        synced_pairs: Some(pairs.len()),
        time_offset_s: Some(0.0),
    });
    rep.body.sections.distances = Some(estimate_distances(&cloud, mode, &mc, &rc, scale).unwrap());
    rep.body_json()
}

fn roof_report(dir: &Path) -> String {
    let mut rep = InspectionReport::new("roof-area");
    let path = dir.join("roof.png");
    rep.add_input("mask", &path).unwrap();
    let img = uav_inspect::imaging::load_gray(&path).unwrap();
    let mask = prepare_mask(&img, Some(&render_spec(75.0).intrinsics), false, 125).unwrap();
    rep.param("depth", 75.0);
    rep.param("focal", 1000.0);
    rep.body.sections.roof_area = Some(RoofAreaSection {
        estimate: roof_area(&mask, 75.0, 1000.0).unwrap(),
        pixel_count_method: "largest component".into(),
        contour_method: "shoelace".into(),
    });
    rep.body_json()
}

fn stitch_report(dir: &Path) -> String {
    let mut rep = InspectionReport::new("stitch");
    let paths = list_frames(dir.join("frames")).unwrap();
    let mut frames = Vec::new();
    for p in &paths {
        rep.add_input("frame", p).unwrap();
        frames.push(load_raster(p).unwrap());
    }
    let out = stitch_sequence(&frames, &StitchConfig::default()).unwrap();
    rep.body.sections.stitching = Some(StitchSection {
        frames: frames.len(),
        canvas_path: "canvas.png".into(),
        transforms_path: "transforms.txt".into(),
        canvas_size: (out.canvas.width, out.canvas.height),
        origin: out.canvas.origin(),
        transforms: out.transforms,
        pairs: out.pairs,
    });
    rep.body_json()
}

fn occupancy_report(dir: &Path) -> String {
    let mut rep = InspectionReport::new("layout");
    let (roof_path, obj_path) = (dir.join("roof_mask.png"), dir.join("object_mask.png"));
    rep.add_input("roof_mask", &roof_path).unwrap();
    rep.add_input("object_mask", &obj_path).unwrap();
    let roof = load_mask(&roof_path, 128).unwrap();
    let objects = load_mask(&obj_path, 128).unwrap();
    rep.body.sections.occupancy = Some(occupancy_percent(&objects, &roof).unwrap());
    rep.body_json()
}

fn report_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let mut bodies: Vec<(String, Box<dyn Fn() -> String>)> = Vec::new();
    for mode in Mode::ALL {
        let dir = root.join(format!("distances_{mode}"));
        write_distance_fixture(&dir, mode, &SceneSpec::for_mode(mode, 17.5, 3), 0.37).unwrap();
        bodies.push((
            format!("distances/{mode}"),
            Box::new(move || distance_report(&dir, mode)),
        ));
    }
    let roof_dir = root.join("roof");
    write_roof_area_fixture(&roof_dir, &render_spec(75.0)).unwrap();
    bodies.push(("roof-area".into(), Box::new(move || roof_report(&roof_dir))));
    let stitch_dir = root.join("stitch");
    write_stitch_fixture(&stitch_dir, 9, 10, &survey_steps((640, 480), 14), (640, 480)).unwrap();
    bodies.push(("stitch".into(), Box::new(move || stitch_report(&stitch_dir))));
    let occ_dir = root.join("occupancy");
    write_occupancy_fixture(&occ_dir, 4, (400, 300), 38.73).unwrap();
    bodies.push(("layout".into(), Box::new(move || occupancy_report(&occ_dir))));

    let mut differing = Vec::new();
    for (name, run) in &bodies {
        if run() != run() {
            differing.push(name.clone());
        }
    }
    if differing.is_empty() {
        (
            true,
            format!("{} fixtures produced byte-identical bodies on two runs", bodies.len()),
        )
    } else {
        (false, format!("bodies differ for {}", differing.join(", ")))
    }
}
