use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use uav_inspect::cloud::{load_point_cloud, CloudFormat};
use uav_inspect::distance::{estimate_distances, Mode, ModeConfig};
use uav_inspect::imaging::{
    load_gray, load_mask, load_raster, save_raster, CameraIntrinsics, Connectivity, ImagingError, Raster,
};
use uav_inspect::planes::RansacConfig;
use uav_inspect::report::{InspectionReport, RoofAreaSection, ScaleSection, StitchSection};
use uav_inspect::roof::{average_area, occupancy_percent, prepare_mask, roof_area_with};
use uav_inspect::scale::{
    estimate_scale_with, estimate_time_offset, load_pose_track, parse_flight_log, sync_poses, AltitudeSource,
    SyncConfig,
};
use uav_inspect::stitching::{
    decimate_by_timestamp, format_transforms, list_frames, stitch_sequence, AffineRansacConfig, Blend, CornerConfig,
    StitchConfig, TrackConfig, DEFAULT_MAX_CANVAS_SIDE,
};
use uav_inspect::synth::{
    l_shaped_roof, survey_steps, write_distance_fixture, write_occupancy_fixture, write_roof_area_fixture,
    write_stitch_fixture, RoofRenderSpec, SceneSpec,
};
use uav_inspect::{Axis, Error, Exec, Result};

use crate::settings::Settings;
use crate::{Cli, Command, DistancesArgs, FixtureCommand, LayoutArgs, RoofAreaArgs, StitchArgs};

pub fn run(cli: &Cli) -> Result<()> {
    let s = Settings::load(cli.config.as_deref())?;
    let seed = s.get("seed", cli.seed, 0u64)?;
    let exec: Exec = s.get("exec", parse_with(cli.exec.clone())?, Exec::default())?;
    let output = s.opt("output", cli.output.clone())?;

    let mut report = match &cli.command {
        Command::Distances(a) => distances(&s, a, seed, exec)?,
        Command::RoofArea(a) => roof_area(&s, a)?,
        Command::Stitch(a) => stitch(&s, a, seed, exec)?,
        Command::Layout(a) => layout(&s, a)?,
        Command::Fixture(f) => return fixture(f, seed, output.as_deref()),
    };
    report.param("seed", seed);
    report.param("exec", exec);
    for k in s.unused_keys() {
        log::warn!("config key '{k}' is not used by this command");
    }
    match output {
        Some(p) => report.write(&p),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}

fn parse_with<T: std::str::FromStr<Err = String>>(v: Option<String>) -> Result<Option<T>> {
    v.map(|v| v.parse::<T>().map_err(Error::Config)).transpose()
}

fn distances(s: &Settings, a: &DistancesArgs, seed: u64, exec: Exec) -> Result<InspectionReport> {
    let mut report = InspectionReport::new("distances");
    let cloud_path: PathBuf = s.require("cloud", a.cloud.clone())?;
    let format = match s.opt("format", a.format.clone())? {
        Some(f) => f.parse::<CloudFormat>()?,
        None => CloudFormat::from_path(&cloud_path).ok_or_else(|| {
            Error::Config(format!(
                "cannot infer cloud format of {}; pass --format",
                cloud_path.display()
            ))
        })?,
    };
    let mode: Mode = s.get("mode", parse_with(a.mode.clone())?, Mode::InBetween)?;

    let mut mc = ModeConfig::for_mode(mode);
    if let Some(ax) = s.opt::<Axis>("separation_axis", parse_with(a.separation_axis.clone())?)? {
        mc.separation_axis = ax;
    }
    if let Some(ax) = s.opt::<Axis>("slice_axis", parse_with(a.slice_axis.clone())?)? {
        mc.slice_axis = ax;
    }
    mc.n_sample_locations = s.get("samples", a.samples, mc.n_sample_locations)?;
    mc.cluster_radius = s.opt("cluster_radius", a.cluster_radius)?.or(mc.cluster_radius);
    mc.min_cluster_size = s.get("min_cluster_size", a.min_cluster_size, mc.min_cluster_size)?;
    mc.bin_width = s.opt("bin_width", a.bin_width)?.or(mc.bin_width);
    mc.max_angle_deg = s.get("max_angle", a.max_angle, mc.max_angle_deg)?;
    mc.roof_quantile = s.get("roof_quantile", a.roof_quantile, mc.roof_quantile)?;

    let defaults = RansacConfig::default();
    let inlier_threshold = s.opt("inlier_threshold", a.inlier_threshold)?;
    let factor = s.opt("threshold_factor", a.threshold_factor)?;
    // an explicit absolute threshold switches off the spacing-relative one
    mc.threshold_factor = match (factor, inlier_threshold) {
        (Some(f), _) => Some(f),
        (None, Some(_)) => None,
        (None, None) => mc.threshold_factor,
    };
    let ransac = RansacConfig {
        iterations: s.get("iterations", a.iterations, defaults.iterations)?,
        inlier_threshold: inlier_threshold.unwrap_or(defaults.inlier_threshold),
        min_inliers: s.get("min_inliers", a.min_inliers, defaults.min_inliers)?,
        min_inlier_fraction: s.get(
            "min_inlier_fraction",
            a.min_inlier_fraction,
            defaults.min_inlier_fraction,
        )?,
        rng_seed: seed,
        exec,
    };

    let cloud = load_point_cloud(&cloud_path, format)?;
    report.add_input("cloud", &cloud_path)?;
    report.param("cloud", cloud_path.display().to_string());
    report.param("format", format!("{format:?}").to_lowercase());
    report.param("mode", mode);

    let scale_flag = s.opt("scale", a.scale)?;
    let log_path: Option<PathBuf> = s.opt("flight_log", a.flight_log.clone())?;
    let pose_path: Option<PathBuf> = s.opt("poses", a.poses.clone())?;
    let tolerance = s.get("sync_tolerance", a.sync_tolerance, SyncConfig::default().tolerance)?;
    let altitude: AltitudeSource = s.get(
        "altitude_source",
        parse_with(a.altitude_source.clone())?,
        AltitudeSource::default(),
    )?;
    let min_baseline = s.get("min_baseline", a.min_baseline, 2.0)?;
    let offset_raw = s.get("time_offset", a.time_offset.clone(), "0".to_string())?;
    let search = s.get("offset_search", a.offset_search, 30.0)?;
    let step = s.get("offset_step", a.offset_step, 0.05)?;

    let section = match (scale_flag, log_path, pose_path) {
        (Some(v), _, _) => {
            report.param("scale", v);
            ScaleSection {
                source: "override".into(),
                scale: v,
                synced_pairs: None,
                time_offset_s: None,
            }
        }
        (None, Some(lp), Some(pp)) => {
            let log = parse_flight_log(&lp)?;
            let poses = load_pose_track(&pp)?;
            report.add_input("flight_log", &lp)?;
            report.add_input("poses", &pp)?;
            if log.skipped > 0 {
                report
                    .body
                    .notes
                    .push(format!("flight log: skipped {} unusable rows", log.skipped));
            }
            let offset = if offset_raw.eq_ignore_ascii_case("auto") {
                estimate_time_offset(&poses, &log.records, -search, search, step, tolerance)?
            } else {
                offset_raw
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("time_offset = '{offset_raw}': {e}")))?
            };
            let cfg = SyncConfig {
                offset,
                tolerance,
                altitude_source: altitude,
            };
            let pairs = sync_poses(&poses, &log.records, &cfg)?;
            let scale = estimate_scale_with(&pairs, min_baseline, exec)?;
            report.param("flight_log", lp.display().to_string());
            report.param("poses", pp.display().to_string());
            report.param("time_offset", &offset_raw);
            report.param("offset_search", search);
            report.param("offset_step", step);
            report.param("sync_tolerance", tolerance);
            report.param("altitude_source", altitude);
            report.param("min_baseline", min_baseline);
            ScaleSection {
                source: "flight_log".into(),
                scale,
                synced_pairs: Some(pairs.len()),
                time_offset_s: Some(offset),
            }
        }
        _ => {
            return Err(Error::Config(
                "scale unknown: pass --scale, or both --flight-log and --poses".into(),
            ))
        }
    };

    let d = estimate_distances(&cloud, mode, &mc, &ransac, section.scale)?;
    for r in &d.rows {
        log::info!("{}: {:.4} m", r.label, r.metric);
    }
    report.param("mode_config", mc);
    report.param("ransac", ransac);
    report.body.sections.scale = Some(section);
    report.body.sections.distances = Some(d);
    Ok(report)
}

fn depths_from_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", path.display())))
    };
    let (ci, cd) = (col("image")?, col("depth_m")?);
    let mut out = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let name = rec.get(ci).unwrap_or("").trim();
        let d: f64 = rec
            .get(cd)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("{} row {}: depth_m: {e}", path.display(), n + 2)))?;
        let key = Path::new(name)
            .file_name()
            .map_or(name.to_string(), |f| f.to_string_lossy().into_owned());
        out.insert(key, d);
    }
    Ok(out)
}

fn roof_area(s: &Settings, a: &RoofAreaArgs) -> Result<InspectionReport> {
    let mut report = InspectionReport::new("roof-area");
    let masks: Vec<PathBuf> = s.list("mask", a.mask.clone())?;
    if masks.is_empty() {
        return Err(Error::Config(
            "missing required --mask (or 'mask' in the config file)".into(),
        ));
    }
    let focal: f64 = s.require("focal", a.focal)?;
    let depth = s.opt("depth", a.depth)?;
    let depth_csv: Option<PathBuf> = s.opt("depth_csv", a.depth_csv.clone())?;
    let level = s.get("threshold", a.threshold, 128u8)?;
    let equalize = s.get("equalize", a.equalize, false)?;
    let conn: Connectivity = s.get("connectivity", parse_with(a.connectivity.clone())?, Connectivity::Eight)?;
    let k1 = s.get("k1", a.k1, 0.0)?;
    let k2 = s.get("k2", a.k2, 0.0)?;
    let p1 = s.get("p1", a.p1, 0.0)?;
    let p2 = s.get("p2", a.p2, 0.0)?;
    let cx = s.opt("cx", a.cx)?;
    let cy = s.opt("cy", a.cy)?;

    let per_image = match &depth_csv {
        Some(p) => {
            report.add_input("depth_csv", p)?;
            Some(depths_from_csv(p)?)
        }
        None => None,
    };
    if depth.is_none() && per_image.is_none() {
        return Err(Error::Config("missing depth: pass --depth or --depth-csv".into()));
    }

    let mut estimates = Vec::with_capacity(masks.len());
    let mut centres = Vec::new();
    for path in &masks {
        let img = load_gray(path)?;
        report.add_input("mask", path)?;
        let name = path
            .file_name()
            .map_or(String::new(), |f| f.to_string_lossy().into_owned());
        let d = match per_image.as_ref().and_then(|m| m.get(&name)) {
            Some(&d) => d,
            None => {
                depth.ok_or_else(|| Error::Config(format!("no depth for {name} in the depth CSV and no --depth")))?
            }
        };
        let (icx, icy) = (
            cx.unwrap_or((img.width as f64 - 1.0) / 2.0),
            cy.unwrap_or((img.height as f64 - 1.0) / 2.0),
        );
        centres.push((icx, icy));
        let k = CameraIntrinsics {
            k1,
            k2,
            p1,
            p2,
            ..CameraIntrinsics::pinhole(focal, focal, icx, icy)
        };
        k.validate()?;
        let intr = (!k.is_distortion_free()).then_some(&k);
        let mask = prepare_mask(&img, intr, equalize, level)?;
        let est = roof_area_with(&mask, d, focal, conn)?;
        log::info!(
            "{}: {:.3} m^2 ({} px)",
            path.display(),
            est.area_m2,
            est.samples[0].pixel_count
        );
        estimates.push(est);
    }
    let estimate = average_area(&estimates)?;
    report.param(
        "mask",
        masks.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    );
    report.param("focal", focal);
    report.param("depth", depth);
    report.param("depth_csv", depth_csv.map(|p| p.display().to_string()));
    report.param("threshold", level);
    report.param("equalize", equalize);
    report.param("connectivity", format!("{conn:?}").to_lowercase());
    report.param("distortion", [k1, k2, p1, p2]);
    report.param("principal_points", centres);
    report.body.sections.roof_area = Some(RoofAreaSection {
        estimate,
        pixel_count_method: "pixels in the largest connected component".into(),
        contour_method: "shoelace area of the outer boundary through pixel centres".into(),
    });
    Ok(report)
}

fn stitch(s: &Settings, a: &StitchArgs, seed: u64, exec: Exec) -> Result<InspectionReport> {
    let mut report = InspectionReport::new("stitch");
    let dir: PathBuf = s.require("frames", a.frames.clone())?;
    let canvas_path: PathBuf = s.require("canvas", a.canvas.clone())?;
    let transforms_path: PathBuf = s.require("transforms", a.transforms.clone())?;
    let rate = s.opt("rate_hz", a.rate_hz)?;
    let blend: Blend = s.get("blend", parse_with(a.blend.clone())?, Blend::LastWriter)?;
    let (cd, td, rd) = (
        CornerConfig::default(),
        TrackConfig::default(),
        AffineRansacConfig::default(),
    );
    let cfg = StitchConfig {
        corners: CornerConfig {
            max_n: s.get("max_corners", a.max_corners, cd.max_n)?,
            min_spacing: s.get("min_spacing", a.min_spacing, cd.min_spacing)?,
            ..cd
        },
        tracking: TrackConfig {
            window: s.get("window", a.window, td.window)?,
            search_radius: s.get("search_radius", a.search_radius, td.search_radius)?,
            min_ncc: s.get("min_ncc", a.min_ncc, td.min_ncc)?,
            ..td
        },
        ransac: AffineRansacConfig {
            iterations: s.get("iterations", a.iterations, rd.iterations)?,
            inlier_threshold: s.get("inlier_threshold", a.inlier_threshold, rd.inlier_threshold)?,
            min_inliers: s.get("min_inliers", a.min_inliers, rd.min_inliers)?,
            rng_seed: seed,
            exec,
            ..rd
        },
        blend,
        max_canvas_side: s.get("max_canvas_side", a.max_canvas_side, DEFAULT_MAX_CANVAS_SIDE)?,
        exec,
    };

    let mut paths = list_frames(&dir).map_err(|e| Error::io(&dir, e))?;
    if let Some(hz) = rate {
        paths = decimate_by_timestamp(&paths, hz)?;
    }
    let mut frames: Vec<Raster> = Vec::with_capacity(paths.len());
    for p in &paths {
        frames.push(load_raster(p)?);
        report.add_input("frame", p)?;
    }
    let result = stitch_sequence(&frames, &cfg)?;
    for p in &result.pairs {
        log::info!(
            "pair {} -> {}: {} matches, {} inliers",
            p.index,
            p.index + 1,
            p.matches,
            p.inliers
        );
    }
    save_raster(&result.canvas.to_raster(), &canvas_path)?;
    fs::write(&transforms_path, format_transforms(&result.transforms)).map_err(|e| Error::io(&transforms_path, e))?;

    report.param("frames", dir.display().to_string());
    report.param("canvas", canvas_path.display().to_string());
    report.param("transforms", transforms_path.display().to_string());
    report.param("rate_hz", rate);
    report.param("stitch_config", cfg);
    report.body.sections.stitching = Some(StitchSection {
        frames: frames.len(),
        canvas_path: canvas_path.display().to_string(),
        transforms_path: transforms_path.display().to_string(),
        canvas_size: (result.canvas.width, result.canvas.height),
        origin: result.canvas.origin(),
        transforms: result.transforms,
        pairs: result.pairs,
    });
    Ok(report)
}

fn layout(s: &Settings, a: &LayoutArgs) -> Result<InspectionReport> {
    let mut report = InspectionReport::new("layout");
    let canvas_path: PathBuf = s.require("canvas", a.canvas.clone())?;
    let roof_path: PathBuf = s.require("roof_mask", a.roof_mask.clone())?;
    let object_path: PathBuf = s.require("object_mask", a.object_mask.clone())?;
    let level = s.get("mask_threshold", a.mask_threshold, 128u8)?;
    let canvas = load_raster(&canvas_path)?;
    let roof = load_mask(&roof_path, level)?;
    let objects = load_mask(&object_path, level)?;
    report.add_input("canvas", &canvas_path)?;
    report.add_input("roof_mask", &roof_path)?;
    report.add_input("object_mask", &object_path)?;
    for m in [&roof, &objects] {
        if m.width != canvas.width || m.height != canvas.height {
            return Err(ImagingError::DimensionMismatch(m.width, m.height, canvas.width, canvas.height).into());
        }
    }
    let occ = occupancy_percent(&objects, &roof)?;
    report.param("canvas", canvas_path.display().to_string());
    report.param("roof_mask", roof_path.display().to_string());
    report.param("object_mask", object_path.display().to_string());
    report.param("mask_threshold", level);
    report.body.sections.occupancy = Some(occ);
    Ok(report)
}

fn fixture(f: &FixtureCommand, seed: u64, output: Option<&Path>) -> Result<()> {
    let truth = match f {
        FixtureCommand::Distances { dir, mode, gap, scale } => {
            let mode: Mode = mode.parse().map_err(Error::Config)?;
            let spec = SceneSpec::for_mode(mode, *gap, seed);
            serde_json::to_value(write_distance_fixture(dir, mode, &spec, *scale)?)
        }
        FixtureCommand::RoofArea { dir, depth, focal } => {
            let (w, h) = (1000, 800);
            let spec = RoofRenderSpec {
                polygon_m: l_shaped_roof(30.0, 22.0, 17.0),
                depth_m: *depth,
                intrinsics: CameraIntrinsics::pinhole(*focal, *focal, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0),
                width: w,
                height: h,
                supersample: 4,
                roof_level: 220,
                background_level: 30,
            };
            serde_json::to_value(write_roof_area_fixture(dir, &spec)?)
        }
        FixtureCommand::Stitch {
            dir,
            frames,
            width,
            height,
        } => {
            let steps = survey_steps((*width, *height), 14);
            serde_json::to_value(write_stitch_fixture(dir, seed, *frames, &steps, (*width, *height))?)
        }
        FixtureCommand::Occupancy {
            dir,
            percent,
            width,
            height,
        } => serde_json::to_value(write_occupancy_fixture(dir, seed, (*width, *height), *percent)?),
    }
    .map_err(|e| Error::Config(e.to_string()))?;
    let text = serde_json::to_string_pretty(&truth).map_err(|e| Error::Config(e.to_string()))? + "\n";
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
