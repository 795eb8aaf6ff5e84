//! Deterministic fixtures with known ground truth.
//!
//! Every generator is a pure function of its spec and seed. Randomness
//! comes from `ChaCha8Rng::seed_from_u64`; normal deviates use the
//! Box-Muller transform (cosine branch only, two uniforms per deviate), so
//! fixtures are reproducible across platforms and releases of `rand`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{save_ply, Aabb, PointCloud};
use crate::distance::Mode;
use crate::error::{Error, Result};
use crate::geometry::{Axis, Mat3, Plane, Pose, Vec3};
use crate::imaging::{save_gray, save_mask, BinaryMask, CameraIntrinsics, GrayImage};
use crate::scale::{enu_to_geodetic, write_flight_log_csv, write_pose_track, FlightLogRecord};
use crate::stitching::{compose, format_transforms, AffineTransform};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("frame {frame} escapes the texture")]
    CropOutOfBounds { frame: usize },
    #[error("texture would be {0}x{1} pixels")]
    TextureTooLarge(usize, usize),
}

impl SynthError {
    pub fn kind(&self) -> &'static str {
        match self {
            SynthError::InvalidSpec(_) => "invalid_spec",
            SynthError::CropOutOfBounds { .. } => "crop_out_of_bounds",
            SynthError::TextureTooLarge(..) => "texture_too_large",
        }
    }
}

/// Standard normal deviate by Box-Muller.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Box extents along x, y, z.
    pub size_a: Vec3,
    pub size_b: Vec3,
    pub gap: f64,
    pub separation_axis: Axis,
    /// Vertical axis; both boxes stand on 0 along it.
    pub up_axis: Axis,
    /// Surface points per square metre.
    pub density: f64,
    pub noise_sigma: f64,
    /// Share of all points that are uniform outliers.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl SceneSpec {
    /// Two `length x depth x height` boxes laid out for `mode`: separated
    /// along Y with Z up for roof flights, along Z with Y up otherwise.
    pub fn for_mode(mode: Mode, gap: f64, seed: u64) -> SceneSpec {
        let (sep, up) = match mode {
            Mode::Roof => (Axis::Y, Axis::Z),
            Mode::InBetween | Mode::Frontal => (Axis::Z, Axis::Y),
        };
        let size = Self::box_size(sep, up, 30.0, 10.0, 15.0);
        SceneSpec {
            size_a: size,
            size_b: size,
            gap,
            separation_axis: sep,
            up_axis: up,
            density: 10.0,
            noise_sigma: 0.05,
            outlier_fraction: 0.05,
            seed,
        }
    }

    /// Extents vector with `depth` along `sep`, `height` along `up` and
    /// `length` along the remaining axis.
    pub fn box_size(sep: Axis, up: Axis, length: f64, depth: f64, height: f64) -> Vec3 {
        Vec3::ZERO.with(sep.third(up), length).with(sep, depth).with(up, height)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.separation_axis == self.up_axis {
            return bad("separation_axis and up_axis must differ".into());
        }
        if !(self.gap > 0.0) {
            return bad(format!("gap must be positive, got {}", self.gap));
        }
        if !(self.density > 0.0) {
            return bad(format!("density must be positive, got {}", self.density));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction < 0.5) {
            return bad(format!(
                "outlier_fraction must lie in [0, 0.5), got {}",
                self.outlier_fraction
            ));
        }
        for s in [self.size_a, self.size_b] {
            if !(s.x > 0.0 && s.y > 0.0 && s.z > 0.0) {
                return bad(format!("box extents must be positive, got {s:?}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FacePlane {
    pub building: usize,
    pub plane: Plane,
}

pub const LABEL_OUTLIER: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub spec: SceneSpec,
    pub gap: f64,
    pub boxes: [Aabb; 2],
    /// The two facades that face each other across the gap.
    pub facing: [Plane; 2],
    pub faces: Vec<FacePlane>,
    /// Per point: 0 or 1 for the building, [`LABEL_OUTLIER`] otherwise.
    pub labels: Vec<u8>,
}

pub fn gen_building_pair(spec: &SceneSpec) -> Result<(PointCloud, SceneTruth), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sep = spec.separation_axis;
    let min_a = Vec3::ZERO;
    let max_a = spec.size_a;
    let min_b = Vec3::ZERO.with(sep, spec.size_a.get(sep) + spec.gap);
    let max_b = min_b + spec.size_b;
    let boxes = [Aabb { min: min_a, max: max_a }, Aabb { min: min_b, max: max_b }];

    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut faces = Vec::new();
    for (b, bx) in boxes.iter().enumerate() {
        for axis in Axis::ALL {
            let (u, v) = match axis {
                Axis::X => (Axis::Y, Axis::Z),
                Axis::Y => (Axis::X, Axis::Z),
                Axis::Z => (Axis::X, Axis::Y),
            };
            let (eu, ev) = (bx.extent(u), bx.extent(v));
            let n = (spec.density * eu * ev).round() as usize;
            for (level, sign) in [(bx.min.get(axis), -1.0), (bx.max.get(axis), 1.0)] {
                let normal = axis.unit() * sign;
                faces.push(FacePlane {
                    building: b,
                    plane: Plane::from_normal_and_point(normal, Vec3::ZERO.with(axis, level)).expect("unit normal"),
                });
                for _ in 0..n {
                    let pu = bx.min.get(u) + rng.gen::<f64>() * eu;
                    let pv = bx.min.get(v) + rng.gen::<f64>() * ev;
                    let off = if spec.noise_sigma > 0.0 {
                        spec.noise_sigma * gaussian(&mut rng)
                    } else {
                        0.0
                    };
                    points.push(Vec3::ZERO.with(u, pu).with(v, pv).with(axis, level + off));
                    labels.push(b as u8);
                }
            }
        }
    }
    let n_surface = points.len() as f64;
    let n_out = (spec.outlier_fraction * n_surface / (1.0 - spec.outlier_fraction)).round() as usize;
    let scene = Aabb {
        min: Vec3::new(min_a.x.min(min_b.x), min_a.y.min(min_b.y), min_a.z.min(min_b.z)),
        max: Vec3::new(max_a.x.max(max_b.x), max_a.y.max(max_b.y), max_a.z.max(max_b.z)),
    };
    for _ in 0..n_out {
        let p = Vec3::new(
            scene.min.x + rng.gen::<f64>() * scene.extent(Axis::X),
            scene.min.y + rng.gen::<f64>() * scene.extent(Axis::Y),
            scene.min.z + rng.gen::<f64>() * scene.extent(Axis::Z),
        );
        points.push(p);
        labels.push(LABEL_OUTLIER);
    }
    let facing = [
        Plane::from_normal_and_point(sep.unit(), Vec3::ZERO.with(sep, max_a.get(sep))).expect("unit normal"),
        Plane::from_normal_and_point(sep.unit() * -1.0, Vec3::ZERO.with(sep, min_b.get(sep))).expect("unit normal"),
    ];
    Ok((
        PointCloud::new(points),
        SceneTruth {
            spec: *spec,
            gap: spec.gap,
            boxes,
            facing,
            faces,
            labels,
        },
    ))
}

fn box_blur(src: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
    let norm = 1.0 / (2 * r + 1) as f32;
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let at = |x: i64| row[x.clamp(0, w as i64 - 1) as usize];
        let mut acc: f32 = (-(r as i64)..=r as i64).map(at).sum();
        for x in 0..w {
            tmp[y * w + x] = acc * norm;
            acc += at(x as i64 + r as i64 + 1) - at(x as i64 - r as i64);
        }
    }
    let mut out = vec![0f32; w * h];
    for x in 0..w {
        let at = |y: i64| tmp[y.clamp(0, h as i64 - 1) as usize * w + x];
        let mut acc: f32 = (-(r as i64)..=r as i64).map(at).sum();
        for y in 0..h {
            out[y * w + x] = acc * norm;
            acc += at(y as i64 + r as i64 + 1) - at(y as i64 - r as i64);
        }
    }
    out
}

fn standardize(v: &mut [f32]) {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x = ((*x as f64 - mean) / sd) as f32;
    }
}

/// Smoothed-noise texture as floats in `[0, 255]`: a fine octave (box
/// radius 2, applied twice) plus a coarse one (radius 7, twice).
pub fn band_limited_field(seed: u64, w: usize, h: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fine: Vec<f32> = (0..w * h).map(|_| rng.gen::<f32>()).collect();
    let mut coarse: Vec<f32> = (0..w * h).map(|_| rng.gen::<f32>()).collect();
    fine = box_blur(&box_blur(&fine, w, h, 2), w, h, 2);
    coarse = box_blur(&box_blur(&coarse, w, h, 7), w, h, 7);
    standardize(&mut fine);
    standardize(&mut coarse);
    fine.iter()
        .zip(&coarse)
        .map(|(f, c)| (128.0 + 32.0 * f + 28.0 * c).clamp(0.0, 255.0))
        .collect()
}

pub fn band_limited_texture(seed: u64, w: usize, h: usize) -> GrayImage {
    GrayImage {
        width: w,
        height: h,
        data: band_limited_field(seed, w, h).iter().map(|v| v.round() as u8).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Texture {
    pub fn new(seed: u64, width: usize, height: usize) -> Texture {
        Texture {
            width,
            height,
            data: band_limited_field(seed, width, height),
        }
    }

    fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |xx: usize, yy: usize| self.data[yy * self.width + xx] as f64;
        let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
        let bot = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

#[derive(Debug, Clone)]
pub struct RoofSequence {
    pub frames: Vec<GrayImage>,
    /// Frame k pixel coordinates -> frame 0 pixel coordinates.
    pub truth: Vec<AffineTransform>,
    /// Frame 0 pixel coordinates -> texture coordinates.
    pub placement: AffineTransform,
    pub texture_size: (usize, usize),
}

pub const MAX_TEXTURE_SIDE: usize = 20000;

/// Absolute transforms from per-step ones: `truth[k+1] = truth[k] o step`,
/// cycling through `steps`.
pub fn chain_steps(n_frames: usize, steps: &[AffineTransform]) -> Vec<AffineTransform> {
    let mut truth = Vec::with_capacity(n_frames);
    if n_frames == 0 {
        return truth;
    }
    truth.push(AffineTransform::IDENTITY);
    for k in 1..n_frames {
        let step = steps[(k - 1) % steps.len()];
        truth.push(compose(&truth[k - 1], &step));
    }
    truth
}

/// Serpentine survey: `per_leg - 1` along-track steps then one cross-track
/// step, reversing direction every leg. Steps stay under 40 px of motion at
/// 640x480, inside the default tracking radius. Along-track steps carry a small
/// alternating rotation about the frame centre.
pub fn survey_steps(frame_size: (usize, usize), per_leg: usize) -> Vec<AffineTransform> {
    let (w, h) = (frame_size.0 as f64, frame_size.1 as f64);
    let mut steps = Vec::new();
    for dir in [1.0, -1.0] {
        for i in 0..per_leg.saturating_sub(1) {
            let deg = if i % 2 == 0 { 0.4 } else { -0.4 };
            let r = AffineTransform::rotation_about(deg, w / 2.0, h / 2.0);
            let t = AffineTransform::translation(dir * (0.05 * w + 0.37), 0.005 * h + 0.21);
            steps.push(compose(&t, &r));
        }
        steps.push(AffineTransform::translation(0.29, 0.07 * h + 0.43));
    }
    steps
}

/// Crops of one band-limited texture under known chained affines. The
/// texture is sized to hold every frame with an 8-pixel margin.
pub fn gen_roof_sequence(
    seed: u64,
    n_frames: usize,
    steps: &[AffineTransform],
    frame_size: (usize, usize),
) -> Result<RoofSequence, SynthError> {
    let (w, h) = frame_size;
    if n_frames == 0 || w < 2 || h < 2 {
        return Err(SynthError::InvalidSpec(
            "need at least one frame of at least 2x2 pixels".into(),
        ));
    }
    if n_frames > 1 && steps.is_empty() {
        return Err(SynthError::InvalidSpec("need at least one step transform".into()));
    }
    let truth = chain_steps(n_frames, steps);
    let (mut lx, mut ly, mut hx, mut hy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in &truth {
        for (x, y) in frame_corners(w, h) {
            let (px, py) = t.apply(x, y);
            lx = lx.min(px);
            ly = ly.min(py);
            hx = hx.max(px);
            hy = hy.max(py);
        }
    }
    const MARGIN: f64 = 8.0;
    let tw = (hx - lx + 2.0 * MARGIN).ceil() as usize + 1;
    let th = (hy - ly + 2.0 * MARGIN).ceil() as usize + 1;
    if tw > MAX_TEXTURE_SIDE || th > MAX_TEXTURE_SIDE {
        return Err(SynthError::TextureTooLarge(tw, th));
    }
    let placement = AffineTransform::translation(MARGIN - lx.floor(), MARGIN - ly.floor());
    let texture = Texture::new(seed, tw, th);
    let frames = render_frames(&texture, &placement, &truth, frame_size)?;
    Ok(RoofSequence {
        frames,
        truth,
        placement,
        texture_size: (tw, th),
    })
}

fn frame_corners(w: usize, h: usize) -> [(f64, f64); 4] {
    let (mw, mh) = ((w - 1) as f64, (h - 1) as f64);
    [(0.0, 0.0), (mw, 0.0), (0.0, mh), (mw, mh)]
}

/// Frame k pixel `(u, v)` = texture at `placement(truth[k](u, v))`.
pub fn render_frames(
    texture: &Texture,
    placement: &AffineTransform,
    truth: &[AffineTransform],
    frame_size: (usize, usize),
) -> Result<Vec<GrayImage>, SynthError> {
    let (w, h) = frame_size;
    let (maxx, maxy) = ((texture.width - 1) as f64, (texture.height - 1) as f64);
    let mut frames = Vec::with_capacity(truth.len());
    for (k, t) in truth.iter().enumerate() {
        let m = compose(placement, t);
        for (x, y) in frame_corners(w, h) {
            let (px, py) = m.apply(x, y);
            if !(px >= 0.0 && py >= 0.0 && px <= maxx && py <= maxy) {
                return Err(SynthError::CropOutOfBounds { frame: k });
            }
        }
        frames.push(GrayImage::from_fn(w, h, |u, v| {
            let (px, py) = m.apply(u as f64, v as f64);
            texture.bilinear(px, py).round().clamp(0.0, 255.0) as u8
        }));
    }
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightFixture {
    pub poses: Vec<Pose>,
    pub log: Vec<FlightLogRecord>,
    pub scale: f64,
}

/// Geodetic anchor used by the flight fixtures.
pub const FIXTURE_ORIGIN: (f64, f64, f64) = (17.4455, 78.3489, 560.0);

/// Poses are `(p - p0) / scale`; the log holds `p - p0` (plus isotropic
/// `gps_sigma` noise) converted to geodetic about [`FIXTURE_ORIGIN`].
pub fn gen_flight_fixture(
    trajectory: &[Vec3],
    scale: f64,
    timestamps: &[f64],
    gps_sigma: f64,
    seed: u64,
) -> Result<FlightFixture, SynthError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(SynthError::InvalidSpec(format!("scale must be positive, got {scale}")));
    }
    if trajectory.len() != timestamps.len() {
        return Err(SynthError::InvalidSpec(format!(
            "{} positions but {} timestamps",
            trajectory.len(),
            timestamps.len()
        )));
    }
    if !(gps_sigma >= 0.0) {
        return Err(SynthError::InvalidSpec(format!(
            "gps_sigma must be >= 0, got {gps_sigma}"
        )));
    }
    let Some(&p0) = trajectory.first() else {
        return Ok(FlightFixture {
            poses: Vec::new(),
            log: Vec::new(),
            scale,
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = FlightLogRecord {
        timestamp: timestamps[0],
        latitude: FIXTURE_ORIGIN.0,
        longitude: FIXTURE_ORIGIN.1,
        altitude: FIXTURE_ORIGIN.2,
        gps_altitude: None,
    };
    let mut poses = Vec::with_capacity(trajectory.len());
    let mut log = Vec::with_capacity(trajectory.len());
    for (&p, &t) in trajectory.iter().zip(timestamps) {
        let rel = p - p0;
        poses.push(Pose {
            rotation: Mat3::IDENTITY,
            translation: rel / scale,
            timestamp: t,
        });
        let noise = if gps_sigma > 0.0 {
            Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)) * gps_sigma
        } else {
            Vec3::ZERO
        };
        let mut rec = enu_to_geodetic(rel + noise, &origin, t);
        rec.gps_altitude = Some(rec.altitude);
        log.push(rec);
    }
    Ok(FlightFixture { poses, log, scale })
}

/// Boustrophedon survey: `legs` passes of `leg_m` metres spaced `spacing_m`
/// apart at `altitude_m`, sampled every `step_m` metres at 1 s intervals.
pub fn lawnmower(legs: usize, leg_m: f64, spacing_m: f64, step_m: f64, altitude_m: f64) -> (Vec<Vec3>, Vec<f64>) {
    let per_leg = (leg_m / step_m).round().max(1.0) as usize;
    let mut pts = Vec::new();
    for l in 0..legs {
        for i in 0..=per_leg {
            let s = i as f64 * step_m;
            let x = if l % 2 == 0 { s } else { leg_m - s };
            pts.push(Vec3::new(x, l as f64 * spacing_m, altitude_m));
        }
    }
    let times = (0..pts.len()).map(|i| i as f64).collect();
    (pts, times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofRenderSpec {
    /// Roof outline in metres, in the ground plane under the camera.
    pub polygon_m: Vec<[f64; 2]>,
    pub depth_m: f64,
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    /// Subsamples per pixel side for anti-aliasing.
    pub supersample: usize,
    pub roof_level: u8,
    pub background_level: u8,
}

pub fn polygon_area_m2(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a[0] * b[1] - b[0] * a[1];
    }
    s.abs() / 2.0
}

pub fn point_in_polygon(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi[1] > y) != (pj[1] > y) && x < (pj[0] - pi[0]) * (y - pi[1]) / (pj[1] - pi[1]) + pi[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Nadir view of a flat roof: returns the (distorted, if the intrinsics
/// carry distortion) grayscale image and the true roof area in m^2.
pub fn render_roof_image(spec: &RoofRenderSpec) -> Result<(GrayImage, f64), SynthError> {
    if spec.polygon_m.len() < 3 {
        return Err(SynthError::InvalidSpec("polygon needs at least 3 vertices".into()));
    }
    if !(spec.depth_m > 0.0) || spec.supersample == 0 {
        return Err(SynthError::InvalidSpec(
            "depth must be positive and supersample >= 1".into(),
        ));
    }
    let k = spec.intrinsics;
    k.validate().map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let s = spec.supersample;
    let distorted = !k.is_distortion_free();
    let img = GrayImage::from_fn(spec.width, spec.height, |u, v| {
        let mut hits = 0usize;
        for sy in 0..s {
            for sx in 0..s {
                let pu = u as f64 - 0.5 + (sx as f64 + 0.5) / s as f64;
                let pv = v as f64 - 0.5 + (sy as f64 + 0.5) / s as f64;
                let (mut xn, mut yn) = ((pu - k.cx) / k.fx, (pv - k.cy) / k.fy);
                if distorted {
                    (xn, yn) = k.undistort_normalized(xn, yn);
                }
                if point_in_polygon(&spec.polygon_m, xn * spec.depth_m, yn * spec.depth_m) {
                    hits += 1;
                }
            }
        }
        let f = hits as f64 / (s * s) as f64;
        let lvl = spec.background_level as f64 + f * (spec.roof_level as f64 - spec.background_level as f64);
        lvl.round() as u8
    });
    Ok((img, polygon_area_m2(&spec.polygon_m)))
}

/// L-shaped outline with arms `a` by `b` metres, rotated by `deg`.
pub fn l_shaped_roof(a: f64, b: f64, deg: f64) -> Vec<[f64; 2]> {
    let t = 0.45;
    let raw = [[0.0, 0.0], [a, 0.0], [a, t * b], [t * a, t * b], [t * a, b], [0.0, b]];
    let (s, c) = deg.to_radians().sin_cos();
    let (mx, my) = (0.5 * a, 0.5 * b);
    raw.iter()
        .map(|p| {
            let (x, y) = (p[0] - mx, p[1] - my);
            [c * x - s * y, s * x + c * y]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyFixture {
    pub roof: BinaryMask,
    pub objects: BinaryMask,
    pub roof_pixels: usize,
    /// Object pixels inside the roof.
    pub planted_pixels: usize,
    /// Exact planted percentage, `100 planted / roof`.
    pub planted_percent: f64,
}

/// Roof mask (an L-shape) with round object blobs covering exactly
/// `round(percent/100 * roof)` roof pixels, plus `spill` object pixels
/// off the roof.
pub fn gen_occupancy_fixture(
    seed: u64,
    width: usize,
    height: usize,
    percent: f64,
    n_blobs: usize,
    spill: usize,
) -> Result<OccupancyFixture, SynthError> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(SynthError::InvalidSpec(format!(
            "percent must lie in [0, 100], got {percent}"
        )));
    }
    if width < 8 || height < 8 {
        return Err(SynthError::InvalidSpec("masks must be at least 8x8".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let roof = BinaryMask::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let body = x >= 0.1 * w && x < 0.9 * w && y >= 0.1 * h && y < 0.55 * h;
        let wing = x >= 0.1 * w && x < 0.5 * w && y >= 0.1 * h && y < 0.9 * h;
        body || wing
    });
    let roof_idx: Vec<usize> = (0..width * height).filter(|&i| roof.data[i]).collect();
    let roof_pixels = roof_idx.len();
    let target = ((percent / 100.0) * roof_pixels as f64).round() as usize;
    let centres: Vec<(f64, f64)> = (0..n_blobs.max(1))
        .map(|_| {
            let i = roof_idx[rng.gen_range(0..roof_pixels)];
            ((i % width) as f64, (i / width) as f64)
        })
        .collect();
    let mut keyed: Vec<(f64, usize)> = roof_idx
        .iter()
        .map(|&i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let d = centres
                .iter()
                .map(|c| (x - c.0).powi(2) + (y - c.1).powi(2))
                .fold(f64::INFINITY, f64::min);
            (d, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut objects = BinaryMask::new(width, height);
    for &(_, i) in &keyed[..target] {
        objects.data[i] = true;
    }
    let off: Vec<usize> = (0..width * height).filter(|&i| !roof.data[i]).collect();
    for &i in off.iter().take(spill) {
        objects.data[i] = true;
    }
    Ok(OccupancyFixture {
        roof,
        objects,
        roof_pixels,
        planted_pixels: target,
        planted_percent: 100.0 * target as f64 / roof_pixels as f64,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFixtureTruth {
    pub mode: Mode,
    pub gap_m: f64,
    /// Metric units per reconstruction unit.
    pub scale: f64,
    pub spec: SceneSpec,
    pub boxes: [Aabb; 2],
}

/// `cloud.ply` (in reconstruction units: metres / `scale`), `poses.txt`,
/// `flight_log.csv` and `truth.json`.
pub fn write_distance_fixture(dir: &Path, mode: Mode, spec: &SceneSpec, scale: f64) -> Result<DistanceFixtureTruth> {
    ensure_dir(dir)?;
    let (cloud, truth) = gen_building_pair(spec)?;
    let recon = cloud.map_points(|p| p / scale);
    save_ply(&recon, dir.join("cloud.ply"))?;
    let (traj, times) = lawnmower(3, 60.0, 15.0, 5.0, 40.0);
    let flight = gen_flight_fixture(&traj, scale, &times, 0.0, spec.seed)?;
    write_text(&dir.join("poses.txt"), &write_pose_track(&flight.poses))?;
    write_text(&dir.join("flight_log.csv"), &write_flight_log_csv(&flight.log))?;
    let t = DistanceFixtureTruth {
        mode,
        gap_m: truth.gap,
        scale,
        spec: *spec,
        boxes: truth.boxes,
    };
    write_json(&dir.join("truth.json"), &t)?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoofAreaFixtureTruth {
    pub area_m2: f64,
    pub depth_m: f64,
    pub focal_px: f64,
    pub intrinsics: CameraIntrinsics,
}

/// `roof.png` (grayscale render) and `truth.json`.
pub fn write_roof_area_fixture(dir: &Path, spec: &RoofRenderSpec) -> Result<RoofAreaFixtureTruth> {
    ensure_dir(dir)?;
    let (img, area) = render_roof_image(spec)?;
    save_gray(&img, dir.join("roof.png"))?;
    let t = RoofAreaFixtureTruth {
        area_m2: area,
        depth_m: spec.depth_m,
        focal_px: spec.intrinsics.fx,
        intrinsics: spec.intrinsics,
    };
    write_json(&dir.join("truth.json"), &t)?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchFixtureTruth {
    pub n_frames: usize,
    pub frame_size: (usize, usize),
    pub transforms: Vec<AffineTransform>,
}

/// `frames/frame_NNN.png`, `truth_transforms.txt` and `truth.json`.
pub fn write_stitch_fixture(
    dir: &Path,
    seed: u64,
    n_frames: usize,
    steps: &[AffineTransform],
    frame_size: (usize, usize),
) -> Result<StitchFixtureTruth> {
    let frames_dir = dir.join("frames");
    ensure_dir(&frames_dir)?;
    let seq = gen_roof_sequence(seed, n_frames, steps, frame_size)?;
    for (k, f) in seq.frames.iter().enumerate() {
        save_gray(f, frames_dir.join(format!("frame_{k:03}.png")))?;
    }
    write_text(&dir.join("truth_transforms.txt"), &format_transforms(&seq.truth))?;
    let t = StitchFixtureTruth {
        n_frames,
        frame_size,
        transforms: seq.truth,
    };
    write_json(&dir.join("truth.json"), &t)?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyFixtureTruth {
    pub planted_percent: f64,
    pub planted_pixels: usize,
    pub roof_pixels: usize,
}

/// `canvas.png`, `roof_mask.png`, `object_mask.png` and `truth.json`.
pub fn write_occupancy_fixture(
    dir: &Path,
    seed: u64,
    size: (usize, usize),
    percent: f64,
) -> Result<OccupancyFixtureTruth> {
    ensure_dir(dir)?;
    let fx = gen_occupancy_fixture(seed, size.0, size.1, percent, 6, 0)?;
    let canvas = band_limited_texture(seed, size.0, size.1);
    save_gray(&canvas, dir.join("canvas.png"))?;
    save_mask(&fx.roof, dir.join("roof_mask.png"))?;
    save_mask(&fx.objects, dir.join("object_mask.png"))?;
    let t = OccupancyFixtureTruth {
        planted_percent: fx.planted_percent,
        planted_pixels: fx.planted_pixels,
        roof_pixels: fx.roof_pixels,
    };
    write_json(&dir.join("truth.json"), &t)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..200_000).map(|_| gaussian(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02);
    }

    #[test]
    fn building_pair_truth() {
        let mut spec = SceneSpec::for_mode(Mode::InBetween, 12.96, 7);
        spec.density = 5.0;
        let (cloud, truth) = gen_building_pair(&spec).unwrap();
        assert_eq!(truth.gap, 12.96);
        assert_eq!(truth.labels.len(), cloud.len());
        let gap = truth.facing[1].signed_distance(Vec3::ZERO) + truth.facing[0].signed_distance(Vec3::ZERO);
        assert!((gap.abs() - 12.96).abs() < 1e-12);
        for f in &truth.faces {
            assert!((f.plane.normal.norm() - 1.0).abs() < 1e-12);
        }
        let (again, _) = gen_building_pair(&spec).unwrap();
        assert_eq!(cloud, again);
    }

    #[test]
    fn noiseless_points_on_faces() {
        let mut spec = SceneSpec::for_mode(Mode::Roof, 15.0, 1);
        spec.noise_sigma = 0.0;
        spec.outlier_fraction = 0.0;
        spec.density = 2.0;
        let (cloud, truth) = gen_building_pair(&spec).unwrap();
        for (p, &l) in cloud.points.iter().zip(&truth.labels) {
            let on = truth
                .faces
                .iter()
                .filter(|f| f.building == l as usize)
                .any(|f| f.plane.signed_distance(*p).abs() < 1e-9);
            assert!(on);
        }
    }

    #[test]
    fn survey_frames_overlap() {
        let steps = survey_steps((640, 480), 14);
        assert_eq!(steps.len(), 28);
        let truth = chain_steps(98, &steps);
        for k in 1..98 {
            let rel = compose(&truth[k - 1].inverse().unwrap(), &truth[k]);
            let (x, y) = rel.apply(320.0, 240.0);
            assert!(x > 0.0 && x < 640.0 && y > 0.0 && y < 480.0, "frame {k}");
        }
    }

    #[test]
    fn sequence_truth() {
        let one = gen_roof_sequence(1, 1, &[], (64, 48)).unwrap();
        assert_eq!(one.truth, vec![AffineTransform::IDENTITY]);
        let seq = gen_roof_sequence(1, 10, &[AffineTransform::translation(40.0, 0.0)], (64, 48)).unwrap();
        for (k, t) in seq.truth.iter().enumerate() {
            assert_eq!(t.tx, 40.0 * k as f64);
        }
        // integer translation: frame k+1 column 0 equals frame k column 40
        for y in 0..48 {
            assert_eq!(seq.frames[1].get(0, y), seq.frames[0].get(40, y));
        }
    }

    #[test]
    fn rotated_steps_self_consistent() {
        let step = compose(
            &AffineTransform::translation(20.0, 3.0),
            &AffineTransform::rotation_about(2.0, 32.0, 24.0),
        );
        let seq = gen_roof_sequence(2, 5, &[step], (64, 48)).unwrap();
        // re-derive each step from consecutive truths
        for k in 1..5 {
            let re = compose(&seq.truth[k - 1].inverse().unwrap(), &seq.truth[k]);
            for (x, y) in frame_corners(64, 48) {
                let (a, b) = (re.apply(x, y), step.apply(x, y));
                assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
            }
        }
        let tex = Texture::new(0, 50, 50);
        let err = render_frames(&tex, &AffineTransform::IDENTITY, &seq.truth, (64, 48)).unwrap_err();
        assert!(matches!(err, SynthError::CropOutOfBounds { frame: 0 }));
    }

    #[test]
    fn flight_fixture_positions() {
        let (traj, times) = lawnmower(2, 100.0, 10.0, 10.0, 30.0);
        let fx = gen_flight_fixture(&traj, 4.0, &times, 0.0, 0).unwrap();
        let o = &fx.log[0];
        for (k, rec) in fx.log.iter().enumerate() {
            let enu = crate::scale::geodetic_to_enu(rec, o);
            let want = traj[k] - traj[0];
            assert!((enu - want).norm() < 1e-6);
            assert!((fx.poses[k].translation * 4.0 - want).norm() < 1e-12);
        }
    }

    #[test]
    fn occupancy_fixture_exact() {
        for pct in [0.0, 25.0, 38.73, 100.0] {
            let fx = gen_occupancy_fixture(3, 200, 150, pct, 5, 40).unwrap();
            let inside = fx
                .objects
                .data
                .iter()
                .zip(&fx.roof.data)
                .filter(|(o, r)| **o && **r)
                .count();
            assert_eq!(inside, fx.planted_pixels);
            assert!((fx.planted_percent - pct).abs() < 0.01);
            assert_eq!(fx.objects.count(), fx.planted_pixels + 40);
        }
    }

    #[test]
    fn polygon_helpers() {
        let sq = [[0.0, 0.0], [2.0, 0.0], [2.0, 3.0], [0.0, 3.0]];
        assert_eq!(polygon_area_m2(&sq), 6.0);
        assert!(point_in_polygon(&sq, 1.0, 1.0));
        assert!(!point_in_polygon(&sq, 3.0, 1.0));
        let l = l_shaped_roof(40.0, 30.0, 17.0);
        let want = 40.0 * 30.0 - (1.0 - 0.45) * 40.0 * (1.0 - 0.45) * 30.0;
        assert!((polygon_area_m2(&l) - want).abs() < 1e-9);
    }
}
