//! Mosaicking of constant-altitude nadir frames.
//!
//! Corners are detected in frame k and tracked into frame k+1; an affine
//! from frame k+1 to frame k is fitted with RANSAC and chained onto the
//! running absolute transform, so every frame maps into frame 0's pixel
//! coordinates. Frames are then composited in order on one [`Canvas`].

mod affine;
mod canvas;
mod features;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affine::{
    affine_from_three, compose, estimate_affine_detailed, estimate_affine_ransac, fit_affine_lsq, AffineEstimate,
    AffineRansacConfig, AffineTransform,
};
pub use canvas::{warp_onto_canvas, warped_bbox, Blend, Canvas, DEFAULT_MAX_CANVAS_SIDE, NO_OWNER};
pub use features::{
    detect_corners, detect_corners_with, track_features, track_features_with, Corner, CornerConfig, TrackConfig,
    MIN_FEATURES, MIN_IMAGE_SIDE,
};

use crate::imaging::Raster;
use crate::par::Exec;
use features::{track_pyramids, Pyramid};

#[derive(Debug, Error)]
pub enum StitchError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient features: found {0}, need at least 8")]
    InsufficientFeatures(usize),
    #[error("no feature survived tracking")]
    NoMatches,
    #[error("need at least 3 matches, got {0}")]
    TooFewMatches(usize),
    #[error("degenerate sample: every minimal sample was collinear")]
    Degenerate,
    #[error("no affine reached min_inliers ({best} < {required})")]
    NoConsensus { best: usize, required: usize },
    #[error("canvas would be {width}x{height}, limit is {max_side} per side")]
    CanvasTooLarge {
        width: usize,
        height: usize,
        max_side: usize,
    },
    #[error("pair {index} -> {}: {source}", index + 1)]
    Pair {
        index: usize,
        #[source]
        source: Box<StitchError>,
    },
}

impl StitchError {
    pub fn kind(&self) -> &'static str {
        match self {
            StitchError::InvalidInput(_) => "invalid_input",
            StitchError::InsufficientFeatures(_) => "insufficient_features",
            StitchError::NoMatches => "no_matches",
            StitchError::TooFewMatches(_) => "too_few_matches",
            StitchError::Degenerate => "degenerate_sample",
            StitchError::NoConsensus { .. } => "no_consensus",
            StitchError::CanvasTooLarge { .. } => "canvas_too_large",
            StitchError::Pair { source, .. } => source.kind(),
        }
    }

    /// Index of the first frame of the failing pair, if any.
    pub fn failing_pair(&self) -> Option<usize> {
        match self {
            StitchError::Pair { index, .. } => Some(*index),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatch {
    pub source: [f64; 2],
    pub target: [f64; 2],
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchConfig {
    pub corners: CornerConfig,
    pub tracking: TrackConfig,
    pub ransac: AffineRansacConfig,
    pub blend: Blend,
    pub max_canvas_side: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            corners: CornerConfig::default(),
            tracking: TrackConfig::default(),
            ransac: AffineRansacConfig::default(),
            blend: Blend::LastWriter,
            max_canvas_side: DEFAULT_MAX_CANVAS_SIDE,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// Pair `(index, index + 1)`.
    pub index: usize,
    pub corners: usize,
    pub matches: usize,
    pub inliers: usize,
    /// Maps frame `index + 1` into frame `index`.
    pub transform: AffineTransform,
}

#[derive(Debug, Clone)]
pub struct StitchResult {
    pub canvas: Canvas,
    /// Frame k -> frame 0.
    pub transforms: Vec<AffineTransform>,
    pub pairs: Vec<PairStats>,
}

/// Affine mapping frame `next` into frame `prev`.
pub fn estimate_pair(prev: &Raster, next: &Raster, cfg: &StitchConfig, seed: u64) -> Result<PairStats, StitchError> {
    let levels = cfg.tracking.levels();
    let ga = prev.to_gray();
    let gb = next.to_gray();
    pair_from(
        &ga,
        &Pyramid::new(&ga, levels),
        &Pyramid::new(&gb, levels),
        cfg,
        seed,
        0,
    )
}

fn pair_from(
    gray_prev: &crate::imaging::GrayImage,
    pa: &Pyramid,
    pb: &Pyramid,
    cfg: &StitchConfig,
    seed: u64,
    index: usize,
) -> Result<PairStats, StitchError> {
    let corners = detect_corners_with(gray_prev, &cfg.corners)?;
    let points: Vec<[f64; 2]> = corners.iter().map(|c| [c.x, c.y]).collect();
    let forward = track_pyramids(pa, pb, &points, &cfg.tracking, cfg.exec)?;
    // fit next -> prev
    let reversed: Vec<FeatureMatch> = forward
        .iter()
        .map(|m| FeatureMatch {
            source: m.target,
            target: m.source,
            score: m.score,
        })
        .collect();
    let ransac = AffineRansacConfig {
        rng_seed: seed,
        exec: cfg.exec,
        ..cfg.ransac
    };
    let (transform, inliers) = estimate_affine_ransac(&reversed, &ransac)?;
    Ok(PairStats {
        index,
        corners: corners.len(),
        matches: forward.len(),
        inliers,
        transform,
    })
}

/// Stitch an ordered frame list. Pairwise estimates are independent and run
/// under `cfg.exec`; chaining and compositing are sequential.
pub fn stitch_sequence(frames: &[Raster], cfg: &StitchConfig) -> Result<StitchResult, StitchError> {
    if frames.len() < 2 {
        return Err(StitchError::InvalidInput(format!(
            "need at least 2 frames, got {}",
            frames.len()
        )));
    }
    cfg.ransac.validate()?;
    cfg.tracking.validate()?;
    let (w, h, ch) = (frames[0].width, frames[0].height, frames[0].channels);
    if let Some((k, f)) = frames
        .iter()
        .enumerate()
        .find(|(_, f)| f.width != w || f.height != h || f.channels != ch)
    {
        return Err(StitchError::InvalidInput(format!(
            "frame {k} is {}x{}x{}, frame 0 is {w}x{h}x{ch}",
            f.width, f.height, f.channels
        )));
    }
    let levels = cfg.tracking.levels();
    let prepared = cfg.exec.map(frames, |f| {
        let g = f.to_gray();
        let p = Pyramid::new(&g, levels);
        (g, p)
    });
    let inner = StitchConfig {
        exec: Exec::Sequential,
        ..*cfg
    };
    let results = cfg.exec.map_range(frames.len() - 1, |k| {
        pair_from(
            &prepared[k].0,
            &prepared[k].1,
            &prepared[k + 1].1,
            &inner,
            cfg.ransac.rng_seed ^ k as u64,
            k,
        )
    });
    drop(prepared);
    let mut pairs = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        let p = r.map_err(|e| StitchError::Pair {
            index: k,
            source: Box::new(e),
        })?;
        log::debug!(
            "pair {k}: {} corners, {} matches, {} inliers",
            p.corners,
            p.matches,
            p.inliers
        );
        pairs.push(p);
    }

    let mut transforms = vec![AffineTransform::IDENTITY];
    for p in &pairs {
        let last = *transforms.last().unwrap();
        transforms.push(compose(&last, &p.transform));
    }
    let mut canvas = Canvas::new(ch, cfg.blend);
    canvas.max_side = cfg.max_canvas_side;
    canvas.exec = cfg.exec;
    for (k, (f, t)) in frames.iter().zip(&transforms).enumerate() {
        warp_onto_canvas(&mut canvas, f, t).map_err(|e| match e {
            e @ StitchError::CanvasTooLarge { .. } => e,
            other => StitchError::Pair {
                index: k.saturating_sub(1),
                source: Box::new(other),
            },
        })?;
    }
    Ok(StitchResult {
        canvas,
        transforms,
        pairs,
    })
}

/// One line per frame: `index a b tx c d ty`.
pub fn format_transforms(transforms: &[AffineTransform]) -> String {
    let mut s = String::new();
    for (k, t) in transforms.iter().enumerate() {
        s.push_str(&format!(
            "{k} {:?} {:?} {:?} {:?} {:?} {:?}\n",
            t.a, t.b, t.tx, t.c, t.d, t.ty
        ));
    }
    s
}

pub fn parse_transforms(text: &str) -> Result<Vec<AffineTransform>, StitchError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || StitchError::InvalidInput(format!("transforms line {}: expected 'index a b tx c d ty'", n + 1));
        if f.len() != 7 {
            return Err(bad());
        }
        let idx: usize = f[0].parse().map_err(|_| bad())?;
        if idx != out.len() {
            return Err(StitchError::InvalidInput(format!(
                "transforms line {}: index {idx} out of order",
                n + 1
            )));
        }
        let v: Vec<f64> = f[1..]
            .iter()
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        out.push(AffineTransform::new(v[0], v[1], v[2], v[3], v[4], v[5]));
    }
    Ok(out)
}

const FRAME_EXTENSIONS: [&str; 6] = ["png", "pgm", "ppm", "pbm", "pnm", "PNG"];

/// Raster files in `dir`, ordered lexicographically by file name.
pub fn list_frames(dir: impl AsRef<Path>) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| FRAME_EXTENSIONS.contains(&e))
        })
        .collect();
    out.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(out)
}

/// Leading numeric timestamp (seconds) in a file stem, e.g. `12.40_cam.png`
/// or `frame_0012.400.png` (first number found).
pub fn timestamp_from_name(path: &Path) -> Option<f64> {
    let stem = path.file_stem()?.to_str()?;
    let bytes = stem.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let mut end = start;
    let mut seen_dot = false;
    while end < bytes.len() {
        match bytes[end] {
            b'0'..=b'9' => end += 1,
            b'.' if !seen_dot && end + 1 < bytes.len() && bytes[end + 1].is_ascii_digit() => {
                seen_dot = true;
                end += 1
            }
            _ => break,
        }
    }
    stem[start..end].parse().ok()
}

/// Keep the first frame of each `1/hz`-second bin (by file-name timestamp).
/// Files without a timestamp are dropped.
pub fn decimate_by_timestamp(paths: &[PathBuf], hz: f64) -> Result<Vec<PathBuf>, StitchError> {
    if !(hz > 0.0) || !hz.is_finite() {
        return Err(StitchError::InvalidInput(format!("rate must be positive, got {hz}")));
    }
    let mut stamped: Vec<(f64, &PathBuf)> = paths
        .iter()
        .filter_map(|p| timestamp_from_name(p).map(|t| (t, p)))
        .collect();
    stamped.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some(&(t0, _)) = stamped.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    let mut last_bin = None;
    for (t, p) in stamped {
        let bin = ((t - t0) * hz + 1e-9).floor() as i64;
        if last_bin != Some(bin) {
            out.push(p.clone());
            last_bin = Some(bin);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;
    use crate::synth::{band_limited_texture, gen_roof_sequence};

    #[test]
    fn identical_frames() {
        let g = band_limited_texture(11, 160, 120);
        let frames = vec![Raster::from(g.clone()); 5];
        let r = stitch_sequence(&frames, &StitchConfig::default()).unwrap();
        for t in &r.transforms {
            assert!(t.max_abs_diff(&AffineTransform::IDENTITY) < 1e-3, "{t:?}");
        }
        assert_eq!((r.canvas.width, r.canvas.height), (160, 120));
        let diff = r
            .canvas
            .data
            .iter()
            .zip(&g.data)
            .map(|(a, b)| (*a as i32 - *b as i32).abs())
            .max()
            .unwrap();
        assert!(diff <= 1);
    }

    #[test]
    fn short_translation_sequence() {
        let steps = vec![AffineTransform::translation(23.0, 4.0)];
        let seq = gen_roof_sequence(3, 6, &steps, (200, 150)).unwrap();
        let frames: Vec<Raster> = seq.frames.into_iter().map(Raster::from).collect();
        let r = stitch_sequence(&frames, &StitchConfig::default()).unwrap();
        for (got, want) in r.transforms.iter().zip(&seq.truth) {
            let (gx, gy) = got.apply(199.0, 149.0);
            let (wx, wy) = want.apply(199.0, 149.0);
            assert!((gx - wx).hypot(gy - wy) < 0.5, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn raw_pairs_equal_warped_chaining() {
        // Estimating frame k+1 against frame k already warped by an integer
        // translation A gives compose(A, T_k).
        let steps = vec![AffineTransform::translation(17.0, -6.0)];
        let seq = gen_roof_sequence(4, 2, &steps, (180, 140)).unwrap();
        let a = Raster::from(seq.frames[0].clone());
        let b = Raster::from(seq.frames[1].clone());
        let cfg = StitchConfig::default();
        let raw = estimate_pair(&a, &b, &cfg, 0).unwrap().transform;
        let shift = AffineTransform::translation(-3.0, 2.0);
        let warped = Raster::from(GrayImage::from_fn(180, 140, |x, y| {
            let (sx, sy) = shift.inverse().unwrap().apply(x as f64, y as f64);
            seq.frames[0].sample_bilinear(sx, sy).map_or(0, |v| v.round() as u8)
        }));
        let via_warped = estimate_pair(&warped, &b, &cfg, 0).unwrap().transform;
        assert!(compose(&shift, &raw).max_abs_diff(&via_warped) < 0.05);
    }

    #[test]
    fn too_few_frames() {
        let f = Raster::from(GrayImage::new(64, 64));
        assert!(matches!(
            stitch_sequence(&[f], &StitchConfig::default()),
            Err(StitchError::InvalidInput(_))
        ));
    }

    #[test]
    fn failing_pair_reported() {
        let tex = Raster::from(band_limited_texture(1, 128, 96));
        let flat = Raster::from(GrayImage::from_fn(128, 96, |_, _| 80));
        let err = stitch_sequence(&[tex.clone(), tex, flat.clone(), flat], &StitchConfig::default()).unwrap_err();
        // the textured frame cannot be tracked into the flat one
        assert_eq!(err.failing_pair(), Some(1));
        assert_eq!(err.kind(), "no_matches");
    }

    #[test]
    fn transforms_round_trip() {
        let ts = vec![
            AffineTransform::IDENTITY,
            AffineTransform::new(0.1 + 0.2, 1e-17, -3.5, 2.0, 0.99, 1.0 / 3.0),
        ];
        assert_eq!(parse_transforms(&format_transforms(&ts)).unwrap(), ts);
        assert!(parse_transforms("0 1 2 3").is_err());
        assert!(parse_transforms("1 1 0 0 0 1 0").is_err());
    }

    #[test]
    fn decimation() {
        let paths: Vec<PathBuf> = (0..30)
            .map(|i| PathBuf::from(format!("frame_{:.1}.png", i as f64 * 0.1)))
            .collect();
        let kept = decimate_by_timestamp(&paths, 1.0).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[1], PathBuf::from("frame_1.0.png"));
        assert_eq!(timestamp_from_name(Path::new("img_0042.png")), Some(42.0));
        assert_eq!(timestamp_from_name(Path::new("none.png")), None);
    }
}
