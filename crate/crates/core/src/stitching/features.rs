use serde::{Deserialize, Serialize};

use super::{FeatureMatch, StitchError};
use crate::imaging::GrayImage;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerConfig {
    pub max_n: usize,
    pub min_spacing: f64,
    /// Pixels closer than this to the border are never reported.
    pub margin: usize,
    /// Harris sensitivity `k` in `det - k tr^2`.
    pub harris_k: f64,
    /// Responses below this fraction of the strongest are ignored.
    pub relative_threshold: f64,
}

impl Default for CornerConfig {
    fn default() -> Self {
        CornerConfig {
            max_n: 300,
            min_spacing: 12.0,
            margin: 8,
            harris_k: 0.04,
            relative_threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub x: f64,
    pub y: f64,
    pub response: f64,
}

pub const MIN_FEATURES: usize = 8;
pub const MIN_IMAGE_SIDE: usize = 32;

/// Up to `max_n` Harris corners at least `min_spacing` apart, strongest first.
pub fn detect_corners(img: &GrayImage, max_n: usize, min_spacing: f64) -> Result<Vec<[f64; 2]>, StitchError> {
    let cfg = CornerConfig {
        max_n,
        min_spacing,
        ..Default::default()
    };
    Ok(detect_corners_with(img, &cfg)?.iter().map(|c| [c.x, c.y]).collect())
}

pub fn detect_corners_with(img: &GrayImage, cfg: &CornerConfig) -> Result<Vec<Corner>, StitchError> {
    let (w, h) = (img.width, img.height);
    if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
        return Err(StitchError::InvalidInput(format!(
            "image {w}x{h} is smaller than {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
        )));
    }
    if !(cfg.min_spacing >= 0.0) {
        return Err(StitchError::InvalidInput("min_spacing must be non-negative".into()));
    }
    let response = harris_response(img, cfg.harris_k);
    let max_r = response.iter().copied().fold(0.0f64, f64::max);
    if !(max_r > 1e-9) {
        return Err(StitchError::InsufficientFeatures(0));
    }
    let floor = cfg.relative_threshold * max_r;
    let margin = cfg.margin.max(2);
    let mut peaks = Vec::new();
    for y in margin..h.saturating_sub(margin) {
        for x in margin..w.saturating_sub(margin) {
            let r = response[y * w + x];
            if r <= floor {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let j = ((y as i64 + dy) as usize) * w + (x as i64 + dx) as usize;
                    let other = response[j];
                    // plateaus resolve to the first pixel in raster order
                    if other > r || (other == r && j < y * w + x) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((r, y * w + x));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let cell = cfg.min_spacing.max(1.0);
    let gw = (w as f64 / cell).ceil() as usize + 1;
    let gh = (h as f64 / cell).ceil() as usize + 1;
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); gw * gh];
    let mut out: Vec<Corner> = Vec::new();
    let s2 = cfg.min_spacing * cfg.min_spacing;
    for (r, i) in peaks {
        if out.len() >= cfg.max_n {
            break;
        }
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let (cx, cy) = ((x / cell) as usize, (y / cell) as usize);
        let mut ok = true;
        'g: for gy in cy.saturating_sub(1)..=(cy + 1).min(gh - 1) {
            for gx in cx.saturating_sub(1)..=(cx + 1).min(gw - 1) {
                for &k in &grid[gy * gw + gx] {
                    let c: &Corner = &out[k];
                    if (c.x - x).powi(2) + (c.y - y).powi(2) < s2 {
                        ok = false;
                        break 'g;
                    }
                }
            }
        }
        if ok {
            grid[cy * gw + cx].push(out.len());
            out.push(Corner { x, y, response: r });
        }
    }
    if out.len() < MIN_FEATURES {
        return Err(StitchError::InsufficientFeatures(out.len()));
    }
    Ok(out)
}

/// Harris response with Sobel gradients and a 5x5 box-summed structure tensor.
fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let px = |x: usize, y: usize| img.data[y * w + x] as f64;
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let gy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let (gx, gy) = (gx / 8.0, gy / 8.0);
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let sxx = box_sum(&ixx, w, h, 2);
    let syy = box_sum(&iyy, w, h, 2);
    let sxy = box_sum(&ixy, w, h, 2);
    (0..w * h)
        .map(|i| {
            let tr = sxx[i] + syy[i];
            sxx[i] * syy[i] - sxy[i] * sxy[i] - k * tr * tr
        })
        .collect()
}

fn box_sum(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            tmp[y * w + x] = row[lo..=hi].iter().sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| tmp[yy * w + x]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    /// Odd patch side.
    pub window: usize,
    pub search_radius: usize,
    pub min_ncc: f64,
    pub max_levels: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            window: 15,
            search_radius: 40,
            min_ncc: 0.8,
            max_levels: 4,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), StitchError> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(StitchError::InvalidInput(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.min_ncc > -1.0 && self.min_ncc <= 1.0) {
            return Err(StitchError::InvalidInput(format!(
                "min_ncc must lie in (-1, 1], got {}",
                self.min_ncc
            )));
        }
        Ok(())
    }

    /// Pyramid depth so the coarsest exhaustive search spans at most
    /// `COARSE_RADIUS` pixels.
    pub fn levels(&self) -> usize {
        let mut l = 0;
        while l < self.max_levels && self.search_radius.div_ceil(1 << l) > COARSE_RADIUS {
            l += 1;
        }
        l
    }
}

const COARSE_RADIUS: usize = 10;

#[derive(Debug, Clone)]
pub(crate) struct Level {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Level {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }

    fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.w - 1) as f64 && y <= (self.h - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.w - 1);
        let y0 = (y.floor() as usize).min(self.h - 1);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.at(x0, y0) as f64 * (1.0 - fx) + self.at(x1, y0) as f64 * fx;
        let bot = self.at(x0, y1) as f64 * (1.0 - fx) + self.at(x1, y1) as f64 * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }
}

/// Image pyramid by 2x2 averaging; level 0 is the input.
#[derive(Debug, Clone)]
pub(crate) struct Pyramid {
    levels: Vec<Level>,
}

impl Pyramid {
    pub(crate) fn new(img: &GrayImage, levels: usize) -> Pyramid {
        let mut out = vec![Level {
            w: img.width,
            h: img.height,
            data: img.to_f32(),
        }];
        for _ in 0..levels {
            let prev = out.last().unwrap();
            let (w, h) = (prev.w / 2, prev.h / 2);
            if w < 8 || h < 8 {
                break;
            }
            let mut data = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let s = prev.at(2 * x, 2 * y)
                        + prev.at(2 * x + 1, 2 * y)
                        + prev.at(2 * x, 2 * y + 1)
                        + prev.at(2 * x + 1, 2 * y + 1);
                    data.push(0.25 * s);
                }
            }
            out.push(Level { w, h, data });
        }
        Pyramid { levels: out }
    }

    fn depth(&self) -> usize {
        self.levels.len() - 1
    }
}

struct Template {
    values: Vec<f64>,
    norm: f64,
}

fn template(level: &Level, cx: i64, cy: i64, half: i64) -> Option<Template> {
    if cx < half || cy < half || cx + half >= level.w as i64 || cy + half >= level.h as i64 {
        return None;
    }
    let mut values = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for y in cy - half..=cy + half {
        for x in cx - half..=cx + half {
            values.push(level.at(x as usize, y as usize) as f64);
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in &mut values {
        *v -= mean;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-6 {
        return None;
    }
    Some(Template { values, norm })
}

fn ncc_at(t: &Template, level: &Level, cx: i64, cy: i64, half: i64) -> Option<f64> {
    if cx < half || cy < half || cx + half >= level.w as i64 || cy + half >= level.h as i64 {
        return None;
    }
    let (mut cross, mut sum, mut sq) = (0.0f64, 0.0f64, 0.0f64);
    let mut k = 0;
    for y in cy - half..=cy + half {
        let row = &level.data[y as usize * level.w..];
        for x in cx - half..=cx + half {
            let v = row[x as usize] as f64;
            cross += t.values[k] * v;
            sum += v;
            sq += v * v;
            k += 1;
        }
    }
    let var = sq - sum * sum / k as f64;
    if var <= 1e-9 {
        return None;
    }
    Some(cross / (t.norm * var.sqrt()))
}

fn best_in(
    t: &Template,
    level: &Level,
    px: i64,
    py: i64,
    center: (i64, i64),
    r: i64,
    half: i64,
) -> Option<((i64, i64), f64)> {
    let mut best: Option<((i64, i64), f64)> = None;
    for dy in center.1 - r..=center.1 + r {
        for dx in center.0 - r..=center.0 + r {
            if let Some(s) = ncc_at(t, level, px + dx, py + dy, half) {
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some(((dx, dy), s));
                }
            }
        }
    }
    best
}

fn parabola_offset(l: Option<f64>, c: f64, r: Option<f64>) -> f64 {
    match (l, r) {
        (Some(l), Some(r)) => {
            let den = l - 2.0 * c + r;
            if den < -1e-12 {
                (0.5 * (l - r) / den).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Gauss-Newton refinement of a translation between zero-mean patches.
fn refine_translation(a: &Level, b: &Level, p: (i64, i64), d: (f64, f64), half: i64) -> Option<(f64, f64)> {
    let (px, py) = p;
    if px - half < 1 || py - half < 1 || px + half + 1 >= a.w as i64 || py + half + 1 >= a.h as i64 {
        return None;
    }
    let mut gx = Vec::new();
    let mut gy = Vec::new();
    let mut av = Vec::new();
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    for y in py - half..=py + half {
        for x in px - half..=px + half {
            let (xu, yu) = (x as usize, y as usize);
            let ix = 0.5 * (a.at(xu + 1, yu) as f64 - a.at(xu - 1, yu) as f64);
            let iy = 0.5 * (a.at(xu, yu + 1) as f64 - a.at(xu, yu - 1) as f64);
            hxx += ix * ix;
            hxy += ix * iy;
            hyy += iy * iy;
            gx.push(ix);
            gy.push(iy);
            av.push(a.at(xu, yu) as f64);
        }
    }
    let det = hxx * hyy - hxy * hxy;
    if !(det > 1e-9 * (hxx + hyy).powi(2)) {
        return None;
    }
    let amean = av.iter().sum::<f64>() / av.len() as f64;
    let mut d = d;
    let mut bv = vec![0.0; av.len()];
    for _ in 0..10 {
        let mut k = 0;
        for y in py - half..=py + half {
            for x in px - half..=px + half {
                bv[k] = b.bilinear(x as f64 + d.0, y as f64 + d.1)?;
                k += 1;
            }
        }
        let bmean = bv.iter().sum::<f64>() / bv.len() as f64;
        let (mut ex, mut ey) = (0.0, 0.0);
        for k in 0..av.len() {
            let e = (av[k] - amean) - (bv[k] - bmean);
            ex += gx[k] * e;
            ey += gy[k] * e;
        }
        let sx = (hyy * ex - hxy * ey) / det;
        let sy = (hxx * ey - hxy * ex) / det;
        d = (d.0 + sx, d.1 + sy);
        if sx * sx + sy * sy < 1e-8 {
            break;
        }
    }
    Some(d)
}

/// Track `points` from `a` into `b` by coarse-to-fine NCC search with
/// sub-pixel refinement. Matches scoring below `min_ncc` are dropped.
pub fn track_features(
    a: &GrayImage,
    b: &GrayImage,
    points: &[[f64; 2]],
    window: usize,
    search_radius: usize,
) -> Result<Vec<FeatureMatch>, StitchError> {
    let cfg = TrackConfig {
        window,
        search_radius,
        ..Default::default()
    };
    track_features_with(a, b, points, &cfg, Exec::default())
}

pub fn track_features_with(
    a: &GrayImage,
    b: &GrayImage,
    points: &[[f64; 2]],
    cfg: &TrackConfig,
    exec: Exec,
) -> Result<Vec<FeatureMatch>, StitchError> {
    cfg.validate()?;
    if a.width != b.width || a.height != b.height {
        return Err(StitchError::InvalidInput(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let levels = cfg.levels();
    let pa = Pyramid::new(a, levels);
    let pb = Pyramid::new(b, levels);
    track_pyramids(&pa, &pb, points, cfg, exec)
}

pub(crate) fn track_pyramids(
    pa: &Pyramid,
    pb: &Pyramid,
    points: &[[f64; 2]],
    cfg: &TrackConfig,
    exec: Exec,
) -> Result<Vec<FeatureMatch>, StitchError> {
    let top = cfg.levels().min(pa.depth()).min(pb.depth());
    let half = (cfg.window / 2) as i64;
    let r0 = cfg.search_radius as i64;
    let tracked = exec.map(points, |p| {
        let (px, py) = (p[0].round() as i64, p[1].round() as i64);
        // points near the border start at the coarsest level their window fits
        let start = (0..=top).rev().find(|&l| {
            let lv = &pa.levels[l];
            let (lx, ly) = (px >> l, py >> l);
            lx >= half && ly >= half && lx + half < lv.w as i64 && ly + half < lv.h as i64
        })?;
        let coarse_r = (r0 + (1 << start) - 1) >> start;
        let mut d = (0i64, 0i64);
        let mut score = f64::NAN;
        for l in (0..=start).rev() {
            let la = &pa.levels[l];
            let lb = &pb.levels[l];
            let (lx, ly) = (px >> l, py >> l);
            let t = template(la, lx, ly, half)?;
            let (centre, radius) = if l == start {
                (d, coarse_r)
            } else {
                ((2 * d.0, 2 * d.1), 2)
            };
            let (best, s) = best_in(&t, lb, lx, ly, centre, radius, half)?;
            d = best;
            score = s;
        }
        if d.0.abs() > r0 || d.1.abs() > r0 || score < cfg.min_ncc {
            return None;
        }
        let la = &pa.levels[0];
        let lb = &pb.levels[0];
        let t = template(la, px, py, half)?;
        let at = |dx: i64, dy: i64| ncc_at(&t, lb, px + dx, py + dy, half);
        let ox = parabola_offset(at(d.0 - 1, d.1), score, at(d.0 + 1, d.1));
        let oy = parabola_offset(at(d.0, d.1 - 1), score, at(d.0, d.1 + 1));
        let coarse = (d.0 as f64 + ox, d.1 as f64 + oy);
        let fine = match refine_translation(la, lb, (px, py), coarse, half) {
            Some(f) if (f.0 - coarse.0).abs() <= 1.0 && (f.1 - coarse.1).abs() <= 1.0 => f,
            _ => coarse,
        };
        let target = [px as f64 + fine.0, py as f64 + fine.1];
        if !(target[0] >= 0.0 && target[1] >= 0.0 && target[0] <= (lb.w - 1) as f64 && target[1] <= (lb.h - 1) as f64) {
            return None;
        }
        Some(FeatureMatch {
            source: [px as f64, py as f64],
            target,
            score,
        })
    });
    let matches: Vec<FeatureMatch> = tracked.into_iter().flatten().collect();
    if matches.is_empty() {
        return Err(StitchError::NoMatches);
    }
    Ok(matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::band_limited_texture;

    fn textured(seed: u64, w: usize, h: usize) -> GrayImage {
        band_limited_texture(seed, w, h)
    }

    fn shift(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
        // b(x, y) = a(x - dx, y - dy): content moves by (dx, dy)
        GrayImage::from_fn(img.width, img.height, |x, y| {
            let (sx, sy) = (x as i64 - dx, y as i64 - dy);
            if sx < 0 || sy < 0 || sx >= img.width as i64 || sy >= img.height as i64 {
                0
            } else {
                img.get(sx as usize, sy as usize)
            }
        })
    }

    #[test]
    fn square_corners_found() {
        // a few squares so that at least 8 corners exist
        let img = GrayImage::from_fn(96, 96, |x, y| {
            let a = (20..50).contains(&x) && (20..50).contains(&y);
            let b = (60..80).contains(&x) && (55..85).contains(&y);
            if a || b {
                255
            } else {
                0
            }
        });
        let corners = detect_corners(&img, 50, 4.0).unwrap();
        for (cx, cy) in [(20.0, 20.0), (49.0, 20.0), (20.0, 49.0), (49.0, 49.0)] {
            assert!(
                corners[..8]
                    .iter()
                    .any(|c| (c[0] - cx).abs() <= 2.0 && (c[1] - cy).abs() <= 2.0),
                "missing corner near ({cx}, {cy}): {corners:?}"
            );
        }
    }

    #[test]
    fn constant_image_fails() {
        let img = GrayImage::from_fn(64, 64, |_, _| 90);
        assert!(matches!(
            detect_corners(&img, 100, 5.0),
            Err(StitchError::InsufficientFeatures(0))
        ));
        let small = GrayImage::new(16, 40);
        assert!(matches!(
            detect_corners(&small, 100, 5.0),
            Err(StitchError::InvalidInput(_))
        ));
    }

    #[test]
    fn spacing_respected() {
        let img = textured(5, 200, 160);
        let c = detect_corners(&img, 200, 10.0).unwrap();
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                let d = (c[i][0] - c[j][0]).hypot(c[i][1] - c[j][1]);
                assert!(d >= 10.0, "{d}");
            }
        }
    }

    #[test]
    fn identity_tracking() {
        let img = textured(6, 160, 120);
        let pts = detect_corners(&img, 60, 10.0).unwrap();
        let m = track_features(&img, &img, &pts, 15, 20).unwrap();
        assert!(m.len() * 10 >= pts.len() * 9);
        for mm in &m {
            assert!((mm.source[0] - mm.target[0]).abs() < 1e-3);
            assert!((mm.source[1] - mm.target[1]).abs() < 1e-3);
            assert!((mm.score - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_tracking() {
        let img = textured(7, 240, 180);
        let shifted = shift(&img, 10, -5);
        let pts = detect_corners(&img, 80, 10.0).unwrap();
        let m = track_features(&img, &shifted, &pts, 15, 24).unwrap();
        let mut dx: Vec<f64> = m.iter().map(|mm| mm.target[0] - mm.source[0]).collect();
        let mut dy: Vec<f64> = m.iter().map(|mm| mm.target[1] - mm.source[1]).collect();
        dx.sort_by(f64::total_cmp);
        dy.sort_by(f64::total_cmp);
        assert!((dx[dx.len() / 2] - 10.0).abs() <= 0.5);
        assert!((dy[dy.len() / 2] + 5.0).abs() <= 0.5);
    }

    #[test]
    fn uncorrelated_frames_rarely_match() {
        let img = textured(8, 160, 120);
        let other = GrayImage::from_fn(160, 120, |x, y| 255 - textured(9, 160, 120).get(x, y));
        let pts = detect_corners(&img, 60, 10.0).unwrap();
        let n = track_features(&img, &other, &pts, 15, 16).map(|m| m.len()).unwrap_or(0);
        assert!(n * 5 < pts.len(), "{n} of {}", pts.len());
    }
}
