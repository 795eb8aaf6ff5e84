//! Raster primitives: grayscale images, binary masks, lens undistortion,
//! histogram equalization, thresholding and connected components.

use std::collections::VecDeque;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("buffer length {len} does not match {width}x{height}x{channels}")]
    BadBuffer {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image decode failed for {path}: {msg}")]
    Decode { path: String, msg: String },
    #[error("image encode failed for {path}: {msg}")]
    Encode { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ImagingError {
    pub fn kind(&self) -> &'static str {
        match self {
            ImagingError::BadBuffer { .. } => "bad_buffer",
            ImagingError::DimensionMismatch(..) => "dimension_mismatch",
            ImagingError::InvalidIntrinsics(_) => "invalid_intrinsics",
            ImagingError::Decode { .. } => "decode",
            ImagingError::Encode { .. } => "encode",
            ImagingError::Io(_) => "io",
        }
    }
}

/// Row-major 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if data.len() != width * height {
            return Err(ImagingError::BadBuffer {
                width,
                height,
                channels: 1,
                len: data.len(),
            });
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at sub-pixel `(x, y)` (pixel centres on integers).
    /// `None` outside `[0, w-1] x [0, h-1]` (with a 1e-6 px allowance).
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        sample_bilinear(&self.data, self.width, self.height, 1, 0, x, y)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Row-major 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        match self.channels {
            1 => GrayImage {
                width: self.width,
                height: self.height,
                data: self.data.clone(),
            },
            c => {
                let data = self
                    .data
                    .chunks_exact(c)
                    .map(|px| {
                        let l = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                        l.round().clamp(0.0, 255.0) as u8
                    })
                    .collect();
                GrayImage {
                    width: self.width,
                    height: self.height,
                    data,
                }
            }
        }
    }

    pub fn sample_bilinear(&self, channel: usize, x: f64, y: f64) -> Option<f64> {
        sample_bilinear(&self.data, self.width, self.height, self.channels, channel, x, y)
    }
}

impl From<GrayImage> for Raster {
    fn from(g: GrayImage) -> Self {
        Raster {
            width: g.width,
            height: g.height,
            channels: 1,
            data: g.data,
        }
    }
}

pub(crate) fn sample_bilinear(
    data: &[u8],
    w: usize,
    h: usize,
    channels: usize,
    channel: usize,
    x: f64,
    y: f64,
) -> Option<f64> {
    const EPS: f64 = 1e-6;
    if w == 0 || h == 0 {
        return None;
    }
    let (maxx, maxy) = ((w - 1) as f64, (h - 1) as f64);
    if !(x >= -EPS && y >= -EPS && x <= maxx + EPS && y <= maxy + EPS) {
        return None;
    }
    let x = x.clamp(0.0, maxx);
    let y = y.clamp(0.0, maxy);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let at = |xx: usize, yy: usize| data[(yy * w + xx) * channels + channel] as f64;
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_size(&self, other: &BinaryMask) -> Result<(), ImagingError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImagingError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask, ImagingError> {
        self.same_size(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

/// Pinhole intrinsics with Brown-Conrady radial (k1, k2) and tangential
/// (p1, p2) distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl CameraIntrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidIntrinsics("non-finite value".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(ImagingError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn is_distortion_free(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Forward distortion of normalized image coordinates.
    pub fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Inverse of [`distort_normalized`] by fixed-point iteration.
    ///
    /// [`distort_normalized`]: CameraIntrinsics::distort_normalized
    pub fn undistort_normalized(&self, xd: f64, yd: f64) -> (f64, f64) {
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let r2 = x * x + y * y;
            let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
            let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
            x = (xd - dx) / radial;
            y = (yd - dy) / radial;
        }
        (x, y)
    }

    /// Pixel of the distorted image seen along the undistorted pixel `(u, v)`.
    pub fn distort_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let x = (u - self.cx) / self.fx;
        let y = (v - self.cy) / self.fy;
        let (xd, yd) = self.distort_normalized(x, y);
        (self.fx * xd + self.cx, self.fy * yd + self.cy)
    }
}

/// Remove lens distortion: each output pixel samples the input at its
/// forward-distorted location (bilinear, 0 outside the frame).
pub fn undistort(img: &GrayImage, k: &CameraIntrinsics) -> Result<GrayImage, ImagingError> {
    undistort_with(img, k, Exec::default())
}

pub fn undistort_with(img: &GrayImage, k: &CameraIntrinsics, exec: Exec) -> Result<GrayImage, ImagingError> {
    k.validate()?;
    if k.is_distortion_free() {
        return Ok(img.clone());
    }
    let mut out = GrayImage::new(img.width, img.height);
    let w = img.width;
    exec.for_each_row(&mut out.data, w, |v, row| {
        for (u, px) in row.iter_mut().enumerate() {
            let (xs, ys) = k.distort_pixel(u as f64, v as f64);
            *px = img
                .sample_bilinear(xs, ys)
                .map_or(0, |s| s.round().clamp(0.0, 255.0) as u8);
        }
    });
    Ok(out)
}

/// CDF remap `round(255 (cdf(v) - cdf_min) / (N - cdf_min))`.
pub fn histogram_equalize(img: &GrayImage) -> GrayImage {
    let mut hist = [0usize; 256];
    for &v in &img.data {
        hist[v as usize] += 1;
    }
    let n = img.data.len();
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist.iter()) {
        acc += h;
        *c = acc;
    }
    let cdf_min = hist
        .iter()
        .zip(cdf.iter())
        .find(|(h, _)| **h > 0)
        .map_or(0, |(_, c)| *c);
    if n == cdf_min {
        return img.clone();
    }
    let denom = (n - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for (l, c) in lut.iter_mut().zip(cdf.iter()) {
        *l = (255.0 * (c.saturating_sub(cdf_min)) as f64 / denom).round() as u8;
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| lut[v as usize]).collect(),
    }
}

/// `mask[i] = img[i] >= t`.
pub fn threshold(img: &GrayImage, t: u8) -> BinaryMask {
    BinaryMask {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| v >= t).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        }
    }
}

impl FromStr for Connectivity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got '{other}'")),
        }
    }
}

/// Label connected true-components; returns labels (0 = background) and the
/// size of each component in label order (label k has size `sizes[k-1]`).
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keep only the largest connected component (the first in raster order on
/// ties). An empty mask comes back empty.
pub fn largest_component(mask: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (labels, sizes) = label_components(mask, conn);
    let Some((best, _)) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (k, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((k, s)),
        })
    else {
        return BinaryMask::new(mask.width, mask.height);
    };
    let keep = best as u32 + 1;
    BinaryMask {
        width: mask.width,
        height: mask.height,
        data: labels.iter().map(|&l| l == keep).collect(),
    }
}

pub fn mask_area_pixels(mask: &BinaryMask) -> usize {
    mask.count()
}

/// Outer boundary of the component containing the first true pixel in raster
/// order, traced through pixel centres (Moore neighbourhood, 8-connected).
pub fn outer_contour(mask: &BinaryMask) -> Vec<(i64, i64)> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize);
    let Some(start) = mask.data.iter().position(|&b| b) else {
        return Vec::new();
    };
    let start = ((start as i64) % w, (start as i64) / w);
    // Clockwise neighbour ring starting west (image coords, y down).
    const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
    let mut contour = vec![start];
    let mut current = start;
    // the raster-order start pixel always has a background west neighbour
    let mut backtrack_dir = 0usize;
    let max_steps = 4 * (mask.width * mask.height) + 8;
    for _ in 0..max_steps {
        let mut found = None;
        for k in 1..=8 {
            let d = (backtrack_dir + k) % 8;
            let (nx, ny) = (current.0 + RING[d].0, current.1 + RING[d].1);
            if inside(nx, ny) {
                found = Some((d, (nx, ny)));
                break;
            }
        }
        let Some((d, next)) = found else {
            return contour; // isolated pixel
        };
        // Next search starts from the neighbour preceding `next` seen from `next`.
        backtrack_dir = (d + 5) % 8;
        if next == start && contour.len() > 1 {
            break;
        }
        contour.push(next);
        current = next;
        if contour.len() > 2 && current == contour[1] && contour[contour.len() - 2] == start {
            contour.pop();
            contour.pop();
            break;
        }
    }
    contour
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(points: &[(i64, i64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut s: i64 = 0;
    for i in 0..points.len() {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % points.len()];
        s += x0 * y1 - x1 * y0;
    }
    (s as f64).abs() / 2.0
}

fn decode_err(path: &Path, e: impl std::fmt::Display) -> ImagingError {
    ImagingError::Decode {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, ImagingError> {
    if !path.exists() {
        return Err(ImagingError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", path.display()),
        )));
    }
    image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| decode_err(path, e))
}

/// Load PGM/PBM/PNG (any decodable format) as 8-bit luma.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    let img = open_image(path.as_ref())?.into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::from_vec(w as usize, h as usize, img.into_raw())
}

/// Load an image keeping RGB when present.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster, ImagingError> {
    let img = open_image(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Ok(Raster {
            width: w,
            height: h,
            channels: 3,
            data: img.into_rgb8().into_raw(),
        })
    } else {
        Ok(Raster {
            width: w,
            height: h,
            channels: 1,
            data: img.into_luma8().into_raw(),
        })
    }
}

/// Load a mask: pixels `>= t` are foreground.
pub fn load_mask(path: impl AsRef<Path>, t: u8) -> Result<BinaryMask, ImagingError> {
    Ok(threshold(&load_gray(path)?, t))
}

/// Write by extension (`.png`, `.pgm`, `.pbm`, ...).
pub fn save_raster(r: &Raster, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let path = path.as_ref();
    let color = match r.channels {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => {
            return Err(ImagingError::Encode {
                path: path.display().to_string(),
                msg: format!("unsupported channel count {c}"),
            })
        }
    };
    image::save_buffer(path, &r.data, r.width as u32, r.height as u32, color).map_err(|e| ImagingError::Encode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    save_raster(&Raster::from(img.clone()), path)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    save_gray(&mask.to_gray(), path)
}
