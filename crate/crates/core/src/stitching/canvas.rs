use serde::{Deserialize, Serialize};

use super::{AffineTransform, StitchError};
use crate::imaging::Raster;
use crate::par::Exec;

pub const DEFAULT_MAX_CANVAS_SIDE: usize = 20000;
pub const NO_OWNER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blend {
    #[default]
    LastWriter,
    /// Weighted by distance to the source frame border.
    Feather,
}

impl std::str::FromStr for Blend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "last_writer" | "last" => Ok(Blend::LastWriter),
            "feather" => Ok(Blend::Feather),
            other => Err(format!("unknown blend '{other}' (last-writer, feather)")),
        }
    }
}

/// Growable mosaic raster. Canvas pixel `(i, j)` shows reference-frame
/// coordinate `(i + x0, j + y0)`; the reference frame is image 0.
#[derive(Debug, Clone)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    /// Index of the frame that last wrote each pixel, [`NO_OWNER`] if none.
    pub owner: Vec<u32>,
    pub x0: i64,
    pub y0: i64,
    pub transforms: Vec<AffineTransform>,
    pub blend: Blend,
    pub max_side: usize,
    /// Feather accumulators: per pixel `channels` weighted sums then weight.
    accum: Vec<f32>,
    pub exec: Exec,
}

impl Canvas {
    pub fn new(channels: usize, blend: Blend) -> Canvas {
        Canvas {
            width: 0,
            height: 0,
            channels,
            data: Vec::new(),
            owner: Vec::new(),
            x0: 0,
            y0: 0,
            transforms: Vec::new(),
            blend,
            max_side: DEFAULT_MAX_CANVAS_SIDE,
            accum: Vec::new(),
            exec: Exec::default(),
        }
    }

    /// Canvas coordinates of the reference frame's origin.
    pub fn origin(&self) -> (i64, i64) {
        (-self.x0, -self.y0)
    }

    pub fn to_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn coverage(&self) -> usize {
        self.owner.iter().filter(|&&o| o != NO_OWNER).count()
    }

    fn grow(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) -> Result<(), StitchError> {
        let (nx0, ny0) = if self.width == 0 {
            (x0, y0)
        } else {
            (self.x0.min(x0), self.y0.min(y0))
        };
        let (nx1, ny1) = if self.width == 0 {
            (x1, y1)
        } else {
            (
                (self.x0 + self.width as i64 - 1).max(x1),
                (self.y0 + self.height as i64 - 1).max(y1),
            )
        };
        let (nw, nh) = ((nx1 - nx0 + 1) as usize, (ny1 - ny0 + 1) as usize);
        if nw > self.max_side || nh > self.max_side {
            return Err(StitchError::CanvasTooLarge {
                width: nw,
                height: nh,
                max_side: self.max_side,
            });
        }
        if nw == self.width && nh == self.height && nx0 == self.x0 && ny0 == self.y0 {
            return Ok(());
        }
        let c = self.channels;
        let feather = self.blend == Blend::Feather;
        let mut data = vec![0u8; nw * nh * c];
        let mut owner = vec![NO_OWNER; nw * nh];
        let mut accum = if feather {
            vec![0f32; nw * nh * (c + 1)]
        } else {
            Vec::new()
        };
        let (ox, oy) = ((self.x0 - nx0) as usize, (self.y0 - ny0) as usize);
        for y in 0..self.height {
            let src = y * self.width;
            let dst = (y + oy) * nw + ox;
            data[dst * c..(dst + self.width) * c].copy_from_slice(&self.data[src * c..(src + self.width) * c]);
            owner[dst..dst + self.width].copy_from_slice(&self.owner[src..src + self.width]);
            if feather {
                accum[dst * (c + 1)..(dst + self.width) * (c + 1)]
                    .copy_from_slice(&self.accum[src * (c + 1)..(src + self.width) * (c + 1)]);
            }
        }
        self.data = data;
        self.owner = owner;
        self.accum = accum;
        self.width = nw;
        self.height = nh;
        self.x0 = nx0;
        self.y0 = ny0;
        Ok(())
    }
}

/// Bounding box (inclusive, integer) of the image's pixel-centre corners
/// `(0, 0)..(w-1, h-1)` under `t`.
pub fn warped_bbox(t: &AffineTransform, w: usize, h: usize) -> (i64, i64, i64, i64) {
    let (mw, mh) = ((w.max(1) - 1) as f64, (h.max(1) - 1) as f64);
    let corners = [t.apply(0.0, 0.0), t.apply(mw, 0.0), t.apply(0.0, mh), t.apply(mw, mh)];
    let (mut lx, mut ly, mut hx, mut hy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in corners {
        lx = lx.min(x);
        ly = ly.min(y);
        hx = hx.max(x);
        hy = hy.max(y);
    }
    const EPS: f64 = 1e-6;
    (
        (lx - EPS).ceil() as i64,
        (ly - EPS).ceil() as i64,
        (hx + EPS).floor() as i64,
        (hy + EPS).floor() as i64,
    )
}

/// Composite `img` (mapped into the reference frame by `t`) onto `canvas`,
/// growing it as needed. Pixels are filled by inverse mapping with
/// bilinear sampling.
pub fn warp_onto_canvas(canvas: &mut Canvas, img: &Raster, t: &AffineTransform) -> Result<(), StitchError> {
    let inv = t
        .inverse()
        .ok_or_else(|| StitchError::InvalidInput("transform is not invertible".into()))?;
    if img.channels != canvas.channels {
        return Err(StitchError::InvalidInput(format!(
            "frame has {} channels, canvas has {}",
            img.channels, canvas.channels
        )));
    }
    if img.width == 0 || img.height == 0 {
        return Err(StitchError::InvalidInput("empty frame".into()));
    }
    let (bx0, by0, bx1, by1) = warped_bbox(t, img.width, img.height);
    // reject absurd footprints before allocating
    let span = (bx1 - bx0 + 1).max(by1 - by0 + 1);
    if span <= 0 || span as u64 > canvas.max_side as u64 {
        return Err(StitchError::CanvasTooLarge {
            width: (bx1 - bx0 + 1).max(0) as usize,
            height: (by1 - by0 + 1).max(0) as usize,
            max_side: canvas.max_side,
        });
    }
    canvas.grow(bx0, by0, bx1, by1)?;
    let frame = canvas.transforms.len() as u32;
    canvas.transforms.push(*t);

    let (w, c) = (canvas.width, canvas.channels);
    let (x0, y0) = (canvas.x0, canvas.y0);
    let row_lo = (by0 - y0) as usize;
    let row_hi = (by1 - y0) as usize;
    let col_lo = (bx0 - x0) as usize;
    let col_hi = (bx1 - x0) as usize;
    let (iw, ih) = (img.width as f64, img.height as f64);
    let source = move |i: usize, j: usize| -> Option<(f64, f64)> {
        let (sx, sy) = inv.apply(i as f64 + x0 as f64, j as f64 + y0 as f64);
        const EPS: f64 = 1e-6;
        (sx >= -EPS && sy >= -EPS && sx <= iw - 1.0 + EPS && sy <= ih - 1.0 + EPS).then_some((sx, sy))
    };
    let exec = canvas.exec;
    match canvas.blend {
        Blend::LastWriter => {
            let rows = &mut canvas.data[row_lo * w * c..(row_hi + 1) * w * c];
            exec.for_each_row(rows, w * c, |r, row| {
                let j = row_lo + r;
                for i in col_lo..=col_hi {
                    if let Some((sx, sy)) = source(i, j) {
                        for k in 0..c {
                            let v = img.sample_bilinear(k, sx, sy).unwrap_or(0.0);
                            row[i * c + k] = v.round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            });
        }
        Blend::Feather => {
            let stride = c + 1;
            let rows = &mut canvas.accum[row_lo * w * stride..(row_hi + 1) * w * stride];
            exec.for_each_row(rows, w * stride, |r, row| {
                let j = row_lo + r;
                for i in col_lo..=col_hi {
                    if let Some((sx, sy)) = source(i, j) {
                        let edge = sx.min(sy).min(iw - 1.0 - sx).min(ih - 1.0 - sy).max(0.0);
                        let wgt = (edge + 1.0) as f32;
                        for k in 0..c {
                            let v = img.sample_bilinear(k, sx, sy).unwrap_or(0.0) as f32;
                            row[i * stride + k] += wgt * v;
                        }
                        row[i * stride + c] += wgt;
                    }
                }
            });
            let accum = &canvas.accum;
            let rows = &mut canvas.data[row_lo * w * c..(row_hi + 1) * w * c];
            exec.for_each_row(rows, w * c, |r, row| {
                let j = row_lo + r;
                for i in col_lo..=col_hi {
                    let a = &accum[(j * w + i) * stride..(j * w + i + 1) * stride];
                    if a[c] > 0.0 {
                        for k in 0..c {
                            row[i * c + k] = (a[k] / a[c]).round().clamp(0.0, 255.0) as u8;
                        }
                    }
                }
            });
        }
    }
    let owners = &mut canvas.owner[row_lo * w..(row_hi + 1) * w];
    exec.for_each_row(owners, w, |r, row| {
        let j = row_lo + r;
        for i in col_lo..=col_hi {
            if source(i, j).is_some() {
                row[i] = frame;
            }
        }
    });
    Ok(())
}
