//! Point clouds and their text formats (ASCII PLY, XYZ).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Axis, Vec3};

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("binary PLY is not supported; convert to ASCII PLY")]
    BinaryPly,
    #[error("line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
    #[error("truncated vertex list: header declares {declared}, found {found}")]
    Truncated { declared: usize, found: usize },
    #[error("empty vertex list")]
    Empty,
    #[error("unknown point cloud format '{0}'")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CloudError {
    pub fn kind(&self) -> &'static str {
        match self {
            CloudError::MalformedHeader(_) => "malformed_header",
            CloudError::BinaryPly => "binary_ply",
            CloudError::BadRecord { .. } => "bad_record",
            CloudError::Truncated { .. } => "truncated",
            CloudError::Empty => "empty",
            CloudError::UnknownFormat(_) => "unknown_format",
            CloudError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    AsciiPly,
    Xyz,
}

impl CloudFormat {
    /// Guess from a file extension (`.ply`, `.xyz`, `.txt`).
    pub fn from_path(path: &Path) -> Option<CloudFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ply" => Some(CloudFormat::AsciiPly),
            "xyz" | "txt" | "pts" => Some(CloudFormat::Xyz),
            _ => None,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = CloudError;
    fn from_str(s: &str) -> Result<Self, CloudError> {
        match s.to_ascii_lowercase().as_str() {
            "ply" | "ascii-ply" => Ok(CloudFormat::AsciiPly),
            "xyz" => Ok(CloudFormat::Xyz),
            other => Err(CloudError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Per-point RGB, same length as `points` when present.
    pub colors: Option<Vec<[u8; 3]>>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            b.min = Vec3::new(b.min.x.min(p.x), b.min.y.min(p.y), b.min.z.min(p.z));
            b.max = Vec3::new(b.max.x.max(p.x), b.max.y.max(p.y), b.max.z.max(p.z));
        }
        Some(b)
    }

    pub fn extent(&self, axis: Axis) -> f64 {
        self.max.get(axis) - self.min.get(axis)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud { points, colors: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn gather(&self, indices: &[usize]) -> Vec<Vec3> {
        indices.iter().map(|&i| self.points[i]).collect()
    }

    /// Apply `f` to every point, keeping colors.
    pub fn map_points(&self, f: impl Fn(Vec3) -> Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| f(*p)).collect(),
            colors: self.colors.clone(),
        }
    }
}

pub fn load_point_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud, CloudError> {
    let text = fs::read(path.as_ref())?;
    if format == CloudFormat::AsciiPly && is_binary_ply(&text) {
        return Err(CloudError::BinaryPly);
    }
    let text =
        String::from_utf8(text).map_err(|_| CloudError::MalformedHeader("file is not valid UTF-8 text".into()))?;
    match format {
        CloudFormat::AsciiPly => parse_ply(&text),
        CloudFormat::Xyz => parse_xyz(&text),
    }
}

fn is_binary_ply(bytes: &[u8]) -> bool {
    let head = &bytes[..bytes.len().min(512)];
    let head = String::from_utf8_lossy(head);
    head.lines()
        .take_while(|l| l.trim() != "end_header")
        .any(|l| l.trim_start().starts_with("format binary"))
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Property {
    name: String,
    list: bool,
}

pub fn parse_ply(text: &str) -> Result<PointCloud, CloudError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(CloudError::MalformedHeader("missing 'ply' magic".into())),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (_, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                match tok.next() {
                    Some("ascii") => {}
                    Some(f) if f.starts_with("binary") => return Err(CloudError::BinaryPly),
                    other => return Err(CloudError::MalformedHeader(format!("unsupported format {other:?}"))),
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| CloudError::MalformedHeader("element without name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| CloudError::MalformedHeader(format!("bad count for element {name}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| CloudError::MalformedHeader("property before element".into()))?;
                let rest: Vec<&str> = tok.collect();
                let prop = match rest.as_slice() {
                    ["list", _, _, name] => Property {
                        name: name.to_string(),
                        list: true,
                    },
                    [_, name] => Property {
                        name: name.to_string(),
                        list: false,
                    },
                    _ => return Err(CloudError::MalformedHeader(format!("bad property line '{line}'"))),
                };
                el.properties.push(prop);
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(CloudError::MalformedHeader(format!("unexpected keyword '{other}'"))),
        }
    }
    if !header_done {
        return Err(CloudError::MalformedHeader("missing end_header".into()));
    }
    if !saw_format {
        return Err(CloudError::MalformedHeader("missing format line".into()));
    }
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| CloudError::MalformedHeader("no vertex element".into()))?;
    let vertex = &elements[vertex_pos];
    let find = |n: &str| vertex.properties.iter().position(|p| p.name == n && !p.list);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(CloudError::MalformedHeader("vertex lacks x/y/z".into())),
    };
    if vertex.properties.iter().any(|p| p.list) {
        return Err(CloudError::MalformedHeader("list property on vertex".into()));
    }
    let color_idx = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    if vertex.count == 0 {
        return Err(CloudError::Empty);
    }

    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    // Skip the bodies of elements declared before the vertices.
    for el in &elements[..vertex_pos] {
        for _ in 0..el.count {
            if data.next().is_none() {
                return Err(CloudError::Truncated {
                    declared: vertex.count,
                    found: 0,
                });
            }
        }
    }
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = color_idx.map(|_| Vec::with_capacity(vertex.count));
    for k in 0..vertex.count {
        let Some((lineno, line)) = data.next() else {
            return Err(CloudError::Truncated {
                declared: vertex.count,
                found: k,
            });
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != vertex.properties.len() {
            return Err(CloudError::BadRecord {
                line: lineno + 1,
                msg: format!("expected {} values, found {}", vertex.properties.len(), fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64, CloudError> {
            let v: f64 = fields[i].parse().map_err(|_| CloudError::BadRecord {
                line: lineno + 1,
                msg: format!("non-numeric value '{}'", fields[i]),
            })?;
            if !v.is_finite() {
                return Err(CloudError::BadRecord {
                    line: lineno + 1,
                    msg: format!("non-finite coordinate '{}'", fields[i]),
                });
            }
            Ok(v)
        };
        points.push(Vec3::new(num(xi)?, num(yi)?, num(zi)?));
        if let (Some(idx), Some(cols)) = (color_idx, colors.as_mut()) {
            let mut c = [0u8; 3];
            for (slot, &i) in c.iter_mut().zip(idx.iter()) {
                *slot = fields[i].parse().map_err(|_| CloudError::BadRecord {
                    line: lineno + 1,
                    msg: format!("bad color value '{}'", fields[i]),
                })?;
            }
            cols.push(c);
        }
    }
    Ok(PointCloud { points, colors })
}

/// One point per line, `x y z [r g b]`; `#` starts a comment.
pub fn parse_xyz(text: &str) -> Result<PointCloud, CloudError> {
    let mut points = Vec::new();
    let mut colors: Vec<[u8; 3]> = Vec::new();
    let mut all_colored = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(CloudError::BadRecord {
                line: lineno + 1,
                msg: format!("expected at least 3 values, found {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields[..3]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CloudError::BadRecord {
                    line: lineno + 1,
                    msg: format!("non-numeric coordinate '{f}'"),
                })?;
        }
        points.push(Vec3::from(xyz));
        let rgb: Option<Vec<u8>> = (fields.len() == 6)
            .then(|| fields[3..].iter().map(|f| f.parse::<u8>().ok()).collect())
            .flatten();
        match rgb {
            Some(c) if all_colored => colors.push([c[0], c[1], c[2]]),
            _ => all_colored = false,
        }
    }
    if points.is_empty() {
        return Err(CloudError::Empty);
    }
    let colors = (all_colored && colors.len() == points.len()).then_some(colors);
    Ok(PointCloud { points, colors })
}

/// ASCII PLY with `double` coordinates. Coordinates use Rust's shortest
/// round-trip float formatting, so load(save(c)) reproduces every bit.
pub fn to_ply_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(64 + cloud.len() * 40);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.colors.is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
        if let Some(c) = cloud.colors.as_ref().map(|c| c[i]) {
            let _ = write!(s, " {} {} {}", c[0], c[1], c[2]);
        }
        s.push('\n');
    }
    s
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudError> {
    fs::write(path, to_ply_string(cloud))?;
    Ok(())
}

pub fn save_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudError> {
    let mut s = String::new();
    for p in &cloud.points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    fs::write(path, s)?;
    Ok(())
}
