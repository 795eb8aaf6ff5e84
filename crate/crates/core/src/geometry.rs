//! 3D primitives and plane math shared by every downstream stage.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate: collinear or coincident points")]
    Degenerate,
    #[error("zero-length normal")]
    ZeroNormal,
    #[error("rotation is not orthonormal (error {0:.2e})")]
    NotOrthonormal(f64),
}

impl GeometryError {
    pub fn kind(&self) -> &'static str {
        match self {
            GeometryError::TooFewPoints(_) => "too_few_points",
            GeometryError::Degenerate => "degenerate",
            GeometryError::ZeroNormal => "zero_normal",
            GeometryError::NotOrthonormal(_) => "not_orthonormal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(self, axis: Axis) -> f64 {
        self[axis.index()]
    }

    pub fn with(mut self, axis: Axis, v: f64) -> Vec3 {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
            Axis::Z => self.z = v,
        }
        self
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::new(1.0, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, 1.0, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }

    /// The axis that is neither `self` nor `other`. Panics when they are equal.
    pub fn third(self, other: Axis) -> Axis {
        assert_ne!(self, other, "third axis requires two distinct axes");
        Axis::ALL.into_iter().find(|a| *a != self && *a != other).unwrap()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis '{other}' (expected x, y or z)")),
        }
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation from a (not necessarily normalized) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Option<Mat3> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Some(Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]))
    }

    /// Rotation by `angle` radians about unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Mat3 {
        let a = axis.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        let h = (angle / 2.0).sin();
        Mat3::from_quaternion((angle / 2.0).cos(), a.x * h, a.y * h, a.z * h).unwrap_or(Mat3::IDENTITY)
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max abs deviation of `MᵀM` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((p.0[i][j] - target).abs());
            }
        }
        err
    }
}

/// Camera pose from a reconstruction: camera-to-world rotation, camera center
/// in reconstruction units, and capture time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub timestamp: f64,
}

impl Pose {
    pub fn new(rotation: Mat3, translation: Vec3, timestamp: f64) -> Result<Self, GeometryError> {
        let err = rotation.orthonormality_error();
        if !(err <= 1e-6) {
            return Err(GeometryError::NotOrthonormal(err));
        }
        Ok(Pose {
            rotation,
            translation,
            timestamp,
        })
    }
}

/// `{p : normal·p + offset = 0}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Normalizes `normal` (scaling `offset` along with it).
    pub fn new(normal: Vec3, offset: f64) -> Result<Plane, GeometryError> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Plane {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn from_normal_and_point(normal: Vec3, point: Vec3) -> Result<Plane, GeometryError> {
        let n = normal.normalized().ok_or(GeometryError::ZeroNormal)?;
        Ok(Plane {
            normal: n,
            offset: -n.dot(point),
        })
    }

    /// Plane through three points; `None` when they are (numerically) collinear.
    pub fn through(a: Vec3, b: Vec3, c: Vec3) -> Option<Plane> {
        let e1 = b - a;
        let e2 = c - a;
        let n = e1.cross(e2);
        let scale = e1.norm() * e2.norm();
        if !(n.norm() > 1e-12 * scale) {
            return None;
        }
        let n = n.normalized()?;
        Some(Plane {
            normal: n,
            offset: -n.dot(a),
        })
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }

    pub fn flipped(&self) -> Plane {
        Plane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    /// Same plane with the normal's largest-magnitude component positive.
    pub fn canonical(&self) -> Plane {
        let c = self.normal.to_array();
        let mut k = 0;
        for i in 1..3 {
            if c[i].abs() > c[k].abs() {
                k = i;
            }
        }
        if c[k] < 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    /// Same plane oriented so its normal has non-negative dot with `reference`.
    pub fn oriented_like(&self, reference: Vec3) -> Plane {
        if self.normal.dot(reference) < 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    /// Angle in degrees between the two normals, ignoring orientation (0..=90).
    pub fn angle_deg(&self, other: &Plane) -> f64 {
        angle_to_axis_deg(self.normal, other.normal)
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }
}

/// Unsigned angle in degrees between the lines spanned by `a` and `b`.
pub fn angle_to_axis_deg(a: Vec3, b: Vec3) -> f64 {
    let (Some(a), Some(b)) = (a.normalized(), b.normalized()) else {
        return 90.0;
    };
    a.dot(b).abs().min(1.0).acos().to_degrees()
}

/// Signed point-to-plane distance; the absolute value is the Euclidean distance.
pub fn point_plane_distance(plane: &Plane, p: Vec3) -> f64 {
    plane.signed_distance(p)
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let mut sum = Vec3::ZERO;
    for p in points {
        sum += *p;
    }
    Some(sum / points.len() as f64)
}

/// Symmetric 3×3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl Sym3 {
    fn rows(&self) -> [Vec3; 3] {
        [
            Vec3::new(self.xx, self.xy, self.xz),
            Vec3::new(self.xy, self.yy, self.yz),
            Vec3::new(self.xz, self.yz, self.zz),
        ]
    }

    /// Covariance (scatter / n) of `points` about their centroid.
    pub fn covariance(points: &[Vec3], center: Vec3) -> Sym3 {
        let mut c = Sym3 {
            xx: 0.0,
            xy: 0.0,
            xz: 0.0,
            yy: 0.0,
            yz: 0.0,
            zz: 0.0,
        };
        for p in points {
            let d = *p - center;
            c.xx += d.x * d.x;
            c.xy += d.x * d.y;
            c.xz += d.x * d.z;
            c.yy += d.y * d.y;
            c.yz += d.y * d.z;
            c.zz += d.z * d.z;
        }
        let n = points.len().max(1) as f64;
        c.xx /= n;
        c.xy /= n;
        c.xz /= n;
        c.yy /= n;
        c.yz /= n;
        c.zz /= n;
        c
    }

    /// Eigenvalues in ascending order, closed-form trigonometric solution.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let off = self.xy * self.xy + self.xz * self.xz + self.yz * self.yz;
        if off == 0.0 {
            let mut d = [self.xx, self.yy, self.zz];
            d.sort_by(|a, b| a.total_cmp(b));
            return d;
        }
        let q = (self.xx + self.yy + self.zz) / 3.0;
        let (a, b, c) = (self.xx - q, self.yy - q, self.zz - q);
        let p2 = a * a + b * b + c * c + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        // det((A - qI) / p) / 2
        let det = a * (b * c - self.yz * self.yz) - self.xy * (self.xy * c - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - b * self.xz);
        let r = (det / (p * p * p) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let largest = q + 2.0 * p * phi.cos();
        let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let middle = 3.0 * q - largest - smallest;
        let mut e = [smallest, middle, largest];
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }

    /// Unit eigenvector for eigenvalue `lambda`.
    pub fn eigenvector(&self, lambda: f64) -> Vec3 {
        let [r0, r1, r2] = self.rows();
        let r0 = r0 - Vec3::new(lambda, 0.0, 0.0);
        let r1 = r1 - Vec3::new(0.0, lambda, 0.0);
        let r2 = r2 - Vec3::new(0.0, 0.0, lambda);
        let candidates = [r0.cross(r1), r0.cross(r2), r1.cross(r2)];
        let best = candidates
            .into_iter()
            .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .unwrap();
        let row_scale = r0.norm_squared().max(r1.norm_squared()).max(r2.norm_squared());
        if best.norm_squared() > 1e-24 * row_scale * row_scale && best.norm_squared() > 0.0 {
            return best.normalized().unwrap();
        }
        // Eigenvalue of multiplicity >= 2: any vector orthogonal to the
        // dominant row spans the eigenspace.
        let dominant = [r0, r1, r2]
            .into_iter()
            .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .unwrap();
        if dominant.norm_squared() == 0.0 {
            return Vec3::new(0.0, 0.0, 1.0);
        }
        let helper = if dominant.x.abs() <= dominant.y.abs() && dominant.x.abs() <= dominant.z.abs() {
            Vec3::new(1.0, 0.0, 0.0)
        } else if dominant.y.abs() <= dominant.z.abs() {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(0.0, 0.0, 1.0)
        };
        dominant.cross(helper).normalized().unwrap()
    }
}

/// Total-least-squares plane: normal is the smallest-eigenvalue eigenvector of
/// the covariance, offset passes through the centroid. Normal sign follows
/// [`Plane::canonical`].
pub fn fit_plane_tls(points: &[Vec3]) -> Result<Plane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    let center = centroid(points).unwrap();
    let cov = Sym3::covariance(points, center);
    let [l0, l1, l2] = cov.eigenvalues();
    if !(l2 > 0.0) || l1 <= 1e-10 * l2 {
        return Err(GeometryError::Degenerate);
    }
    let normal = cov.eigenvector(l0);
    if !normal.is_finite() {
        return Err(GeometryError::Degenerate);
    }
    Ok(Plane {
        normal,
        offset: -normal.dot(center),
    }
    .canonical())
}
