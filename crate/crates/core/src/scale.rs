//! Metric scale of a reconstruction from time-synced UAV flight logs.
//!
//! Reconstructed camera centres are paired with log positions (converted to
//! local ENU metres) by timestamp, and the scale is the median over all
//! sufficiently long baselines of metric length / reconstructed length.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat3, Pose, Vec3};
use crate::par::Exec;
use crate::planes::median_in_place;

/// Mean earth radius for the small-area ENU approximation.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("flight log is missing required column '{0}'")]
    MissingColumn(&'static str),
    #[error("flight log has no valid rows")]
    NoValidRows,
    #[error("flight log: {0}")]
    Csv(String),
    #[error("pose track line {line}: {msg}")]
    BadPose { line: usize, msg: String },
    #[error("pose timestamps must be strictly increasing (line {0})")]
    UnsortedPoses(usize),
    #[error("no temporal overlap: no pose within {tolerance} s of a log record")]
    NoTemporalOverlap { tolerance: f64 },
    #[error("need at least 2 synced pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all baselines shorter than {0} m")]
    BaselinesTooShort(f64),
    #[error("zero reconstructed displacement between poses {0} and {1} with nonzero metric displacement")]
    ZeroReconstructed(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScaleError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScaleError::MissingColumn(_) => "missing_column",
            ScaleError::NoValidRows => "no_valid_rows",
            ScaleError::Csv(_) => "csv",
            ScaleError::BadPose { .. } => "bad_pose",
            ScaleError::UnsortedPoses(_) => "unsorted_poses",
            ScaleError::NoTemporalOverlap { .. } => "no_temporal_overlap",
            ScaleError::TooFewPairs(_) => "too_few_pairs",
            ScaleError::BaselinesTooShort(_) => "baselines_too_short",
            ScaleError::ZeroReconstructed(..) => "zero_reconstructed_displacement",
            ScaleError::InvalidParameter(_) => "invalid_parameter",
            ScaleError::Io(_) => "io",
        }
    }

    pub(crate) fn is_input(&self) -> bool {
        matches!(
            self,
            ScaleError::MissingColumn(_)
                | ScaleError::NoValidRows
                | ScaleError::Csv(_)
                | ScaleError::BadPose { .. }
                | ScaleError::UnsortedPoses(_)
                | ScaleError::InvalidParameter(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightLogRecord {
    pub timestamp: f64,
    pub latitude: f64,
    pub longitude: f64,
    /// Barometric altitude, metres.
    pub altitude: f64,
    pub gps_altitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltitudeSource {
    #[default]
    Barometric,
    Gps,
}

impl FromStr for AltitudeSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "baro" | "barometric" => Ok(AltitudeSource::Barometric),
            "gps" => Ok(AltitudeSource::Gps),
            other => Err(format!("unknown altitude source '{other}' (barometric, gps)")),
        }
    }
}

impl FlightLogRecord {
    /// Barometric altitude unless GPS is requested and present.
    pub fn altitude_from(&self, source: AltitudeSource) -> f64 {
        match (source, self.gps_altitude) {
            (AltitudeSource::Gps, Some(g)) => g,
            _ => self.altitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub records: Vec<FlightLogRecord>,
    /// Rows dropped for missing, unparsable, out-of-range or duplicate data.
    pub skipped: usize,
}

pub fn parse_flight_log(path: impl AsRef<Path>) -> Result<FlightLog, ScaleError> {
    let text = fs::read_to_string(path)?;
    parse_flight_log_str(&text)
}

/// Columns (case-insensitive): `time_s, latitude, longitude, altitude_m`,
/// optional `gps_alt_m`. Other columns (IMU etc.) are ignored.
pub fn parse_flight_log_str(text: &str) -> Result<FlightLog, ScaleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ScaleError::Csv(e.to_string()))?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let t = col("time_s").ok_or(ScaleError::MissingColumn("time_s"))?;
    let lat = col("latitude").ok_or(ScaleError::MissingColumn("latitude"))?;
    let lon = col("longitude").ok_or(ScaleError::MissingColumn("longitude"))?;
    let alt = col("altitude_m").ok_or(ScaleError::MissingColumn("altitude_m"))?;
    let gps = col("gps_alt_m");

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in rdr.records() {
        let Ok(row) = row else {
            skipped += 1;
            continue;
        };
        let num = |i: usize| -> Option<f64> {
            row.get(i)
                .filter(|s| !s.is_empty())
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        match (num(t), num(lat), num(lon), num(alt)) {
            (Some(timestamp), Some(latitude), Some(longitude), Some(altitude))
                if latitude.abs() <= 90.0 && longitude.abs() <= 180.0 =>
            {
                records.push(FlightLogRecord {
                    timestamp,
                    latitude,
                    longitude,
                    altitude,
                    gps_altitude: gps.and_then(num),
                });
            }
            _ => skipped += 1,
        }
    }
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let before = records.len();
    records.dedup_by(|b, a| b.timestamp == a.timestamp);
    skipped += before - records.len();
    if skipped > 0 {
        log::warn!("flight log: skipped {skipped} rows");
    }
    if records.is_empty() {
        return Err(ScaleError::NoValidRows);
    }
    Ok(FlightLog { records, skipped })
}

pub fn write_flight_log_csv(records: &[FlightLogRecord]) -> String {
    let mut s = String::from("time_s,latitude,longitude,altitude_m,gps_alt_m\n");
    for r in records {
        let gps = r.gps_altitude.map(|g| format!("{g:?}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:?},{:?},{:?},{:?},{}",
            r.timestamp, r.latitude, r.longitude, r.altitude, gps
        );
    }
    s
}

/// Local East-North-Up metres of `record` about `origin`
/// (spherical earth, small-area approximation).
pub fn geodetic_to_enu(record: &FlightLogRecord, origin: &FlightLogRecord) -> Vec3 {
    geodetic_to_enu_with(record, origin, AltitudeSource::Barometric)
}

pub fn geodetic_to_enu_with(record: &FlightLogRecord, origin: &FlightLogRecord, source: AltitudeSource) -> Vec3 {
    let lat0 = origin.latitude.to_radians();
    let e = (record.longitude - origin.longitude).to_radians() * lat0.cos() * EARTH_RADIUS_M;
    let n = (record.latitude - origin.latitude).to_radians() * EARTH_RADIUS_M;
    let u = record.altitude_from(source) - origin.altitude_from(source);
    Vec3::new(e, n, u)
}

/// Inverse of [`geodetic_to_enu`]: the record at `enu` metres from `origin`.
pub fn enu_to_geodetic(enu: Vec3, origin: &FlightLogRecord, timestamp: f64) -> FlightLogRecord {
    let lat0 = origin.latitude.to_radians();
    FlightLogRecord {
        timestamp,
        latitude: origin.latitude + (enu.y / EARTH_RADIUS_M).to_degrees(),
        longitude: origin.longitude + (enu.x / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        altitude: origin.altitude + enu.z,
        gps_altitude: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncedPair {
    pub pose: Pose,
    /// Local ENU metres at `pose.timestamp + offset`.
    pub metric: Vec3,
    /// Distance in seconds to the nearest log record.
    pub time_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    /// Added to pose timestamps to get log time.
    pub offset: f64,
    pub tolerance: f64,
    pub altitude_source: AltitudeSource,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            offset: 0.0,
            tolerance: 0.6,
            altitude_source: AltitudeSource::Barometric,
        }
    }
}

/// Pair each pose with the log position at `timestamp + offset`, linearly
/// interpolated between the bracketing records, when the nearest record is
/// within `tolerance` seconds. The ENU origin is the first log record.
pub fn sync_poses(poses: &[Pose], log: &[FlightLogRecord], cfg: &SyncConfig) -> Result<Vec<SyncedPair>, ScaleError> {
    if !(cfg.tolerance >= 0.0) {
        return Err(ScaleError::InvalidParameter(format!(
            "tolerance must be >= 0, got {}",
            cfg.tolerance
        )));
    }
    let Some(origin) = log.first() else {
        return Err(ScaleError::NoValidRows);
    };
    let enu: Vec<Vec3> = log
        .iter()
        .map(|r| geodetic_to_enu_with(r, origin, cfg.altitude_source))
        .collect();
    let mut pairs = Vec::new();
    for pose in poses {
        let t = pose.timestamp + cfg.offset;
        let (Some(metric), Some(dt)) = interpolate_at(log, &enu, t) else {
            continue;
        };
        if dt <= cfg.tolerance {
            pairs.push(SyncedPair {
                pose: *pose,
                metric,
                time_error: dt,
            });
        }
    }
    if pairs.is_empty() {
        return Err(ScaleError::NoTemporalOverlap {
            tolerance: cfg.tolerance,
        });
    }
    Ok(pairs)
}

/// Interpolated ENU position at time `t` and the distance to the nearest record.
fn interpolate_at(log: &[FlightLogRecord], enu: &[Vec3], t: f64) -> (Option<Vec3>, Option<f64>) {
    if log.is_empty() {
        return (None, None);
    }
    let k = log.partition_point(|r| r.timestamp <= t);
    if k == 0 {
        return (Some(enu[0]), Some(log[0].timestamp - t));
    }
    if k == log.len() {
        return (Some(enu[k - 1]), Some(t - log[k - 1].timestamp));
    }
    let (r0, r1) = (&log[k - 1], &log[k]);
    let w = (t - r0.timestamp) / (r1.timestamp - r0.timestamp);
    let p = enu[k - 1] + (enu[k] - enu[k - 1]) * w;
    let dt = (t - r0.timestamp).min(r1.timestamp - t);
    (Some(p), Some(dt))
}

/// Offset in `[lo, hi]` (scanned at `step`) maximizing the number of poses
/// within `tolerance` of a record; ties go to the smallest |offset|.
pub fn estimate_time_offset(
    poses: &[Pose],
    log: &[FlightLogRecord],
    lo: f64,
    hi: f64,
    step: f64,
    tolerance: f64,
) -> Result<f64, ScaleError> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(ScaleError::InvalidParameter(format!(
            "bad offset scan [{lo}, {hi}] step {step}"
        )));
    }
    let n = ((hi - lo) / step).floor() as usize + 1;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let off = lo + i as f64 * step;
        let count = poses
            .iter()
            .filter(|p| {
                let t = p.timestamp + off;
                let k = log.partition_point(|r| r.timestamp <= t);
                let near = [k.checked_sub(1), (k < log.len()).then_some(k)];
                near.iter()
                    .flatten()
                    .any(|&j| (log[j].timestamp - t).abs() <= tolerance)
            })
            .count();
        let better = match best {
            None => true,
            Some((c, o)) => count > c || (count == c && off.abs() < o.abs()),
        };
        if better {
            best = Some((count, off));
        }
    }
    match best {
        Some((c, off)) if c > 0 => Ok(off),
        _ => Err(ScaleError::NoTemporalOverlap { tolerance }),
    }
}

/// Median over all pair combinations with metric baseline >= `min_baseline`
/// of metric length / reconstructed length.
pub fn estimate_scale(pairs: &[SyncedPair], min_baseline: f64) -> Result<f64, ScaleError> {
    estimate_scale_with(pairs, min_baseline, Exec::default())
}

pub fn estimate_scale_with(pairs: &[SyncedPair], min_baseline: f64, exec: Exec) -> Result<f64, ScaleError> {
    if pairs.len() < 2 {
        return Err(ScaleError::TooFewPairs(pairs.len()));
    }
    if !(min_baseline >= 0.0) {
        return Err(ScaleError::InvalidParameter(format!(
            "min_baseline must be >= 0, got {min_baseline}"
        )));
    }
    let per_row = exec.map_range(pairs.len(), |i| {
        let mut ratios = Vec::new();
        for j in i + 1..pairs.len() {
            let dm = (pairs[i].metric - pairs[j].metric).norm();
            if !(dm >= min_baseline) || dm == 0.0 {
                continue;
            }
            let dr = (pairs[i].pose.translation - pairs[j].pose.translation).norm();
            if dr == 0.0 {
                return Err(ScaleError::ZeroReconstructed(i, j));
            }
            ratios.push(dm / dr);
        }
        Ok(ratios)
    });
    let mut ratios = Vec::new();
    for r in per_row {
        ratios.extend(r?);
    }
    if ratios.is_empty() {
        return Err(ScaleError::BaselinesTooShort(min_baseline));
    }
    Ok(median_in_place(&mut ratios))
}

/// `timestamp qw qx qy qz tx ty tz` per line (camera-to-world), `#` comments.
pub fn parse_pose_track(text: &str) -> Result<Vec<Pose>, ScaleError> {
    let mut poses: Vec<Pose> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| ScaleError::BadPose { line: lineno + 1, msg };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("non-numeric field".into()))?;
        if vals.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", vals.len())));
        }
        let rot =
            Mat3::from_quaternion(vals[1], vals[2], vals[3], vals[4]).ok_or_else(|| bad("zero quaternion".into()))?;
        let pose = Pose::new(rot, Vec3::new(vals[5], vals[6], vals[7]), vals[0]).map_err(|e| bad(e.to_string()))?;
        if let Some(prev) = poses.last() {
            if !(pose.timestamp > prev.timestamp) {
                return Err(ScaleError::UnsortedPoses(lineno + 1));
            }
        }
        poses.push(pose);
    }
    Ok(poses)
}

pub fn load_pose_track(path: impl AsRef<Path>) -> Result<Vec<Pose>, ScaleError> {
    parse_pose_track(&fs::read_to_string(path)?)
}

/// Serialize poses; rotations are written as quaternions.
pub fn write_pose_track(poses: &[Pose]) -> String {
    let mut s = String::from("# timestamp qw qx qy qz tx ty tz\n");
    for p in poses {
        let [w, x, y, z] = quaternion_of(&p.rotation);
        let t = p.translation;
        let _ = writeln!(
            s,
            "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            p.timestamp, w, x, y, z, t.x, t.y, t.z
        );
    }
    s
}

fn quaternion_of(r: &Mat3) -> [f64; 4] {
    let m = &r.0;
    let tr = m[0][0] + m[1][1] + m[2][2];
    if tr > 0.0 {
        let s = (tr + 1.0).sqrt() * 2.0;
        [
            0.25 * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        [
            (m[2][1] - m[1][2]) / s,
            0.25 * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            0.25 * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            0.25 * s,
        ]
    }
}
