//! Distances between two adjacent buildings from a reconstructed cloud.
//!
//! The two largest euclidean clusters are taken as the buildings. In the
//! facade modes each building contributes the best-supported plane facing
//! its neighbour and the gap is measured plane-to-plane at sampled
//! locations. In roof mode the roof planes select each building's roof
//! points and the gap is read off the facing roof boundaries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geometry::{Axis, Plane, Vec3};
use crate::planes::{
    default_bin_width, euclidean_clusters, extract_parallel_planes, median_nn_spacing, refine_plane_on,
    select_best_plane, CandidatePlane, Cluster, PlaneError, RansacConfig, DEFAULT_MAX_ANGLE_DEG,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fewer than 2 clusters (found {0})")]
    TooFewClusters(usize),
    #[error("no plane passes selection for building {building}: {source}")]
    NoPlane {
        building: usize,
        #[source]
        source: PlaneError,
    },
    #[error("selected planes are not parallel ({angle_deg:.2} deg > {limit_deg} deg)")]
    NonParallel { angle_deg: f64, limit_deg: f64 },
    #[error("no facade overlap along {0}")]
    NoOverlap(Axis),
    #[error("no sampled location had points on both buildings")]
    NoMeasurableLocation,
    #[error(transparent)]
    Plane(#[from] PlaneError),
}

impl DistanceError {
    pub fn kind(&self) -> &'static str {
        match self {
            DistanceError::InvalidConfig(_) => "invalid_config",
            DistanceError::TooFewClusters(_) => "too_few_clusters",
            DistanceError::NoPlane { .. } => "no_plane",
            DistanceError::NonParallel { .. } => "non_parallel",
            DistanceError::NoOverlap(_) => "no_overlap",
            DistanceError::NoMeasurableLocation => "no_measurable_location",
            DistanceError::Plane(e) => e.kind(),
        }
    }
}

/// UAV flight geometry, which decides the faces that carry the measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Roof,
    InBetween,
    Frontal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Roof, Mode::InBetween, Mode::Frontal];

    pub fn is_facade(self) -> bool {
        !matches!(self, Mode::Roof)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Roof => "roof",
            Mode::InBetween => "in-between",
            Mode::Frontal => "frontal",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "roof" => Ok(Mode::Roof),
            "in-between" | "inbetween" => Ok(Mode::InBetween),
            "frontal" => Ok(Mode::Frontal),
            other => Err(format!("unknown mode '{other}' (roof, in-between, frontal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    /// Axis across which the two buildings lie.
    pub separation_axis: Axis,
    /// Facade modes: axis along which gap samples are spread.
    /// Roof mode: axis the clusters are sliced along (the roof normal).
    pub slice_axis: Axis,
    pub n_sample_locations: usize,
    /// Clustering radius; `None` uses 4x the cloud's median point spacing.
    pub cluster_radius: Option<f64>,
    pub min_cluster_size: usize,
    /// Slab width; `None` uses [`default_bin_width`].
    pub bin_width: Option<f64>,
    pub max_angle_deg: f64,
    /// When set, each building's RANSAC threshold is this multiple of its
    /// median point spacing, overriding `RansacConfig::inlier_threshold`.
    pub threshold_factor: Option<f64>,
    /// Roof mode: boundary quantile (0.02 reads the 2nd/98th percentiles).
    pub roof_quantile: f64,
}

impl ModeConfig {
    pub fn for_mode(mode: Mode) -> ModeConfig {
        let (separation_axis, slice_axis) = match mode {
            Mode::Roof => (Axis::Y, Axis::Z),
            Mode::InBetween | Mode::Frontal => (Axis::Z, Axis::Y),
        };
        ModeConfig {
            separation_axis,
            slice_axis,
            n_sample_locations: 4,
            cluster_radius: None,
            min_cluster_size: 50,
            bin_width: None,
            max_angle_deg: DEFAULT_MAX_ANGLE_DEG,
            threshold_factor: Some(2.0),
            roof_quantile: 0.02,
        }
    }

    pub fn validate(&self) -> Result<(), DistanceError> {
        let bad = |m: String| Err(DistanceError::InvalidConfig(m));
        if self.separation_axis == self.slice_axis {
            return bad("separation_axis and slice_axis must differ".into());
        }
        if self.n_sample_locations == 0 {
            return bad("n_sample_locations must be >= 1".into());
        }
        if let Some(r) = self.cluster_radius {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("cluster_radius must be positive, got {r}"));
            }
        }
        if let Some(w) = self.bin_width {
            if !(w > 0.0) || !w.is_finite() {
                return bad(format!("bin_width must be positive, got {w}"));
            }
        }
        if let Some(k) = self.threshold_factor {
            if !(k > 0.0) || !k.is_finite() {
                return bad(format!("threshold_factor must be positive, got {k}"));
            }
        }
        if !(self.max_angle_deg > 0.0 && self.max_angle_deg <= 90.0) {
            return bad(format!("max_angle_deg must lie in (0, 90], got {}", self.max_angle_deg));
        }
        if !(self.roof_quantile >= 0.0 && self.roof_quantile < 0.5) {
            return bad(format!(
                "roof_quantile must lie in [0, 0.5), got {}",
                self.roof_quantile
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPlane {
    pub building: usize,
    pub cluster_size: usize,
    /// Plane used for measurement (refined on the whole cluster).
    pub plane: Plane,
    /// RANSAC winner refit on its slab consensus set.
    pub refit_plane: Plane,
    /// Minimal-sample RANSAC hypothesis.
    pub raw_plane: Plane,
    pub inlier_count: usize,
    pub support_count: usize,
    pub slab: usize,
    pub candidates: usize,
    pub bin_width: f64,
    pub inlier_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub label: String,
    /// Coordinate of the sample along the sampling axis.
    pub location: f64,
    pub unscaled: f64,
    pub metric: f64,
    /// Measurement endpoints on building A and B (reconstruction units).
    pub endpoints: [Vec3; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub mode: Mode,
    pub config: ModeConfig,
    pub scale: f64,
    pub cluster_radius: f64,
    pub clusters_found: usize,
    pub sampling_axis: Axis,
    pub planes: Vec<SelectedPlane>,
    pub rows: Vec<DistanceRow>,
    pub notes: Vec<String>,
}

impl DistanceReport {
    pub fn mean_unscaled(&self) -> f64 {
        self.rows.iter().map(|r| r.unscaled).sum::<f64>() / self.rows.len().max(1) as f64
    }

    pub fn mean_metric(&self) -> f64 {
        self.rows.iter().map(|r| r.metric).sum::<f64>() / self.rows.len().max(1) as f64
    }
}

/// `n` bin centres spread over the overlap of the clusters' extents along `axis`.
pub fn sample_gap_locations(a: &Cluster, b: &Cluster, axis: Axis, n: usize) -> Result<Vec<f64>, DistanceError> {
    if n == 0 {
        return Err(DistanceError::InvalidConfig("n must be >= 1".into()));
    }
    let lo = a.bbox.min.get(axis).max(b.bbox.min.get(axis));
    let hi = a.bbox.max.get(axis).min(b.bbox.max.get(axis));
    if !(hi > lo) {
        return Err(DistanceError::NoOverlap(axis));
    }
    let step = (hi - lo) / n as f64;
    Ok((0..n).map(|i| lo + (i as f64 + 0.5) * step).collect())
}

/// Offset difference of two near-parallel planes after orienting `b` like `a`.
pub fn plane_pair_gap(a: &Plane, b: &Plane, max_angle_deg: f64) -> Result<f64, DistanceError> {
    let angle = a.angle_deg(b);
    if angle > max_angle_deg {
        return Err(DistanceError::NonParallel {
            angle_deg: angle,
            limit_deg: max_angle_deg,
        });
    }
    let b = b.oriented_like(a.normal);
    Ok((a.offset - b.offset).abs())
}

/// Linear-interpolated quantile of unsorted data.
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Point of `plane` whose `fixed` coordinates are given; the remaining
/// coordinate along `solve` is solved for.
fn point_on_plane(plane: &Plane, solve: Axis, base: Vec3) -> Vec3 {
    let n = plane.normal;
    let partial = n.dot(base.with(solve, 0.0)) + plane.offset;
    base.with(solve, -partial / n.get(solve))
}

struct BuildingPlanes {
    selected: SelectedPlane,
    support: Vec<usize>,
}

fn building_plane(
    cloud: &PointCloud,
    own: &Cluster,
    other: &Cluster,
    building: usize,
    axis: Axis,
    mode_cfg: &ModeConfig,
    ransac: &RansacConfig,
    facing: bool,
) -> Result<BuildingPlanes, DistanceError> {
    let threshold = match mode_cfg.threshold_factor {
        Some(k) => {
            let s = median_nn_spacing(cloud, &own.indices, 2000).unwrap_or(0.0);
            if s > 0.0 {
                k * s
            } else {
                ransac.inlier_threshold
            }
        }
        None => ransac.inlier_threshold,
    };
    let cfg = RansacConfig {
        inlier_threshold: threshold,
        ..*ransac
    };
    let bin_width = mode_cfg.bin_width.unwrap_or_else(|| default_bin_width(own, axis));
    let candidates = extract_parallel_planes(cloud, own, axis, bin_width, &cfg, mode_cfg.max_angle_deg)
        .map_err(|source| DistanceError::NoPlane { building, source })?;

    let chosen: &CandidatePlane = if facing {
        let own_c = own.centroid(cloud);
        let other_c = other.centroid(cloud);
        let toward: Vec<CandidatePlane> = candidates
            .iter()
            .filter(|c| {
                let a = c.plane.signed_distance(own_c);
                let b = c.plane.signed_distance(other_c);
                a * b < 0.0
            })
            .cloned()
            .collect();
        match select_best_plane(&toward) {
            Ok(best) => candidates.iter().find(|c| c.slab == best.slab).unwrap(),
            Err(_) => select_best_plane(&candidates)?,
        }
    } else {
        select_best_plane(&candidates)?
    };

    let (plane, refined_support) = refine_plane_on(cloud, &own.indices, chosen.plane, threshold);
    let plane = plane.oriented_like(axis.unit());
    let support: Vec<usize> = if facing {
        refined_support
    } else {
        own.indices
            .iter()
            .copied()
            .filter(|&i| plane.signed_distance(cloud.points[i]).abs() <= threshold)
            .collect()
    };
    Ok(BuildingPlanes {
        selected: SelectedPlane {
            building,
            cluster_size: own.len(),
            plane,
            refit_plane: chosen.plane,
            raw_plane: chosen.raw_plane,
            inlier_count: chosen.inlier_count,
            support_count: support.len(),
            slab: chosen.slab,
            candidates: candidates.len(),
            bin_width,
            inlier_threshold: threshold,
        },
        support,
    })
}

/// Run the full two-building pipeline on `cloud`.
pub fn estimate_distances(
    cloud: &PointCloud,
    mode: Mode,
    mode_cfg: &ModeConfig,
    ransac: &RansacConfig,
    scale: f64,
) -> Result<DistanceReport, DistanceError> {
    mode_cfg.validate()?;
    ransac.validate()?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(DistanceError::InvalidConfig(format!(
            "scale must be positive, got {scale}"
        )));
    }
    if cloud.is_empty() {
        return Err(PlaneError::EmptyCloud.into());
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let radius = match mode_cfg.cluster_radius {
        Some(r) => r,
        None => {
            let s = median_nn_spacing(cloud, &all, 5000).unwrap_or(0.0);
            if !(s > 0.0) {
                return Err(DistanceError::InvalidConfig(
                    "cannot derive a cluster radius from a cloud with zero spacing; set cluster_radius".into(),
                ));
            }
            4.0 * s
        }
    };
    let clusters = euclidean_clusters(cloud, radius, mode_cfg.min_cluster_size)?;
    if clusters.len() < 2 {
        return Err(DistanceError::TooFewClusters(clusters.len()));
    }
    let sep = mode_cfg.separation_axis;
    // Building A is the one lower along the separation axis.
    let (a, b) = {
        let ca = clusters[0].centroid(cloud).get(sep);
        let cb = clusters[1].centroid(cloud).get(sep);
        if ca <= cb {
            (&clusters[0], &clusters[1])
        } else {
            (&clusters[1], &clusters[0])
        }
    };

    let mut notes = Vec::new();
    let plane_axis = if mode.is_facade() { sep } else { mode_cfg.slice_axis };
    let facing = mode.is_facade();
    let pair = [(a, b), (b, a)];
    let fits = ransac.exec.map_range(2, |k| {
        building_plane(cloud, pair[k].0, pair[k].1, k, plane_axis, mode_cfg, ransac, facing)
    });
    let mut fits = fits.into_iter();
    let fa = fits.next().unwrap()?;
    let fb = fits.next().unwrap()?;

    let angle = fa.selected.plane.angle_deg(&fb.selected.plane);
    if angle > mode_cfg.max_angle_deg {
        return Err(DistanceError::NonParallel {
            angle_deg: angle,
            limit_deg: mode_cfg.max_angle_deg,
        });
    }

    let (sampling_axis, rows) = if mode.is_facade() {
        let sampling = mode_cfg.slice_axis;
        let third = sep.third(sampling);
        let locations = sample_gap_locations(a, b, sampling, mode_cfg.n_sample_locations)?;
        let lo3 = a.bbox.min.get(third).max(b.bbox.min.get(third));
        let hi3 = a.bbox.max.get(third).min(b.bbox.max.get(third));
        let mid3 = if hi3 > lo3 {
            0.5 * (lo3 + hi3)
        } else {
            0.5 * (a.bbox.center().get(third) + b.bbox.center().get(third))
        };
        let pa = fa.selected.plane;
        let pb = fb.selected.plane;
        let rows = locations
            .iter()
            .map(|&t| {
                let base = Vec3::ZERO.with(sampling, t).with(third, mid3);
                let ea = point_on_plane(&pa, sep, base);
                let eb = point_on_plane(&pb, sep, base);
                let gap = 0.5 * (pb.signed_distance(ea).abs() + pa.signed_distance(eb).abs());
                (t, gap, [ea, eb])
            })
            .collect::<Vec<_>>();
        notes.push(
            "facade gap: mean of the two point-to-plane distances between the selected planes at each location"
                .to_string(),
        );
        (sampling, rows)
    } else {
        let sampling = sep.third(mode_cfg.slice_axis);
        let locations = sample_gap_locations(a, b, sampling, mode_cfg.n_sample_locations)?;
        let lo = a.bbox.min.get(sampling).max(b.bbox.min.get(sampling));
        let hi = a.bbox.max.get(sampling).min(b.bbox.max.get(sampling));
        let half = 0.5 * (hi - lo) / locations.len() as f64;
        let q = mode_cfg.roof_quantile;
        let mut rows = Vec::new();
        for &t in &locations {
            let strip = |support: &[usize]| -> Vec<Vec3> {
                support
                    .iter()
                    .map(|&i| cloud.points[i])
                    .filter(|p| (p.get(sampling) - t).abs() <= half)
                    .collect()
            };
            let sa = strip(&fa.support);
            let sb = strip(&fb.support);
            if sa.is_empty() || sb.is_empty() {
                notes.push(format!("location {t:.3}: no roof points on one side, skipped"));
                continue;
            }
            let mut ca: Vec<f64> = sa.iter().map(|p| p.get(sep)).collect();
            let mut cb: Vec<f64> = sb.iter().map(|p| p.get(sep)).collect();
            let edge_a = quantile(&mut ca, 1.0 - q);
            let edge_b = quantile(&mut cb, q);
            let gap = edge_b - edge_a;
            let ea = point_on_plane(
                &fa.selected.plane,
                mode_cfg.slice_axis,
                Vec3::ZERO.with(sampling, t).with(sep, edge_a),
            );
            let eb = point_on_plane(
                &fb.selected.plane,
                mode_cfg.slice_axis,
                Vec3::ZERO.with(sampling, t).with(sep, edge_b),
            );
            rows.push((t, gap, [ea, eb]));
        }
        if rows.is_empty() {
            return Err(DistanceError::NoMeasurableLocation);
        }
        notes.push(format!(
            "roof gap: distance along {sep} between the {:.0}th-percentile boundary of the lower building's roof points and the {:.0}th-percentile boundary of the upper building's, per location strip",
            100.0 * (1.0 - q),
            100.0 * q
        ));
        (sampling, rows)
    };

    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(k, (location, unscaled, endpoints))| DistanceRow {
            label: format!("L{}", k + 1),
            location,
            unscaled,
            metric: unscaled * scale,
            endpoints,
        })
        .collect();

    Ok(DistanceReport {
        mode,
        config: *mode_cfg,
        scale,
        cluster_radius: radius,
        clusters_found: clusters.len(),
        sampling_axis,
        planes: vec![fa.selected, fb.selected],
        rows,
        notes,
    })
}
