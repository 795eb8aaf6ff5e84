//! Building isolation and piecewise plane search.
//!
//! A cloud is split into euclidean clusters, each cluster is cut into slabs
//! along an axis, and RANSAC runs per slab with the candidate normals held
//! close to that axis. The result is a family of near-parallel planes per
//! building from which the best-supported one is chosen.

use fnv::FnvHashMap;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Aabb, PointCloud};
use crate::geometry::{angle_to_axis_deg, fit_plane_tls, Axis, Plane, Vec3};
use crate::par::Exec;

/// Candidate normals further than this from the slicing axis are rejected.
pub const DEFAULT_MAX_ANGLE_DEG: f64 = 15.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("empty cloud")]
    EmptyCloud,
    #[error("insufficient points: need at least 3, got {0}")]
    InsufficientPoints(usize),
    #[error("all RANSAC samples were degenerate")]
    AllDegenerate,
    #[error("no RANSAC candidate reached min_inliers ({best} < {required})")]
    NoConsensus { best: usize, required: usize },
    #[error("no slab produced a plane")]
    NoSlabPlane,
    #[error("no candidate planes to select from")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl PlaneError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlaneError::EmptyCloud => "empty_cloud",
            PlaneError::InsufficientPoints(_) => "insufficient_points",
            PlaneError::AllDegenerate => "all_degenerate",
            PlaneError::NoConsensus { .. } => "no_consensus",
            PlaneError::NoSlabPlane => "no_slab_plane",
            PlaneError::NoCandidates => "no_candidates",
            PlaneError::InvalidConfig(_) => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Sorted, unique indices into the parent cloud.
    pub indices: Vec<usize>,
    pub bbox: Aabb,
}

impl Cluster {
    pub fn from_indices(cloud: &PointCloud, mut indices: Vec<usize>) -> Option<Cluster> {
        indices.sort_unstable();
        indices.dedup();
        let bbox = Aabb::from_points(indices.iter().map(|&i| &cloud.points[i]))?;
        Some(Cluster { indices, bbox })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn centroid(&self, cloud: &PointCloud) -> Vec3 {
        let mut s = Vec3::ZERO;
        for &i in &self.indices {
            s += cloud.points[i];
        }
        s / self.indices.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Maximum absolute residual for a point to support a model.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// Fraction of the input that must also support the model; the effective
    /// minimum is `max(min_inliers, ceil(fraction * n))`.
    pub min_inlier_fraction: f64,
    pub rng_seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 500,
            inlier_threshold: 0.05,
            min_inliers: 50,
            min_inlier_fraction: 0.1,
            rng_seed: 0,
            exec: Exec::default(),
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), PlaneError> {
        if self.iterations == 0 {
            return Err(PlaneError::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) || !self.inlier_threshold.is_finite() {
            return Err(PlaneError::InvalidConfig(format!(
                "inlier_threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(PlaneError::InvalidConfig(format!(
                "min_inlier_fraction must lie in [0, 1], got {}",
                self.min_inlier_fraction
            )));
        }
        Ok(())
    }

    pub fn required_inliers(&self, n: usize) -> usize {
        let frac = (self.min_inlier_fraction * n as f64).ceil() as usize;
        self.min_inliers.max(frac).max(1)
    }

    /// Seeded per-slab copy (`seed ^ slab`).
    pub fn for_slab(&self, slab: usize) -> RansacConfig {
        RansacConfig {
            rng_seed: self.rng_seed ^ slab as u64,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisConstraint {
    pub axis: Axis,
    pub max_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePlane {
    /// Total-least-squares refit on the consensus set.
    pub plane: Plane,
    /// Minimal-sample hypothesis that won the consensus vote.
    pub raw_plane: Plane,
    pub inlier_count: usize,
    /// Consensus set of the winning hypothesis, ascending cloud indices.
    pub inliers: Vec<usize>,
    pub slab: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub lower: f64,
    pub upper: f64,
    pub indices: Vec<usize>,
}

/// Uniform voxel hash used for radius and nearest-neighbour queries.
pub(crate) struct VoxelGrid<'a> {
    points: &'a [Vec3],
    edge: f64,
    cells: FnvHashMap<[i64; 3], Vec<u32>>,
}

impl<'a> VoxelGrid<'a> {
    pub(crate) fn new(points: &'a [Vec3], indices: impl Iterator<Item = usize>, edge: f64) -> Self {
        let mut cells: FnvHashMap<[i64; 3], Vec<u32>> = FnvHashMap::default();
        for i in indices {
            cells.entry(Self::key(points[i], edge)).or_default().push(i as u32);
        }
        VoxelGrid { points, edge, cells }
    }

    fn key(p: Vec3, edge: f64) -> [i64; 3] {
        [
            (p.x / edge).floor() as i64,
            (p.y / edge).floor() as i64,
            (p.z / edge).floor() as i64,
        ]
    }

    /// Calls `f` for every indexed point within `radius` (<= edge) of `p`.
    pub(crate) fn for_each_within(&self, p: Vec3, radius: f64, mut f: impl FnMut(usize)) {
        let k = Self::key(p, self.edge);
        let r2 = radius * radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in cell {
                            if (self.points[j as usize] - p).norm_squared() <= r2 {
                                f(j as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Distance from `points[i]` to its nearest other indexed point.
    pub(crate) fn nearest_distance(&self, i: usize) -> Option<f64> {
        let p = self.points[i];
        let k = Self::key(p, self.edge);
        let mut best = f64::INFINITY;
        for r in 0i64..=64 {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(cell) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in cell {
                                if j as usize != i {
                                    best = best.min((self.points[j as usize] - p).norm_squared());
                                }
                            }
                        }
                    }
                }
            }
            // Every unvisited cell lies at least r * edge away.
            if best.is_finite() && best.sqrt() <= r as f64 * self.edge {
                return Some(best.sqrt());
            }
        }
        best.is_finite().then(|| best.sqrt())
    }
}

/// Connected components of the graph joining points within `radius`,
/// keeping those with at least `min_size` members, largest first.
pub fn euclidean_clusters(cloud: &PointCloud, radius: f64, min_size: usize) -> Result<Vec<Cluster>, PlaneError> {
    if cloud.is_empty() {
        return Err(PlaneError::EmptyCloud);
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(PlaneError::InvalidConfig(format!(
            "cluster radius must be positive, got {radius}"
        )));
    }
    let grid = VoxelGrid::new(&cloud.points, 0..cloud.len(), radius);
    let mut visited = vec![false; cloud.len()];
    let mut clusters = Vec::new();
    let mut queue = Vec::new();
    for seed in 0..cloud.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.clear();
        queue.push(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop() {
            members.push(i);
            grid.for_each_within(cloud.points[i], radius, |j| {
                if !visited[j] {
                    visited[j] = true;
                    queue.push(j);
                }
            });
        }
        if members.len() >= min_size.max(1) {
            clusters.push(Cluster::from_indices(cloud, members).unwrap());
        }
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.indices[0].cmp(&b.indices[0])));
    Ok(clusters)
}

/// Median nearest-neighbour spacing over (a stride sample of) `indices`.
pub fn median_nn_spacing(cloud: &PointCloud, indices: &[usize], max_samples: usize) -> Option<f64> {
    if indices.len() < 2 {
        return None;
    }
    let bbox = Aabb::from_points(indices.iter().map(|&i| &cloud.points[i]))?;
    let ext = [bbox.extent(Axis::X), bbox.extent(Axis::Y), bbox.extent(Axis::Z)];
    let diag = (ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]).sqrt();
    if diag == 0.0 {
        return Some(0.0);
    }
    // Points usually sit on surfaces, so size cells from an areal density.
    let mut sorted = ext;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let area = (sorted[0] * sorted[1]).max(diag * diag * 1e-6);
    let edge = (area / indices.len() as f64).sqrt().max(diag * 1e-6);
    let grid = VoxelGrid::new(&cloud.points, indices.iter().copied(), edge);
    let stride = (indices.len() / max_samples.max(1)).max(1);
    let mut d: Vec<f64> = indices
        .iter()
        .step_by(stride)
        .filter_map(|&i| grid.nearest_distance(i))
        .collect();
    if d.is_empty() {
        return None;
    }
    Some(median_in_place(&mut d))
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// 5% of the cluster's extent along `axis`, clamped to [0.2, 2.0].
pub fn default_bin_width(cluster: &Cluster, axis: Axis) -> f64 {
    (0.05 * cluster.bbox.extent(axis)).clamp(0.2, 2.0)
}

/// Partition a cluster into slabs `floor((c - min) / bin_width)` along `axis`.
/// Slabs come back in ascending coordinate order; empty ones are dropped.
pub fn slice_cluster(
    cloud: &PointCloud,
    cluster: &Cluster,
    axis: Axis,
    bin_width: f64,
) -> Result<Vec<Slab>, PlaneError> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(PlaneError::InvalidConfig(format!(
            "bin_width must be positive, got {bin_width}"
        )));
    }
    let Some(min) = cluster
        .indices
        .iter()
        .map(|&i| cloud.points[i].get(axis))
        .min_by(|a, b| a.total_cmp(b))
    else {
        return Ok(Vec::new());
    };
    let mut bins: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
    for &i in &cluster.indices {
        let b = ((cloud.points[i].get(axis) - min) / bin_width).floor() as u64;
        bins.entry(b).or_default().push(i);
    }
    Ok(bins
        .into_iter()
        .map(|(b, indices)| Slab {
            lower: min + b as f64 * bin_width,
            upper: min + (b + 1) as f64 * bin_width,
            indices,
        })
        .collect())
}

fn draw_samples(n: usize, cfg: &RansacConfig) -> Vec<[usize; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    (0..cfg.iterations)
        .map(|_| {
            let s = sample(&mut rng, n, 3);
            [s.index(0), s.index(1), s.index(2)]
        })
        .collect()
}

enum Hypothesis {
    Degenerate,
    OffAxis,
    Scored(Plane, usize),
}

/// Best-by-consensus plane over `cfg.iterations` three-point samples,
/// refit by total least squares on the winning consensus set.
///
/// Ties go to the earliest sample. The sample schedule depends only on the
/// seed, so adding iterations never lowers the returned `inlier_count`.
pub fn ransac_plane(
    cloud: &PointCloud,
    indices: &[usize],
    cfg: &RansacConfig,
    axis_constraint: Option<AxisConstraint>,
) -> Result<CandidatePlane, PlaneError> {
    cfg.validate()?;
    if indices.len() < 3 {
        return Err(PlaneError::InsufficientPoints(indices.len()));
    }
    let pts = cloud.gather(indices);
    let samples = draw_samples(pts.len(), cfg);
    let thr = cfg.inlier_threshold;
    let scored = cfg.exec.map(&samples, |s| {
        let Some(plane) = Plane::through(pts[s[0]], pts[s[1]], pts[s[2]]) else {
            return Hypothesis::Degenerate;
        };
        if let Some(c) = axis_constraint {
            if angle_to_axis_deg(plane.normal, c.axis.unit()) > c.max_angle_deg {
                return Hypothesis::OffAxis;
            }
        }
        let count = pts.iter().filter(|p| plane.signed_distance(**p).abs() <= thr).count();
        Hypothesis::Scored(plane, count)
    });

    let mut any_valid = false;
    let mut best: Option<(Plane, usize)> = None;
    for h in scored {
        match h {
            Hypothesis::Degenerate => {}
            Hypothesis::OffAxis => any_valid = true,
            Hypothesis::Scored(plane, count) => {
                any_valid = true;
                if best.map_or(true, |(_, c)| count > c) {
                    best = Some((plane, count));
                }
            }
        }
    }
    if !any_valid {
        return Err(PlaneError::AllDegenerate);
    }
    let required = cfg.required_inliers(indices.len());
    let (raw_plane, count) = match best {
        Some(b) if b.1 >= required => b,
        other => {
            return Err(PlaneError::NoConsensus {
                best: other.map_or(0, |b| b.1),
                required,
            })
        }
    };
    let mut inliers: Vec<usize> = indices
        .iter()
        .zip(&pts)
        .filter(|(_, p)| raw_plane.signed_distance(**p).abs() <= thr)
        .map(|(&i, _)| i)
        .collect();
    inliers.sort_unstable();
    let inlier_pts = cloud.gather(&inliers);
    let plane = fit_plane_tls(&inlier_pts).unwrap_or(raw_plane.canonical());
    Ok(CandidatePlane {
        plane,
        raw_plane: raw_plane.canonical(),
        inlier_count: count,
        inliers,
        slab: 0,
    })
}

/// Piecewise RANSAC: one constrained fit per slab along `axis`. Slabs that
/// cannot reach consensus are skipped; the survivors are ordered by slab.
pub fn extract_parallel_planes(
    cloud: &PointCloud,
    cluster: &Cluster,
    axis: Axis,
    bin_width: f64,
    cfg: &RansacConfig,
    max_angle_deg: f64,
) -> Result<Vec<CandidatePlane>, PlaneError> {
    cfg.validate()?;
    let slabs = slice_cluster(cloud, cluster, axis, bin_width)?;
    let constraint = AxisConstraint { axis, max_angle_deg };
    let fits = cfg.exec.map_range(slabs.len(), |k| {
        let slab_cfg = cfg.for_slab(k);
        ransac_plane(cloud, &slabs[k].indices, &slab_cfg, Some(constraint)).map(|mut c| {
            c.slab = k;
            c
        })
    });
    let mut out = Vec::new();
    for fit in fits {
        match fit {
            Ok(c) => out.push(c),
            Err(PlaneError::InvalidConfig(m)) => return Err(PlaneError::InvalidConfig(m)),
            Err(e) => log::debug!("slab skipped: {e}"),
        }
    }
    if out.is_empty() {
        return Err(PlaneError::NoSlabPlane);
    }
    Ok(out)
}

/// Candidate with the most inliers; ties go to the lower slab index.
pub fn select_best_plane(candidates: &[CandidatePlane]) -> Result<&CandidatePlane, PlaneError> {
    let mut best: Option<&CandidatePlane> = None;
    for c in candidates {
        best = match best {
            None => Some(c),
            Some(b) if c.inlier_count > b.inlier_count => Some(c),
            Some(b) if c.inlier_count == b.inlier_count && c.slab < b.slab => Some(c),
            keep => keep,
        };
    }
    best.ok_or(PlaneError::NoCandidates)
}

/// Re-estimate `plane` from every point of `indices` inside a residual band,
/// shrinking the band to three robust standard deviations (MAD) each round.
/// Returns the refined plane and the final support set.
pub fn refine_plane_on(cloud: &PointCloud, indices: &[usize], plane: Plane, max_band: f64) -> (Plane, Vec<usize>) {
    let mut current = plane;
    let mut band = max_band;
    let mut support: Vec<usize> = Vec::new();
    for _ in 0..4 {
        let next: Vec<usize> = indices
            .iter()
            .copied()
            .filter(|&i| current.signed_distance(cloud.points[i]).abs() <= band)
            .collect();
        if next.len() < 3 {
            break;
        }
        let pts = cloud.gather(&next);
        let Ok(fit) = fit_plane_tls(&pts) else { break };
        current = fit.oriented_like(plane.normal);
        support = next;
        let mut res: Vec<f64> = pts.iter().map(|p| current.signed_distance(*p).abs()).collect();
        let mad = median_in_place(&mut res);
        band = (3.0 * 1.4826 * mad).clamp(max_band * 0.05, max_band);
    }
    (current, support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blob(rng: &mut ChaCha8Rng, c: Vec3, n: usize, spread: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                c + Vec3::new(
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                )
            })
            .collect()
    }

    #[test]
    fn two_blobs_split_or_merge_by_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, Vec3::new(0.0, 0.0, 0.0), 100, 0.25);
        pts.extend(blob(&mut rng, Vec3::new(10.0, 0.0, 0.0), 100, 0.25));
        let cloud = PointCloud::new(pts);
        let c = euclidean_clusters(&cloud, 1.0, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|k| k.len() == 100));
        let c = euclidean_clusters(&cloud, 20.0, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 200);
        assert!(matches!(
            euclidean_clusters(&PointCloud::default(), 1.0, 1),
            Err(PlaneError::EmptyCloud)
        ));
    }

    #[test]
    fn slicing_examples() {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new(0.0, 0.0, i as f64 * 0.1)).collect();
        let cloud = PointCloud::new(pts);
        let cluster = Cluster::from_indices(&cloud, (0..100).collect()).unwrap();
        let slabs = slice_cluster(&cloud, &cluster, Axis::Z, 2.0).unwrap();
        assert_eq!(slabs.len(), 5);
        for (k, s) in slabs.iter().enumerate() {
            assert!((s.lower - 2.0 * k as f64).abs() < 1e-12);
        }
        let flat = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0); 10]);
        let cluster = Cluster::from_indices(&flat, (0..10).collect()).unwrap();
        // from_indices dedups indices, not positions
        assert_eq!(cluster.len(), 10);
        assert_eq!(slice_cluster(&flat, &cluster, Axis::Z, 1.0).unwrap().len(), 1);
        assert!(slice_cluster(&flat, &cluster, Axis::Z, 0.0).is_err());
    }

    #[test]
    fn ransac_exact_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec3> = (0..200)
            .map(|_| Vec3::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 5.0))
            .collect();
        let cloud = PointCloud::new(pts);
        let idx: Vec<usize> = (0..200).collect();
        let cfg = RansacConfig {
            inlier_threshold: 0.01,
            ..Default::default()
        };
        let c = ransac_plane(&cloud, &idx, &cfg, None).unwrap();
        assert_eq!(c.inlier_count, 200);
        assert_eq!(c.inliers.len(), 200);
        assert!((c.plane.normal - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-9);
        assert!((c.plane.offset + 5.0).abs() < 1e-9);
        assert!(matches!(
            ransac_plane(&cloud, &idx[..2], &cfg, None),
            Err(PlaneError::InsufficientPoints(2))
        ));
    }

    #[test]
    fn ransac_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Vec3> = (0..150)
            .map(|_| Vec3::new(2.0, rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        pts.extend((0..50).map(|_| {
            Vec3::new(
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
            )
        }));
        let cloud = PointCloud::new(pts);
        let idx: Vec<usize> = (0..200).collect();
        let cfg = RansacConfig {
            inlier_threshold: 0.05,
            ..Default::default()
        };
        let c = ransac_plane(&cloud, &idx, &cfg, None).unwrap();
        assert!(angle_to_axis_deg(c.plane.normal, Vec3::new(1.0, 0.0, 0.0)) < 1.0);
        assert!(c.inlier_count >= 140);
        // oracle: labels known by construction
        assert!(c.inliers.iter().filter(|&&i| i < 150).count() == 150);
    }

    #[test]
    fn all_degenerate_samples() {
        let pts: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let cloud = PointCloud::new(pts);
        let idx: Vec<usize> = (0..20).collect();
        let err = ransac_plane(&cloud, &idx, &RansacConfig::default(), None).unwrap_err();
        assert_eq!(err, PlaneError::AllDegenerate);
    }

    #[test]
    fn select_best_ties_on_slab() {
        let plane = Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.0).unwrap();
        let mk = |n: usize, slab: usize| CandidatePlane {
            plane,
            raw_plane: plane,
            inlier_count: n,
            inliers: (0..n).collect(),
            slab,
        };
        let cands = vec![mk(40, 0), mk(95, 1), mk(95, 2), mk(12, 3)];
        assert_eq!(select_best_plane(&cands).unwrap().slab, 1);
        assert_eq!(select_best_plane(&cands[3..]).unwrap().slab, 3);
        assert_eq!(select_best_plane(&[]), Err(PlaneError::NoCandidates));
    }

    #[test]
    fn nn_spacing_on_grid() {
        let pts: Vec<Vec3> = (0..400)
            .map(|i| Vec3::new((i % 20) as f64 * 0.5, (i / 20) as f64 * 0.5, 0.0))
            .collect();
        let cloud = PointCloud::new(pts);
        let idx: Vec<usize> = (0..400).collect();
        let s = median_nn_spacing(&cloud, &idx, 1000).unwrap();
        assert!((s - 0.5).abs() < 1e-12, "{s}");
    }

    #[test]
    fn refine_recovers_band_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..2000)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(0.0..10.0),
                    3.0 + rng.gen_range(-0.05..0.05),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts);
        let idx: Vec<usize> = (0..2000).collect();
        let start = Plane::new(Vec3::new(0.0, 0.0, 1.0), -3.04).unwrap();
        let (p, support) = refine_plane_on(&cloud, &idx, start, 0.3);
        assert!((p.offset + 3.0).abs() < 0.005, "{}", p.offset);
        assert!(support.len() > 1500);
    }
}
