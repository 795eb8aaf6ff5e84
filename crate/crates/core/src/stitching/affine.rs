use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureMatch, StitchError};
use crate::par::Exec;

/// `(x, y) -> (a x + b y + tx, c x + d y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub c: f64,
    pub d: f64,
    pub ty: f64,
}

impl Default for AffineTransform {
    fn default() -> Self {
        AffineTransform::IDENTITY
    }
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        c: 0.0,
        d: 1.0,
        ty: 0.0,
    };

    pub fn new(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        AffineTransform { a, b, tx, c, d, ty }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    /// Rotation by `deg` (counter-clockwise in x-right/y-down pixel axes
    /// reads clockwise on screen) about `(cx, cy)`.
    pub fn rotation_about(deg: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        AffineTransform {
            a: c,
            b: -s,
            tx: cx - c * cx + s * cy,
            c: s,
            d: c,
            ty: cy - s * cx - c * cy,
        }
    }

    pub fn similarity(scale: f64, deg: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        AffineTransform {
            a: scale * c,
            b: -scale * s,
            tx,
            c: scale * s,
            d: scale * c,
            ty,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Option<AffineTransform> {
        let det = self.det();
        if !det.is_finite() || det.abs() < 1e-12 {
            return None;
        }
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Some(AffineTransform {
            a,
            b,
            c,
            d,
            tx: -(a * self.tx + b * self.ty),
            ty: -(c * self.tx + d * self.ty),
        })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a, self.b, self.tx, self.c, self.d, self.ty]
    }

    pub fn max_abs_diff(&self, o: &AffineTransform) -> f64 {
        self.to_array()
            .iter()
            .zip(o.to_array().iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Apply `inner` first, then `outer`.
pub fn compose(outer: &AffineTransform, inner: &AffineTransform) -> AffineTransform {
    AffineTransform {
        a: outer.a * inner.a + outer.b * inner.c,
        b: outer.a * inner.b + outer.b * inner.d,
        tx: outer.a * inner.tx + outer.b * inner.ty + outer.tx,
        c: outer.c * inner.a + outer.d * inner.c,
        d: outer.c * inner.b + outer.d * inner.d,
        ty: outer.c * inner.tx + outer.d * inner.ty + outer.ty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineRansacConfig {
    pub iterations: usize,
    /// Reprojection error bound in pixels.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub rng_seed: u64,
    /// Hypotheses with `|det - 1|` above this are discarded.
    pub max_det_deviation: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for AffineRansacConfig {
    fn default() -> Self {
        AffineRansacConfig {
            iterations: 500,
            inlier_threshold: 1.5,
            min_inliers: 8,
            rng_seed: 0,
            max_det_deviation: 0.5,
            exec: Exec::default(),
        }
    }
}

impl AffineRansacConfig {
    pub fn validate(&self) -> Result<(), StitchError> {
        let bad = |m: String| Err(StitchError::InvalidInput(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if !(self.inlier_threshold > 0.0) || !self.inlier_threshold.is_finite() {
            return bad(format!(
                "inlier_threshold must be positive, got {}",
                self.inlier_threshold
            ));
        }
        if self.min_inliers < 3 {
            return bad(format!("min_inliers must be >= 3, got {}", self.min_inliers));
        }
        if !(self.max_det_deviation > 0.0) {
            return bad(format!(
                "max_det_deviation must be positive, got {}",
                self.max_det_deviation
            ));
        }
        Ok(())
    }
}

/// Solve a 3x3 system by Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = r[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Exact affine through three correspondences; `None` when the source
/// points are (numerically) collinear.
pub fn affine_from_three(m: &[FeatureMatch; 3]) -> Option<AffineTransform> {
    let [p, q, r] = [m[0].source, m[1].source, m[2].source];
    let e1 = (q[0] - p[0], q[1] - p[1]);
    let e2 = (r[0] - p[0], r[1] - p[1]);
    let cross = e1.0 * e2.1 - e1.1 * e2.0;
    let l1 = e1.0.hypot(e1.1);
    let l2 = e2.0.hypot(e2.1);
    if !(cross.abs() > 1e-9 * l1 * l2) || l1 == 0.0 || l2 == 0.0 {
        return None;
    }
    let a = [[p[0], p[1], 1.0], [q[0], q[1], 1.0], [r[0], r[1], 1.0]];
    let x = solve3(a, [m[0].target[0], m[1].target[0], m[2].target[0]])?;
    let y = solve3(a, [m[0].target[1], m[1].target[1], m[2].target[1]])?;
    Some(AffineTransform::new(x[0], x[1], x[2], y[0], y[1], y[2]))
}

/// Least-squares affine `source -> target` over `matches`.
pub fn fit_affine_lsq(matches: &[FeatureMatch]) -> Option<AffineTransform> {
    if matches.len() < 3 {
        return None;
    }
    // centre for conditioning
    let n = matches.len() as f64;
    let (mx, my) = matches
        .iter()
        .fold((0.0, 0.0), |(x, y), m| (x + m.source[0], y + m.source[1]));
    let (mx, my) = (mx / n, my / n);
    let mut ata = [[0.0; 3]; 3];
    let mut atx = [0.0; 3];
    let mut aty = [0.0; 3];
    for m in matches {
        let row = [m.source[0] - mx, m.source[1] - my, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atx[i] += row[i] * m.target[0];
            aty[i] += row[i] * m.target[1];
        }
    }
    let x = solve3(ata, atx)?;
    let y = solve3(ata, aty)?;
    Some(AffineTransform::new(
        x[0],
        x[1],
        x[2] - x[0] * mx - x[1] * my,
        y[0],
        y[1],
        y[2] - y[0] * mx - y[1] * my,
    ))
}

fn residual(t: &AffineTransform, m: &FeatureMatch) -> f64 {
    let (x, y) = t.apply(m.source[0], m.source[1]);
    (x - m.target[0]).hypot(y - m.target[1])
}

enum Hypothesis {
    Degenerate,
    Rejected,
    Scored(AffineTransform, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineEstimate {
    /// Least-squares refit on the consensus set.
    pub transform: AffineTransform,
    pub raw_transform: AffineTransform,
    /// Consensus size of the best minimal-sample hypothesis.
    pub inlier_count: usize,
    pub inliers: Vec<usize>,
}

/// Best-by-consensus affine `source -> target` from three-point samples,
/// refit by least squares on its inliers. Deterministic per seed; the
/// returned count is the raw consensus of the winning hypothesis.
pub fn estimate_affine_ransac(
    matches: &[FeatureMatch],
    cfg: &AffineRansacConfig,
) -> Result<(AffineTransform, usize), StitchError> {
    estimate_affine_detailed(matches, cfg).map(|e| (e.transform, e.inlier_count))
}

pub fn estimate_affine_detailed(
    matches: &[FeatureMatch],
    cfg: &AffineRansacConfig,
) -> Result<AffineEstimate, StitchError> {
    cfg.validate()?;
    if matches.len() < 3 {
        return Err(StitchError::TooFewMatches(matches.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let samples: Vec<[usize; 3]> = (0..cfg.iterations)
        .map(|_| {
            let s = sample(&mut rng, matches.len(), 3);
            [s.index(0), s.index(1), s.index(2)]
        })
        .collect();
    let thr = cfg.inlier_threshold;
    let dev = cfg.max_det_deviation;
    let scored = cfg.exec.map(&samples, |s| {
        let Some(t) = affine_from_three(&[matches[s[0]], matches[s[1]], matches[s[2]]]) else {
            return Hypothesis::Degenerate;
        };
        if (t.det() - 1.0).abs() > dev {
            return Hypothesis::Rejected;
        }
        let count = matches.iter().filter(|m| residual(&t, m) <= thr).count();
        Hypothesis::Scored(t, count)
    });
    let mut any_valid = false;
    let mut best: Option<(AffineTransform, usize)> = None;
    for h in scored {
        match h {
            Hypothesis::Degenerate => {}
            Hypothesis::Rejected => any_valid = true,
            Hypothesis::Scored(t, count) => {
                any_valid = true;
                if best.map_or(true, |(_, c)| count > c) {
                    best = Some((t, count));
                }
            }
        }
    }
    if !any_valid {
        return Err(StitchError::Degenerate);
    }
    let (raw, count) = match best {
        Some(b) if b.1 >= cfg.min_inliers => b,
        other => {
            return Err(StitchError::NoConsensus {
                best: other.map_or(0, |b| b.1),
                required: cfg.min_inliers,
            })
        }
    };
    let mut model = raw;
    let mut inliers: Vec<usize> = (0..matches.len())
        .filter(|&i| residual(&raw, &matches[i]) <= thr)
        .collect();
    for _ in 0..3 {
        let set: Vec<FeatureMatch> = inliers.iter().map(|&i| matches[i]).collect();
        let Some(refit) = fit_affine_lsq(&set) else { break };
        if (refit.det() - 1.0).abs() > dev {
            break;
        }
        model = refit;
        let next: Vec<usize> = (0..matches.len())
            .filter(|&i| residual(&model, &matches[i]) <= thr)
            .collect();
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
    }
    Ok(AffineEstimate {
        transform: model,
        raw_transform: raw,
        inlier_count: count,
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn m(s: (f64, f64), t: (f64, f64)) -> FeatureMatch {
        FeatureMatch {
            source: [s.0, s.1],
            target: [t.0, t.1],
            score: 1.0,
        }
    }

    fn random_affine(rng: &mut ChaCha8Rng) -> AffineTransform {
        AffineTransform::new(
            rng.gen_range(0.5..1.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.5..1.5),
            rng.gen_range(-100.0..100.0),
        )
    }

    #[test]
    fn compose_examples() {
        let t = AffineTransform::new(1.1, 0.2, 3.0, -0.1, 0.9, 4.0);
        assert_eq!(compose(&AffineTransform::IDENTITY, &t), t);
        assert_eq!(compose(&t, &AffineTransform::IDENTITY), t);
        let c = compose(
            &AffineTransform::translation(3.0, 0.0),
            &AffineTransform::translation(0.0, 4.0),
        );
        assert_eq!(c, AffineTransform::translation(3.0, 4.0));
        let inv = t.inverse().unwrap();
        assert!(compose(&t, &inv).max_abs_diff(&AffineTransform::IDENTITY) < 1e-12);
        assert!(AffineTransform::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0).inverse().is_none());
    }

    #[test]
    fn rotation_about_fixes_centre() {
        let r = AffineTransform::rotation_about(33.0, 10.0, -4.0);
        let (x, y) = r.apply(10.0, -4.0);
        assert!((x - 10.0).abs() < 1e-12 && (y + 4.0).abs() < 1e-12);
        assert!((r.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ms: Vec<_> = (0..40)
            .map(|_| {
                let p = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
                m(p, p)
            })
            .collect();
        let (t, n) = estimate_affine_ransac(&ms, &AffineRansacConfig::default()).unwrap();
        assert_eq!(n, 40);
        assert!(t.max_abs_diff(&AffineTransform::IDENTITY) < 1e-9);
    }

    #[test]
    fn recovers_affine_with_outliers() {
        let truth = AffineTransform::new(1.02, 0.0, 30.0, 0.0, 0.98, -12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ms: Vec<_> = (0..200)
            .map(|i| {
                let p = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
                if i % 10 < 3 {
                    m(p, (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)))
                } else {
                    let q = truth.apply(p.0, p.1);
                    m(p, (q.0 + rng.gen_range(-0.2..0.2), q.1 + rng.gen_range(-0.2..0.2)))
                }
            })
            .collect();
        let (t, n) = estimate_affine_ransac(&ms, &AffineRansacConfig::default()).unwrap();
        assert!(n >= 135, "{n}");
        for (got, want) in [(t.a, truth.a), (t.b, truth.b), (t.c, truth.c), (t.d, truth.d)] {
            assert!((got - want).abs() < 1e-2);
        }
        assert!((t.tx - truth.tx).abs() < 0.5 && (t.ty - truth.ty).abs() < 0.5);
    }

    #[test]
    fn collinear_only_is_degenerate() {
        let ms = [
            m((0.0, 0.0), (1.0, 1.0)),
            m((1.0, 1.0), (2.0, 2.0)),
            m((2.0, 2.0), (3.0, 3.0)),
        ];
        let cfg = AffineRansacConfig {
            min_inliers: 3,
            ..Default::default()
        };
        assert!(matches!(
            estimate_affine_ransac(&ms, &cfg),
            Err(StitchError::Degenerate)
        ));
        assert!(matches!(
            estimate_affine_ransac(&ms[..2], &cfg),
            Err(StitchError::TooFewMatches(2))
        ));
    }

    #[test]
    fn lsq_exact_on_clean_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_affine(&mut rng);
        let ms: Vec<_> = (0..25)
            .map(|_| {
                let p = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
                m(p, t.apply(p.0, p.1))
            })
            .collect();
        assert!(fit_affine_lsq(&ms).unwrap().max_abs_diff(&t) < 1e-9);
    }

    proptest! {
        #[test]
        fn compose_is_associative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, q, r) = (random_affine(&mut rng), random_affine(&mut rng), random_affine(&mut rng));
            let left = compose(&compose(&p, &q), &r);
            let right = compose(&p, &compose(&q, &r));
            for _ in 0..100 {
                let (x, y) = (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
                let (l, rr) = (left.apply(x, y), right.apply(x, y));
                let (ri, rj) = r.apply(x, y);
                let (qi, qj) = q.apply(ri, rj);
                let seq = p.apply(qi, qj);
                prop_assert!((l.0 - rr.0).abs() < 1e-9 && (l.1 - rr.1).abs() < 1e-9);
                prop_assert!((l.0 - seq.0).abs() < 1e-9 && (l.1 - seq.1).abs() < 1e-9);
            }
        }

        #[test]
        fn inliers_monotone_in_threshold(seed in any::<u64>(), t1 in 0.1f64..5.0, t2 in 0.1f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_affine(&mut rng);
            let ms: Vec<_> = (0..60).map(|i| {
                let p = (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0));
                let q = truth.apply(p.0, p.1);
                let noise = if i % 4 == 0 { 20.0 } else { 1.0 };
                m(p, (q.0 + rng.gen_range(-noise..noise), q.1 + rng.gen_range(-noise..noise)))
            }).collect();
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let cfg = |thr| AffineRansacConfig { inlier_threshold: thr, min_inliers: 3, max_det_deviation: 10.0, rng_seed: seed, ..Default::default() };
            let a = estimate_affine_ransac(&ms, &cfg(lo)).map(|r| r.1).unwrap_or(0);
            let b = estimate_affine_ransac(&ms, &cfg(hi)).map(|r| r.1).unwrap_or(0);
            prop_assert!(a <= b);
        }
    }
}
