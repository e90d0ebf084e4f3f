//! Planar homography estimation: normalized DLT inside a RANSAC loop.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn apply(&self, p: Point) -> Option<Point> {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        if v.z.abs() < 1e-12 {
            return None;
        }
        Some([v.x / v.z, v.y / v.z])
    }

    /// Row-major entries, scaled so the bottom-right entry is 1.
    pub fn to_array(&self) -> [f64; 9] {
        let m = self.0 / self.0[(2, 2)];
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    /// Rejects maps that flip orientation, collapse, or scale wildly; such
    /// maps cannot relate two consecutive frames of a survey.
    fn plausible(&self) -> bool {
        let m = self.0 / self.0[(2, 2)];
        if !m.iter().all(|v| v.is_finite()) {
            return false;
        }
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        det > 1.0 / 16.0 && det < 16.0 && m[(2, 0)].abs() < 0.01 && m[(2, 1)].abs() < 0.01
    }
}

fn normalizer(pts: &[Point]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    let (mx, my) = (mx / n, my / n);
    let mean_dist = pts
        .iter()
        .map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn transform(t: &Matrix3<f64>, p: Point) -> Point {
    let v = t * Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

/// Least-squares homography mapping `src` onto `dst` (at least four pairs).
pub fn dlt(src: &[Point], dst: &[Point]) -> Option<Homography> {
    if src.len() < 4 || src.len() != dst.len() {
        return None;
    }
    let (ts, td) = (normalizer(src), normalizer(dst));
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (p, q) in src.iter().zip(dst) {
        let [x, y] = transform(&ts, *p);
        let [u, v] = transform(&td, *q);
        let rows = [
            [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
            [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
        ];
        for r in &rows {
            for i in 0..9 {
                for j in 0..9 {
                    ata[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(ata);
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = eig.eigenvectors.column(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let m = td.try_inverse()? * hn * ts;
    if m[(2, 2)].abs() < 1e-12 {
        return None;
    }
    Some(Homography(m / m[(2, 2)]))
}

fn inlier_mask(h: &Homography, src: &[Point], dst: &[Point], threshold: f64) -> Vec<bool> {
    let t2 = threshold * threshold;
    src.iter()
        .zip(dst)
        .map(|(p, q)| match h.apply(*p) {
            Some(r) => (r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2) <= t2,
            None => false,
        })
        .collect()
}

/// RANSAC over four-point samples, then a least-squares refit on the
/// consensus set. Returns the model and its inlier mask.
pub fn fit_homography(
    src: &[Point],
    dst: &[Point],
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> Option<(Homography, Vec<bool>)> {
    let n = src.len();
    if n < 4 || n != dst.len() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Homography, Vec<bool>, usize)> = None;
    for _ in 0..iterations {
        let idx = sample(&mut rng, n, 4);
        let s: Vec<Point> = idx.iter().map(|i| src[i]).collect();
        let d: Vec<Point> = idx.iter().map(|i| dst[i]).collect();
        let Some(h) = dlt(&s, &d) else { continue };
        if !h.plausible() {
            continue;
        }
        let mask = inlier_mask(&h, src, dst, threshold);
        let count = mask.iter().filter(|&&m| m).count();
        if best.as_ref().is_none_or(|b| count > b.2) {
            best = Some((h, mask, count));
            if count == n {
                break;
            }
        }
    }
    let (mut h, mut mask, mut count) = best?;
    // Refit on the consensus set while it keeps growing.
    for _ in 0..3 {
        let s: Vec<Point> = (0..n).filter(|&i| mask[i]).map(|i| src[i]).collect();
        let d: Vec<Point> = (0..n).filter(|&i| mask[i]).map(|i| dst[i]).collect();
        let Some(refit) = dlt(&s, &d) else { break };
        if !refit.plausible() {
            break;
        }
        let m2 = inlier_mask(&refit, src, dst, threshold);
        let c2 = m2.iter().filter(|&&m| m).count();
        if c2 < count {
            break;
        }
        let grew = c2 > count;
        h = refit;
        mask = m2;
        count = c2;
        if !grew {
            break;
        }
    }
    Some((h, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn truth() -> Homography {
        Homography(Matrix3::new(1.02, 0.03, 12.0, -0.02, 0.98, -7.0, 1e-5, -2e-5, 1.0))
    }

    #[test]
    fn dlt_recovers_exact_map() {
        let h = truth();
        let src: Vec<Point> = (0..12).map(|i| [(i * 37 % 300) as f64, (i * 53 % 170) as f64]).collect();
        let dst: Vec<Point> = src.iter().map(|p| h.apply(*p).unwrap()).collect();
        let est = dlt(&src, &dst).unwrap();
        for (a, b) in est.to_array().iter().zip(h.to_array()) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} {b}");
        }
    }

    #[test]
    fn ransac_ignores_outliers() {
        let h = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..100 {
            let p = [rng.random_range(0.0..320.0), rng.random_range(0.0..180.0)];
            let q = if i % 3 == 0 {
                [rng.random_range(0.0..320.0), rng.random_range(0.0..180.0)]
            } else {
                h.apply(p).unwrap()
            };
            src.push(p);
            dst.push(q);
        }
        let (est, mask) = fit_homography(&src, &dst, 3.0, 500, 1).unwrap();
        let inliers = mask.iter().filter(|&&m| m).count();
        assert!(inliers >= 66, "{inliers}");
        let p = est.apply([100.0, 100.0]).unwrap();
        let q = h.apply([100.0, 100.0]).unwrap();
        assert!((p[0] - q[0]).abs() < 0.1 && (p[1] - q[1]).abs() < 0.1);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_homography(&[[0.0, 0.0]; 3], &[[0.0, 0.0]; 3], 3.0, 10, 0).is_none());
    }
}
