//! Feature matching between consecutive frames.
//!
//! A compact stand-in for SIFT: CLAHE on luminance, a difference-of-Gaussian
//! scale space with a low contrast threshold, one dominant orientation per
//! keypoint, a 4x4x8 gradient-histogram descriptor, nearest-neighbour
//! matching with a ratio test, and a RANSAC homography.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::clahe::equalize_luminance;
use super::ransac::{fit_homography, Point};
use crate::error::Result;
use crate::image::ImageF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub clahe_clip: f64,
    pub clahe_tiles: usize,
    /// Minimum |DoG| response on the equalized [0, 1] image.
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_features: usize,
    pub ratio_test: f64,
    /// RANSAC reprojection threshold in pixels.
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub ransac_seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            clahe_clip: 2.0,
            clahe_tiles: 8,
            contrast_threshold: 0.004,
            edge_ratio: 10.0,
            max_features: 500,
            ratio_test: 0.8,
            ransac_threshold: 3.0,
            ransac_iterations: 1000,
            ransac_seed: 0x5EED,
        }
    }
}

/// Outcome of matching one frame against the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Keypoints detected in the newer frame.
    pub n_features: usize,
    pub n_matches: usize,
    pub n_inliers: usize,
    /// `n_inliers / max(n_matches, 1)`.
    pub inlier_ratio: f64,
    /// Row-major homography from the older to the newer frame, if found.
    pub homography: Option<[f64; 9]>,
}

impl MatchReport {
    fn empty(n_features: usize, n_matches: usize) -> Self {
        MatchReport {
            n_features,
            n_matches,
            n_inliers: 0,
            inlier_ratio: 0.0,
            homography: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub angle: f64,
    pub response: f64,
}

/// Keypoints and their descriptors for one frame.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub keypoints: Vec<Keypoint>,
    descriptors: Vec<[f32; 128]>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Single-channel float image.
#[derive(Clone)]
struct Gray {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Gray {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.v[y * self.w + x]
    }

    fn downsample(&self) -> Gray {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                v.push(self.at(2 * x, 2 * y));
            }
        }
        Gray { w, h, v }
    }

    fn blur(&self, sigma: f64) -> Gray {
        if sigma <= 0.0 {
            return self.clone();
        }
        let r = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let norm: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
        let (w, h) = (self.w as isize, self.h as isize);
        let clampi = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
        let mut tmp = vec![0.0; self.v.len()];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    s += kv * self.v[y as usize * self.w + clampi(x + k as isize - r, w)];
                }
                tmp[(y * w + x) as usize] = s;
            }
        }
        let mut out = vec![0.0; self.v.len()];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    s += kv * tmp[clampi(y + k as isize - r, h) * self.w + x as usize];
                }
                out[(y * w + x) as usize] = s;
            }
        }
        Gray {
            w: self.w,
            h: self.h,
            v: out,
        }
    }

    #[inline]
    fn gradient(&self, x: usize, y: usize) -> (f64, f64) {
        let gx = self.at(x + 1, y) - self.at(x - 1, y);
        let gy = self.at(x, y + 1) - self.at(x, y - 1);
        (gx, gy)
    }
}

const INTERVALS: usize = 3;
const SIGMA0: f64 = 1.6;
const INPUT_SIGMA: f64 = 0.5;
const MIN_OCTAVE_SIZE: usize = 24;
const BORDER: usize = 6;

struct Octave {
    scale: f64,
    gauss: Vec<Gray>,
    dog: Vec<Gray>,
}

fn build_pyramid(base: Gray) -> Vec<Octave> {
    let k = 2f64.powf(1.0 / INTERVALS as f64);
    let mut octaves = Vec::new();
    let mut img = base.blur((SIGMA0 * SIGMA0 - INPUT_SIGMA * INPUT_SIGMA).sqrt());
    let mut scale = 1.0;
    while img.w.min(img.h) >= MIN_OCTAVE_SIZE && octaves.len() < 5 {
        let mut gauss = vec![img.clone()];
        for i in 1..INTERVALS + 3 {
            let prev = SIGMA0 * k.powi(i as i32 - 1);
            gauss.push(gauss[i - 1].blur(prev * (k * k - 1.0).sqrt()));
        }
        let dog = gauss
            .windows(2)
            .map(|g| Gray {
                w: g[0].w,
                h: g[0].h,
                v: g[1].v.iter().zip(&g[0].v).map(|(a, b)| a - b).collect(),
            })
            .collect();
        let next = gauss[INTERVALS].downsample();
        octaves.push(Octave { scale, gauss, dog });
        img = next;
        scale *= 2.0;
    }
    octaves
}

fn is_extremum(dog: &[Gray], i: usize, x: usize, y: usize) -> bool {
    let v = dog[i].at(x, y);
    let mut is_max = true;
    let mut is_min = true;
    for layer in &dog[i - 1..=i + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let u = layer.at(xx, yy);
                if std::ptr::eq(layer, &dog[i]) && xx == x && yy == y {
                    continue;
                }
                if u >= v {
                    is_max = false;
                }
                if u <= v {
                    is_min = false;
                }
                if !is_max && !is_min {
                    return false;
                }
            }
        }
    }
    true
}

fn dominant_orientation(g: &Gray, x: usize, y: usize, sigma: f64) -> f64 {
    let ws = 1.5 * sigma;
    let r = (3.0 * ws).round() as isize;
    let mut hist = [0.0f64; 36];
    for dy in -r..=r {
        for dx in -r..=r {
            let (px, py) = (x as isize + dx, y as isize + dy);
            if px < 1 || py < 1 || px >= g.w as isize - 1 || py >= g.h as isize - 1 {
                continue;
            }
            let (gx, gy) = g.gradient(px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            let weight = (-((dx * dx + dy * dy) as f64) / (2.0 * ws * ws)).exp();
            let ang = gy.atan2(gx).rem_euclid(2.0 * PI);
            let bin = ((ang / (2.0 * PI) * 36.0) as usize).min(35);
            hist[bin] += weight * mag;
        }
    }
    let smooth: Vec<f64> = (0..36)
        .map(|i| 0.25 * hist[(i + 35) % 36] + 0.5 * hist[i] + 0.25 * hist[(i + 1) % 36])
        .collect();
    let (best, _) = smooth
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (l, c, rr) = (smooth[(best + 35) % 36], smooth[best], smooth[(best + 1) % 36]);
    let denom = l - 2.0 * c + rr;
    let offset = if denom.abs() > 1e-18 { 0.5 * (l - rr) / denom } else { 0.0 };
    ((best as f64 + 0.5 + offset) / 36.0 * 2.0 * PI).rem_euclid(2.0 * PI)
}

fn descriptor(g: &Gray, x: f64, y: f64, sigma: f64, angle: f64) -> [f32; 128] {
    let cell = 3.0 * sigma;
    let radius = (cell * std::f64::consts::SQRT_2 * 2.5).ceil() as isize;
    let (sa, ca) = angle.sin_cos();
    let mut hist = [0.0f64; 128];
    let (cx0, cy0) = (x.round() as isize, y.round() as isize);
    for py in cy0 - radius..=cy0 + radius {
        for px in cx0 - radius..=cx0 + radius {
            if px < 1 || py < 1 || px >= g.w as isize - 1 || py >= g.h as isize - 1 {
                continue;
            }
            let (dx, dy) = (px as f64 - x, py as f64 - y);
            let rx = (ca * dx + sa * dy) / cell;
            let ry = (-sa * dx + ca * dy) / cell;
            let bx = rx + 1.5;
            let by = ry + 1.5;
            if bx <= -1.0 || bx >= 4.0 || by <= -1.0 || by >= 4.0 {
                continue;
            }
            let (gx, gy) = g.gradient(px as usize, py as usize);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = (gy.atan2(gx) - angle).rem_euclid(2.0 * PI);
            let bo = theta / (2.0 * PI) * 8.0;
            let weight = mag * (-(rx * rx + ry * ry) / 8.0).exp();
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (iy, wy) in [(y0 as isize, 1.0 - fy), (y0 as isize + 1, fy)] {
                if !(0..4).contains(&iy) {
                    continue;
                }
                for (ix, wx) in [(x0 as isize, 1.0 - fx), (x0 as isize + 1, fx)] {
                    if !(0..4).contains(&ix) {
                        continue;
                    }
                    for (io, wo) in [(o0 as usize % 8, 1.0 - fo), ((o0 as usize + 1) % 8, fo)] {
                        hist[(iy as usize * 4 + ix as usize) * 8 + io] += weight * wy * wx * wo;
                    }
                }
            }
        }
    }
    let normalize = |h: &mut [f64; 128]| {
        let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            for v in h.iter_mut() {
                *v /= n;
            }
        }
    };
    normalize(&mut hist);
    for v in hist.iter_mut() {
        *v = v.min(0.2);
    }
    normalize(&mut hist);
    let mut out = [0f32; 128];
    for (o, v) in out.iter_mut().zip(hist) {
        *o = v as f32;
    }
    out
}

/// Detects keypoints and computes descriptors.
pub fn extract_features(img: &ImageF, cfg: &FeatureConfig) -> Result<FeatureSet> {
    let lum = equalize_luminance(img, cfg.clahe_clip, (cfg.clahe_tiles, cfg.clahe_tiles))?;
    let base = Gray {
        w: img.width(),
        h: img.height(),
        v: lum,
    };
    let pyramid = build_pyramid(base);
    let k = 2f64.powf(1.0 / INTERVALS as f64);
    let edge_limit = (cfg.edge_ratio + 1.0).powi(2) / cfg.edge_ratio;

    struct Candidate {
        octave: usize,
        layer: usize,
        x: f64,
        y: f64,
        response: f64,
    }
    let mut cands = Vec::new();
    for (o, oct) in pyramid.iter().enumerate() {
        let (w, h) = (oct.dog[0].w, oct.dog[0].h);
        if w <= 2 * BORDER || h <= 2 * BORDER {
            continue;
        }
        for i in 1..=INTERVALS {
            let d = &oct.dog[i];
            for y in BORDER..h - BORDER {
                for x in BORDER..w - BORDER {
                    let v = d.at(x, y);
                    if v.abs() < cfg.contrast_threshold || !is_extremum(&oct.dog, i, x, y) {
                        continue;
                    }
                    let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
                    let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
                    let dxy = 0.25
                        * (d.at(x + 1, y + 1) - d.at(x + 1, y - 1) - d.at(x - 1, y + 1)
                            + d.at(x - 1, y - 1));
                    let det = dxx * dyy - dxy * dxy;
                    let tr = dxx + dyy;
                    if det <= 0.0 || tr * tr / det >= edge_limit {
                        continue;
                    }
                    let gx = 0.5 * (d.at(x + 1, y) - d.at(x - 1, y));
                    let gy = 0.5 * (d.at(x, y + 1) - d.at(x, y - 1));
                    let ox = (-(dyy * gx - dxy * gy) / det).clamp(-0.5, 0.5);
                    let oy = (-(dxx * gy - dxy * gx) / det).clamp(-0.5, 0.5);
                    cands.push(Candidate {
                        octave: o,
                        layer: i,
                        x: x as f64 + ox,
                        y: y as f64 + oy,
                        response: v.abs(),
                    });
                }
            }
        }
    }
    cands.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.octave.cmp(&b.octave))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    cands.truncate(cfg.max_features);

    let mut keypoints = Vec::with_capacity(cands.len());
    let mut descriptors = Vec::with_capacity(cands.len());
    for c in &cands {
        let oct = &pyramid[c.octave];
        let g = &oct.gauss[c.layer];
        let sigma = SIGMA0 * k.powi(c.layer as i32);
        let angle = dominant_orientation(g, c.x.round() as usize, c.y.round() as usize, sigma);
        descriptors.push(descriptor(g, c.x, c.y, sigma, angle));
        keypoints.push(Keypoint {
            x: (c.x + 0.5) * oct.scale - 0.5,
            y: (c.y + 0.5) * oct.scale - 0.5,
            sigma: sigma * oct.scale,
            angle,
            response: c.response,
        });
    }
    Ok(FeatureSet {
        keypoints,
        descriptors,
    })
}

#[inline]
fn dist2(a: &[f32; 128], b: &[f32; 128]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Matches the newer frame `b` against the older frame `a`.
pub fn match_features(a: &FeatureSet, b: &FeatureSet, cfg: &FeatureConfig) -> MatchReport {
    let ratio2 = (cfg.ratio_test * cfg.ratio_test) as f32;
    let mut src: Vec<Point> = Vec::new();
    let mut dst: Vec<Point> = Vec::new();
    if a.len() >= 2 {
        for (kb, db) in b.keypoints.iter().zip(&b.descriptors) {
            let (mut best, mut second, mut best_i) = (f32::INFINITY, f32::INFINITY, 0);
            for (i, da) in a.descriptors.iter().enumerate() {
                let d = dist2(da, db);
                if d < best {
                    second = best;
                    best = d;
                    best_i = i;
                } else if d < second {
                    second = d;
                }
            }
            if best < ratio2 * second {
                let ka = &a.keypoints[best_i];
                src.push([ka.x, ka.y]);
                dst.push([kb.x, kb.y]);
            }
        }
    }
    let n_matches = src.len();
    if n_matches < 4 {
        return MatchReport::empty(b.len(), n_matches);
    }
    match fit_homography(&src, &dst, cfg.ransac_threshold, cfg.ransac_iterations, cfg.ransac_seed) {
        Some((h, mask)) => {
            let n_inliers = mask.iter().filter(|&&m| m).count();
            MatchReport {
                n_features: b.len(),
                n_matches,
                n_inliers,
                inlier_ratio: n_inliers as f64 / n_matches.max(1) as f64,
                homography: Some(h.to_array()),
            }
        }
        None => MatchReport::empty(b.len(), n_matches),
    }
}

/// Full pipeline on two frames of equal size.
pub fn match_consecutive(img_a: &ImageF, img_b: &ImageF, cfg: &FeatureConfig) -> Result<MatchReport> {
    img_a.check_same_size(img_b)?;
    let fa = extract_features(img_a, cfg)?;
    let fb = extract_features(img_b, cfg)?;
    Ok(match_features(&fa, &fb, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::TextureKind;
    use crate::rgb::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Seabed texture viewed flat, `px_per_m` pixels per metre, shifted by
    /// `shift_px` pixels to the right.
    fn textured(shift_px: f64) -> ImageF {
        let px_per_m = 200.0;
        ImageF::from_fn(320, 180, |x, y| {
            let (u, v) = ((x as f64 - shift_px) / px_per_m, y as f64 / px_per_m);
            TextureKind::Seabed.albedo(u + 3.0, v + 1.0) * 0.6
        })
    }

    #[test]
    fn self_match() {
        let img = textured(0.0);
        let r = match_consecutive(&img, &img, &FeatureConfig::default()).unwrap();
        assert!(r.n_features > 50, "{r:?}");
        assert!(r.inlier_ratio > 0.9, "{r:?}");
        assert!(r.n_inliers <= r.n_features);
    }

    #[test]
    fn shifted_frame_recovers_translation() {
        let a = textured(0.0);
        let b = textured(10.0);
        let r = match_consecutive(&a, &b, &FeatureConfig::default()).unwrap();
        assert!(r.inlier_ratio > 0.8, "{r:?}");
        let h = r.homography.unwrap();
        // Translation measured at the image centre.
        let (x, y) = (160.0, 90.0);
        let w = h[6] * x + h[7] * y + h[8];
        let tx = (h[0] * x + h[1] * y + h[2]) / w - x;
        let ty = (h[3] * x + h[4] * y + h[5]) / w - y;
        assert!((tx - 10.0).abs() < 1.0 && ty.abs() < 1.0, "{tx} {ty}");
    }

    #[test]
    fn noise_has_no_structure() {
        let a = textured(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = ImageF::from_fn(320, 180, |_, _| Rgb::splat(rng.random::<f64>()));
        let r = match_consecutive(&a, &b, &FeatureConfig::default()).unwrap();
        assert!(r.n_inliers <= 4, "{r:?}");
    }

    #[test]
    fn roughly_symmetric() {
        let a = textured(0.0);
        let b = textured(25.0);
        let cfg = FeatureConfig::default();
        let ab = match_consecutive(&a, &b, &cfg).unwrap().n_inliers as f64;
        let ba = match_consecutive(&b, &a, &cfg).unwrap().n_inliers as f64;
        assert!((ab - ba).abs() / ab.max(ba) <= 0.2, "{ab} {ba}");
    }

    #[test]
    fn blank_frames_report_zero() {
        let img = ImageF::filled(64, 48, Rgb::splat(0.2));
        let r = match_consecutive(&img, &img, &FeatureConfig::default()).unwrap();
        assert_eq!((r.n_inliers, r.inlier_ratio), (0, 0.0));
        assert!(match_consecutive(&img, &ImageF::new(10, 10), &FeatureConfig::default()).is_err());
    }
}
