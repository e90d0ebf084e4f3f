//! Contrast-limited adaptive histogram equalization on luminance.

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::rgb::Rgb;

const BINS: usize = 256;

/// Equalized luminance in [0, 1], row-major.
///
/// `clip_limit` is relative to a flat histogram: a bin may hold at most
/// `clip_limit * tile_pixels / 256` counts before the excess is spread
/// uniformly over all bins. `tiles` is (columns, rows).
pub fn equalize_luminance(img: &ImageF, clip_limit: f64, tiles: (usize, usize)) -> Result<Vec<f64>> {
    if !(clip_limit > 0.0) {
        return Err(Error::Domain(format!("CLAHE clip limit {clip_limit} must be positive")));
    }
    let (w, h) = (img.width(), img.height());
    let (tx, ty) = (tiles.0.clamp(1, w.max(1)), tiles.1.clamp(1, h.max(1)));
    let lum = img.luminance();
    if lum.is_empty() {
        return Ok(lum);
    }
    let lmax = lum.iter().copied().fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return Ok(vec![0.0; lum.len()]);
    }
    let bin_of = |v: f64| (((v / lmax) * BINS as f64) as usize).min(BINS - 1);

    let tile_w = w.div_ceil(tx);
    let tile_h = h.div_ceil(ty);
    // Rounded-up tiles can cover the image with fewer of them.
    let (tx, ty) = (w.div_ceil(tile_w), h.div_ceil(tile_h));
    // maps[ty][tx][bin] -> equalized value
    let mut maps = vec![[0.0f64; BINS]; tx * ty];
    for j in 0..ty {
        for i in 0..tx {
            let (x0, y0) = (i * tile_w, j * tile_h);
            let (x1, y1) = ((x0 + tile_w).min(w), (y0 + tile_h).min(h));
            let mut hist = [0.0f64; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(lum[y * w + x])] += 1.0;
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            if count == 0.0 {
                continue;
            }
            let limit = clip_limit * count / BINS as f64;
            if limit.is_finite() {
                let mut excess = 0.0;
                for v in hist.iter_mut() {
                    if *v > limit {
                        excess += *v - limit;
                        *v = limit;
                    }
                }
                let share = excess / BINS as f64;
                for v in hist.iter_mut() {
                    *v += share;
                }
            }
            let map = &mut maps[j * tx + i];
            let mut acc = 0.0;
            for (b, v) in hist.iter().enumerate() {
                acc += v;
                map[b] = acc / count;
            }
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let fy = ((y as f64 + 0.5) / tile_h as f64 - 0.5).clamp(0.0, (ty - 1) as f64);
        let j0 = fy.floor() as usize;
        let j1 = (j0 + 1).min(ty - 1);
        let wy = fy - j0 as f64;
        for x in 0..w {
            let fx = ((x as f64 + 0.5) / tile_w as f64 - 0.5).clamp(0.0, (tx - 1) as f64);
            let i0 = fx.floor() as usize;
            let i1 = (i0 + 1).min(tx - 1);
            let wx = fx - i0 as f64;
            let b = bin_of(lum[y * w + x]);
            let top = maps[j0 * tx + i0][b] * (1.0 - wx) + maps[j0 * tx + i1][b] * wx;
            let bottom = maps[j1 * tx + i0][b] * (1.0 - wx) + maps[j1 * tx + i1][b] * wx;
            out[y * w + x] = top * (1.0 - wy) + bottom * wy;
        }
    }
    Ok(out)
}

/// CLAHE applied to luminance; each pixel's channels are rescaled by the
/// luminance gain (pixels with zero luminance become grey).
pub fn clahe(img: &ImageF, clip_limit: f64, tiles: (usize, usize)) -> Result<ImageF> {
    let eq = equalize_luminance(img, clip_limit, tiles)?;
    let pixels = img
        .pixels()
        .iter()
        .zip(&eq)
        .map(|(&p, &l)| {
            let l_in = p.mean();
            if l_in > 0.0 {
                p * (l / l_in)
            } else {
                Rgb::splat(l)
            }
        })
        .collect();
    ImageF::from_pixels(img.width(), img.height(), pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stdev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageF::filled(32, 24, Rgb::splat(0.4));
        let out = clahe(&img, 2.0, (4, 4)).unwrap();
        let first = out.get(0, 0);
        assert!(out.pixels().iter().all(|&p| p == first));
    }

    #[test]
    fn low_contrast_ramp_is_stretched() {
        let img = ImageF::from_fn(64, 48, |x, _| Rgb::splat(0.45 + 0.1 * x as f64 / 63.0));
        let lum_in = img.luminance();
        let out = clahe(&img, 3.0, (4, 4)).unwrap().luminance();
        assert!(stdev(&out) > stdev(&lum_in));
    }

    #[test]
    fn unclipped_single_tile_is_histogram_equalization() {
        // Reference: rank-based equalization computed independently.
        let (w, h) = (40, 30);
        let img = ImageF::from_fn(w, h, |x, y| Rgb::splat((((x * 7 + y * 13) % 97) as f64 / 96.0).powi(3)));
        let out = equalize_luminance(&img, f64::INFINITY, (1, 1)).unwrap();
        let lum = img.luminance();
        let lmax = lum.iter().copied().fold(0.0, f64::max);
        let bin = |v: f64| (((v / lmax) * 256.0) as usize).min(255);
        let n = lum.len() as f64;
        for (i, &v) in lum.iter().enumerate() {
            let rank = lum.iter().filter(|&&u| bin(u) <= bin(v)).count() as f64 / n;
            assert!((out[i] - rank).abs() < 1e-12);
        }
        // Output CDF is uniform up to the bin width.
        let mut sorted = out.clone();
        sorted.sort_by(f64::total_cmp);
        for (k, v) in sorted.iter().enumerate() {
            assert!(*v >= (k + 1) as f64 / n - 1e-12);
        }
    }

    #[test]
    fn sizes_not_divisible_by_the_tiling() {
        for (w, h) in [(48, 27), (7, 5), (3, 9)] {
            let img = ImageF::from_fn(w, h, |x, y| Rgb::splat(((x * 7 + y * 3) % 11) as f64 / 10.0));
            let out = clahe(&img, 2.0, (8, 8)).unwrap();
            assert_eq!((out.width(), out.height()), (w, h));
        }
    }

    #[test]
    fn rejects_bad_clip() {
        assert!(clahe(&ImageF::new(4, 4), 0.0, (1, 1)).is_err());
    }
}
