//! Image statistics: channel means, patch contrast, CLAHE, Sobel gradient,
//! a feature-matching pipeline with RANSAC, and coverage footprints.

mod clahe;
pub mod features;
mod ransac;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::rgb::Rgb;

pub use clahe::{clahe, equalize_luminance};
pub use features::{match_consecutive, FeatureConfig, MatchReport};
pub use ransac::{fit_homography, Homography};

/// Fixed tiling of an image into equally sized patches, centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub cols: usize,
    pub rows: usize,
    pub patch_w: usize,
    pub patch_h: usize,
}

impl PatchGrid {
    pub const DEFAULT_COLS: usize = 10;
    pub const DEFAULT_ROWS: usize = 6;

    /// Largest patches of a `cols x rows` tiling that fit the image.
    pub fn fit(width: usize, height: usize, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 || width < cols || height < rows {
            return Err(Error::Domain(format!(
                "cannot tile a {width}x{height} image into {cols}x{rows} patches"
            )));
        }
        Ok(PatchGrid {
            cols,
            rows,
            patch_w: width / cols,
            patch_h: height / rows,
        })
    }

    /// The default 10 x 6 tiling for an image.
    pub fn for_image(img: &ImageF) -> Result<Self> {
        Self::fit(img.width(), img.height(), Self::DEFAULT_COLS, Self::DEFAULT_ROWS)
    }

    pub fn validate(&self, img: &ImageF) -> Result<()> {
        if self.patch_w == 0
            || self.patch_h == 0
            || self.cols * self.patch_w > img.width()
            || self.rows * self.patch_h > img.height()
        {
            return Err(Error::Domain(format!(
                "{}x{} patches of {}x{} px do not fit a {}x{} image",
                self.cols,
                self.rows,
                self.patch_w,
                self.patch_h,
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }

    /// Top-left pixel of patch (`col`, `row`).
    pub fn origin(&self, img: &ImageF, col: usize, row: usize) -> (usize, usize) {
        let x0 = (img.width() - self.cols * self.patch_w) / 2;
        let y0 = (img.height() - self.rows * self.patch_h) / 2;
        (x0 + col * self.patch_w, y0 + row * self.patch_h)
    }
}

pub fn channel_mean(img: &ImageF) -> Result<Rgb> {
    if img.is_empty() {
        return Err(Error::Domain("mean of an empty image".into()));
    }
    let sum = img.pixels().iter().fold(Rgb::ZERO, |a, &p| a + p);
    Ok(sum / img.len() as f64)
}

/// Population standard deviation per channel over the whole image.
pub fn whole_stdev(img: &ImageF) -> Result<Rgb> {
    let mean = channel_mean(img)?;
    let var = img
        .pixels()
        .iter()
        .fold(Rgb::ZERO, |a, &p| a + (p - mean) * (p - mean))
        / img.len() as f64;
    Ok(var.map(f64::sqrt))
}

/// Mean over patches of the within-patch population standard deviation.
pub fn patch_contrast(img: &ImageF, grid: &PatchGrid) -> Result<Rgb> {
    grid.validate(img)?;
    let n = (grid.patch_w * grid.patch_h) as f64;
    let mut total = Rgb::ZERO;
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let (x0, y0) = grid.origin(img, col, row);
            let mut sum = Rgb::ZERO;
            for y in y0..y0 + grid.patch_h {
                for x in x0..x0 + grid.patch_w {
                    sum += img.get(x, y);
                }
            }
            let mean = sum / n;
            let mut sq = Rgb::ZERO;
            for y in y0..y0 + grid.patch_h {
                for x in x0..x0 + grid.patch_w {
                    let d = img.get(x, y) - mean;
                    sq += d * d;
                }
            }
            total += (sq / n).map(f64::sqrt);
        }
    }
    Ok(total / (grid.cols * grid.rows) as f64)
}

/// Mean absolute vertical Sobel response of the luminance over interior pixels.
pub fn mean_gradient_y(img: &ImageF) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Domain(format!("Sobel needs at least 3x3 pixels, got {w}x{h}")));
    }
    let lum = img.luminance();
    let at = |x: usize, y: usize| lum[y * w + x];
    let mut sum = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let g = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            sum += g.abs();
        }
    }
    Ok(sum / ((w - 2) * (h - 2)) as f64)
}

/// Seabed area imaged at distance `d`; zero when the frame is unusable.
pub fn coverage_area(d: f64, fov_h: f64, aspect: f64, usable: bool) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("coverage distance {d} must be positive")));
    }
    if !usable {
        return Ok(0.0);
    }
    let width = 2.0 * d * (fov_h / 2.0).tan();
    Ok(width * width / aspect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn means() {
        let c = Rgb::new(0.2, 0.4, 0.6);
        let m = channel_mean(&ImageF::filled(4, 3, c)).unwrap();
        assert!((m - c).max_component().abs() < 1e-15);
        let half = ImageF::from_fn(4, 2, |x, _| if x < 2 { Rgb::ZERO } else { Rgb::ONE });
        assert!((channel_mean(&half).unwrap().r - 0.5).abs() < 1e-15);
        let checker = ImageF::from_fn(3, 3, |x, y| if (x + y) % 2 == 0 { Rgb::ONE } else { Rgb::ZERO });
        assert!((channel_mean(&checker).unwrap().g - 5.0 / 9.0).abs() < 1e-15);
        assert!(channel_mean(&ImageF::new(0, 0)).is_err());
    }

    #[test]
    fn patch_contrast_cases() {
        let grid = PatchGrid::fit(40, 24, 10, 6).unwrap();
        assert!(patch_contrast(&ImageF::filled(40, 24, Rgb::splat(0.3)), &grid).unwrap().max_component() < 1e-12);

        // Constant within patches, different between them.
        let blocks = ImageF::from_fn(40, 24, |x, y| Rgb::splat(((x / 4 + y / 4) % 5) as f64 * 0.2));
        let pc = patch_contrast(&blocks, &grid).unwrap();
        assert!(pc.max_component() < 1e-12);
        assert!(whole_stdev(&blocks).unwrap().r > 0.1);

        let alt = ImageF::from_fn(40, 24, |x, _| Rgb::splat((x % 2) as f64));
        let pc = patch_contrast(&alt, &grid).unwrap();
        assert!((pc.r - 0.5).abs() < 1e-12 && (pc.b - 0.5).abs() < 1e-12);

        let too_big = PatchGrid {
            cols: 10,
            rows: 6,
            patch_w: 5,
            patch_h: 4,
        };
        assert!(patch_contrast(&alt, &too_big).is_err());
    }

    #[test]
    fn patch_grid_default_scaling() {
        let g = PatchGrid::fit(1280, 720, 10, 6).unwrap();
        assert_eq!((g.patch_w, g.patch_h), (128, 120));
        let g = PatchGrid::fit(320, 180, 10, 6).unwrap();
        assert_eq!((g.patch_w, g.patch_h), (32, 30));
    }

    /// Direct convolution with the 3x3 vertical Sobel kernel, written out
    /// independently of the implementation.
    fn sobel_oracle(lum: &[Vec<f64>]) -> f64 {
        let k = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
        let (h, w) = (lum.len(), lum[0].len());
        let mut s = 0.0;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut g = 0.0;
                for (j, krow) in k.iter().enumerate() {
                    for (i, kv) in krow.iter().enumerate() {
                        g += kv * lum[y + j - 1][x + i - 1];
                    }
                }
                s += g.abs();
            }
        }
        s / ((w - 2) * (h - 2)) as f64
    }

    #[test]
    fn sobel_step_edge() {
        let (w, h) = (9, 7);
        let img = ImageF::from_fn(w, h, |_, y| if y >= 3 { Rgb::ONE } else { Rgb::ZERO });
        let g = mean_gradient_y(&img).unwrap();
        let expect = 8.0 / (h - 2) as f64;
        let lum: Vec<Vec<f64>> = (0..h).map(|y| (0..w).map(|x| img.get(x, y).mean()).collect()).collect();
        assert!((g - sobel_oracle(&lum)).abs() < 1e-12);
        // Two interior rows each carry |4| over the W-2 interior columns.
        assert!((g - expect).abs() < 1e-12, "{g} vs {expect}");
    }

    #[test]
    fn sobel_blind_to_vertical_stripes() {
        let img = ImageF::from_fn(10, 8, |x, _| Rgb::splat((x % 2) as f64));
        assert_eq!(mean_gradient_y(&img).unwrap(), 0.0);
        assert_eq!(mean_gradient_y(&ImageF::filled(5, 5, Rgb::ONE)).unwrap(), 0.0);
        assert!(mean_gradient_y(&ImageF::new(2, 5)).is_err());
    }

    #[test]
    fn coverage() {
        let a = coverage_area(1.0, std::f64::consts::FRAC_PI_2, 1.0, true).unwrap();
        assert!((a - 4.0).abs() < 1e-12);
        assert_eq!(coverage_area(1.0, 1.0, 1.0, false).unwrap(), 0.0);
        assert!(coverage_area(0.0, 1.0, 1.0, true).is_err());
    }

    proptest! {
        #[test]
        fn coverage_scales_quadratically(d in 0.1f64..5.0, fov in 0.2f64..2.5, aspect in 0.5f64..3.0) {
            let a1 = coverage_area(d, fov, aspect, true).unwrap();
            let a2 = coverage_area(2.0 * d, fov, aspect, true).unwrap();
            prop_assert!((a2 / a1 - 4.0).abs() < 1e-9);
        }

        #[test]
        fn patch_contrast_bounded_by_whole_stdev_for_block_images(seed in 0u64..1000) {
            // Patch-wise constant offsets plus a fixed texture: inter-patch
            // variation can only raise the whole-image deviation.
            let img = ImageF::from_fn(40, 24, |x, y| {
                let block = ((x / 4) as u64 * 31 + (y / 4) as u64 * 17 + seed) % 7;
                Rgb::splat(block as f64 * 0.1 + ((x + y) % 2) as f64 * 0.05)
            });
            let grid = PatchGrid::fit(40, 24, 10, 6).unwrap();
            let pc = patch_contrast(&img, &grid).unwrap();
            let ws = whole_stdev(&img).unwrap();
            prop_assert!(pc.r <= ws.r + 1e-12);
        }
    }
}
