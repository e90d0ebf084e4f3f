//! Poissonian-Gaussian sensor noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;

/// `y = alpha * Poisson(x / alpha) + N(0, sigma^2)`, optionally clipped to
/// `[0, saturation]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub poisson_scale: f64,
    pub gaussian_sigma: f64,
    pub clip: bool,
    pub saturation: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            poisson_scale: 0.0,
            gaussian_sigma: 0.0,
            clip: false,
            saturation: 1.0,
        }
    }
}

impl NoiseParams {
    /// Moderate noise of a machine-vision camera at the default exposure.
    pub fn camera() -> Self {
        NoiseParams {
            poisson_scale: 1e-3,
            gaussian_sigma: 2e-3,
            clip: true,
            saturation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.poisson_scale.is_finite()
            && self.poisson_scale >= 0.0
            && self.gaussian_sigma.is_finite()
            && self.gaussian_sigma >= 0.0
            && self.saturation > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid noise parameters {self:?}")))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.poisson_scale == 0.0 && self.gaussian_sigma == 0.0 && !self.clip
    }
}

/// Applies sensor noise. Each row draws from its own stream of `seed`, so
/// the result does not depend on thread scheduling.
pub fn apply_noise(img: &ImageF, params: &NoiseParams, seed: u64) -> Result<ImageF> {
    params.validate()?;
    if params.is_identity() {
        return Ok(img.clone());
    }
    let width = img.width().max(1);
    let mut out = img.clone();
    let normal = Normal::new(0.0, params.gaussian_sigma).map_err(|e| Error::Numeric(e.to_string()))?;
    out.pixels_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, pixels)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            for p in pixels.iter_mut() {
                let mut channels = p.to_array();
                for y in channels.iter_mut() {
                    *y = y.max(0.0);
                    if params.poisson_scale > 0.0 {
                        let lambda = *y / params.poisson_scale;
                        *y = if lambda > 0.0 {
                            let k: f64 = Poisson::new(lambda)
                                .map(|d| d.sample(&mut rng))
                                .unwrap_or(lambda);
                            params.poisson_scale * k
                        } else {
                            0.0
                        };
                    }
                    if params.gaussian_sigma > 0.0 {
                        *y += normal.sample(&mut rng);
                    }
                    if params.clip {
                        *y = y.clamp(0.0, params.saturation);
                    }
                }
                *p = channels.into();
            }
        });
    Ok(out)
}

/// Gaussian-only noise may push pixels negative; this keeps images inside
/// the non-negative domain expected downstream.
pub fn clamp_nonnegative(img: &mut ImageF) {
    for p in img.pixels_mut() {
        *p = p.map(|v| v.max(0.0));
    }
}
