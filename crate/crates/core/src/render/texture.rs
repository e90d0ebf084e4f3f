//! Procedural albedo maps for the planar target.
//!
//! Coordinates are metres on the target plane. All maps are pure functions
//! of position, so renders stay deterministic without storing bitmaps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rgb::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    /// Uniform albedo 1, for analytic checks.
    White,
    /// Red painted hull with large smooth shading and sparse grey peel.
    Hull,
    /// Detailed multi-coloured seabed: sand, rock, pebbles, weed.
    Seabed,
}

impl TextureKind {
    pub const ALL: [TextureKind; 3] = [TextureKind::White, TextureKind::Hull, TextureKind::Seabed];

    pub fn name(self) -> &'static str {
        match self {
            TextureKind::White => "white",
            TextureKind::Hull => "hull",
            TextureKind::Seabed => "seabed",
        }
    }

    #[inline]
    pub fn albedo(self, u: f64, v: f64) -> Rgb {
        match self {
            TextureKind::White => Rgb::ONE,
            TextureKind::Hull => hull(u, v),
            TextureKind::Seabed => seabed(u, v),
        }
    }
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TextureKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown texture {s:?} (white, hull, seabed)")))
    }
}

#[inline]
fn hash(ix: i64, iy: i64, salt: u64) -> u64 {
    let mut z = (ix as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Smoothly interpolated lattice noise in [0, 1].
#[inline]
fn value_noise(x: f64, y: f64, salt: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (fade(x - fx), fade(y - fy));
    let v00 = unit(hash(ix, iy, salt));
    let v10 = unit(hash(ix + 1, iy, salt));
    let v01 = unit(hash(ix, iy + 1, salt));
    let v11 = unit(hash(ix + 1, iy + 1, salt));
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// Fractal sum of `octaves` noise layers, normalized to [0, 1].
fn fbm(x: f64, y: f64, octaves: u32, salt: u64) -> f64 {
    let (mut sum, mut amp, mut norm, mut f) = (0.0, 1.0, 0.0, 1.0);
    for o in 0..octaves {
        sum += amp * value_noise(x * f, y * f, salt + o as u64);
        norm += amp;
        amp *= 0.5;
        f *= 2.03;
    }
    sum / norm
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn mix(a: Rgb, b: Rgb, t: f64) -> Rgb {
    a * (1.0 - t) + b * t
}

fn hull(u: f64, v: f64) -> Rgb {
    let paint = Rgb::new(0.52, 0.10, 0.07);
    let primer = Rgb::new(0.46, 0.45, 0.42);
    let shade = 0.72 + 0.36 * value_noise(u / 1.3, v / 1.3, 11) + 0.12 * (value_noise(u / 0.35, v / 0.35, 12) - 0.5);
    let peel = fbm(u / 0.14, v / 0.14, 3, 13);
    let mask = smoothstep(0.66, 0.70, peel);
    let grain = 0.9 + 0.2 * value_noise(u / 0.02, v / 0.02, 14);
    let edge = 1.0 - 0.35 * smoothstep(0.62, 0.66, peel) * (1.0 - mask);
    let base = mix(paint * shade, primer * grain, mask) * edge;
    base.map(|c| c.clamp(0.0, 0.95))
}

fn seabed(u: f64, v: f64) -> Rgb {
    let sand = Rgb::new(0.64, 0.57, 0.42);
    let rock = Rgb::new(0.20, 0.19, 0.17);
    let weed = Rgb::new(0.12, 0.33, 0.14);

    let region = value_noise(u / 3.0, v / 3.0, 21);
    let rockiness = fbm(u / 0.45, v / 0.45, 4, 22);
    let mut col = mix(sand, rock, smoothstep(0.48, 0.58, rockiness + 0.25 * (region - 0.5)));
    let weediness = fbm(u / 0.25, v / 0.25, 3, 23);
    col = mix(col, weed, smoothstep(0.62, 0.70, weediness) * smoothstep(0.45, 0.7, region));

    // Pebbles: one jittered disc per lattice cell.
    let cell = 0.07;
    let (cu, cv) = (u / cell, v / cell);
    let (bx, by) = (cu.floor() as i64, cv.floor() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            let (ix, iy) = (bx + dx, by + dy);
            let h = hash(ix, iy, 24);
            if unit(h) < 0.35 {
                continue;
            }
            let px = ix as f64 + 0.2 + 0.6 * unit(hash(ix, iy, 25));
            let py = iy as f64 + 0.2 + 0.6 * unit(hash(ix, iy, 26));
            let radius = 0.18 + 0.22 * unit(hash(ix, iy, 27));
            let d2 = (cu - px).powi(2) + (cv - py).powi(2);
            if d2 < radius * radius {
                let tone = unit(hash(ix, iy, 28));
                let pebble = if tone < 0.3 {
                    Rgb::new(0.85, 0.82, 0.76)
                } else if tone < 0.6 {
                    Rgb::new(0.10, 0.09, 0.09)
                } else if tone < 0.8 {
                    Rgb::new(0.55, 0.30, 0.18)
                } else {
                    Rgb::new(0.35, 0.38, 0.45)
                };
                let rim = 1.0 - 0.4 * (d2 / (radius * radius));
                col = pebble * rim;
            }
        }
    }
    let grain = 0.8 + 0.4 * value_noise(u / 0.012, v / 0.012, 29);
    (col * grain).map(|c| c.clamp(0.0, 0.95))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(t: TextureKind, step: f64, n: usize) -> (Rgb, Rgb) {
        let mut sum = Rgb::ZERO;
        let mut sq = Rgb::ZERO;
        for i in 0..n {
            for j in 0..n {
                let a = t.albedo(i as f64 * step, j as f64 * step);
                sum += a;
                sq += a * a;
            }
        }
        let m = sum / (n * n) as f64;
        let var = sq / (n * n) as f64 - m * m;
        (m, var.map(|v| v.max(0.0).sqrt()))
    }

    #[test]
    fn albedo_in_range_and_deterministic() {
        for t in TextureKind::ALL {
            for i in 0..500 {
                let (u, v) = (i as f64 * 0.0173 - 3.0, i as f64 * -0.0291 + 1.0);
                let a = t.albedo(u, v);
                assert!(a.min_component() >= 0.0 && a.max_component() <= 1.0);
                assert_eq!(a, t.albedo(u, v));
            }
        }
    }

    #[test]
    fn hull_is_red_and_seabed_is_busier() {
        let (hm, hs) = stats(TextureKind::Hull, 0.01, 150);
        let (_, ss) = stats(TextureKind::Seabed, 0.01, 150);
        assert!(hm.r > 2.0 * hm.b, "{hm:?}");
        assert!(ss.mean() > hs.mean(), "{ss:?} vs {hs:?}");
    }

    #[test]
    fn names_round_trip() {
        for t in TextureKind::ALL {
            assert_eq!(t.name().parse::<TextureKind>().unwrap(), t);
        }
        assert!("marble".parse::<TextureKind>().is_err());
    }
}
