//! On-disk cache of rendered components.
//!
//! Renders are quantized to single precision whether or not they come from
//! disk, so a cached run and a fresh run see identical pixels.

use std::fs;
use std::hash::Hasher;
use std::path::{Path, PathBuf};

use super::{render_components, RenderComponents, SceneState};
use crate::error::{Error, Result};
use crate::image::ImageF;

/// Environment variable naming the cache root.
pub const CACHE_ENV: &str = "AQUAPERC_CACHE";

/// 64-bit FNV-1a, stable across platforms and releases.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv64 {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Short hex digest of everything that determines a render.
pub fn scene_fingerprint(scene: &SceneState, spp: u32, seed: u64) -> String {
    let mut h = Fnv64::default();
    let text = format!(
        "{:?}|{:?}|{}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{spp}|{seed}",
        scene.water,
        scene.phase.kind(),
        scene.depth,
        scene.distance,
        scene.spotlight,
        scene.surface_irradiance,
        scene.kd(),
        scene.target,
        scene.camera,
        scene.look,
    );
    h.write(text.as_bytes());
    format!("{:016x}", h.finish())
}

/// Writes through a temporary file so readers never see partial images.
pub fn write_pfm_atomic(img: &ImageF, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    img.write_pfm(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default)]
pub struct ComponentCache {
    root: Option<PathBuf>,
}

impl ComponentCache {
    /// `None` disables caching.
    pub fn new(root: Option<PathBuf>) -> Self {
        ComponentCache { root }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Components of `scene`, from `<root>/<key>.{ambient,spot}.pfm` when
    /// present. `key` should include [`scene_fingerprint`].
    pub fn components(&self, key: &str, scene: &SceneState, spp: u32, seed: u64) -> Result<RenderComponents> {
        let paths = self.root.as_ref().map(|r| {
            (
                r.join(format!("{key}.ambient.pfm")),
                r.join(format!("{key}.spot.pfm")),
            )
        });
        if let Some((a, s)) = &paths {
            if a.is_file() && s.is_file() {
                if let (Ok(ambient), Ok(spot)) = (ImageF::read_pfm(a), ImageF::read_pfm(s)) {
                    if ambient.width() == scene.camera.width && ambient.height() == scene.camera.height {
                        return Ok(RenderComponents { ambient, spot });
                    }
                }
            }
        }
        let mut comps = render_components(scene, spp, seed)?;
        comps.ambient.quantize_f32();
        comps.spot.quantize_f32();
        if let Some((a, s)) = &paths {
            write_pfm_atomic(&comps.ambient, a)?;
            write_pfm_atomic(&comps.spot, s)?;
        }
        Ok(comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::WaterProps;
    use crate::render::{Camera, PhaseFamily};
    use crate::rgb::Rgb;

    fn scene() -> SceneState {
        let w = WaterProps::new(Rgb::splat(0.2), Rgb::splat(0.1), 0.0183, 1.1).unwrap();
        let mut s = SceneState::new(w, PhaseFamily::Ff).unwrap();
        s.camera = Camera {
            width: 16,
            height: 9,
            ..Camera::desk()
        };
        s
    }

    #[test]
    fn fnv_reference_values() {
        let mut h = Fnv64::default();
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn fingerprint_tracks_inputs() {
        let s = scene();
        assert_eq!(scene_fingerprint(&s, 4, 1), scene_fingerprint(&s.clone(), 4, 1));
        assert_ne!(scene_fingerprint(&s, 4, 1), scene_fingerprint(&s, 4, 2));
        assert_ne!(scene_fingerprint(&s, 4, 1), scene_fingerprint(&s.with_distance(2.0), 4, 1));
        // Lamp level is applied at composition time and is not part of the key.
        assert_eq!(scene_fingerprint(&s, 4, 1), scene_fingerprint(&s.with_light(0.9), 4, 1));
    }

    #[test]
    fn cached_and_fresh_renders_agree() {
        let dir = tempfile::tempdir().unwrap();
        let s = scene();
        let cache = ComponentCache::new(Some(dir.path().to_path_buf()));
        let fresh = cache.components("x/y", &s, 2, 3).unwrap();
        assert!(dir.path().join("x/y.spot.pfm").is_file());
        let again = cache.components("x/y", &s, 2, 3).unwrap();
        assert_eq!(fresh, again);
        let uncached = ComponentCache::new(None).components("x/y", &s, 2, 3).unwrap();
        assert_eq!(fresh, uncached);
    }
}
