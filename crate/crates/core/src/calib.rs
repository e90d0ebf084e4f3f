//! Two-step calibration: brightness over depth looking at the surface, then
//! patch contrast over distance to a target with the lamp on and off.
//! Profiles reduce to nine decay rates that feed the contrast model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::imstats::{channel_mean, patch_contrast, PatchGrid};
use crate::render::{apply_noise, render, render_components, LookDir, NoiseParams, RenderComponents, SceneState};
use crate::rgb::Rgb;

/// Offset added before taking logarithms in [`summarize`].
pub const LOG_EPS: f64 = 1e-6;

/// Calibration profiles, immutable once assembled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfilesDoc", into = "ProfilesDoc")]
pub struct CalibProfiles {
    depth_grid: Vec<f64>,
    kz: Vec<Rgb>,
    dist_grid: Vec<f64>,
    kc_on: Vec<Rgb>,
    kc_off: Vec<Rgb>,
}

/// Decay rates (1/m) of the three profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibSummary {
    pub kz_decay: Rgb,
    pub kc_on_decay: Rgb,
    pub kc_off_decay: Rgb,
}

impl CalibSummary {
    /// Flattened in the order kz, kc_on, kc_off; channels r, g, b.
    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (i, v) in [self.kz_decay, self.kc_on_decay, self.kc_off_decay].iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(&v.to_array());
        }
        out
    }

    pub fn from_array(v: [f64; 9]) -> Self {
        CalibSummary {
            kz_decay: Rgb::new(v[0], v[1], v[2]),
            kc_on_decay: Rgb::new(v[3], v[4], v[5]),
            kc_off_decay: Rgb::new(v[6], v[7], v[8]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Kz,
    KcOn,
    KcOff,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Domain(format!("{name} needs at least 2 points")));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(format!("{name} must be finite and strictly increasing")));
    }
    Ok(())
}

fn check_values(name: &str, grid: &[f64], values: &[Rgb]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Domain(format!(
            "{name} has {} values for {} grid points",
            values.len(),
            grid.len()
        )));
    }
    if values.iter().any(|v| !v.is_physical()) {
        return Err(Error::Domain(format!("{name} values must be finite and >= 0")));
    }
    Ok(())
}

impl CalibProfiles {
    pub fn new(
        depth_grid: Vec<f64>,
        kz: Vec<Rgb>,
        dist_grid: Vec<f64>,
        kc_on: Vec<Rgb>,
        kc_off: Vec<Rgb>,
    ) -> Result<Self> {
        check_grid("depth grid", &depth_grid)?;
        check_grid("distance grid", &dist_grid)?;
        check_values("kz", &depth_grid, &kz)?;
        check_values("kc_on", &dist_grid, &kc_on)?;
        check_values("kc_off", &dist_grid, &kc_off)?;
        if (kz[0] - Rgb::ONE).max_component().abs() > 1e-12 || (kz[0] - Rgb::ONE).min_component().abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "kz must be (1, 1, 1) at the shallowest depth, got {:?}",
                kz[0].to_array()
            )));
        }
        Ok(CalibProfiles {
            depth_grid,
            kz,
            dist_grid,
            kc_on,
            kc_off,
        })
    }

    pub fn depth_grid(&self) -> &[f64] {
        &self.depth_grid
    }

    pub fn dist_grid(&self) -> &[f64] {
        &self.dist_grid
    }

    pub fn profile(&self, which: ProfileKind) -> (&[f64], &[Rgb]) {
        match which {
            ProfileKind::Kz => (&self.depth_grid, &self.kz),
            ProfileKind::KcOn => (&self.dist_grid, &self.kc_on),
            ProfileKind::KcOff => (&self.dist_grid, &self.kc_off),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("profiles to JSON: {e}")))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            origin: origin.into(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// On-disk layout; `summary` is written for readers and recomputed on load.
#[derive(Serialize, Deserialize)]
struct ProfilesDoc {
    depth_grid: Vec<f64>,
    kz: Vec<[f64; 3]>,
    dist_grid: Vec<f64>,
    kc_on: Vec<[f64; 3]>,
    kc_off: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<CalibSummary>,
}

impl TryFrom<ProfilesDoc> for CalibProfiles {
    type Error = Error;

    fn try_from(d: ProfilesDoc) -> Result<Self> {
        let rgb = |v: Vec<[f64; 3]>| v.into_iter().map(Rgb::from).collect();
        CalibProfiles::new(d.depth_grid, rgb(d.kz), d.dist_grid, rgb(d.kc_on), rgb(d.kc_off))
    }
}

impl From<CalibProfiles> for ProfilesDoc {
    fn from(p: CalibProfiles) -> Self {
        let summary = summarize(&p).ok();
        let arr = |v: Vec<Rgb>| v.into_iter().map(Rgb::to_array).collect();
        ProfilesDoc {
            depth_grid: p.depth_grid,
            kz: arr(p.kz),
            dist_grid: p.dist_grid,
            kc_on: arr(p.kc_on),
            kc_off: arr(p.kc_off),
            summary,
        }
    }
}

/// How calibration images are captured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSettings {
    pub spp: u32,
    pub seed: u64,
    pub noise: NoiseParams,
    /// Lamp intensity used for the lights-on contrast profile.
    pub light_on: f64,
}

impl Default for CalibSettings {
    fn default() -> Self {
        CalibSettings {
            spp: 8,
            seed: 1,
            noise: NoiseParams::camera(),
            light_on: 1.0,
        }
    }
}

/// Depth every 1 m from 0 to `operation_depth + 1`.
pub fn default_depth_grid(operation_depth: f64) -> Vec<f64> {
    let n = (operation_depth + 1.0).ceil().max(1.0) as usize;
    (0..=n).map(|i| i as f64).collect()
}

/// Distance every 0.5 m from 0.5 to `operation_distance + 1`.
pub fn default_distance_grid(operation_distance: f64) -> Vec<f64> {
    let n = ((operation_distance + 1.0) / 0.5).round().max(2.0) as usize;
    (1..=n).map(|i| 0.5 * i as f64).collect()
}

fn noisy(img: &ImageF, noise: &NoiseParams, seed: u64) -> Result<ImageF> {
    if noise.is_identity() {
        Ok(img.clone())
    } else {
        apply_noise(img, noise, seed)
    }
}

/// Channel-mean brightness looking up at each depth, relative to the
/// shallowest depth. The lamp is off.
pub fn run_depth_profile(
    scene_base: &SceneState,
    depths: &[f64],
    spp: u32,
    seed: u64,
    noise: &NoiseParams,
) -> Result<(Vec<f64>, Vec<Rgb>)> {
    check_grid("depth grid", depths)?;
    let mut scene = scene_base.clone();
    scene.look = LookDir::Up;
    scene.light = 0.0;
    scene.target = None;
    let means = depths
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let img = render(&scene.with_depth(z), spp, seed)?;
            channel_mean(&noisy(&img, noise, seed.wrapping_add(i as u64))?)
        })
        .collect::<Result<Vec<Rgb>>>()?;
    let reference = means[0];
    if reference.min_component() <= 0.0 {
        return Err(Error::DegenerateCalibration(format!(
            "zero brightness at the reference depth {} m: {:?}",
            depths[0],
            reference.to_array()
        )));
    }
    let kz = means.iter().map(|&m| m / reference).collect();
    Ok((depths.to_vec(), kz))
}

/// Patch contrast of the horizontal view at each distance, lamp at full
/// power or off.
pub fn run_contrast_profile(
    scene_base: &SceneState,
    distances: &[f64],
    lights_on: bool,
    spp: u32,
    seed: u64,
    noise: &NoiseParams,
) -> Result<(Vec<f64>, Vec<Rgb>)> {
    let (grid, on, off) = contrast_profiles(scene_base, distances, 1.0, spp, seed, noise)?;
    Ok((grid, if lights_on { on } else { off }))
}

/// Both contrast profiles from one set of renders.
fn contrast_profiles(
    scene_base: &SceneState,
    distances: &[f64],
    light_on: f64,
    spp: u32,
    seed: u64,
    noise: &NoiseParams,
) -> Result<(Vec<f64>, Vec<Rgb>, Vec<Rgb>)> {
    check_grid("distance grid", distances)?;
    let mut scene = scene_base.clone();
    scene.look = LookDir::Horizontal;
    let comps = distances
        .iter()
        .map(|&d| render_components(&scene.with_distance(d), spp, seed))
        .collect::<Result<Vec<_>>>()?;
    let (on, off) = contrast_from_components(&comps, light_on, seed, noise)?;
    Ok((distances.to_vec(), on, off))
}

/// Lights-on and lights-off patch contrast of already rendered
/// horizontal views, one per distance.
pub fn contrast_from_components(
    comps: &[RenderComponents],
    light_on: f64,
    seed: u64,
    noise: &NoiseParams,
) -> Result<(Vec<Rgb>, Vec<Rgb>)> {
    let mut on = Vec::with_capacity(comps.len());
    let mut off = Vec::with_capacity(comps.len());
    for (i, c) in comps.iter().enumerate() {
        for (light, out, salt) in [(light_on, &mut on, 0u64), (0.0, &mut off, 1u64)] {
            let img = noisy(&c.compose(light), noise, seed.wrapping_add(1000 + 2 * i as u64 + salt))?;
            let patches = PatchGrid::for_image(&img)?;
            out.push(patch_contrast(&img, &patches)?);
        }
    }
    Ok((on, off))
}

/// Full calibration with explicit grids. Contrast profiles are taken at
/// the depth of `scene_base`.
pub fn calibrate_on_grids(
    scene_base: &SceneState,
    depths: &[f64],
    distances: &[f64],
    settings: &CalibSettings,
) -> Result<CalibProfiles> {
    let (depth_grid, kz) = run_depth_profile(scene_base, depths, settings.spp, settings.seed, &settings.noise)?;
    let (dist_grid, kc_on, kc_off) = contrast_profiles(
        scene_base,
        distances,
        settings.light_on,
        settings.spp,
        settings.seed.wrapping_add(1),
        &settings.noise,
    )?;
    CalibProfiles::new(depth_grid, kz, dist_grid, kc_on, kc_off)
}

/// Calibration on the default grids around an operating point.
pub fn calibrate(
    scene_base: &SceneState,
    operation_depth: f64,
    operation_distance: f64,
    settings: &CalibSettings,
) -> Result<CalibProfiles> {
    calibrate_on_grids(
        scene_base,
        &default_depth_grid(operation_depth),
        &default_distance_grid(operation_distance),
        settings,
    )
}

/// Least-squares slope of `ln(v + eps)` against the grid, negated and
/// clamped at zero, per channel.
fn decay(grid: &[f64], values: &[Rgb], name: &str) -> Result<Rgb> {
    if grid.len() < 2 || grid.len() != values.len() {
        return Err(Error::DegenerateCalibration(format!("{name} needs at least 2 samples")));
    }
    if values.iter().all(|v| v.max_component() == 0.0) {
        return Err(Error::DegenerateCalibration(format!("{name} profile is all zero")));
    }
    let n = grid.len() as f64;
    let mean_x = grid.iter().sum::<f64>() / n;
    let sxx: f64 = grid.iter().map(|x| (x - mean_x).powi(2)).sum();
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let ys: Vec<f64> = values.iter().map(|v| (v.get(c) + LOG_EPS).ln()).collect();
        let mean_y = ys.iter().sum::<f64>() / n;
        let sxy: f64 = grid.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
        *slot = (-sxy / sxx).max(0.0);
    }
    Ok(Rgb::from(out))
}

pub fn summarize(profiles: &CalibProfiles) -> Result<CalibSummary> {
    Ok(CalibSummary {
        kz_decay: decay(&profiles.depth_grid, &profiles.kz, "kz")?,
        kc_on_decay: decay(&profiles.dist_grid, &profiles.kc_on, "kc_on")?,
        kc_off_decay: decay(&profiles.dist_grid, &profiles.kc_off, "kc_off")?,
    })
}

/// Linear interpolation of a profile; coordinates outside the calibrated
/// grid are rejected.
pub fn lookup(profiles: &CalibProfiles, which: ProfileKind, coord: f64) -> Result<Rgb> {
    let (grid, values) = profiles.profile(which);
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if !(coord >= lo && coord <= hi) {
        return Err(Error::Range(format!(
            "{which:?} lookup at {coord} m outside the calibrated range [{lo}, {hi}] m"
        )));
    }
    let i = grid.partition_point(|&g| g <= coord).clamp(1, grid.len() - 1);
    let (x0, x1) = (grid[i - 1], grid[i]);
    let t = (coord - x0) / (x1 - x0);
    Ok(values[i - 1] * (1.0 - t) + values[i] * t)
}
