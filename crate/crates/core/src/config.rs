//! TOML configuration for scenes. Scenario, sweep and training configs
//! live with their modules and reuse [`SceneConfig`].

use std::f64::consts::PI;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{BandRanges, WaterProps};
use crate::render::{
    Camera, LookDir, NoiseParams, PhaseFamily, SceneState, Spotlight, Target, TextureKind,
};
use crate::rgb::Rgb;

/// Mean cosine of the downwelling light field used by the backscatter
/// model of diffuse attenuation.
pub const DOWNWELLING_COSINE: f64 = 0.87;

/// How the ambient field attenuates with depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DiffuseModel {
    /// `K_d = a + b`.
    #[default]
    Beam,
    /// `K_d = (a + B b) / mu_d`: forward-scattered daylight keeps
    /// propagating downward, so only absorption and backscatter remove it.
    Backscatter,
}

impl DiffuseModel {
    pub fn kd(self, water: &WaterProps) -> Rgb {
        match self {
            DiffuseModel::Beam => water.attenuation(),
            DiffuseModel::Backscatter => {
                (water.absorption + water.scattering * water.backscatter_fraction) / DOWNWELLING_COSINE
            }
        }
    }
}

/// Water body: a bundled type or explicit coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterConfig {
    /// Bundled Jerlov type; ignored when both coefficients are given.
    pub water_type: String,
    pub absorption: Option<[f64; 3]>,
    pub scattering: Option<[f64; 3]>,
    pub backscatter_fraction: f64,
    pub particle_index: f64,
    pub phase: PhaseFamily,
    pub diffuse: DiffuseModel,
    /// Explicit diffuse attenuation, overriding `diffuse`.
    pub diffuse_attenuation: Option<[f64; 3]>,
    pub bands: BandRanges,
}

impl Default for WaterConfig {
    fn default() -> Self {
        WaterConfig {
            water_type: "JII".into(),
            absorption: None,
            scattering: None,
            backscatter_fraction: 0.0183,
            particle_index: 1.1,
            phase: PhaseFamily::Ff,
            diffuse: DiffuseModel::Beam,
            diffuse_attenuation: None,
            bands: BandRanges::default(),
        }
    }
}

impl WaterConfig {
    pub fn props(&self) -> Result<WaterProps> {
        match (self.absorption, self.scattering) {
            (Some(a), Some(b)) => WaterProps::new(
                Rgb::from(a),
                Rgb::from(b),
                self.backscatter_fraction,
                self.particle_index,
            ),
            (None, None) => WaterProps::from_water_type(
                &self.water_type,
                &self.bands,
                self.backscatter_fraction,
                self.particle_index,
            ),
            _ => Err(Error::Domain(
                "give both absorption and scattering, or neither".into(),
            )),
        }
    }

    pub fn kd(&self, water: &WaterProps) -> Rgb {
        self.diffuse_attenuation
            .map(Rgb::from)
            .unwrap_or_else(|| self.diffuse.kd(water))
    }
}

/// Everything that defines a render, in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub water: WaterConfig,
    pub depth: f64,
    pub distance: f64,
    pub light: f64,
    pub look: LookDir,
    pub texture: TextureKind,
    /// Metres; the target is absent when zero.
    pub target_extent: f64,
    pub target_offset: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub surface_irradiance: [f64; 3],
    pub spotlight: Spotlight,
    pub spp: u32,
    pub noise: NoiseParams,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let cam = Camera::desk();
        SceneConfig {
            water: WaterConfig::default(),
            depth: 5.0,
            distance: 1.0,
            light: 0.5,
            look: LookDir::Horizontal,
            texture: TextureKind::Seabed,
            target_extent: Target::new(TextureKind::Seabed).extent,
            target_offset: [0.0, 0.0],
            width: cam.width,
            height: cam.height,
            hfov_deg: cam.hfov.to_degrees(),
            surface_irradiance: [PI; 3],
            spotlight: Spotlight::default(),
            spp: 8,
            noise: NoiseParams::camera(),
        }
    }
}

impl SceneConfig {
    pub fn build(&self) -> Result<SceneState> {
        let water = self.water.props()?;
        let mut scene = SceneState::new(water, self.water.phase)?;
        scene.depth = self.depth;
        scene.distance = self.distance;
        scene.light = self.light;
        scene.look = self.look;
        scene.target = (self.target_extent > 0.0).then_some(Target {
            texture: self.texture,
            extent: self.target_extent,
            offset: self.target_offset,
        });
        scene.camera = Camera {
            hfov: self.hfov_deg.to_radians(),
            width: self.width,
            height: self.height,
        };
        scene.surface_irradiance = Rgb::from(self.surface_irradiance);
        scene.spotlight = self.spotlight;
        scene.diffuse_attenuation = Some(self.water.kd(&water));
        scene.validate()?;
        self.noise.validate()?;
        Ok(scene)
    }
}

pub fn from_toml<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Numeric(format!("config to TOML: {e}")))
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_toml(&text, &path.display().to_string())
}
