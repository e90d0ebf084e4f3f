//! Monte Carlo rendering of a camera viewing a planar target through
//! homogeneous scattering water.
//!
//! Two light sources contribute. Ambient daylight is a downwelling field
//! `L(z) = E0 exp(-K_d z) / pi`; its in-scatter and its reflection off the
//! target are integrated in closed form per camera ray. The spotlight is
//! path traced: equiangular sampling of in-scatter toward the lamp on every
//! segment, lamp sampling at target hits, free-flight continuation with
//! phase-function sampling, and diffuse bounces off the target.
//!
//! Light transport is linear in source power, so every render yields an
//! ambient image and a spotlight image at full power; any light level is
//! `ambient + l * spot` (see [`RenderComponents::compose`]).

pub mod cache;
pub mod noise;
pub mod texture;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::optics::WaterProps;
use crate::phase::{PhaseKind, PhaseSpec};
use crate::rgb::Rgb;

pub use noise::{apply_noise, NoiseParams};
pub use texture::TextureKind;

type V3 = Vector3<f64>;

/// Lamp power such that a white target 1 m away, lit at half power in the
/// clearest bundled water, images at about 0.5 in the green channel.
pub const LIGHT_POWER_MAX: f64 = 8.4;
/// Scattering events after which Russian roulette starts.
const ROULETTE_AFTER: u32 = 3;
const MAX_BOUNCES: u32 = 16;
/// In-scatter integrals stop where the beam has decayed to this fraction.
const FAR_TRANSMITTANCE: f64 = 1e-3;
/// Scattering by less than this angle (radians, 1 degree) is treated as
/// transmitted: such light lands within a few pixels of its unscattered
/// path, and keeping it out of the random walk removes the variance of
/// the phase-function peak.
pub const FORWARD_CUTOFF: f64 = 0.017_453_292_519_943_295;
/// Cap on a single multiply scattered lamp contribution (unit lamp power).
const INDIRECT_CLAMP: f64 = 1.0;
/// Width of the image-space filter applied to multiply scattered lamp
/// light, as a fraction of the image width. Narrower filters leave
/// residual blotches at feature-detector scales that differ between
/// frames and break matching.
const INDIRECT_FILTER_SIGMA: f64 = 0.04;
const PHI_TABLE_LEN: usize = 129;

pub const MIN_DISTANCE: f64 = 0.1;
pub const MAX_DISTANCE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookDir {
    /// Optical axis horizontal, facing the target.
    Horizontal,
    /// Optical axis vertical, facing the surface.
    Up,
}

/// Which phase-function family to build from a water body's `B` and `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseFamily {
    #[default]
    Ff,
    /// Henyey-Greenstein with the same backscatter fraction.
    Hg,
}

impl PhaseFamily {
    pub fn build(self, water: &WaterProps) -> Result<PhaseSpec> {
        let kind = match self {
            PhaseFamily::Ff => {
                PhaseKind::ff_from_backscatter(water.particle_index, water.backscatter_fraction)?
            }
            PhaseFamily::Hg => PhaseKind::hg_from_backscatter(water.backscatter_fraction)?,
        };
        PhaseSpec::new(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Horizontal field of view, radians.
    pub hfov: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            hfov: PI / 2.0,
            width: 1280,
            height: 720,
        }
    }
}

impl Camera {
    pub fn desk() -> Self {
        Camera {
            width: 320,
            height: 180,
            ..Camera::default()
        }
    }

    pub fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }
}

/// Lamp with a `cos^m` intensity profile around the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spotlight {
    /// Position relative to the camera as (right, up, forward), metres.
    pub offset: [f64; 3],
    pub exponent: f64,
    /// Radiant power at full intensity, per channel.
    pub power_max: Rgb,
    /// Size of the emitter, metres: radiant intensity falls off as
    /// `1 / (r^2 + radius^2)`.
    #[serde(default = "default_lamp_radius")]
    pub radius: f64,
}

fn default_lamp_radius() -> f64 {
    0.08
}

impl Default for Spotlight {
    fn default() -> Self {
        Spotlight {
            offset: [0.15, 0.0, 0.0],
            exponent: 2.0,
            power_max: Rgb::splat(LIGHT_POWER_MAX),
            radius: default_lamp_radius(),
        }
    }
}

/// Textured plane facing the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub texture: TextureKind,
    /// Side length of the square target, metres.
    pub extent: f64,
    /// Texture-space shift (along-track, vertical), metres.
    pub offset: [f64; 2],
}

impl Target {
    pub fn new(texture: TextureKind) -> Self {
        Target {
            texture,
            extent: 40.0,
            offset: [0.0, 0.0],
        }
    }
}

/// Everything needed for one render.
#[derive(Debug, Clone)]
pub struct SceneState {
    pub water: WaterProps,
    pub phase: Arc<PhaseSpec>,
    /// Camera depth below the surface, metres.
    pub depth: f64,
    /// Camera to target along the optical axis, metres.
    pub distance: f64,
    /// Lamp intensity as a fraction of `spotlight.power_max`.
    pub light: f64,
    pub spotlight: Spotlight,
    /// Downwelling irradiance just below the surface.
    pub surface_irradiance: Rgb,
    /// Diffuse attenuation of the ambient field; `a + b` when unset.
    pub diffuse_attenuation: Option<Rgb>,
    pub target: Option<Target>,
    pub camera: Camera,
    pub look: LookDir,
}

impl SceneState {
    /// Horizontal view of a seabed-textured target at 1 m, 5 m deep, lamp at
    /// half power, desk resolution.
    pub fn new(water: WaterProps, family: PhaseFamily) -> Result<Self> {
        let phase = Arc::new(family.build(&water)?);
        Ok(SceneState {
            water,
            phase,
            depth: 5.0,
            distance: 1.0,
            light: 0.5,
            spotlight: Spotlight::default(),
            surface_irradiance: Rgb::splat(PI),
            diffuse_attenuation: None,
            target: Some(Target::new(TextureKind::Seabed)),
            camera: Camera::desk(),
            look: LookDir::Horizontal,
        })
    }

    pub fn kd(&self) -> Rgb {
        self.diffuse_attenuation
            .unwrap_or_else(|| self.water.attenuation())
    }

    pub fn with_distance(&self, distance: f64) -> Self {
        SceneState {
            distance,
            ..self.clone()
        }
    }

    pub fn with_light(&self, light: f64) -> Self {
        SceneState {
            light,
            ..self.clone()
        }
    }

    pub fn with_depth(&self, depth: f64) -> Self {
        SceneState {
            depth,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.water.validate()?;
        if !(self.depth >= 0.0 && self.depth.is_finite()) {
            return Err(Error::Domain(format!("depth {} must be >= 0", self.depth)));
        }
        if !(MIN_DISTANCE..=MAX_DISTANCE).contains(&self.distance) {
            return Err(Error::Domain(format!(
                "distance {} outside [{MIN_DISTANCE}, {MAX_DISTANCE}] m",
                self.distance
            )));
        }
        if !(0.0..=1.0).contains(&self.light) {
            return Err(Error::Domain(format!("light intensity {} outside [0, 1]", self.light)));
        }
        let cam = &self.camera;
        if cam.width == 0 || cam.height == 0 {
            return Err(Error::Domain("camera resolution must be positive".into()));
        }
        if !(cam.hfov > 0.0 && cam.hfov < PI) {
            return Err(Error::Domain(format!("field of view {} outside (0, pi)", cam.hfov)));
        }
        if !self.surface_irradiance.is_physical() || !self.spotlight.power_max.is_physical() {
            return Err(Error::Domain("light sources must be finite and non-negative".into()));
        }
        if let Some(kd) = self.diffuse_attenuation {
            if !kd.is_physical() {
                return Err(Error::Domain("diffuse attenuation must be non-negative".into()));
            }
        }
        if !(self.spotlight.radius >= 0.0 && self.spotlight.radius.is_finite()) {
            return Err(Error::Domain("spotlight radius must be >= 0".into()));
        }
        if !(self.spotlight.exponent >= 0.0) {
            return Err(Error::Domain("spotlight exponent must be >= 0".into()));
        }
        if let Some(t) = &self.target {
            if !(t.extent > 0.0) {
                return Err(Error::Domain("target extent must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Ambient image and full-power spotlight image of the same scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderComponents {
    pub ambient: ImageF,
    pub spot: ImageF,
}

impl RenderComponents {
    /// Image at lamp intensity `light`.
    pub fn compose(&self, light: f64) -> ImageF {
        if light == 0.0 {
            return self.ambient.clone();
        }
        self.ambient
            .add_scaled(&self.spot, light)
            .expect("components share one size")
    }
}

/// Renders the scene at its own lamp intensity.
pub fn render(scene: &SceneState, spp: u32, seed: u64) -> Result<ImageF> {
    let with_spot = scene.light > 0.0;
    let comps = render_impl(scene, spp, seed, with_spot)?;
    Ok(comps.compose(if with_spot { scene.light } else { 0.0 }))
}

/// Renders both components; `scene.light` is ignored.
pub fn render_components(scene: &SceneState, spp: u32, seed: u64) -> Result<RenderComponents> {
    render_impl(scene, spp, seed, true)
}

/// Renders every (distance, light) combination. One pair of components
/// is traced per distance and shared across light levels.
pub fn render_grid(
    scene_base: &SceneState,
    distances: &[f64],
    lights: &[f64],
    spp: u32,
    seed: u64,
) -> Result<RenderGrid> {
    if distances.is_empty() || lights.is_empty() {
        return Err(Error::Domain("render grid needs distances and lights".into()));
    }
    for &l in lights {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::Domain(format!("light intensity {l} outside [0, 1]")));
        }
    }
    let mut images = BTreeMap::new();
    for &d in distances {
        let scene = scene_base.with_distance(d);
        let any_on = lights.iter().any(|&l| l > 0.0);
        let comps = render_impl(&scene, spp, seed, any_on)?;
        for &l in lights {
            images.insert(GridKey::new(d, l), comps.compose(l));
        }
    }
    Ok(RenderGrid { images })
}

/// Exact (bitwise) key of a render-grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridKey {
    distance_bits: u64,
    light_bits: u64,
}

impl GridKey {
    pub fn new(distance: f64, light: f64) -> Self {
        GridKey {
            distance_bits: distance.to_bits(),
            light_bits: light.to_bits(),
        }
    }

    pub fn distance(&self) -> f64 {
        f64::from_bits(self.distance_bits)
    }

    pub fn light(&self) -> f64 {
        f64::from_bits(self.light_bits)
    }
}

#[derive(Debug, Clone)]
pub struct RenderGrid {
    images: BTreeMap<GridKey, ImageF>,
}

impl RenderGrid {
    pub fn get(&self, distance: f64, light: f64) -> Option<&ImageF> {
        self.images.get(&GridKey::new(distance, light))
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (GridKey, &ImageF)> {
        self.images.iter().map(|(k, v)| (*k, v))
    }
}

fn render_impl(scene: &SceneState, spp: u32, seed: u64, with_spot: bool) -> Result<RenderComponents> {
    scene.validate()?;
    if spp == 0 {
        return Err(Error::Domain("spp must be at least 1".into()));
    }
    let tracer = Tracer::new(scene);
    let (w, h) = (scene.camera.width, scene.camera.height);
    let rows: Vec<Vec<PixelSums>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w);
            for x in 0..w {
                let idx = (y * w + x) as u64;
                let mut jitter = ChaCha8Rng::seed_from_u64(seed);
                jitter.set_stream(2 * idx);
                let mut mc = ChaCha8Rng::seed_from_u64(seed);
                mc.set_stream(2 * idx + 1);
                let mut px = PixelSums::default();
                for _ in 0..spp {
                    let (jx, jy): (f64, f64) = (jitter.random(), jitter.random());
                    let dir = tracer.camera_ray(x as f64 + jx, y as f64 + jy);
                    let hit = tracer.intersect_target(&tracer.cam_pos, &dir);
                    px.ambient += tracer.ambient(&dir, hit.as_ref());
                    if let Some(h) = &hit {
                        px.albedo += h.albedo;
                        px.hits += 1.0;
                    }
                    if with_spot {
                        let s = tracer.spot_path(dir, hit, &mut mc);
                        px.direct += s.direct;
                        px.bounce += s.bounce;
                        px.glow += s.glow;
                    }
                }
                row.push(px.scaled(1.0 / spp as f64));
            }
            row
        })
        .collect();
    let px: Vec<PixelSums> = rows.into_iter().flatten().collect();
    let ambient = px.iter().map(|p| p.ambient).collect();
    let spot = if with_spot {
        let sigma = INDIRECT_FILTER_SIGMA * w as f64;
        let hit_frac: Vec<f64> = px.iter().map(|p| p.hits).collect();
        let bounce = smooth(&px.iter().map(|p| p.bounce).collect::<Vec<_>>(), &hit_frac, w, h, sigma);
        let glow = smooth(&px.iter().map(|p| p.glow).collect::<Vec<_>>(), &vec![1.0; w * h], w, h, sigma);
        px.iter()
            .zip(bounce.iter().zip(&glow))
            .map(|(p, (b, g))| (p.direct + p.albedo * *b + *g) * tracer.power)
            .collect()
    } else {
        vec![Rgb::ZERO; w * h]
    };
    Ok(RenderComponents {
        ambient: ImageF::from_pixels(w, h, ambient)?,
        spot: ImageF::from_pixels(w, h, spot)?,
    })
}

/// Per-pixel sample sums.
#[derive(Debug, Clone, Copy, Default)]
struct PixelSums {
    ambient: Rgb,
    /// Primary-hit albedo summed over samples that hit the target.
    albedo: Rgb,
    hits: f64,
    direct: Rgb,
    /// Multiply scattered lamp light arriving at the primary hit, per unit
    /// albedo; summed over samples that hit the target.
    bounce: Rgb,
    glow: Rgb,
}

impl PixelSums {
    fn scaled(self, k: f64) -> Self {
        let bounce = if self.hits > 0.0 { self.bounce / self.hits } else { Rgb::ZERO };
        PixelSums {
            ambient: self.ambient * k,
            albedo: self.albedo * k,
            hits: self.hits * k,
            direct: self.direct * k,
            bounce,
            glow: self.glow * k,
        }
    }
}

/// Lamp radiance of one camera sample, split by how smooth it is across
/// the image.
#[derive(Debug, Clone, Copy, Default)]
struct SpotSample {
    /// Lamp light reflected at the primary hit plus single scattering
    /// along the camera ray.
    direct: Rgb,
    /// Light reaching the primary hit after scattering, per unit albedo.
    bounce: Rgb,
    /// Multiply scattered light along camera rays that scatter before
    /// reaching the target.
    glow: Rgb,
}

/// Gaussian filter weighted by `weight`, normalized by the filtered weight,
/// so pixels without support neither contribute nor get diluted.
fn smooth(values: &[Rgb], weight: &[f64], w: usize, h: usize, sigma: f64) -> Vec<Rgb> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[(Rgb, f64)], horizontal: bool| -> Vec<(Rgb, f64)> {
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                let mut acc = (Rgb::ZERO, 0.0);
                for (k, kv) in kernel.iter().enumerate() {
                    let o = k as isize - r;
                    let (xx, yy) = if horizontal { (x + o, y) } else { (x, y + o) };
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    let (v, wt) = src[yy as usize * w + xx as usize];
                    acc.0 += v * *kv;
                    acc.1 += wt * kv;
                }
                acc
            })
            .collect()
    };
    let weighted: Vec<(Rgb, f64)> = values.iter().zip(weight).map(|(v, &wt)| (*v * wt, wt)).collect();
    let out = pass(&pass(&weighted, true), false);
    out.into_iter()
        .map(|(v, wt)| if wt > 1e-12 { v / wt } else { Rgb::ZERO })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    point: V3,
    albedo: Rgb,
}

/// Per-render constants.
struct Tracer<'a> {
    scene: &'a SceneState,
    phase: &'a PhaseSpec,
    cam_pos: V3,
    forward: V3,
    right: V3,
    up: V3,
    half_w: f64,
    half_h: f64,
    inv_w: f64,
    inv_h: f64,
    spot_pos: V3,
    spot_norm: f64,
    /// Squared lamp radius added to squared lamp distances.
    soft2: f64,
    power: Rgb,
    /// Attenuation with forward scattering below the cutoff folded into
    /// transmission.
    c: Rgb,
    b: Rgb,
    c_mean: f64,
    /// Scattering coefficient of the random walk, `b` minus the part
    /// folded into transmission.
    b_walk: Rgb,
    /// Phase-function mass below `FORWARD_CUTOFF`.
    forward_kept: f64,
    cos_cutoff: f64,
    kd: Rgb,
    /// Downwelling radiance at the camera depth.
    l_cam: Rgb,
    t_far: f64,
    /// Fraction of ambient light scattered toward a viewer, tabulated over
    /// the vertical component of the propagation direction.
    phi: Vec<f64>,
}

impl<'a> Tracer<'a> {
    fn new(scene: &'a SceneState) -> Self {
        let cam = &scene.camera;
        let (forward, right, up) = match scene.look {
            LookDir::Horizontal => (V3::z(), V3::x(), V3::y()),
            LookDir::Up => (V3::y(), V3::x(), -V3::z()),
        };
        let half_w = (cam.hfov / 2.0).tan();
        let half_h = half_w / cam.aspect();
        let cam_pos = V3::zeros();
        let o = scene.spotlight.offset;
        let spot_pos = cam_pos + right * o[0] + up * o[1] + forward * o[2];
        let forward_kept = scene.phase.cdf(FORWARD_CUTOFF);
        let b_walk = scene.water.scattering * (1.0 - forward_kept);
        let c = scene.water.absorption + b_walk;
        let kd = scene.kd();
        let l_cam = scene.surface_irradiance * (kd * -scene.depth).exp() / PI;
        let t_far = (-FAR_TRANSMITTANCE.ln() / c.min_component()).min(200.0);
        Tracer {
            scene,
            phase: &scene.phase,
            cam_pos,
            forward,
            right,
            up,
            half_w,
            half_h,
            inv_w: 1.0 / cam.width as f64,
            inv_h: 1.0 / cam.height as f64,
            spot_pos,
            spot_norm: (scene.spotlight.exponent + 1.0) / (2.0 * PI),
            soft2: scene.spotlight.radius * scene.spotlight.radius,
            power: scene.spotlight.power_max,
            c,
            b: scene.water.scattering,
            c_mean: c.mean(),
            b_walk,
            forward_kept,
            cos_cutoff: FORWARD_CUTOFF.cos(),
            kd,
            l_cam,
            t_far,
            phi: ambient_phase_table(&scene.phase, FORWARD_CUTOFF),
        }
    }

    #[inline]
    fn camera_ray(&self, px: f64, py: f64) -> V3 {
        let sx = (2.0 * px * self.inv_w - 1.0) * self.half_w;
        let sy = (1.0 - 2.0 * py * self.inv_h) * self.half_h;
        (self.forward + self.right * sx + self.up * sy).normalize()
    }

    /// World height above the camera maps to depth `depth - y`.
    #[inline]
    fn depth_at(&self, p: &V3) -> f64 {
        (self.scene.depth - p.y).max(0.0)
    }

    #[inline]
    fn intersect_target(&self, origin: &V3, dir: &V3) -> Option<Hit> {
        let target = self.scene.target.as_ref()?;
        if self.scene.look != LookDir::Horizontal || dir.z <= 1e-12 {
            return None;
        }
        let t = (self.scene.distance - origin.z) / dir.z;
        if t <= 1e-9 {
            return None;
        }
        let p = origin + dir * t;
        let half = target.extent / 2.0;
        if p.x.abs() > half || p.y.abs() > half || p.y > self.scene.depth {
            return None;
        }
        let albedo = target
            .texture
            .albedo(p.x + target.offset[0], p.y + target.offset[1]);
        Some(Hit { t, point: p, albedo })
    }

    #[inline]
    fn phi(&self, wy: f64) -> f64 {
        let x = (wy.clamp(-1.0, 1.0) + 1.0) * 0.5 * (PHI_TABLE_LEN - 1) as f64;
        let i = (x.floor() as usize).min(PHI_TABLE_LEN - 2);
        let f = x - i as f64;
        self.phi[i] * (1.0 - f) + self.phi[i + 1] * f
    }

    /// Ambient radiance along a camera ray: closed-form in-scatter of the
    /// downwelling field plus the target's reflection of it.
    fn ambient(&self, dir: &V3, hit: Option<&Hit>) -> Rgb {
        if self.l_cam.max_component() == 0.0 {
            return Rgb::ZERO;
        }
        let vy = dir.y;
        // Light reaching the camera travels along -dir.
        let phi = self.phi(-vy);
        match hit {
            Some(h) => {
                let k = self.c - self.kd * vy;
                let integral = k.zip(Rgb::splat(h.t), |k, t| {
                    if k.abs() * t < 1e-8 {
                        t
                    } else {
                        -(-k * t).exp_m1() / k
                    }
                });
                let inscatter = self.b * phi * self.l_cam * integral;
                let l_target = self.scene.surface_irradiance
                    * (self.kd * -self.depth_at(&h.point)).exp()
                    / PI;
                let reflected = h.albedo * l_target * 0.5 * (self.c * -h.t).exp();
                inscatter + reflected
            }
            None => {
                let up = vy.max(0.0);
                let k = self.c - self.kd * vy.min(0.0);
                let far = self.b * phi / k;
                self.l_cam * (far * (1.0 - up) + Rgb::splat(up))
            }
        }
    }

    /// Lamp radiant intensity (unit power) toward `p`, with distance and
    /// direction from the lamp.
    #[inline]
    fn lamp(&self, p: &V3) -> Option<(f64, f64, V3)> {
        let to_p = p - self.spot_pos;
        let r2 = to_p.norm_squared();
        if r2 < 1e-12 {
            return None;
        }
        let r = r2.sqrt();
        let w = to_p / r;
        let cos_axis = w.dot(&self.forward);
        if cos_axis <= 0.0 {
            return None;
        }
        let m = self.scene.spotlight.exponent;
        let falloff = if m == 2.0 { cos_axis * cos_axis } else { cos_axis.powf(m) };
        let i = self.spot_norm * falloff;
        Some((i, r, w))
    }

    /// Radiance leaving a target point toward the camera side, lit by the lamp.
    #[inline]
    fn target_direct(&self, h: &Hit) -> Rgb {
        match self.lamp(&h.point) {
            Some((i, r, w)) => {
                // Target normal is -z and `w` points from the lamp to the target.
                let cos_t = w.z.max(0.0);
                h.albedo * (i * cos_t / ((r * r + self.soft2) * PI)) * (self.c * -r).exp()
            }
            None => Rgb::ZERO,
        }
    }

    /// Single scattering of lamp light on the segment `[0, t_end]`,
    /// sampled proportionally to the softened inverse squared lamp distance.
    fn segment_inscatter(&self, origin: &V3, dir: &V3, t_end: f64, rng: &mut ChaCha8Rng) -> Rgb {
        let t0 = (self.spot_pos - origin).dot(dir);
        let closest = origin + dir * t0;
        let h2 = (self.spot_pos - closest).norm_squared() + self.soft2;
        let hdist = h2.sqrt().max(1e-9);
        let th_a = ((0.0 - t0) / hdist).atan();
        let th_b = ((t_end - t0) / hdist).atan();
        if th_b - th_a < 1e-12 {
            return Rgb::ZERO;
        }
        let u: f64 = rng.random();
        let s = t0 + hdist * (th_a + u * (th_b - th_a)).tan();
        let s = s.clamp(0.0, t_end);
        // pdf(s) = hdist / ((th_b - th_a) * soft_r2), so the ratio below
        // keeps only the bounded angular span.
        let x = origin + dir * s;
        let Some((i, r, w)) = self.lamp(&x) else {
            return Rgb::ZERO;
        };
        let cos_psi = -w.dot(dir);
        if cos_psi > self.cos_cutoff {
            return Rgb::ZERO;
        }
        let p = self.phase.eval_cos(cos_psi);
        self.b * (p * i * (th_b - th_a) / hdist) * (self.c * -(s + r)).exp()
    }

    fn spot_path(&self, mut dir: V3, first_hit: Option<Hit>, rng: &mut ChaCha8Rng) -> SpotSample {
        let mut out = SpotSample::default();
        let mut origin = self.cam_pos;
        let mut hit = first_hit;
        let mut throughput = Rgb::ONE;
        let mut events = 0u32;
        // Set once the path leaves the primary hit; its albedo is applied
        // per pixel after filtering.
        let mut via_target = false;
        loop {
            let t_end = hit.map_or(self.t_far, |h| h.t);
            let mut gained = throughput * self.segment_inscatter(&origin, &dir, t_end, rng);
            if let Some(h) = &hit {
                gained += throughput * (self.c * -h.t).exp() * self.target_direct(h);
            }
            if events == 0 {
                out.direct += gained;
            } else {
                let capped = gained.map(|v| v.min(INDIRECT_CLAMP));
                if via_target {
                    out.bounce += capped;
                } else {
                    out.glow += capped;
                }
            }
            if events >= MAX_BOUNCES {
                break;
            }
            let u: f64 = rng.random();
            let s = -(1.0 - u).ln() / self.c_mean;
            if s < t_end {
                let ratio = (self.c * -s).exp() / (-self.c_mean * s).exp();
                throughput = throughput * self.b_walk * ratio / self.c_mean;
                origin += dir * s;
                let u: f64 = rng.random();
                let psi = self.phase.sample_angle(self.forward_kept + u * (1.0 - self.forward_kept));
                let azimuth = 2.0 * PI * rng.random::<f64>();
                dir = rotate(&dir, psi, azimuth);
            } else if let Some(h) = hit {
                let ratio = (self.c * -h.t).exp() / (-self.c_mean * h.t).exp();
                if events == 0 {
                    via_target = true;
                    throughput = throughput * ratio;
                } else {
                    throughput = throughput * ratio * h.albedo;
                }
                origin = h.point;
                dir = cosine_hemisphere(&-V3::z(), rng);
            } else {
                break;
            }
            events += 1;
            if events > ROULETTE_AFTER {
                let q = throughput.max_component().min(0.95);
                if q <= 0.0 || rng.random::<f64>() >= q {
                    break;
                }
                throughput = throughput / q;
            }
            hit = self.intersect_target(&origin, &dir);
        }
        out
    }
}

/// `phi(w_y)`: integral of the phase function over incoming directions that
/// point downward, for light leaving along a direction with vertical
/// component `w_y`.
fn ambient_phase_table(phase: &PhaseSpec, cutoff: f64) -> Vec<f64> {
    let f_cut = phase.cdf(cutoff);
    let rows: Vec<(f64, f64)> = phase
        .cdf_table()
        .filter(|&(a, _)| a > cutoff)
        .fold(vec![(cutoff, f_cut)], |mut v, r| {
            v.push(r);
            v
        });
    (0..PHI_TABLE_LEN)
        .map(|i| {
            let wy = -1.0 + 2.0 * i as f64 / (PHI_TABLE_LEN - 1) as f64;
            let s = (1.0 - wy * wy).max(0.0).sqrt();
            rows.windows(2)
                .map(|w| {
                    let (a0, f0) = w[0];
                    let (a1, f1) = w[1];
                    let psi = 0.5 * (a0 + a1);
                    (f1 - f0) * downward_fraction(wy, s, psi)
                })
                .sum()
        })
        .collect()
}

/// Fraction of the cone of half-angle `psi` around a direction with
/// vertical component `wy` (horizontal magnitude `s`) that points downward.
fn downward_fraction(wy: f64, s: f64, psi: f64) -> f64 {
    let (sp, cp) = psi.sin_cos();
    if s * sp < 1e-12 {
        return if cp * wy < 0.0 { 1.0 } else if cp * wy > 0.0 { 0.0 } else { 0.5 };
    }
    let x = (-cp * wy / (s * sp)).clamp(-1.0, 1.0);
    1.0 - x.acos() / PI
}

/// Orthonormal basis around a unit vector.
#[inline]
fn basis(n: &V3) -> (V3, V3) {
    let sign = 1f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        V3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        V3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

#[inline]
fn rotate(dir: &V3, psi: f64, azimuth: f64) -> V3 {
    let (t, bt) = basis(dir);
    let (sp, cp) = psi.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    (dir * cp + (t * ca + bt * sa) * sp).normalize()
}

fn cosine_hemisphere(normal: &V3, rng: &mut ChaCha8Rng) -> V3 {
    let (u1, u2): (f64, f64) = (rng.random(), rng.random());
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let (t, bt) = basis(normal);
    (t * (r * phi.cos()) + bt * (r * phi.sin()) + normal * (1.0 - u1).max(0.0).sqrt()).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::BandRanges;

    fn water(a: Rgb, b: Rgb) -> WaterProps {
        WaterProps::new(a, b, 0.0183, 1.1).unwrap()
    }

    fn small(mut s: SceneState) -> SceneState {
        s.camera = Camera {
            hfov: PI / 2.0,
            width: 48,
            height: 27,
        };
        s
    }

    #[test]
    fn basis_is_orthonormal() {
        for d in [V3::x(), V3::y(), -V3::z(), V3::new(0.3, -0.4, 0.5).normalize()] {
            let (t, b) = basis(&d);
            assert!(t.dot(&d).abs() < 1e-12 && b.dot(&d).abs() < 1e-12 && t.dot(&b).abs() < 1e-12);
            assert!((t.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
        }
        let r = rotate(&V3::z(), 0.3, 1.0);
        assert!((r.dot(&V3::z()) - 0.3f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn ambient_phase_fraction_limits() {
        let spec = PhaseSpec::new(PhaseKind::Hg { g: 0.0 }).unwrap();
        let t = ambient_phase_table(&spec, 0.0);
        // Isotropic scattering: half of all incoming directions point down.
        for v in &t {
            assert!((v - 0.5).abs() < 1e-3, "{v}");
        }
        let ff = PhaseSpec::new(PhaseKind::ff_from_backscatter(1.1, 0.0183).unwrap()).unwrap();
        let t = ambient_phase_table(&ff, 0.0);
        assert!((t[0] - (1.0 - 0.0183)).abs() < 5e-3, "{}", t[0]);
        assert!((t[PHI_TABLE_LEN - 1] - 0.0183).abs() < 5e-3);
        assert!((t[PHI_TABLE_LEN / 2] - 0.5).abs() < 1e-3);
        // The cutoff removes the forward mass from the light travelling down.
        let cut = ambient_phase_table(&ff, FORWARD_CUTOFF);
        let kept = ff.cdf(FORWARD_CUTOFF);
        assert!((t[0] - cut[0] - kept).abs() < 1e-3, "{} {} {kept}", t[0], cut[0]);
        assert!((t[PHI_TABLE_LEN - 1] - cut[PHI_TABLE_LEN - 1]).abs() < 1e-9);
    }

    #[test]
    fn beer_lambert_without_scattering() {
        let a = Rgb::new(0.4, 0.1, 0.05);
        let mut s = small(SceneState::new(water(a, Rgb::ZERO), PhaseFamily::Ff).unwrap());
        s.target = Some(Target::new(TextureKind::White));
        s.light = 0.0;
        s.distance = 2.0;
        s.diffuse_attenuation = Some(Rgb::ZERO);
        let img = render(&s, 64, 1).unwrap();
        let tr = Tracer::new(&s);
        let l_amb = s.surface_irradiance / PI * 0.5;
        for (y, x) in [(13, 24), (0, 0), (26, 47), (5, 30)] {
            let dir = tr.camera_ray(x as f64 + 0.5, y as f64 + 0.5);
            let r = s.distance / dir.z;
            let expect = l_amb * (a * -r).exp();
            let got = img.get(x, y);
            for ch in 0..3 {
                let rel = (got.get(ch) - expect.get(ch)).abs() / expect.get(ch);
                // Pixel-footprint averaging of path length stays well under 2%.
                assert!(rel < 0.02, "({x},{y}) ch{ch}: {got:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let w = WaterProps::from_water_type("JIII", &BandRanges::default(), 0.0183, 1.1).unwrap();
        let s = small(SceneState::new(w, PhaseFamily::Ff).unwrap());
        let a = render(&s, 4, 7).unwrap();
        assert_eq!(a, render(&s, 4, 7).unwrap());
        assert_ne!(a, render(&s, 4, 8).unwrap());
        assert!(a.is_valid());
    }

    #[test]
    fn components_compose_to_render() {
        let w = WaterProps::from_water_type("JII", &BandRanges::default(), 0.0183, 1.1).unwrap();
        let s = small(SceneState::new(w, PhaseFamily::Ff).unwrap()).with_light(0.75);
        let direct = render(&s, 3, 5).unwrap();
        let comps = render_components(&s, 3, 5).unwrap();
        let composed = comps.compose(0.75);
        for (p, q) in direct.pixels().iter().zip(composed.pixels()) {
            assert!((*p - *q).max_component().abs() < 1e-12);
        }
        // Lights off needs no path tracing and matches the ambient image.
        assert_eq!(render(&s.with_light(0.0), 3, 5).unwrap(), comps.ambient);
    }

    #[test]
    fn depth_law_looking_up() {
        let w = WaterProps::from_water_type("JIB", &BandRanges::default(), 0.0183, 1.1).unwrap();
        let mut s = small(SceneState::new(w, PhaseFamily::Ff).unwrap());
        s.look = LookDir::Up;
        s.target = None;
        s.light = 0.0;
        let mean = |img: &ImageF| img.pixels().iter().fold(Rgb::ZERO, |a, &p| a + p) / img.len() as f64;
        let m1 = mean(&render(&s.with_depth(2.0), 16, 1).unwrap());
        let m2 = mean(&render(&s.with_depth(5.0), 16, 1).unwrap());
        let expect = (s.kd() * -3.0).exp();
        for ch in 0..3 {
            let ratio = m2.get(ch) / m1.get(ch);
            assert!((ratio / expect.get(ch) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lamp_calibration_mid_gray() {
        let w = WaterProps::from_water_type("JI", &BandRanges::default(), 0.0183, 1.1).unwrap();
        let mut s = SceneState::new(w, PhaseFamily::Ff).unwrap();
        s.camera = Camera {
            hfov: PI / 2.0,
            width: 33,
            height: 19,
        };
        s.target = Some(Target::new(TextureKind::White));
        s.surface_irradiance = Rgb::ZERO;
        s.distance = 1.0;
        s.light = 0.5;
        let img = render(&s, 64, 3).unwrap();
        let g = img.get(16, 9).g;
        assert!((g - 0.5).abs() < 0.05, "{g}");
    }

    #[test]
    fn grid_shares_components() {
        let w = WaterProps::from_water_type("JIB", &BandRanges::default(), 0.0183, 1.1).unwrap();
        let s = small(SceneState::new(w, PhaseFamily::Ff).unwrap());
        let d = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
        let l = [0.0, 0.25, 0.5, 1.0];
        let grid = render_grid(&s, &d, &l, 1, 4).unwrap();
        assert_eq!(grid.len(), 24);
        let direct = render(&s.with_distance(1.5).with_light(0.5), 1, 4).unwrap();
        let cached = grid.get(1.5, 0.5).unwrap();
        for (p, q) in direct.pixels().iter().zip(cached.pixels()) {
            assert!((*p - *q).max_component().abs() < 1e-12);
        }
        assert!(grid.get(1.2, 0.5).is_none());
    }

    #[test]
    fn invalid_scenes_rejected() {
        let w = water(Rgb::splat(0.1), Rgb::splat(0.1));
        let s = SceneState::new(w, PhaseFamily::Hg).unwrap();
        assert!(render(&s.with_distance(0.05), 1, 0).is_err());
        assert!(render(&s.with_light(1.5), 1, 0).is_err());
        assert!(render(&s, 0, 0).is_err());
    }
}
