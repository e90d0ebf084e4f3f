//! Simulated inspection runs: a vehicle follows a lawnmower pattern past a
//! textured wall, a policy picks distance and light at every waypoint, and
//! consecutive frames are matched to measure what a mapping pipeline would
//! get out of them.

pub mod report;

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calib::{self, summarize, CalibProfiles, CalibSettings, CalibSummary};
use crate::config::SceneConfig;
use crate::error::{Error, Result};
use crate::guide::{suggest, GuideContext, GuideParams, OptConfig};
use crate::image::ImageF;
use crate::imstats::{coverage_area, match_consecutive, mean_gradient_y, patch_contrast, FeatureConfig, MatchReport, PatchGrid};
use crate::learn::{ContrastModel, VehicleState};
use crate::render::cache::{write_pfm_atomic, Fnv64};
use crate::render::{apply_noise, render_components, LookDir, NoiseParams, SceneState};
use crate::rgb::Rgb;

pub use report::{aggregate, compare_report, PolicySummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Water, camera, lamp and noise; `depth` is where calibration
    /// contrast profiles are taken.
    pub scene: SceneConfig,
    pub leg_depths: Vec<f64>,
    pub waypoints_per_leg: usize,
    /// Along-track spacing of waypoints, metres.
    pub step: f64,
    pub distances: Vec<f64>,
    pub lights: Vec<f64>,
    /// Distance and light before the first waypoint.
    pub start: [f64; 2],
    /// Frames with at least this many inliers count as usable.
    pub usable_inliers: usize,
    pub features: FeatureConfig,
    pub guide: GuideParams,
    pub optimizer: OptConfig,
    pub calibration: CalibSettings,
    /// Calibrated distances reach this plus 1 m.
    pub operation_distance: f64,
    pub gradient_gain: f64,
    /// The gradient baseline holds the Sobel response of a frame taken
    /// at this distance.
    pub gradient_reference_distance: f64,
    /// Contrast model for the proposed policy, relative to the scenario file.
    pub model: Option<PathBuf>,
    /// Precomputed profiles; calibrated on the fly when absent.
    pub profiles: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            scene: SceneConfig::default(),
            leg_depths: vec![2.0, 3.0, 4.0, 5.0],
            waypoints_per_leg: 10,
            step: 0.5,
            distances: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            lights: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            start: [1.0, 0.5],
            usable_inliers: 12,
            features: FeatureConfig::default(),
            guide: GuideParams::default(),
            optimizer: OptConfig::default(),
            calibration: CalibSettings::default(),
            operation_distance: 2.0,
            gradient_gain: 0.5,
            gradient_reference_distance: 1.0,
            model: None,
            profiles: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Domain(format!("scenario name {:?} must be [A-Za-z0-9_-]+", self.name)));
        }
        if self.leg_depths.is_empty() || self.leg_depths.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::Domain("legs need positive depths".into()));
        }
        if self.waypoints_per_leg == 0 || !(self.step > 0.0) {
            return Err(Error::Domain("legs need waypoints and a positive step".into()));
        }
        let sorted = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[1] > w[0]);
        if !sorted(&self.distances) || self.distances[0] <= 0.0 {
            return Err(Error::Domain("lattice distances must be positive and increasing".into()));
        }
        if !sorted(&self.lights) || self.lights[0] < 0.0 || self.lights[self.lights.len() - 1] > 1.0 {
            return Err(Error::Domain("lattice lights must be increasing within [0, 1]".into()));
        }
        if !(self.gradient_gain > 0.0 && self.gradient_reference_distance > 0.0) {
            return Err(Error::Domain("gradient baseline needs positive gain and reference".into()));
        }
        self.guide.validate()
    }

    pub fn scene_state(&self) -> Result<SceneState> {
        let mut cfg = self.scene.clone();
        cfg.look = LookDir::Horizontal;
        cfg.build()
    }

    /// Short identifier for cache paths: name plus a digest of the config.
    pub fn cache_id(&self, seed: u64) -> Result<String> {
        let mut h = Fnv64::default();
        let text = serde_json::to_string(&(&self.scene, &self.leg_depths, self.step))
            .map_err(|e| Error::Numeric(format!("scenario digest: {e}")))?;
        std::hash::Hasher::write(&mut h, text.as_bytes());
        std::hash::Hasher::write_u64(&mut h, seed);
        Ok(format!("{}_{:08x}", self.name, std::hash::Hasher::finish(&h) as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub leg: usize,
    pub index: usize,
    /// Along-track position, metres.
    pub x: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationPlan {
    pub scenario: String,
    pub waypoints: Vec<Waypoint>,
    pub step: f64,
    pub distances: Vec<f64>,
    pub lights: Vec<f64>,
}

impl OperationPlan {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let waypoints = cfg
            .leg_depths
            .iter()
            .enumerate()
            .flat_map(|(leg, &depth)| {
                (0..cfg.waypoints_per_leg).map(move |i| Waypoint {
                    leg,
                    index: i,
                    // Alternate legs run back along the same wall.
                    x: if leg % 2 == 0 { i as f64 } else { (cfg.waypoints_per_leg - 1 - i) as f64 } * cfg.step,
                    depth,
                })
            })
            .collect();
        Ok(OperationPlan {
            scenario: cfg.name.clone(),
            waypoints,
            step: cfg.step,
            distances: cfg.distances.clone(),
            lights: cfg.lights.clone(),
        })
    }

    /// Position of the frame taken just before a leg's first waypoint.
    pub fn approach(&self, leg: usize) -> Waypoint {
        let first = self.waypoints.iter().find(|w| w.leg == leg && w.index == 0).expect("leg exists");
        let dir = if leg % 2 == 0 { -1.0 } else { 1.0 };
        Waypoint {
            x: first.x + dir * self.step,
            ..*first
        }
    }

    /// Nearest lattice point; ties go to the smaller value.
    pub fn snap(&self, d: f64, l: f64) -> (f64, f64) {
        (nearest(&self.distances, d), nearest(&self.lights, l))
    }
}

fn nearest(grid: &[f64], v: f64) -> f64 {
    let mut best = grid[0];
    for &g in grid {
        if (g - v).abs() < (best - v).abs() {
            best = g;
        }
    }
    best
}

/// Rendered frames on the (waypoint, distance, light) lattice, cached on
/// disk noise-free as `<root>/<scenario>/leg<k>/x<position>/<d>_<l>.pfm`.
/// Sensor noise is drawn per frame from a seed fixed by its coordinates.
pub struct Lattice {
    scene: SceneState,
    noise: NoiseParams,
    spp: u32,
    seed: u64,
    lights: Vec<f64>,
    dir: Option<PathBuf>,
    memory: RefCell<HashMap<(u64, u64, u64, u64), ImageF>>,
}

fn frame_name(d: f64, l: f64) -> String {
    format!("{d:.2}_{l:.2}.pfm")
}

impl Lattice {
    pub fn new(cfg: &ScenarioConfig, seed: u64, cache_root: Option<&Path>) -> Result<Self> {
        let dir = match cache_root {
            Some(r) => Some(r.join(cfg.cache_id(seed)?)),
            None => None,
        };
        Ok(Lattice {
            scene: cfg.scene_state()?,
            noise: cfg.scene.noise,
            spp: cfg.scene.spp,
            seed,
            lights: cfg.lights.clone(),
            dir,
            memory: RefCell::new(HashMap::new()),
        })
    }

    fn scene_at(&self, wp: &Waypoint, d: f64) -> SceneState {
        let mut s = self.scene.with_depth(wp.depth).with_distance(d);
        if let Some(t) = &mut s.target {
            // Legs at different depths image different rows of the wall.
            t.offset = [wp.x, -wp.depth];
        }
        s
    }

    fn render_seed(&self, wp: &Waypoint, d: f64) -> u64 {
        let mut h = Fnv64::default();
        for v in [self.seed, wp.leg as u64, wp.x.to_bits(), wp.depth.to_bits(), d.to_bits()] {
            std::hash::Hasher::write_u64(&mut h, v);
        }
        std::hash::Hasher::finish(&h)
    }

    fn noise_free(&self, wp: &Waypoint, d: f64, l: f64) -> Result<ImageF> {
        let key = (wp.leg as u64, wp.x.to_bits(), d.to_bits(), l.to_bits());
        if let Some(img) = self.memory.borrow().get(&key) {
            return Ok(img.clone());
        }
        let scene = self.scene_at(wp, d);
        let seed = self.render_seed(wp, d);
        let folder = self.dir.as_ref().map(|root| {
            root.join(format!("leg{}", wp.leg)).join(format!("x{:+.2}", wp.x))
        });
        let mut wanted = self.lights.clone();
        if !wanted.contains(&l) {
            wanted.push(l);
        }
        let cached = folder.as_ref().and_then(|f| {
            wanted
                .iter()
                .map(|&li| ImageF::read_pfm(&f.join(frame_name(d, li))).ok().map(|img| (li, img)))
                .collect::<Option<Vec<_>>>()
        });
        let frames = match cached {
            Some(frames) => frames,
            None => {
                let comps = render_components(&scene, self.spp, seed)?;
                let mut frames = Vec::with_capacity(wanted.len());
                for &li in &wanted {
                    let mut img = comps.compose(li);
                    img.quantize_f32();
                    if let Some(f) = &folder {
                        write_pfm_atomic(&img, &f.join(frame_name(d, li)))?;
                    }
                    frames.push((li, img));
                }
                frames
            }
        };
        let mut mem = self.memory.borrow_mut();
        for (li, img) in frames {
            mem.insert((wp.leg as u64, wp.x.to_bits(), d.to_bits(), li.to_bits()), img);
        }
        Ok(mem[&key].clone())
    }

    /// Noisy camera frame at a waypoint.
    pub fn frame(&self, wp: &Waypoint, d: f64, l: f64) -> Result<ImageF> {
        let img = self.noise_free(wp, d, l)?;
        let seed = self.render_seed(wp, d) ^ l.to_bits().rotate_left(17) ^ 0xF7A3E;
        apply_noise(&img, &self.noise, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Model-based suggestions.
    Proposed,
    Fixed { distance: f64, light: f64 },
    /// Proportional control of the mean Sobel response.
    Gradient,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Proposed => f.write_str("proposed"),
            Policy::Fixed { distance, light } => write!(f, "fixed:{distance}:{light}"),
            Policy::Gradient => f.write_str("gradient"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("unknown policy {s:?} (proposed, fixed:<d>:<l>, gradient)"));
        match s.split(':').collect::<Vec<_>>().as_slice() {
            ["proposed"] => Ok(Policy::Proposed),
            ["gradient"] => Ok(Policy::Gradient),
            ["fixed", d, l] => {
                let distance: f64 = d.parse().map_err(|_| bad())?;
                let light: f64 = l.parse().map_err(|_| bad())?;
                if !(distance > 0.0) || !(0.0..=1.0).contains(&light) {
                    return Err(bad());
                }
                Ok(Policy::Fixed { distance, light })
            }
            _ => Err(bad()),
        }
    }
}

impl Policy {
    /// File-name friendly label.
    pub fn slug(&self) -> String {
        self.to_string().replace(':', "_")
    }
}

/// One proportional step of the gradient baseline: move away when the
/// image has more detail than the target, closer when it has less. The
/// relative error is capped at 1, so one step changes `d` by at most
/// `gain * d`.
pub fn gradient_policy_step(measured: f64, target: f64, gain: f64, d: f64, d_bounds: (f64, f64)) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::Domain(format!("target gradient {target} must be positive")));
    }
    let err = ((measured - target) / target).clamp(-1.0, 1.0);
    Ok((d * (1.0 + gain * err)).clamp(d_bounds.0, d_bounds.1))
}

/// Shared inputs of the proposed policy.
pub struct Guidance<'a> {
    pub model: &'a ContrastModel,
    pub profiles: &'a CalibProfiles,
    pub summary: CalibSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub leg: usize,
    pub waypoint: usize,
    pub x: f64,
    pub depth: f64,
    /// Policy output before snapping to the lattice.
    pub desired_d: f64,
    pub desired_l: f64,
    pub d: f64,
    pub l: f64,
    pub matches: MatchReport,
    pub usable: bool,
    pub coverage: f64,
    pub contrast: Rgb,
    pub gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    pub policy: Policy,
    pub steps: Vec<StepRecord>,
}

/// Runs one policy over the plan. Each waypoint's decision sees only the
/// previous frame; the first waypoint of a leg follows an approach frame
/// taken one step earlier with the previous settings.
pub fn run_policy(
    cfg: &ScenarioConfig,
    plan: &OperationPlan,
    lattice: &Lattice,
    policy: Policy,
    guidance: Option<&Guidance>,
) -> Result<PolicyTrace> {
    let (d_lo, d_hi) = (plan.distances[0], plan.distances[plan.distances.len() - 1]);
    let params = GuideParams {
        d_min: cfg.guide.d_min.max(d_lo),
        d_max: cfg.guide.d_max.min(d_hi),
        ..cfg.guide
    };
    let gradient_target = match policy {
        Policy::Gradient => {
            let first = plan.approach(0);
            let (d_ref, l_ref) = plan.snap(cfg.gradient_reference_distance, cfg.start[1]);
            let reference = lattice.frame(&first, d_ref, l_ref)?;
            Some(mean_gradient_y(&reference)?)
        }
        _ => None,
    };
    let (mut d, mut l) = match policy {
        Policy::Fixed { distance, light } => plan.snap(distance, light),
        _ => plan.snap(cfg.start[0], cfg.start[1]),
    };
    let camera = lattice.scene.camera;
    // The gradient controller integrates its command, so it keeps the
    // unsnapped distance between steps; the frame comes from the lattice.
    let mut commanded = d;
    let mut steps = Vec::with_capacity(plan.waypoints.len());
    let mut prev: Option<ImageF> = None;
    for wp in &plan.waypoints {
        if wp.index == 0 {
            prev = Some(lattice.frame(&plan.approach(wp.leg), d, l)?);
        }
        let last = prev.as_ref().expect("approach frame rendered");
        let (desired_d, desired_l) = match policy {
            Policy::Fixed { distance, light } => (distance, light),
            Policy::Gradient => {
                let g = mean_gradient_y(last)?;
                let target = gradient_target.expect("computed for the gradient policy");
                commanded = gradient_policy_step(g, target, cfg.gradient_gain, commanded, (d_lo, d_hi))?;
                (commanded, l)
            }
            Policy::Proposed => {
                let g = guidance.ok_or_else(|| Error::Domain("the proposed policy needs a model and profiles".into()))?;
                let state = VehicleState::from_image(last, d, l, wp.depth)?;
                let ctx = GuideContext {
                    state: &state,
                    summary: &g.summary,
                    profiles: g.profiles,
                    model: g.model,
                    params: &params,
                };
                let s = suggest(&ctx, &cfg.optimizer)?;
                (d + s.delta_d, l + s.delta_l)
            }
        };
        (d, l) = plan.snap(desired_d, desired_l);
        let img = lattice.frame(wp, d, l)?;
        let matches = match_consecutive(last, &img, &cfg.features)?;
        let usable = matches.n_inliers >= cfg.usable_inliers;
        steps.push(StepRecord {
            leg: wp.leg,
            waypoint: wp.index,
            x: wp.x,
            depth: wp.depth,
            desired_d,
            desired_l,
            d,
            l,
            matches,
            usable,
            coverage: coverage_area(d, camera.hfov, camera.aspect(), usable)?,
            contrast: patch_contrast(&img, &PatchGrid::for_image(&img)?)?,
            gradient: mean_gradient_y(&img)?,
        });
        prev = Some(img);
    }
    Ok(PolicyTrace { policy, steps })
}

/// Profiles for a scenario: loaded when configured, otherwise measured in
/// the scenario's water at `scene.depth`.
pub fn scenario_profiles(cfg: &ScenarioConfig, base_dir: &Path, seed: u64) -> Result<CalibProfiles> {
    if let Some(p) = &cfg.profiles {
        return CalibProfiles::load(&base_dir.join(p));
    }
    let max_depth = cfg.leg_depths.iter().copied().fold(cfg.scene.depth, f64::max);
    let settings = CalibSettings {
        seed: cfg.calibration.seed ^ seed,
        ..cfg.calibration
    };
    calib::calibrate(&cfg.scene_state()?, max_depth, cfg.operation_distance, &settings)
}

/// Everything a simulate run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub traces: Vec<PolicyTrace>,
    pub profiles: Option<CalibProfiles>,
}

/// Runs every policy on the scenario. `base_dir` resolves relative model
/// and profile paths; `model` overrides the scenario's model path.
pub fn simulate(
    cfg: &ScenarioConfig,
    base_dir: &Path,
    policies: &[Policy],
    model: Option<&ContrastModel>,
    seed: u64,
    cache_root: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<Simulation> {
    let plan = OperationPlan::from_scenario(cfg)?;
    let lattice = Lattice::new(cfg, seed, cache_root)?;
    let needs_guidance = policies.contains(&Policy::Proposed);
    let loaded;
    let model = match (model, &cfg.model) {
        (Some(m), _) => Some(m),
        (None, Some(p)) if needs_guidance => {
            loaded = ContrastModel::load(&base_dir.join(p))?;
            Some(&loaded)
        }
        _ => None,
    };
    let profiles = if needs_guidance {
        progress("calibrating");
        Some(scenario_profiles(cfg, base_dir, seed)?)
    } else {
        None
    };
    let guidance = match (&profiles, model) {
        (Some(p), Some(m)) => Some(Guidance {
            model: m,
            profiles: p,
            summary: summarize(p)?,
        }),
        (Some(_), None) => return Err(Error::Domain("the proposed policy needs a model (--model)".into())),
        _ => None,
    };
    let mut traces = Vec::with_capacity(policies.len());
    for &p in policies {
        progress(&format!("policy {p}"));
        traces.push(run_policy(cfg, &plan, &lattice, p, guidance.as_ref())?);
    }
    Ok(Simulation { traces, profiles })
}
