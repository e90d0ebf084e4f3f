//! Contrast prediction: rendered training rows and the network that maps
//! (calibration, current state, offset) to the patch contrast after the
//! offset.

pub mod mlp;

use std::hash::Hasher;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{self, summarize, CalibProfiles, CalibSummary};
use crate::config::SceneConfig;
use crate::error::{Error, Result};
use crate::image::ImageF;
use crate::imstats::{channel_mean, patch_contrast, PatchGrid};
use crate::render::cache::{scene_fingerprint, ComponentCache, Fnv64};
use crate::render::{apply_noise, LookDir, NoiseParams, RenderComponents, TextureKind};
use crate::rgb::Rgb;

pub use mlp::{Mlp, TrainConfig, TrainMetrics};

pub const N_CALIB: usize = 9;
pub const N_STATE: usize = 9;
pub const N_INPUTS: usize = 20;
pub const N_OUTPUTS: usize = 3;

pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "kz_decay_r",
    "kz_decay_g",
    "kz_decay_b",
    "kc_on_decay_r",
    "kc_on_decay_g",
    "kc_on_decay_b",
    "kc_off_decay_r",
    "kc_off_decay_g",
    "kc_off_decay_b",
    "distance",
    "light",
    "depth",
    "img_mean_r",
    "img_mean_g",
    "img_mean_b",
    "img_std_r",
    "img_std_g",
    "img_std_b",
    "delta_distance",
    "delta_light",
];
pub const TARGET_NAMES: [&str; N_OUTPUTS] = ["target_r", "target_g", "target_b"];

/// What the vehicle knows about its current frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub distance: f64,
    pub light: f64,
    pub depth: f64,
    pub img_mean: Rgb,
    /// Patch contrast of the current frame, the same statistic as the
    /// prediction target, so a zero offset predicts the current value.
    pub img_std: Rgb,
}

impl VehicleState {
    pub fn from_image(img: &ImageF, distance: f64, light: f64, depth: f64) -> Result<Self> {
        let patches = PatchGrid::for_image(img)?;
        Ok(VehicleState {
            distance,
            light,
            depth,
            img_mean: channel_mean(img)?,
            img_std: patch_contrast(img, &patches)?,
        })
    }

    pub fn to_array(&self) -> [f64; N_STATE] {
        let (m, s) = (self.img_mean, self.img_std);
        [self.distance, self.light, self.depth, m.r, m.g, m.b, s.r, s.g, s.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub calib: CalibSummary,
    pub state: VehicleState,
    pub delta_distance: f64,
    pub delta_light: f64,
    pub target: Rgb,
    /// The requested offset left the valid range and was clamped.
    pub clamped: bool,
}

pub fn assemble_inputs(calib: &CalibSummary, state: &VehicleState, dd: f64, dl: f64) -> [f64; N_INPUTS] {
    let mut x = [0.0; N_INPUTS];
    x[..N_CALIB].copy_from_slice(&calib.to_array());
    x[N_CALIB..N_CALIB + N_STATE].copy_from_slice(&state.to_array());
    x[N_CALIB + N_STATE] = dd;
    x[N_CALIB + N_STATE + 1] = dl;
    x
}

impl DatasetRow {
    pub fn inputs(&self) -> [f64; N_INPUTS] {
        assemble_inputs(&self.calib, &self.state, self.delta_distance, self.delta_light)
    }

    fn from_values(v: &[f64]) -> Self {
        let c = |i: usize| Rgb::new(v[i], v[i + 1], v[i + 2]);
        DatasetRow {
            calib: CalibSummary {
                kz_decay: c(0),
                kc_on_decay: c(3),
                kc_off_decay: c(6),
            },
            state: VehicleState {
                distance: v[9],
                light: v[10],
                depth: v[11],
                img_mean: c(12),
                img_std: c(15),
            },
            delta_distance: v[18],
            delta_light: v[19],
            target: c(20),
            clamped: false,
        }
    }
}

/// Axes of the rendered cross product. The base scene supplies camera,
/// lamp, noise, phase family and diffuse model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSweep {
    pub textures: Vec<TextureKind>,
    pub water_types: Vec<String>,
    pub backscatter: Vec<f64>,
    pub depths: Vec<f64>,
    pub distances: Vec<f64>,
    pub lights: Vec<f64>,
    pub delta_distance: Vec<f64>,
    pub delta_light: Vec<f64>,
    /// Offsets landing closer than this are clamped to it.
    pub min_distance: f64,
    pub scene: SceneConfig,
}

impl Default for DatasetSweep {
    /// Desk scale: 2 x 3 x 2 x 2 x 4 x 3 x 4 x 3 = 3456 rows.
    fn default() -> Self {
        DatasetSweep {
            textures: vec![TextureKind::Hull, TextureKind::Seabed],
            water_types: vec!["JII".into(), "J3C".into(), "J7C".into()],
            backscatter: vec![0.0183, 0.05],
            depths: vec![2.0, 5.0],
            distances: vec![0.5, 1.0, 1.5, 2.0],
            lights: vec![0.25, 0.5, 1.0],
            delta_distance: vec![-0.5, 0.0, 0.5, 1.0],
            delta_light: vec![-0.5, 0.0, 0.5],
            min_distance: 0.5,
            scene: SceneConfig {
                water: crate::config::WaterConfig {
                    diffuse: crate::config::DiffuseModel::Backscatter,
                    ..Default::default()
                },
                ..SceneConfig::default()
            },
        }
    }
}

impl DatasetSweep {
    /// Full-size sweep: 2 x 10 x 4 x 3 x 6 x 4 x 6 x 4 = 138240 rows.
    pub fn full() -> Self {
        DatasetSweep {
            water_types: crate::optics::WATER_TYPES.iter().map(|s| s.to_string()).collect(),
            backscatter: vec![0.005, 0.0183, 0.05, 0.1],
            depths: vec![2.0, 5.0, 8.0],
            distances: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            lights: vec![0.0, 0.25, 0.5, 1.0],
            delta_distance: vec![-1.0, -0.5, 0.0, 0.5, 1.0, 1.5],
            delta_light: vec![-0.5, -0.25, 0.25, 0.5],
            ..DatasetSweep::default()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.textures.len()
            * self.water_types.len()
            * self.backscatter.len()
            * self.depths.len()
            * self.distances.len()
            * self.lights.len()
            * self.delta_distance.len()
            * self.delta_light.len()
    }

    pub fn validate(&self) -> Result<()> {
        let axes: [(&str, usize); 8] = [
            ("textures", self.textures.len()),
            ("water_types", self.water_types.len()),
            ("backscatter", self.backscatter.len()),
            ("depths", self.depths.len()),
            ("distances", self.distances.len()),
            ("lights", self.lights.len()),
            ("delta_distance", self.delta_distance.len()),
            ("delta_light", self.delta_light.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Domain(format!("sweep axis {name} is empty")));
        }
        if self.depths.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::Domain("sweep depths must be positive".into()));
        }
        if self.lights.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Domain("sweep lights must lie in [0, 1]".into()));
        }
        if !(self.min_distance > 0.0) || self.distances.iter().any(|&d| d < self.min_distance) {
            return Err(Error::Domain("sweep distances must be >= min_distance > 0".into()));
        }
        Ok(())
    }

    /// Every distance an image is needed at, sorted.
    fn rendered_distances(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .distances
            .iter()
            .flat_map(|&d| {
                self.delta_distance
                    .iter()
                    .map(move |&dd| (d + dd).max(self.min_distance))
                    .chain(std::iter::once(d))
            })
            .map(snap)
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// Rounds to a micrometre so sums of grid values compare exactly.
fn snap(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = Fnv64::default();
    for p in parts {
        h.write_u64(*p);
    }
    h.finish()
}

fn noisy(img: &ImageF, noise: &NoiseParams, seed: u64) -> Result<ImageF> {
    apply_noise(img, noise, seed)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
    pub n_clamped: usize,
}

/// Renders the full cross product. Per (texture, water, backscatter,
/// depth) one set of horizontal views is rendered across every needed
/// distance; calibration profiles come from the same views plus an
/// up-looking depth sweep, as a vehicle would calibrate on site.
pub fn generate_dataset(
    sweep: &DatasetSweep,
    seed: u64,
    cache: &ComponentCache,
    progress: &mut dyn FnMut(&str),
) -> Result<Dataset> {
    sweep.validate()?;
    let dists = sweep.rendered_distances();
    if dists.len() < 2 {
        return Err(Error::Domain("sweep must span at least two distances".into()));
    }
    let spp = sweep.scene.spp;
    let noise = sweep.scene.noise;
    let mut rows = Vec::with_capacity(sweep.n_rows());
    let mut n_clamped = 0;
    let mut combo = 0u64;
    for &texture in &sweep.textures {
        for water_type in &sweep.water_types {
            for &bf in &sweep.backscatter {
                for &depth in &sweep.depths {
                    combo += 1;
                    let mut cfg = sweep.scene.clone();
                    cfg.water.water_type = water_type.clone();
                    cfg.water.backscatter_fraction = bf;
                    cfg.texture = texture;
                    cfg.depth = depth;
                    cfg.look = LookDir::Horizontal;
                    let base = cfg.build()?;
                    let render_seed = mix_seed(&[seed, combo]);
                    progress(&format!(
                        "{texture} {water_type} B={bf} z={depth}: rendering {} distances",
                        dists.len()
                    ));
                    let comps = dists
                        .iter()
                        .map(|&d| {
                            let s = base.with_distance(d);
                            let key = format!("dataset/{}", scene_fingerprint(&s, spp, render_seed));
                            cache.components(&key, &s, spp, render_seed)
                        })
                        .collect::<Result<Vec<RenderComponents>>>()?;
                    let (kz_grid, kz) = calib::run_depth_profile(
                        &base,
                        &calib::default_depth_grid(depth),
                        spp,
                        render_seed,
                        &noise,
                    )?;
                    let (kc_on, kc_off) = calib::contrast_from_components(&comps, 1.0, render_seed, &noise)?;
                    let profiles = CalibProfiles::new(kz_grid, kz, dists.clone(), kc_on, kc_off)?;
                    let summary = summarize(&profiles)?;
                    let index_of = |d: f64| dists.iter().position(|&x| x == snap(d)).expect("distance rendered");

                    for (di, &d) in sweep.distances.iter().enumerate() {
                        for (li, &l) in sweep.lights.iter().enumerate() {
                            let cur_seed = mix_seed(&[seed, combo, di as u64, li as u64, 0xC0]);
                            let current = noisy(&comps[index_of(d)].compose(l), &noise, cur_seed)?;
                            let state = VehicleState::from_image(&current, d, l, depth)?;
                            for (ki, &dd) in sweep.delta_distance.iter().enumerate() {
                                for (mi, &dl) in sweep.delta_light.iter().enumerate() {
                                    let d_new = snap((d + dd).max(sweep.min_distance));
                                    let l_new = (l + dl).clamp(0.0, 1.0);
                                    let clamped = d_new != snap(d + dd) || l_new != l + dl;
                                    n_clamped += clamped as usize;
                                    let t_seed =
                                        mix_seed(&[seed, combo, di as u64, li as u64, ki as u64, mi as u64, 0x7A]);
                                    let img = noisy(&comps[index_of(d_new)].compose(l_new), &noise, t_seed)?;
                                    let target = patch_contrast(&img, &PatchGrid::for_image(&img)?)?;
                                    rows.push(DatasetRow {
                                        calib: summary,
                                        state,
                                        delta_distance: d_new - d,
                                        delta_light: l_new - l,
                                        target,
                                        clamped,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Dataset { rows, n_clamped })
}

pub fn csv_header() -> Vec<&'static str> {
    INPUT_NAMES.iter().chain(TARGET_NAMES.iter()).copied().collect()
}

pub fn write_csv(rows: &[DatasetRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(csv_header()).map_err(|e| csv_error(path, e))?;
    for r in rows {
        let vals = r.inputs().into_iter().chain(r.target.to_array());
        w.write_record(vals.map(|v| format!("{v:?}"))).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<DatasetRow>> {
    let origin = path.display().to_string();
    if !path.is_file() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        ));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != csv_header() {
        return Err(Error::parse(&origin, "unexpected dataset header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(&origin, format!("row {}: {e}", i + 1)))?;
        if vals.len() != N_INPUTS + N_OUTPUTS || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(&origin, format!("row {}: expected 23 finite values", i + 1)));
        }
        rows.push(DatasetRow::from_values(&vals));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path.display().to_string(), format!("{other:?}")),
    }
}

/// Trained predictor together with the input layout it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastModel {
    pub mlp: Mlp,
    /// False for the ablation that drops the nine calibration inputs.
    pub uses_calibration: bool,
}

impl ContrastModel {
    pub fn select_inputs(&self, full: &[f64; N_INPUTS]) -> Vec<f64> {
        if self.uses_calibration {
            full.to_vec()
        } else {
            full[N_CALIB..].to_vec()
        }
    }

    /// Predicted per-channel patch contrast, clamped at zero.
    pub fn predict(&self, inputs: &[f64; N_INPUTS]) -> Result<Rgb> {
        let out = self.mlp.predict(&self.select_inputs(inputs))?;
        Ok(Rgb::new(out[0], out[1], out[2]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let names = if self.uses_calibration { &INPUT_NAMES[..] } else { &INPUT_NAMES[N_CALIB..] };
        let mut extra = serde_json::Map::new();
        extra.insert("uses_calibration".into(), self.uses_calibration.into());
        extra.insert("input_names".into(), names.to_vec().into());
        extra.insert("output_names".into(), TARGET_NAMES.to_vec().into());
        self.mlp.save(path, extra)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mlp, extra) = Mlp::load(path)?;
        let uses_calibration = extra
            .get("uses_calibration")
            .and_then(|v| v.as_bool())
            .unwrap_or(mlp.n_inputs() == N_INPUTS);
        let expect = if uses_calibration { N_INPUTS } else { N_INPUTS - N_CALIB };
        if mlp.n_inputs() != expect || mlp.n_outputs() != N_OUTPUTS {
            return Err(Error::parse(
                path.display().to_string(),
                format!("model dims {:?} do not fit the contrast inputs", mlp.dims()),
            ));
        }
        Ok(ContrastModel { mlp, uses_calibration })
    }
}

pub fn train(rows: &[DatasetRow], cfg: &TrainConfig, uses_calibration: bool) -> Result<(ContrastModel, TrainMetrics)> {
    let probe = ContrastModel {
        mlp: Mlp::zeros(&[1, 1])?,
        uses_calibration,
    };
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| probe.select_inputs(&r.inputs())).collect();
    let ys: Vec<Vec<f64>> = rows.iter().map(|r| r.target.to_array().to_vec()).collect();
    let (mlp, metrics) = mlp::train_mlp(&xs, &ys, cfg)?;
    Ok((ContrastModel { mlp, uses_calibration }, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub calibrated: TrainMetrics,
    pub uncalibrated: TrainMetrics,
}

/// Trains with and without the calibration inputs on the same split.
pub fn ablate_calibration(rows: &[DatasetRow], cfg: &TrainConfig) -> Result<AblationReport> {
    let (_, calibrated) = train(rows, cfg, true)?;
    let (_, uncalibrated) = train(rows, cfg, false)?;
    Ok(AblationReport {
        calibrated,
        uncalibrated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize) -> DatasetRow {
        let f = i as f64;
        DatasetRow {
            calib: CalibSummary::from_array([0.1 * f, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
            state: VehicleState {
                distance: 1.0 + f,
                light: 0.5,
                depth: 3.0,
                img_mean: Rgb::new(0.1, 0.2, 0.3),
                img_std: Rgb::new(0.01, 0.02, 1.0 / 3.0),
            },
            delta_distance: -0.5,
            delta_light: 0.25,
            target: Rgb::new(0.05, 0.04, 0.03 * f),
            clamped: false,
        }
    }

    #[test]
    fn sweep_sizes() {
        assert_eq!(DatasetSweep::default().n_rows(), 3456);
        assert_eq!(DatasetSweep::full().n_rows(), 138240);
        let s = DatasetSweep::default();
        assert_eq!(s.rendered_distances(), vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn inputs_layout() {
        let r = row(2);
        let x = r.inputs();
        assert_eq!(x[0], 0.2);
        assert_eq!(x[9], 3.0);
        assert_eq!(x[17], 1.0 / 3.0);
        assert_eq!(x[18..], [-0.5, 0.25]);
        assert_eq!(csv_header().len(), 23);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rows: Vec<DatasetRow> = (0..5).map(row).collect();
        write_csv(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 23);
        assert_eq!(read_csv(&path).unwrap(), rows);
        assert!(matches!(read_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn ablation_drops_calibration_inputs() {
        let rows: Vec<DatasetRow> = (0..120).map(row).collect();
        let cfg = TrainConfig {
            epochs: 2,
            hidden: vec![8],
            ..TrainConfig::default()
        };
        let (m, _) = train(&rows, &cfg, false).unwrap();
        assert_eq!(m.mlp.n_inputs(), 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(ContrastModel::load(&path).unwrap(), m);
        let rep = ablate_calibration(&rows, &cfg).unwrap();
        assert_eq!(rep.calibrated.n_test, rep.uncalibrated.n_test);
    }

    #[test]
    fn sweep_validation() {
        let mut s = DatasetSweep::default();
        s.lights.clear();
        assert!(s.validate().is_err());
        let mut s = DatasetSweep::default();
        s.distances = vec![0.2];
        assert!(s.validate().is_err());
    }
}
