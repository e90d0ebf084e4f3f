use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use aquaperc::calib::{self, summarize, CalibProfiles, CalibSettings};
use aquaperc::config::{load_toml, to_toml, SceneConfig};
use aquaperc::guide::{suggest, GuideContext, GuideParams, OptConfig};
use aquaperc::harness::{compare_report, simulate, Policy, ScenarioConfig};
use aquaperc::imstats::{channel_mean, match_consecutive, mean_gradient_y, patch_contrast, whole_stdev, FeatureConfig, PatchGrid};
use aquaperc::learn::{generate_dataset, read_csv, train, write_csv, ContrastModel, DatasetSweep, TrainConfig, VehicleState};
use aquaperc::phase::{self, PhaseKind};
use aquaperc::render::cache::{ComponentCache, CACHE_ENV};
use aquaperc::render::{apply_noise, render};
use aquaperc::ImageF;

mod manifest;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "aquaperc", version, about = "Underwater image simulation and contrast-driven guidance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one noisy frame of a scene.
    Render(RenderArgs),
    /// Image statistics of a PFM frame, optionally matched against a previous one.
    Stats(StatsArgs),
    /// Depth and contrast profiles of a water body.
    Calibrate(CalibrateArgs),
    /// Render the training sweep and write it as CSV.
    GenDataset(GenDatasetArgs),
    /// Train a contrast model on a dataset CSV.
    Train(TrainArgs),
    /// Suggest a distance and light offset for one frame.
    Suggest(SuggestArgs),
    /// Run policies over a lawnmower scenario and write a comparison report.
    Simulate(SimulateArgs),
    /// Phase-function parameters and the comparison against the Petzold table.
    Phase(PhaseArgs),
}

#[derive(Args)]
struct Common {
    /// Seed for every random draw of the run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    dump_defaults: bool,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output image, `.png` or `.pfm`.
    #[arg(long, required_unless_present = "dump_defaults")]
    out: Option<PathBuf>,
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    light: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    spp: Option<u32>,
    /// Skip the sensor noise model.
    #[arg(long)]
    no_noise: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct StatsArgs {
    /// Frame to measure (PFM).
    #[arg(long)]
    image: PathBuf,
    /// Earlier frame to match features against (PFM).
    #[arg(long)]
    previous: Option<PathBuf>,
    /// JSON output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CalibrateConfig {
    /// Deepest depth covered by the depth profile.
    operation_depth: f64,
    /// Contrast profiles reach this plus 1 m.
    operation_distance: f64,
    scene: SceneConfig,
    calibration: CalibSettings,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            operation_depth: 5.0,
            operation_distance: 2.0,
            scene: SceneConfig::default(),
            calibration: CalibSettings::default(),
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration TOML: operating point, `[scene]` and `[calibration]`.
    #[arg(long, visible_alias = "scene")]
    config: Option<PathBuf>,
    /// Profiles JSON.
    #[arg(long, required_unless_present = "dump_defaults")]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenDatasetArgs {
    /// Sweep TOML; the desk-scale sweep applies when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the full-size sweep instead of the desk-scale one.
    #[arg(long, conflicts_with = "config")]
    full: bool,
    #[arg(long, required_unless_present = "dump_defaults")]
    out: Option<PathBuf>,
    /// Render cache directory; overrides the environment variable.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV from `gen-dataset`.
    #[arg(long, required_unless_present = "dump_defaults")]
    data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON.
    #[arg(long, required_unless_present = "dump_defaults")]
    out: Option<PathBuf>,
    /// Drop the calibration inputs (ablation).
    #[arg(long)]
    no_calib: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SuggestConfig {
    guide: GuideParams,
    optimizer: OptConfig,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").args(["state", "image"])))]
struct SuggestArgs {
    #[arg(long, required_unless_present = "dump_defaults")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "dump_defaults")]
    profiles: Option<PathBuf>,
    /// Vehicle state JSON: distance, light, depth, img_mean, img_std.
    #[arg(long, required_unless_present_any = ["dump_defaults", "image"])]
    state: Option<PathBuf>,
    /// Current frame (PFM), measured in place of `--state`.
    #[arg(long, requires_all = ["distance", "light", "depth"])]
    image: Option<PathBuf>,
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    light: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON output; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "dump_defaults")]
    scenario: Option<PathBuf>,
    /// Comma-separated: proposed, gradient, fixed:<d>:<l>.
    #[arg(long, value_delimiter = ',', default_value = "proposed,fixed:1:0.5,fixed:2:0.25,gradient")]
    policies: Vec<Policy>,
    /// Contrast model; overrides the scenario's model path.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Report directory.
    #[arg(long, required_unless_present = "dump_defaults")]
    out: Option<PathBuf>,
    /// Lattice cache directory; overrides the environment variable.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PhaseArgs {
    /// Write the Petzold comparison table.
    #[arg(long, requires = "out")]
    plot: bool,
    /// Particle refractive index.
    #[arg(long, default_value_t = 1.1)]
    index: f64,
    /// Backscatter fraction.
    #[arg(long, default_value_t = 0.0183)]
    backscatter: f64,
    /// CSV table with `--plot`, JSON parameters otherwise (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Run(aquaperc::Error),
}

impl From<aquaperc::Error> for Failure {
    fn from(e: aquaperc::Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::GenDataset(a) => cmd_gen_dataset(a),
        Command::Train(a) => cmd_train(a),
        Command::Suggest(a) => cmd_suggest(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Phase(a) => cmd_phase(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> aquaperc::Result<T> {
    path.map_or_else(|| Ok(T::default()), load_toml)
}

fn dump<T: Serialize + Default>() -> CmdResult {
    print!("{}", to_toml(&T::default())?);
    Ok(())
}

fn cache_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| aquaperc::Error::Numeric(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| aquaperc::Error::io(p, e))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_render(a: RenderArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<SceneConfig>();
    }
    let start = Instant::now();
    let out = a.out.expect("required by clap");
    let ext = out.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext != "png" && ext != "pfm" {
        return Err(Failure::Usage(format!("--out {} must end in .png or .pfm", out.display())));
    }
    let mut cfg: SceneConfig = load_or_default(a.config.as_deref())?;
    cfg.distance = a.distance.unwrap_or(cfg.distance);
    cfg.light = a.light.unwrap_or(cfg.light);
    cfg.depth = a.depth.unwrap_or(cfg.depth);
    cfg.spp = a.spp.unwrap_or(cfg.spp);
    let scene = cfg.build()?;
    let clean = render(&scene, cfg.spp, a.common.seed)?;
    let img = if a.no_noise { clean } else { apply_noise(&clean, &cfg.noise, a.common.seed)? };
    if ext == "png" {
        img.write_png(&out)?;
    } else {
        img.write_pfm(&out)?;
    }
    RunManifest::new("render", &cfg, &[a.common.seed], &[&out], start)?.write_beside(&out)?;
    Ok(())
}

#[derive(Serialize)]
struct FrameStats {
    width: usize,
    height: usize,
    mean: [f64; 3],
    stdev: [f64; 3],
    patch_contrast: [f64; 3],
    mean_gradient: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    matches: Option<aquaperc::imstats::MatchReport>,
}

fn cmd_stats(a: StatsArgs) -> CmdResult {
    let img = ImageF::read_pfm(&a.image)?;
    let matches = match &a.previous {
        Some(p) => {
            let base = FeatureConfig::default();
            let cfg = FeatureConfig { ransac_seed: base.ransac_seed ^ a.seed, ..base };
            Some(match_consecutive(&ImageF::read_pfm(p)?, &img, &cfg)?)
        }
        None => None,
    };
    let stats = FrameStats {
        width: img.width(),
        height: img.height(),
        mean: channel_mean(&img)?.to_array(),
        stdev: whole_stdev(&img)?.to_array(),
        patch_contrast: patch_contrast(&img, &PatchGrid::for_image(&img)?)?.to_array(),
        mean_gradient: mean_gradient_y(&img)?,
        matches,
    };
    write_json(&stats, a.out.as_deref())
}

fn cmd_calibrate(a: CalibrateArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<CalibrateConfig>();
    }
    let start = Instant::now();
    let out = a.out.expect("required by clap");
    let cfg: CalibrateConfig = load_or_default(a.config.as_deref())?;
    let settings = CalibSettings { seed: cfg.calibration.seed ^ a.common.seed, ..cfg.calibration };
    let profiles = calib::calibrate(&cfg.scene.build()?, cfg.operation_depth, cfg.operation_distance, &settings)?;
    profiles.save(&out)?;
    let s = summarize(&profiles)?;
    eprintln!(
        "decay rates: kz {:?}, kc on {:?}, kc off {:?}",
        s.kz_decay.to_array(),
        s.kc_on_decay.to_array(),
        s.kc_off_decay.to_array()
    );
    RunManifest::new("calibrate", &cfg, &[a.common.seed], &[&out], start)?.write_beside(&out)?;
    Ok(())
}

fn cmd_gen_dataset(a: GenDatasetArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<DatasetSweep>();
    }
    let start = Instant::now();
    let out = a.out.expect("required by clap");
    let sweep = if a.full { DatasetSweep::full() } else { load_or_default(a.config.as_deref())? };
    let cache = ComponentCache::new(cache_dir(a.cache));
    let ds = generate_dataset(&sweep, a.common.seed, &cache, &mut |m| eprintln!("{m}"))?;
    write_csv(&ds.rows, &out)?;
    eprintln!("{} rows, {} with clamped offsets", ds.rows.len(), ds.n_clamped);
    RunManifest::new("gen-dataset", &sweep, &[a.common.seed], &[&out], start)?.write_beside(&out)?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<TrainConfig>();
    }
    let start = Instant::now();
    let (data, out) = (a.data.expect("required by clap"), a.out.expect("required by clap"));
    let mut cfg: TrainConfig = load_or_default(a.config.as_deref())?;
    cfg.seed = a.common.seed;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    let rows = read_csv(&data)?;
    let (model, metrics) = train(&rows, &cfg, !a.no_calib)?;
    model.save(&out)?;
    eprintln!(
        "train MAE {:.5}, test MAE {:.5} ({} / {} rows)",
        metrics.train_mae, metrics.test_mae, metrics.n_train, metrics.n_test
    );
    let metrics_path = out.with_extension("metrics.json");
    write_json(&metrics, Some(&metrics_path))?;
    RunManifest::new("train", &(&cfg, !a.no_calib), &[a.common.seed], &[&out, &metrics_path], start)?
        .write_beside(&out)?;
    Ok(())
}

fn cmd_suggest(a: SuggestArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<SuggestConfig>();
    }
    let start = Instant::now();
    let cfg: SuggestConfig = load_or_default(a.config.as_deref())?;
    let model = ContrastModel::load(&a.model.expect("required by clap"))?;
    let profiles = CalibProfiles::load(&a.profiles.expect("required by clap"))?;
    let state = match (&a.state, &a.image) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| aquaperc::Error::io(path, e))?;
            serde_json::from_str::<VehicleState>(&text)
                .map_err(|e| aquaperc::Error::parse(path.display().to_string(), e.to_string()))?
        }
        (None, Some(image)) => VehicleState::from_image(
            &ImageF::read_pfm(image)?,
            a.distance.expect("required with --image"),
            a.light.expect("required with --image"),
            a.depth.expect("required with --image"),
        )?,
        (None, None) => unreachable!("clap requires --state or --image"),
    };
    let summary = summarize(&profiles)?;
    let ctx = GuideContext {
        state: &state,
        summary: &summary,
        profiles: &profiles,
        model: &model,
        params: &cfg.guide,
    };
    let s = suggest(&ctx, &cfg.optimizer)?;
    write_json(&s, a.out.as_deref())?;
    if let Some(out) = &a.out {
        RunManifest::new("suggest", &cfg, &[a.common.seed], &[out], start)?.write_beside(out)?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    if a.common.dump_defaults {
        return dump::<ScenarioConfig>();
    }
    let start = Instant::now();
    let (path, out) = (a.scenario.expect("required by clap"), a.out.expect("required by clap"));
    if a.policies.len() < 2 {
        return Err(Failure::Usage("--policies needs at least two policies to compare".into()));
    }
    let cfg: ScenarioConfig = load_toml(&path)?;
    cfg.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let model = a.model.as_deref().map(ContrastModel::load).transpose()?;
    let cache = cache_dir(a.cache);
    let sim = simulate(&cfg, base, &a.policies, model.as_ref(), a.common.seed, cache.as_deref(), &mut |m| {
        eprintln!("{m}")
    })?;
    let (summaries, mut written) = compare_report(&sim.traces, &out)?;
    if let Some(p) = &sim.profiles {
        let path = out.join("profiles.json");
        p.save(&path)?;
        written.push(path);
    }
    for s in &summaries {
        eprintln!(
            "{:<14} inliers {:7.1}  ratio {:.3}  coverage {:7.2} m2  usable {:.2}  mean d {:.2}",
            s.policy, s.mean_inliers, s.mean_ratio, s.coverage, s.usable_fraction, s.mean_distance
        );
    }
    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let policies: Vec<String> = a.policies.iter().map(Policy::to_string).collect();
    RunManifest::new("simulate", &(&cfg, policies), &[a.common.seed], &refs, start)?.write_into(&out)?;
    Ok(())
}

#[derive(Serialize)]
struct PhaseReport {
    index: f64,
    backscatter: f64,
    ff_mu: f64,
    hg_g: f64,
}

fn cmd_phase(a: PhaseArgs) -> CmdResult {
    let start = Instant::now();
    let ff = PhaseKind::ff_from_backscatter(a.index, a.backscatter)?;
    let hg = PhaseKind::hg_from_backscatter(a.backscatter)?;
    let (PhaseKind::Ff { mu, .. }, PhaseKind::Hg { g }) = (ff, hg) else {
        unreachable!("constructors return their own family")
    };
    let report = PhaseReport { index: a.index, backscatter: a.backscatter, ff_mu: mu, hg_g: g };
    if !a.plot {
        return write_json(&report, a.out.as_deref());
    }
    let out = a.out.expect("required by clap");
    let mut w = csv::Writer::from_path(&out).map_err(|e| aquaperc::Error::parse(out.display().to_string(), e.to_string()))?;
    let mut put = |rec: [String; 6]| {
        w.write_record(rec).map_err(|e| aquaperc::Error::parse(out.display().to_string(), e.to_string()))
    };
    put(["psi_deg", "petzold", "ff", "hg", "ff_over_petzold", "hg_over_petzold"].map(String::from))?;
    for r in phase::petzold_compare(&ff, &hg)? {
        put([r.psi_deg, r.petzold, r.ff, r.hg, r.ff / r.petzold, r.hg / r.petzold].map(|v| v.to_string()))?;
    }
    drop(put);
    w.flush().map_err(|e| aquaperc::Error::io(&out, e))?;
    RunManifest::new("phase", &(a.index, a.backscatter), &[a.seed], &[&out], start)?.write_beside(&out)?;
    Ok(())
}
