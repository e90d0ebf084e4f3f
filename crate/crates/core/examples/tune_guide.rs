//! Sweeps the regulator tuning over the bundled scenarios and prints the
//! proposed policy's behaviour next to the baselines.
//!
//! Usage: `cargo run --release --example tune_guide -- <kappa_b> <kappa_c> [model.json]`
//!
//! Without a model one is trained on `scenarios/dataset.toml`. Renders are
//! cached under `$AQUAPERC_CACHE` (default `target/aqcache`).

use std::path::{Path, PathBuf};

use aquaperc::calib::{lookup, ProfileKind};
use aquaperc::config::load_toml;
use aquaperc::guide::Regulator;
use aquaperc::harness::{aggregate, scenario_profiles, simulate, Policy, ScenarioConfig};
use aquaperc::learn::{generate_dataset, train, ContrastModel, DatasetSweep, TrainConfig};
use aquaperc::render::cache::ComponentCache;

fn main() -> aquaperc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let num = |i: usize| -> f64 {
        args.get(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or_else(|| panic!("usage: tune_guide <kappa_b> <kappa_c> [model.json]"))
    };
    let (kappa_b, kappa_c) = (num(0), num(1));
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cache = std::env::var_os("AQUAPERC_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("target/aqcache"));

    let model = match args.get(2) {
        Some(p) => ContrastModel::load(Path::new(p))?,
        None => {
            let sweep: DatasetSweep = load_toml(&root.join("scenarios/dataset.toml"))?;
            let ds = generate_dataset(&sweep, 1, &ComponentCache::new(Some(cache.clone())), &mut |m| eprintln!("{m}"))?;
            train(&ds.rows, &TrainConfig::default(), true)?.0
        }
    };
    let policies: Vec<Policy> = ["proposed", "fixed:1:0.5", "fixed:2:0.25", "gradient"]
        .iter()
        .map(|s| s.parse())
        .collect::<aquaperc::Result<_>>()?;

    for name in ["low_turbidity", "high_turbidity"] {
        let mut cfg: ScenarioConfig = load_toml(&root.join(format!("scenarios/{name}.toml")))?;
        cfg.guide.kappa_b = kappa_b;
        cfg.guide.kappa_c = kappa_c;
        println!("== {name} ({})", cfg.scene.water.water_type);

        // Regulator centre/width per leg, as seen from each lattice distance.
        let profiles = scenario_profiles(&cfg, &root, 0)?;
        for &d in &cfg.distances {
            let kc = lookup(&profiles, ProfileKind::KcOn, d)?.sum();
            let legs: Vec<String> = cfg
                .leg_depths
                .iter()
                .map(|&z| Regulator::new(d, z, &profiles, &cfg.guide).map(|r| format!("{:.2}/{:.3}", r.center, r.width)))
                .collect::<aquaperc::Result<_>>()?;
            println!("d {d:.1}  kc_on {kc:.4}  centre/width by leg {}", legs.join(" "));
        }

        let sim = simulate(&cfg, &root, &policies, Some(&model), 0, Some(&cache.join("lattice")), &mut |m| {
            eprintln!("{m}")
        })?;
        for trace in &sim.traces {
            let s = aggregate(trace)?;
            println!(
                "{:13} inliers {:6.1}  ratio {:.3}  coverage {:7.2}  usable {:.2}  d {:.2}  l {:.2}  leg var {:.4}",
                s.policy,
                s.mean_inliers,
                s.mean_ratio,
                s.coverage,
                s.usable_fraction,
                s.mean_distance,
                s.mean_light,
                s.leg_distance_variance
            );
        }
    }
    Ok(())
}
