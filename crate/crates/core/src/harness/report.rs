//! Per-policy aggregates, CSV tables and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PolicyTrace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub steps: usize,
    pub mean_features: f64,
    pub mean_inliers: f64,
    pub mean_ratio: f64,
    /// Square metres over usable frames.
    pub coverage: f64,
    pub usable_fraction: f64,
    pub mean_distance: f64,
    pub mean_light: f64,
    /// Population variance of the chosen distance within each depth leg,
    /// averaged over legs.
    pub leg_distance_variance: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn aggregate(trace: &PolicyTrace) -> Result<PolicySummary> {
    let s = &trace.steps;
    if s.is_empty() {
        return Err(Error::Domain("cannot aggregate an empty trace".into()));
    }
    let legs: Vec<usize> = {
        let mut l: Vec<usize> = s.iter().map(|r| r.leg).collect();
        l.dedup();
        l
    };
    let leg_var = mean(legs.iter().map(|&leg| {
        let ds: Vec<f64> = s.iter().filter(|r| r.leg == leg).map(|r| r.d).collect();
        let m = mean(ds.iter().copied());
        mean(ds.iter().map(|d| (d - m).powi(2)))
    }));
    Ok(PolicySummary {
        policy: trace.policy.to_string(),
        steps: s.len(),
        mean_features: mean(s.iter().map(|r| r.matches.n_features as f64)),
        mean_inliers: mean(s.iter().map(|r| r.matches.n_inliers as f64)),
        mean_ratio: mean(s.iter().map(|r| r.matches.inlier_ratio)),
        coverage: s.iter().map(|r| r.coverage).sum(),
        usable_fraction: s.iter().filter(|r| r.usable).count() as f64 / s.len() as f64,
        mean_distance: mean(s.iter().map(|r| r.d)),
        mean_light: mean(s.iter().map(|r| r.l)),
        leg_distance_variance: leg_var,
    })
}

impl PolicySummary {
    fn metrics(&self) -> [(&'static str, String); 9] {
        [
            ("mean_features", self.mean_features.to_string()),
            ("mean_inliers", self.mean_inliers.to_string()),
            ("mean_inlier_ratio", self.mean_ratio.to_string()),
            ("coverage_m2", self.coverage.to_string()),
            ("usable_fraction", self.usable_fraction.to_string()),
            ("mean_distance", self.mean_distance.to_string()),
            ("mean_light", self.mean_light.to_string()),
            ("leg_distance_variance", self.leg_distance_variance.to_string()),
            ("niqe", "not implemented".into()),
        ]
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn csv_done(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn put(w: &mut csv::Writer<fs::File>, path: &Path, rec: &[String]) -> Result<()> {
    w.write_record(rec).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Writes `trace_<policy>.csv` per policy, `summary.csv` with one row per
/// (policy, metric) and line plots of distance, light and inliers per
/// step. Returns the written paths.
pub fn compare_report(traces: &[PolicyTrace], out_dir: &Path) -> Result<(Vec<PolicySummary>, Vec<PathBuf>)> {
    if traces.len() < 2 {
        return Err(Error::Domain("a comparison needs at least two policies".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for t in traces {
        let path = out_dir.join(format!("trace_{}.csv", t.policy.slug()));
        let mut w = csv_writer(&path)?;
        let header = [
            "step", "leg", "waypoint", "x", "depth", "desired_d", "desired_l", "d", "l", "features", "matches",
            "inliers", "inlier_ratio", "usable", "coverage_m2", "contrast_r", "contrast_g", "contrast_b",
            "gradient",
        ];
        put(&mut w, &path, &header.map(String::from))?;
        for (i, s) in t.steps.iter().enumerate() {
            let row = [
                i.to_string(),
                s.leg.to_string(),
                s.waypoint.to_string(),
                s.x.to_string(),
                s.depth.to_string(),
                s.desired_d.to_string(),
                s.desired_l.to_string(),
                s.d.to_string(),
                s.l.to_string(),
                s.matches.n_features.to_string(),
                s.matches.n_matches.to_string(),
                s.matches.n_inliers.to_string(),
                s.matches.inlier_ratio.to_string(),
                s.usable.to_string(),
                s.coverage.to_string(),
                s.contrast.r.to_string(),
                s.contrast.g.to_string(),
                s.contrast.b.to_string(),
                s.gradient.to_string(),
            ];
            put(&mut w, &path, &row)?;
        }
        csv_done(w, &path)?;
        written.push(path);
        summaries.push(aggregate(t)?);
    }

    let path = out_dir.join("summary.csv");
    let mut w = csv_writer(&path)?;
    put(&mut w, &path, &["policy", "metric", "value"].map(String::from))?;
    for s in &summaries {
        for (metric, value) in s.metrics() {
            put(&mut w, &path, &[s.policy.clone(), metric.to_string(), value])?;
        }
    }
    csv_done(w, &path)?;
    written.push(path);

    let plots: [(&str, &str, fn(&super::StepRecord) -> f64); 3] = [
        ("distance", "distance (m)", |s| s.d),
        ("light", "light intensity", |s| s.l),
        ("inliers", "inliers", |s| s.matches.n_inliers as f64),
    ];
    for (name, label, f) in plots {
        let series: Vec<(String, Vec<f64>)> = traces
            .iter()
            .map(|t| (t.policy.to_string(), t.steps.iter().map(f).collect()))
            .collect();
        let path = out_dir.join(format!("{name}.svg"));
        write_text(&path, &line_plot(label, &series))?;
        written.push(path);
    }
    Ok((summaries, written))
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal SVG line chart against step index.
pub fn line_plot(y_label: &str, series: &[(String, Vec<f64>)]) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 360.0, 60.0, 150.0, 20.0, 40.0);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let vals = series.iter().flat_map(|(_, v)| v.iter().copied());
    let y_max = vals.fold(0.0f64, f64::max).max(1e-9) * 1.05;
    let px = |i: usize| left + (w - left - right) * i as f64 / (n - 1) as f64;
    let py = |v: f64| h - bottom - (h - top - bottom) * v / y_max;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" stroke="black" fill="none"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, left - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, (left + w - right) / 2.0, h - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#, h / 2.0, h / 2.0);
    for (k, (name, v)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = v.iter().enumerate().map(|(i, &y)| format!("{:.1},{:.1}", px(i), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#, pts.join(" "));
        let ly = top + 16.0 * k as f64 + 8.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, w - right + 36.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Policy, StepRecord};
    use crate::imstats::MatchReport;
    use crate::rgb::Rgb;

    fn step(leg: usize, d: f64, inliers: usize, usable: bool) -> StepRecord {
        StepRecord {
            leg,
            waypoint: 0,
            x: 0.0,
            depth: 2.0,
            desired_d: d,
            desired_l: 0.5,
            d,
            l: 0.5,
            matches: MatchReport {
                n_features: 100,
                n_matches: 50,
                n_inliers: inliers,
                inlier_ratio: inliers as f64 / 50.0,
                homography: None,
            },
            usable,
            coverage: if usable { 2.0 } else { 0.0 },
            contrast: Rgb::splat(0.1),
            gradient: 0.2,
        }
    }

    #[test]
    fn aggregate_means_and_variance() {
        let t = PolicyTrace {
            policy: Policy::Gradient,
            steps: vec![step(0, 1.0, 10, false), step(0, 2.0, 30, true), step(1, 1.0, 20, true), step(1, 1.0, 0, false)],
        };
        let a = aggregate(&t).unwrap();
        assert_eq!(a.mean_inliers, 15.0);
        assert_eq!(a.coverage, 4.0);
        assert_eq!(a.usable_fraction, 0.5);
        assert_eq!(a.mean_distance, 1.25);
        assert_eq!(a.leg_distance_variance, 0.125);
        let none = PolicyTrace {
            policy: Policy::Proposed,
            steps: vec![step(0, 1.0, 0, false)],
        };
        assert_eq!(aggregate(&none).unwrap().coverage, 0.0);
        assert!(aggregate(&PolicyTrace { policy: Policy::Proposed, steps: vec![] }).is_err());
    }

    #[test]
    fn report_structure() {
        let dir = tempfile::tempdir().unwrap();
        let traces = vec![
            PolicyTrace { policy: Policy::Proposed, steps: vec![step(0, 1.0, 20, true); 3] },
            PolicyTrace { policy: Policy::Fixed { distance: 1.0, light: 0.5 }, steps: vec![step(0, 1.0, 5, false); 3] },
        ];
        let (sums, files) = compare_report(&traces, dir.path()).unwrap();
        assert_eq!(sums.len(), 2);
        assert!(files.iter().all(|f| f.is_file()));
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let rows: Vec<&str> = summary.lines().skip(1).collect();
        assert_eq!(rows.len(), 2 * 9);
        assert!(summary.contains("fixed:1:0.5,niqe,not implemented"));
        let trace = fs::read_to_string(dir.path().join("trace_fixed_1_0.5.csv")).unwrap();
        assert_eq!(trace.lines().count(), 4);
        let svg = fs::read_to_string(dir.path().join("distance.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 2);
        assert!(compare_report(&traces[..1], dir.path()).is_err());
    }
}
