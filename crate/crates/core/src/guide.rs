//! Run-time suggestions: choose a distance and light offset that trades
//! predicted contrast against a distance regulator built from the
//! calibration profiles.

use serde::{Deserialize, Serialize};

use crate::calib::{lookup, CalibProfiles, CalibSummary, ProfileKind};
use crate::error::{Error, Result};
use crate::learn::{assemble_inputs, ContrastModel, VehicleState};
use crate::rgb::Rgb;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuideParams {
    /// Weight of the contrast term.
    pub lambda_c: f64,
    /// Weight of the distance regulator.
    pub lambda_d: f64,
    /// Scales the regulator's preferred distance. The default puts the
    /// clear-water (JII) steady state near 2 m with the bundled renderer.
    pub kappa_b: f64,
    /// Sharpens the regulator.
    pub kappa_c: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for GuideParams {
    fn default() -> Self {
        GuideParams {
            lambda_c: 1.0,
            lambda_d: 1.0,
            kappa_b: 25.0,
            kappa_c: 0.3,
            d_min: 0.5,
            d_max: 3.0,
            l_min: 0.0,
            l_max: 1.0,
        }
    }
}

impl GuideParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c >= 0.0 && self.lambda_d >= 0.0 && self.lambda_c + self.lambda_d > 0.0) {
            return Err(Error::Domain("weights must be >= 0 with a positive sum".into()));
        }
        if !(self.kappa_b > 0.0 && self.kappa_c > 0.0) {
            return Err(Error::Domain("regulator tuning must be positive".into()));
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return Err(Error::Domain(format!("distance bounds [{}, {}] invalid", self.d_min, self.d_max)));
        }
        if !(0.0 <= self.l_min && self.l_min <= self.l_max && self.l_max <= 1.0) {
            return Err(Error::Domain("light bounds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Distance of a point outside the feasible box, zero inside.
    fn violation(&self, d: f64, l: f64) -> f64 {
        (self.d_min - d).max(0.0) + (d - self.d_max).max(0.0) + (self.l_min - l).max(0.0) + (l - self.l_max).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub delta_d: f64,
    pub delta_l: f64,
    pub y: f64,
    pub m_c: f64,
    pub m_d: f64,
    pub iterations: usize,
}

pub fn contrast_metric(pred: Rgb) -> f64 {
    pred.sum()
}

/// Gaussian preference over distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regulator {
    /// Preferred distance, metres.
    pub center: f64,
    /// Standard deviation, metres.
    pub width: f64,
}

impl Regulator {
    /// Centre `sqrt(sum K_c,on(d)) * kappa_b / z` (clamped into the
    /// distance bounds) and width `mean(K_z(z))^2 / kappa_c`, with `d` the
    /// current distance.
    pub fn new(d_current: f64, z: f64, profiles: &CalibProfiles, params: &GuideParams) -> Result<Self> {
        if !(z > 0.0) {
            return Err(Error::Domain(format!("depth {z} must be positive")));
        }
        let kc = lookup(profiles, ProfileKind::KcOn, d_current)?;
        let kz = lookup(profiles, ProfileKind::Kz, z)?;
        let center = (kc.sum().sqrt() * params.kappa_b / z).clamp(params.d_min, params.d_max);
        let width = kz.mean().powi(2) / params.kappa_c;
        if !(width > 0.0) {
            return Err(Error::DegenerateCalibration(format!(
                "no ambient light left at depth {z} m: regulator width is zero"
            )));
        }
        Ok(Regulator { center, width })
    }

    pub fn eval(&self, d: f64) -> f64 {
        (-(d - self.center).powi(2) / (2.0 * self.width * self.width)).exp()
    }
}

/// Regulator value at `d_candidate` for a vehicle currently at `d_current`.
pub fn distance_metric(
    d_candidate: f64,
    d_current: f64,
    z: f64,
    profiles: &CalibProfiles,
    params: &GuideParams,
) -> Result<f64> {
    Ok(Regulator::new(d_current, z, profiles, params)?.eval(d_candidate))
}

/// Inputs of one suggestion step.
#[derive(Debug, Clone, Copy)]
pub struct GuideContext<'a> {
    pub state: &'a VehicleState,
    pub summary: &'a CalibSummary,
    pub profiles: &'a CalibProfiles,
    pub model: &'a ContrastModel,
    pub params: &'a GuideParams,
}

/// `(y, m_c, m_d)` for the offset `(dd, dl)`.
pub fn offset_quality(ctx: &GuideContext, regulator: &Regulator, dd: f64, dl: f64) -> Result<(f64, f64, f64)> {
    let x = assemble_inputs(ctx.summary, ctx.state, dd, dl);
    let m_c = contrast_metric(ctx.model.predict(&x)?);
    let m_d = regulator.eval(ctx.state.distance + dd);
    Ok((ctx.params.lambda_c * m_c + ctx.params.lambda_d * m_d, m_c, m_d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the simplex diameter, in units of the
    /// initial steps.
    pub tolerance: f64,
    /// Initial simplex edge along distance and light.
    pub step: [f64; 2],
    pub penalty: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            max_iterations: 200,
            tolerance: 1e-3,
            step: [0.25, 0.1],
            penalty: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmResult {
    pub x: [f64; 2],
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fixed jitter applied to the initial steps on the single restart.
const RESTART_JITTER: [[f64; 2]; 2] = [[0.83, 0.31], [-0.27, 1.17]];

/// Minimizes `f` over the plane from the simplex `x0, x0 + step_d e1,
/// x0 + step_l e2`. A run that ends on a collapsed or unconverged simplex
/// restarts once from its best vertex with a jittered simplex.
pub fn nelder_mead(f: &mut dyn FnMut([f64; 2]) -> f64, x0: [f64; 2], cfg: &OptConfig) -> NmResult {
    let first = nm_run(f, x0, [[cfg.step[0], 0.0], [0.0, cfg.step[1]]], cfg, cfg.max_iterations);
    if first.converged {
        return first;
    }
    let edges = RESTART_JITTER.map(|[a, b]| [a * cfg.step[0], b * cfg.step[1]]);
    let second = nm_run(f, first.x, edges, cfg, cfg.max_iterations);
    let best = if second.value <= first.value { second } else { first };
    NmResult {
        iterations: first.iterations + second.iterations,
        converged: second.converged,
        ..best
    }
}

fn nm_run(f: &mut dyn FnMut([f64; 2]) -> f64, x0: [f64; 2], edges: [[f64; 2]; 2], cfg: &OptConfig, max_iter: usize) -> NmResult {
    let scale = cfg.step;
    let add = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut pts = [x0, [x0[0] + edges[0][0], x0[1] + edges[0][1]], [x0[0] + edges[1][0], x0[1] + edges[1][1]]];
    let mut vals = pts.map(&mut *f);
    let diameter = |p: &[[f64; 2]; 3]| {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in i + 1..3 {
                let dx = (p[i][0] - p[j][0]) / scale[0];
                let dy = (p[i][1] - p[j][1]) / scale[1];
                m = m.max((dx * dx + dy * dy).sqrt());
            }
        }
        m
    };
    let mut it = 0;
    let mut converged = false;
    while it < max_iter {
        // Stable order: ties keep vertex index order.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.map(|i| pts[i]);
        vals = order.map(|i| vals[i]);
        if diameter(&pts) < cfg.tolerance {
            converged = true;
            break;
        }
        it += 1;
        let centroid = [(pts[0][0] + pts[1][0]) / 2.0, (pts[0][1] + pts[1][1]) / 2.0];
        let xr = add(centroid, pts[2], -1.0);
        let fr = f(xr);
        if fr < vals[0] {
            let xe = add(centroid, pts[2], -2.0);
            let fe = f(xe);
            if fe < fr {
                (pts[2], vals[2]) = (xe, fe);
            } else {
                (pts[2], vals[2]) = (xr, fr);
            }
        } else if fr < vals[1] {
            (pts[2], vals[2]) = (xr, fr);
        } else {
            let (xc, fc) = if fr < vals[2] {
                let xc = add(centroid, pts[2], -0.5);
                (xc, f(xc))
            } else {
                let xc = add(centroid, pts[2], 0.5);
                (xc, f(xc))
            };
            if fc < vals[2].min(fr) {
                (pts[2], vals[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    pts[i] = add(pts[0], pts[i], 0.5);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("three vertices");
    // A flat simplex cannot explore both directions.
    let e1 = [(pts[1][0] - pts[0][0]) / scale[0], (pts[1][1] - pts[0][1]) / scale[1]];
    let e2 = [(pts[2][0] - pts[0][0]) / scale[0], (pts[2][1] - pts[0][1]) / scale[1]];
    let area = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    let d = diameter(&pts);
    let collapsed = d > cfg.tolerance && area < 1e-9 * d * d;
    NmResult {
        x: pts[best],
        value: vals[best],
        iterations: it,
        converged: converged && !collapsed,
    }
}

/// Maximizes `objective(dd, dl)` over offsets keeping `(d + dd, l + dl)`
/// inside the bounds; the result is re-projected into the bounds.
pub fn maximize_offsets(
    objective: &mut dyn FnMut(f64, f64) -> f64,
    d: f64,
    l: f64,
    params: &GuideParams,
    cfg: &OptConfig,
) -> NmResult {
    let penalty = cfg.penalty;
    let mut f = |x: [f64; 2]| {
        let v = params.violation(d + x[0], l + x[1]);
        let y = objective(x[0], x[1]);
        // Non-finite objectives count as infeasible.
        if y.is_finite() {
            -y + penalty * v
        } else {
            penalty * (1.0 + v)
        }
    };
    let mut r = nelder_mead(&mut f, [0.0, 0.0], cfg);
    r.x = [
        (d + r.x[0]).clamp(params.d_min, params.d_max) - d,
        (l + r.x[1]).clamp(params.l_min, params.l_max) - l,
    ];
    r
}

/// Nelder-Mead suggestion for the current state.
pub fn suggest(ctx: &GuideContext, cfg: &OptConfig) -> Result<Suggestion> {
    ctx.params.validate()?;
    let s = ctx.state;
    if !(ctx.params.d_min..=ctx.params.d_max).contains(&s.distance) || !(0.0..=1.0).contains(&s.light) {
        return Err(Error::Range(format!(
            "state (d = {}, l = {}) outside the guidance bounds",
            s.distance, s.light
        )));
    }
    let regulator = Regulator::new(s.distance, s.depth, ctx.profiles, ctx.params)?;
    let mut failure = None;
    let mut objective = |dd: f64, dl: f64| match offset_quality(ctx, &regulator, dd, dl) {
        Ok((y, _, _)) => y,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let r = maximize_offsets(&mut objective, s.distance, s.light, ctx.params, cfg);
    if let Some(e) = failure {
        return Err(e);
    }
    let (y, m_c, m_d) = offset_quality(ctx, &regulator, r.x[0], r.x[1])?;
    Ok(Suggestion {
        delta_d: r.x[0],
        delta_l: r.x[1],
        y,
        m_c,
        m_d,
        iterations: r.iterations,
    })
}
