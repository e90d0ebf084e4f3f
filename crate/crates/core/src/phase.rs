//! Volume scattering phase functions.
//!
//! Two families are supported: Henyey-Greenstein (one asymmetry parameter)
//! and Fournier-Forand, parameterized by the particle refractive index `n`
//! and the slope `mu` of a hyperbolic (Junge) particle size distribution.
//! Because renders are usually specified by backscatter fraction rather than
//! by `mu`, [`mu_from_backscatter`] inverts the closed-form backscatter
//! fraction of the Fournier-Forand function.
//!
//! Angles are sampled by inverting a tabulated CDF with binary search: the
//! Fournier-Forand CDF has no cheap closed-form inverse, and its forward
//! peak diverges at zero, so the table is log-spaced near the origin.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// First non-zero angle of every CDF table, in radians.
pub const PSI_MIN: f64 = 1e-4;
pub const DEFAULT_TABLE_SIZE: usize = 2048;
/// Angle at which the table switches from log to linear spacing.
const LOG_SECTION_END: f64 = PI / 180.0;
const U_MAX: f64 = 1.0 - 1e-12;

/// Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

pub fn eval_hg(g: f64, psi: f64) -> Result<f64> {
    check_hg(g)?;
    check_angle(psi, true)?;
    Ok(hg_unchecked(g, psi.cos()))
}

#[inline]
fn hg_unchecked(g: f64, cos_psi: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_psi;
    (1.0 - g * g) / (4.0 * PI * denom * denom.sqrt())
}

fn check_hg(g: f64) -> Result<()> {
    if g > -1.0 && g < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("HG asymmetry g = {g} outside (-1, 1)")))
    }
}

fn check_ff(n: f64, mu: f64) -> Result<()> {
    if !(n > 1.0 && n.is_finite()) {
        return Err(Error::Domain(format!("FF refractive index n = {n} must exceed 1")));
    }
    if !(mu > 3.0 && mu < 5.0) {
        return Err(Error::Domain(format!("FF slope mu = {mu} outside (3, 5)")));
    }
    Ok(())
}

fn check_angle(psi: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero {
        (0.0..=PI).contains(&psi)
    } else {
        psi > 0.0 && psi <= PI
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!("scattering angle {psi} rad outside the valid range")))
    }
}

/// Auxiliary Fournier-Forand quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfDerived {
    pub nu: f64,
    pub delta90: f64,
    pub delta180: f64,
}

impl FfDerived {
    pub fn new(n: f64, mu: f64) -> Self {
        FfDerived {
            nu: (3.0 - mu) / 2.0,
            delta90: ff_delta(n, FRAC_PI_2),
            delta180: ff_delta(n, PI),
        }
    }
}

#[inline]
fn ff_delta(n: f64, psi: f64) -> f64 {
    let s = (psi / 2.0).sin();
    4.0 / (3.0 * (n - 1.0).powi(2)) * s * s
}

/// Fournier-Forand phase function value in 1/sr. Undefined at `psi == 0`.
pub fn eval_ff(n: f64, mu: f64, psi: f64) -> Result<f64> {
    check_ff(n, mu)?;
    check_angle(psi, false)?;
    Ok(Ff::new(n, mu).eval(psi))
}

/// Precomputed Fournier-Forand constants for repeated evaluation.
#[derive(Debug, Clone, Copy)]
struct Ff {
    nu: f64,
    k: f64,
    tail: f64,
}

impl Ff {
    fn new(n: f64, mu: f64) -> Self {
        let d = FfDerived::new(n, mu);
        let d180_nu = d.delta180.powf(d.nu);
        Ff {
            nu: d.nu,
            k: 4.0 / (3.0 * (n - 1.0).powi(2)),
            tail: (1.0 - d180_nu) / (16.0 * PI * (d.delta180 - 1.0) * d180_nu),
        }
    }

    #[inline]
    fn eval(&self, psi: f64) -> f64 {
        let s = (psi / 2.0).sin();
        self.eval_parts(s * s, psi.cos())
    }

    /// Same as `eval` but from `cos(psi)`, avoiding the inverse cosine.
    #[inline]
    fn eval_cos(&self, c: f64) -> f64 {
        let s2_min = (PSI_MIN / 2.0).sin().powi(2);
        let s2 = (0.5 * (1.0 - c)).max(s2_min);
        self.eval_parts(s2, c.clamp(-1.0, 1.0))
    }

    #[inline]
    fn eval_parts(&self, s2: f64, c: f64) -> f64 {
        let delta = self.k * s2;
        // The expression is 0/0 at delta = 1; bridge the removable
        // singularity with the mean of two nearby evaluations.
        const GAP: f64 = 1e-5;
        if (delta - 1.0).abs() < GAP {
            let lo = self.eval_parts((1.0 - 2.0 * GAP) / self.k, c);
            let hi = self.eval_parts((1.0 + 2.0 * GAP) / self.k, c);
            return 0.5 * (lo + hi);
        }
        let d_nu = delta.powf(self.nu);
        let nu = self.nu;
        let one_m = 1.0 - delta;
        let bracket = nu * one_m - (1.0 - d_nu) + (delta * (1.0 - d_nu) - nu * one_m) / s2;
        bracket / (4.0 * PI * one_m * one_m * d_nu) + self.tail * (3.0 * c * c - 1.0)
    }
}

/// Backscatter fraction B = b_b / b of a Fournier-Forand function.
pub fn backscatter_fraction(n: f64, mu: f64) -> Result<f64> {
    check_ff(n, mu)?;
    let d = FfDerived::new(n, mu);
    if (d.delta90 - 1.0).abs() < 1e-12 {
        return Err(Error::Domain(format!("degenerate parameters: delta90 = 1 at n = {n}")));
    }
    let d_nu = d.delta90.powf(d.nu);
    let d_nu1 = d.delta90.powf(d.nu + 1.0);
    Ok(1.0 - (1.0 - d_nu1 - 0.5 * (1.0 - d_nu)) / ((1.0 - d.delta90) * d_nu))
}

/// Slope parameter `mu` giving backscatter fraction `b` at refractive index `n`.
pub fn mu_from_backscatter(n: f64, b: f64) -> Result<f64> {
    if !(n > 1.0 && n.is_finite()) {
        return Err(Error::Domain(format!("FF refractive index n = {n} must exceed 1")));
    }
    if !(b > 0.0 && b < 0.5) {
        return Err(Error::Domain(format!("backscatter fraction {b} outside (0, 0.5)")));
    }
    let delta90 = ff_delta(n, FRAC_PI_2);
    let arg = 2.0 * b * (delta90 - 1.0) + 1.0;
    if arg <= 0.0 || (delta90 - 1.0).abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "no FF slope reproduces B = {b} at n = {n}"
        )));
    }
    Ok(2.0 * arg.ln() / delta90.ln() + 3.0)
}

/// Backscatter fraction of a Henyey-Greenstein function (closed form).
pub fn hg_backscatter_fraction(g: f64) -> Result<f64> {
    check_hg(g)?;
    if g.abs() < 1e-9 {
        return Ok(0.5);
    }
    Ok((1.0 - g) / (2.0 * g) * ((1.0 + g) / (1.0 + g * g).sqrt() - 1.0))
}

/// Asymmetry `g >= 0` whose HG backscatter fraction equals `b`.
pub fn hg_g_from_backscatter(b: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 0.5) {
        return Err(Error::Domain(format!("backscatter fraction {b} outside (0, 0.5]")));
    }
    // B(g) decreases monotonically on [0, 1).
    let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hg_backscatter_fraction(mid)? > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which phase function a [`PhaseSpec`] tabulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseKind {
    Hg { g: f64 },
    Ff { n: f64, mu: f64 },
}

impl PhaseKind {
    /// Fournier-Forand function with the given backscatter fraction.
    pub fn ff_from_backscatter(n: f64, b: f64) -> Result<Self> {
        Ok(PhaseKind::Ff {
            n,
            mu: mu_from_backscatter(n, b)?,
        })
    }

    /// Henyey-Greenstein function with the given backscatter fraction.
    pub fn hg_from_backscatter(b: f64) -> Result<Self> {
        Ok(PhaseKind::Hg {
            g: hg_g_from_backscatter(b)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseKind::Hg { g } => check_hg(g),
            PhaseKind::Ff { n, mu } => check_ff(n, mu),
        }
    }

    pub fn eval(&self, psi: f64) -> Result<f64> {
        match *self {
            PhaseKind::Hg { g } => eval_hg(g, psi),
            PhaseKind::Ff { n, mu } => eval_ff(n, mu, psi),
        }
    }

    pub fn backscatter_fraction(&self) -> Result<f64> {
        match *self {
            PhaseKind::Hg { g } => hg_backscatter_fraction(g),
            PhaseKind::Ff { n, mu } => backscatter_fraction(n, mu),
        }
    }
}

/// Fast evaluator without argument checks, for the renderer's inner loop.
#[derive(Debug, Clone, Copy)]
enum Evaluator {
    Hg(f64),
    Ff(Ff),
}

impl Evaluator {
    fn new(kind: PhaseKind) -> Self {
        match kind {
            PhaseKind::Hg { g } => Evaluator::Hg(g),
            PhaseKind::Ff { n, mu } => Evaluator::Ff(Ff::new(n, mu)),
        }
    }

    #[inline]
    fn eval(&self, psi: f64) -> f64 {
        self.eval_unclamped(psi.max(PSI_MIN))
    }

    #[inline]
    fn eval_unclamped(&self, psi: f64) -> f64 {
        match self {
            Evaluator::Hg(g) => hg_unchecked(*g, psi.cos()),
            Evaluator::Ff(ff) => ff.eval(psi),
        }
    }
}

/// A phase function together with its tabulated CDF over scattering angle.
#[derive(Debug, Clone)]
pub struct PhaseSpec {
    kind: PhaseKind,
    evaluator: Evaluator,
    angles: Vec<f64>,
    cdf: Vec<f64>,
    normalization: f64,
}

impl PhaseSpec {
    pub fn new(kind: PhaseKind) -> Result<Self> {
        build_cdf_table(kind, DEFAULT_TABLE_SIZE)
    }

    pub fn kind(&self) -> PhaseKind {
        self.kind
    }

    /// `(angle, cumulative probability)` pairs, starting at `(0, 0)` and
    /// ending at `(pi, 1)`.
    pub fn cdf_table(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.angles.iter().copied().zip(self.cdf.iter().copied())
    }

    pub fn table_len(&self) -> usize {
        self.angles.len()
    }

    /// Integral of the phase function over the sphere before the table was
    /// renormalized.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Phase function value in 1/sr; angles below the table's first
    /// non-zero entry are clamped to it.
    #[inline]
    pub fn eval(&self, psi: f64) -> f64 {
        self.evaluator.eval(psi)
    }

    #[inline]
    pub fn eval_cos(&self, cos_psi: f64) -> f64 {
        match self.evaluator {
            Evaluator::Hg(g) => hg_unchecked(g, cos_psi),
            Evaluator::Ff(ff) => ff.eval_cos(cos_psi),
        }
    }

    /// Tabulated cumulative probability of scattering by at most `psi`.
    pub fn cdf(&self, psi: f64) -> f64 {
        if psi <= 0.0 {
            return 0.0;
        }
        if psi >= PI {
            return 1.0;
        }
        let i = self.angles.partition_point(|&a| a <= psi).clamp(1, self.angles.len() - 1);
        let (a0, a1) = (self.angles[i - 1], self.angles[i]);
        let t = (psi - a0) / (a1 - a0);
        self.cdf[i - 1] + t * (self.cdf[i] - self.cdf[i - 1])
    }

    /// Inverts the tabulated CDF: binary search for the bracketing entries,
    /// then linear interpolation. Never returns less than [`PSI_MIN`].
    #[inline]
    pub fn sample_angle(&self, u: f64) -> f64 {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, U_MAX) };
        let i = self.cdf.partition_point(|&f| f <= u).clamp(1, self.cdf.len() - 1);
        let (f0, f1) = (self.cdf[i - 1], self.cdf[i]);
        let (a0, a1) = (self.angles[i - 1], self.angles[i]);
        let t = if f1 > f0 { (u - f0) / (f1 - f0) } else { 0.0 };
        (a0 + t * (a1 - a0)).max(PSI_MIN)
    }
}

fn table_angles(n_table: usize) -> Vec<f64> {
    let n_log = n_table / 2;
    let n_lin = n_table - 1 - n_log;
    let mut angles = Vec::with_capacity(n_table);
    angles.push(0.0);
    let (l0, l1) = (PSI_MIN.ln(), LOG_SECTION_END.ln());
    for i in 0..n_log {
        angles.push((l0 + (l1 - l0) * i as f64 / (n_log - 1) as f64).exp());
    }
    for i in 1..=n_lin {
        angles.push(LOG_SECTION_END + (PI - LOG_SECTION_END) * i as f64 / n_lin as f64);
    }
    angles
}

/// Builds the CDF table `F(psi) = 2 pi int_0^psi p(t) sin t dt`.
///
/// The first `n_table / 2` entries are log-spaced on `[PSI_MIN, 1 deg]`, the
/// rest linear up to pi. Each interval is integrated with 8-point
/// Gauss-Legendre (in log-angle on the log section). The mass below
/// `PSI_MIN` comes from a local power-law fit, which is exact to leading
/// order for both families.
pub fn build_cdf_table(kind: PhaseKind, n_table: usize) -> Result<PhaseSpec> {
    kind.validate()?;
    if n_table < 64 {
        return Err(Error::Domain(format!("CDF table needs at least 64 entries, got {n_table}")));
    }
    let ev = Evaluator::new(kind);
    let density = |psi: f64| 2.0 * PI * ev.eval_unclamped(psi) * psi.sin();
    let angles = table_angles(n_table);

    // Positivity over a dense grid; FF with extreme parameters can go
    // negative in the bracketed term.
    for i in 1..angles.len() {
        let (a, b) = (angles[i - 1].max(PSI_MIN), angles[i]);
        for k in 0..4 {
            let psi = a + (b - a) * k as f64 / 4.0;
            let v = ev.eval(psi.max(PSI_MIN));
            if !v.is_finite() {
                return Err(Error::Numeric(format!("{kind:?}: non-finite value at {psi}")));
            }
            if v <= 0.0 {
                return Err(Error::Domain(format!(
                    "{kind:?}: phase function not positive at {psi} rad"
                )));
            }
        }
    }

    let head = {
        let h1 = density(PSI_MIN);
        let h0 = density(PSI_MIN / 2.0);
        let q = (h1 / h0).ln() / 2f64.ln();
        if !(q > -1.0) {
            return Err(Error::Numeric(format!(
                "{kind:?}: forward peak not integrable (local exponent {q})"
            )));
        }
        h1 * PSI_MIN / (q + 1.0)
    };

    let mut cdf = Vec::with_capacity(angles.len());
    cdf.push(0.0);
    cdf.push(head);
    for i in 2..angles.len() {
        let (a, b) = (angles[i - 1], angles[i]);
        let mass = if b <= LOG_SECTION_END * (1.0 + 1e-12) {
            let (la, lb) = (a.ln(), b.ln());
            gauss_legendre(la, lb, |u| {
                let psi = u.exp();
                density(psi) * psi
            })
        } else {
            gauss_legendre(a, b, density)
        };
        if !mass.is_finite() {
            return Err(Error::Numeric(format!("{kind:?}: non-finite integral near {b}")));
        }
        cdf.push(cdf[i - 1] + mass);
    }
    let total = *cdf.last().expect("table is non-empty");
    if (total - 1.0).abs() > 1e-3 {
        return Err(Error::Numeric(format!(
            "{kind:?}: phase function integrates to {total}, not 1"
        )));
    }
    for v in cdf.iter_mut() {
        *v /= total;
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    for w in cdf.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Numeric(format!("{kind:?}: CDF table not strictly increasing")));
        }
    }
    Ok(PhaseSpec {
        kind,
        evaluator: ev,
        angles,
        cdf,
        normalization: total,
    })
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(GL_WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// One row of the Petzold comparison, values in 1/sr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PetzoldRow {
    pub psi_deg: f64,
    pub ff: f64,
    pub hg: f64,
    pub petzold: f64,
}

const PETZOLD_TEXT: &str = include_str!("../data/petzold_avg.txt");

/// The bundled Petzold average-particle table as `(angle_deg, value_per_sr)`.
pub fn petzold_table() -> Result<Vec<(f64, f64)>> {
    parse_petzold(PETZOLD_TEXT, "petzold_avg.txt")
}

pub fn parse_petzold(text: &str, origin: &str) -> Result<Vec<(f64, f64)>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(a)), Some(Ok(v)), None) => rows.push((a, v)),
            _ => {
                return Err(Error::parse(
                    origin,
                    format!("line {}: expected `angle_deg value_per_sr`", lineno + 1),
                ))
            }
        }
    }
    if rows.len() < 2 {
        return Err(Error::parse(origin, "fewer than two rows"));
    }
    Ok(rows)
}

/// Mean cosine of a tabulated phase function, using log-log interpolation
/// between rows and a power-law extrapolation toward zero angle.
pub fn tabulated_mean_cosine(rows: &[(f64, f64)]) -> f64 {
    let rad: Vec<(f64, f64)> = rows.iter().map(|&(a, v)| (a.to_radians(), v)).collect();
    let (a0, v0) = rad[0];
    let (a1, v1) = rad[1];
    // p ~ v0 (psi / a0)^s below the first sample; 2 pi p sin ~ 2 pi p psi.
    let s = (v1 / v0).ln() / (a1 / a0).ln();
    let head = 2.0 * PI * v0 * a0 * a0 / (s + 2.0);
    let (mut total, mut first) = (head, head);
    for w in rad.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let slope = (y1 / y0).ln() / (x1 / x0).ln();
        let steps = 64;
        for k in 0..steps {
            let (ta, tb) = (
                x0 + (x1 - x0) * k as f64 / steps as f64,
                x0 + (x1 - x0) * (k + 1) as f64 / steps as f64,
            );
            let f = |psi: f64| {
                let p = y0 * (psi / x0).powf(slope);
                2.0 * PI * p * psi.sin()
            };
            let m = gauss_legendre(ta, tb, f);
            let mc = gauss_legendre(ta, tb, |psi| f(psi) * psi.cos());
            total += m;
            first += mc;
        }
    }
    first / total
}

/// Evaluates an FF and an HG function at every bundled Petzold angle.
pub fn petzold_compare(ff: &PhaseKind, hg: &PhaseKind) -> Result<Vec<PetzoldRow>> {
    let table = petzold_table()?;
    table
        .iter()
        .map(|&(deg, pet)| {
            let psi = deg.to_radians().min(PI);
            Ok(PetzoldRow {
                psi_deg: deg,
                ff: ff.eval(psi)?,
                hg: hg.eval(psi)?,
                petzold: pet,
            })
        })
        .collect()
}
