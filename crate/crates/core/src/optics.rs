//! Water-body optical properties: bundled Jerlov tables, conversion from
//! spectral to wideband (RGB) coefficients, and the per-scene [`WaterProps`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rgb::Rgb;

/// Identifiers of the bundled water types, from clear oceanic to turbid coastal.
pub const WATER_TYPES: [&str; 10] = [
    "JI", "JIA", "JIB", "JII", "JIII", "J1C", "J3C", "J5C", "J7C", "J9C",
];

const BUNDLED: [(&str, &str); 10] = [
    ("JI", include_str!("../data/jerlov/JI.txt")),
    ("JIA", include_str!("../data/jerlov/JIA.txt")),
    ("JIB", include_str!("../data/jerlov/JIB.txt")),
    ("JII", include_str!("../data/jerlov/JII.txt")),
    ("JIII", include_str!("../data/jerlov/JIII.txt")),
    ("J1C", include_str!("../data/jerlov/J1C.txt")),
    ("J3C", include_str!("../data/jerlov/J3C.txt")),
    ("J5C", include_str!("../data/jerlov/J5C.txt")),
    ("J7C", include_str!("../data/jerlov/J7C.txt")),
    ("J9C", include_str!("../data/jerlov/J9C.txt")),
];

/// Averaging grid step for the wideband conversion, in nm.
const BAND_GRID_STEP_NM: f64 = 1.0;

pub fn list_water_types() -> Vec<&'static str> {
    WATER_TYPES.to_vec()
}

/// One spectral sample of a Jerlov table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSample {
    pub wavelength_nm: f64,
    pub absorption: f64,
    pub scattering: f64,
}

/// Spectral absorption and scattering coefficients of one water type.
#[derive(Debug, Clone, PartialEq)]
pub struct JerlovTable {
    pub water_type_id: String,
    samples: Vec<SpectralSample>,
}

impl JerlovTable {
    pub fn new(water_type_id: impl Into<String>, samples: Vec<SpectralSample>) -> Result<Self> {
        let id = water_type_id.into();
        if samples.len() < 2 {
            return Err(Error::Domain(format!("table {id} needs at least two samples")));
        }
        for w in samples.windows(2) {
            if w[1].wavelength_nm <= w[0].wavelength_nm {
                return Err(Error::Domain(format!(
                    "table {id}: wavelengths must be strictly increasing ({} then {})",
                    w[0].wavelength_nm, w[1].wavelength_nm
                )));
            }
        }
        if let Some(s) = samples
            .iter()
            .find(|s| !(s.absorption >= 0.0 && s.scattering >= 0.0) || !s.wavelength_nm.is_finite())
        {
            return Err(Error::Domain(format!(
                "table {id}: invalid coefficients at {} nm",
                s.wavelength_nm
            )));
        }
        Ok(JerlovTable {
            water_type_id: id,
            samples,
        })
    }

    /// Parses the `wavelength_nm absorption scattering` text format; lines
    /// starting with `#` are comments.
    pub fn parse(water_type_id: &str, text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(water_type_id, format!("line {}: {e}", lineno + 1)))?;
            if fields.len() != 3 {
                return Err(Error::parse(
                    water_type_id,
                    format!("line {}: expected 3 columns, got {}", lineno + 1, fields.len()),
                ));
            }
            samples.push(SpectralSample {
                wavelength_nm: fields[0],
                absorption: fields[1],
                scattering: fields[2],
            });
        }
        JerlovTable::new(water_type_id, samples)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        JerlovTable::parse(&id, &text)
    }

    pub fn bundled(water_type_id: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(id, _)| *id == water_type_id)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown water type {water_type_id:?}; expected one of {WATER_TYPES:?}"
                ))
            })?;
        JerlovTable::parse(water_type_id, text)
    }

    pub fn samples(&self) -> &[SpectralSample] {
        &self.samples
    }

    pub fn wavelength_support(&self) -> (f64, f64) {
        (
            self.samples[0].wavelength_nm,
            self.samples[self.samples.len() - 1].wavelength_nm,
        )
    }

    /// Linearly interpolated (absorption, scattering) at `wavelength_nm`.
    pub fn interpolate(&self, wavelength_nm: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.wavelength_support();
        if !(lo..=hi).contains(&wavelength_nm) {
            return Err(Error::Range(format!(
                "{wavelength_nm} nm outside table {} support [{lo}, {hi}]",
                self.water_type_id
            )));
        }
        let idx = self
            .samples
            .partition_point(|s| s.wavelength_nm <= wavelength_nm)
            .clamp(1, self.samples.len() - 1);
        let (s0, s1) = (&self.samples[idx - 1], &self.samples[idx]);
        let t = (wavelength_nm - s0.wavelength_nm) / (s1.wavelength_nm - s0.wavelength_nm);
        Ok((
            s0.absorption + t * (s1.absorption - s0.absorption),
            s0.scattering + t * (s1.scattering - s0.scattering),
        ))
    }

    /// Multiplies every coefficient by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| SpectralSample {
                wavelength_nm: s.wavelength_nm,
                absorption: s.absorption * k,
                scattering: s.scattering * k,
            })
            .collect();
        JerlovTable::new(self.water_type_id.clone(), samples)
    }
}

/// A closed wavelength interval in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl From<[f64; 2]> for Band {
    fn from(v: [f64; 2]) -> Self {
        Band { lo: v[0], hi: v[1] }
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.lo, b.hi]
    }
}

/// Wavelength intervals averaged into each camera channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRanges {
    pub red: Band,
    pub green: Band,
    pub blue: Band,
}

impl Default for BandRanges {
    fn default() -> Self {
        BandRanges {
            red: Band { lo: 600.0, hi: 700.0 },
            green: Band { lo: 500.0, hi: 600.0 },
            blue: Band { lo: 400.0, hi: 500.0 },
        }
    }
}

impl BandRanges {
    pub fn validate(&self) -> Result<()> {
        let bands = [("red", self.red), ("green", self.green), ("blue", self.blue)];
        for (name, b) in bands {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.hi > b.lo) {
                return Err(Error::Domain(format!("{name} band [{}, {}] is empty", b.lo, b.hi)));
            }
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let (a, b) = (bands[i].1, bands[j].1);
                if a.lo < b.hi && b.lo < a.hi {
                    return Err(Error::Domain(format!(
                        "{} and {} bands overlap",
                        bands[i].0, bands[j].0
                    )));
                }
            }
        }
        Ok(())
    }
}

fn band_mean(table: &JerlovTable, band: Band) -> Result<(f64, f64)> {
    let steps = ((band.hi - band.lo) / BAND_GRID_STEP_NM + 1e-9).floor() as usize;
    let mut sum = (0.0, 0.0);
    for k in 0..=steps {
        let (a, b) = table.interpolate(band.lo + k as f64 * BAND_GRID_STEP_NM)?;
        sum.0 += a;
        sum.1 += b;
    }
    let n = (steps + 1) as f64;
    Ok((sum.0 / n, sum.1 / n))
}

/// Averages the spectral coefficients over each band on a 1 nm grid.
/// Returns `(absorption, scattering)`.
pub fn wideband_from_table(table: &JerlovTable, bands: &BandRanges) -> Result<(Rgb, Rgb)> {
    bands.validate()?;
    let (ar, br) = band_mean(table, bands.red)?;
    let (ag, bg) = band_mean(table, bands.green)?;
    let (ab, bb) = band_mean(table, bands.blue)?;
    Ok((Rgb::new(ar, ag, ab), Rgb::new(br, bg, bb)))
}

/// Wideband optical properties of one water body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProps {
    /// 1/m
    pub absorption: Rgb,
    /// 1/m
    pub scattering: Rgb,
    /// Fraction of scattered light sent into the rear hemisphere.
    pub backscatter_fraction: f64,
    /// Real refractive index of the suspended particles, relative to water.
    pub particle_index: f64,
}

impl WaterProps {
    pub fn new(
        absorption: Rgb,
        scattering: Rgb,
        backscatter_fraction: f64,
        particle_index: f64,
    ) -> Result<Self> {
        let w = WaterProps {
            absorption,
            scattering,
            backscatter_fraction,
            particle_index,
        };
        w.validate()?;
        Ok(w)
    }

    /// Wideband properties of a bundled water type.
    pub fn from_water_type(
        water_type_id: &str,
        bands: &BandRanges,
        backscatter_fraction: f64,
        particle_index: f64,
    ) -> Result<Self> {
        let table = JerlovTable::bundled(water_type_id)?;
        let (a, b) = wideband_from_table(&table, bands)?;
        WaterProps::new(a, b, backscatter_fraction, particle_index)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.absorption.is_physical() || !self.scattering.is_physical() {
            return Err(Error::Domain(
                "absorption and scattering must be finite and non-negative".into(),
            ));
        }
        if self.attenuation().min_component() <= 0.0 {
            return Err(Error::Domain("beam attenuation must be positive in every channel".into()));
        }
        if !(self.backscatter_fraction > 0.0 && self.backscatter_fraction < 0.5) {
            return Err(Error::Domain(format!(
                "backscatter fraction {} outside (0, 0.5)",
                self.backscatter_fraction
            )));
        }
        if !(self.particle_index > 1.0 && self.particle_index < 1.4) {
            return Err(Error::Domain(format!(
                "particle refractive index {} outside (1, 1.4)",
                self.particle_index
            )));
        }
        Ok(())
    }

    /// Beam attenuation c = a + b.
    pub fn attenuation(&self) -> Rgb {
        self.absorption + self.scattering
    }
}
