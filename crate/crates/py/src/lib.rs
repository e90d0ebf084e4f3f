//! Python bindings. Images cross the boundary as `(width, height, pixels)`
//! with `pixels` a flat row-major list of RGB triples.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use aquaperc::config::{from_toml, SceneConfig};
use aquaperc::imstats::{self, PatchGrid};
use aquaperc::render::{apply_noise, render as render_scene};
use aquaperc::{Error, ImageF, Rgb};

type PyImage = (usize, usize, Vec<f64>);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn flatten(img: &ImageF) -> PyImage {
    let pixels = img.pixels().iter().flat_map(|p| p.to_array()).collect();
    (img.width(), img.height(), pixels)
}

fn unflatten(width: usize, height: usize, pixels: &[f64]) -> aquaperc::Result<ImageF> {
    if pixels.len() != width * height * 3 {
        return Err(Error::Domain(format!(
            "{} values do not make a {width}x{height} RGB image",
            pixels.len()
        )));
    }
    let px = pixels.chunks_exact(3).map(|c| Rgb::new(c[0], c[1], c[2])).collect();
    ImageF::from_pixels(width, height, px)
}

/// Bundled Jerlov water type ids.
#[pyfunction]
fn water_types() -> Vec<&'static str> {
    aquaperc::optics::list_water_types()
}

/// Fournier-Forand phase function (1/sr) at `psi` radians.
#[pyfunction]
fn phase_ff(n: f64, mu: f64, psi: f64) -> PyResult<f64> {
    aquaperc::phase::eval_ff(n, mu, psi).map_err(to_py)
}

/// Henyey-Greenstein phase function (1/sr) at `psi` radians.
#[pyfunction]
fn phase_hg(g: f64, psi: f64) -> PyResult<f64> {
    aquaperc::phase::eval_hg(g, psi).map_err(to_py)
}

#[pyfunction]
fn backscatter_fraction(n: f64, mu: f64) -> PyResult<f64> {
    aquaperc::phase::backscatter_fraction(n, mu).map_err(to_py)
}

#[pyfunction]
fn mu_from_backscatter(n: f64, b: f64) -> PyResult<f64> {
    aquaperc::phase::mu_from_backscatter(n, b).map_err(to_py)
}

fn render_impl(scene_toml: &str, seed: u64, noise: bool) -> aquaperc::Result<PyImage> {
    let cfg: SceneConfig = from_toml(scene_toml, "scene")?;
    let clean = render_scene(&cfg.build()?, cfg.spp, seed)?;
    let img = if noise { apply_noise(&clean, &cfg.noise, seed)? } else { clean };
    Ok(flatten(&img))
}

/// Renders a scene given as TOML (empty for defaults).
#[pyfunction]
#[pyo3(signature = (scene_toml = "", seed = 0, noise = true))]
fn render(py: Python<'_>, scene_toml: &str, seed: u64, noise: bool) -> PyResult<PyImage> {
    let text = scene_toml.to_owned();
    py.detach(move || render_impl(&text, seed, noise)).map_err(to_py)
}

/// Mean of per-patch standard deviations, per channel.
#[pyfunction]
fn patch_contrast(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<[f64; 3]> {
    let img = unflatten(width, height, &pixels).map_err(to_py)?;
    let grid = PatchGrid::for_image(&img).map_err(to_py)?;
    imstats::patch_contrast(&img, &grid).map(Rgb::to_array).map_err(to_py)
}

/// Whole-image standard deviation, per channel.
#[pyfunction]
fn image_stdev(width: usize, height: usize, pixels: Vec<f64>) -> PyResult<[f64; 3]> {
    let img = unflatten(width, height, &pixels).map_err(to_py)?;
    imstats::whole_stdev(&img).map(Rgb::to_array).map_err(to_py)
}

#[pymodule]
fn aquaperc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(water_types, m)?)?;
    m.add_function(wrap_pyfunction!(phase_ff, m)?)?;
    m.add_function(wrap_pyfunction!(phase_hg, m)?)?;
    m.add_function(wrap_pyfunction!(backscatter_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(mu_from_backscatter, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(patch_contrast, m)?)?;
    m.add_function(wrap_pyfunction!(image_stdev, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_and_shape_check() {
        let img = ImageF::from_fn(4, 3, |x, y| Rgb::new(x as f64, y as f64, 0.5));
        let (w, h, px) = flatten(&img);
        assert_eq!(px.len(), 36);
        assert_eq!(unflatten(w, h, &px).unwrap(), img);
        assert!(unflatten(4, 4, &px).is_err());
    }

    #[test]
    fn render_from_toml() {
        let (w, h, px) = render_impl("width = 16\nheight = 9\nspp = 1\n", 3, true).unwrap();
        assert_eq!((w, h, px.len()), (16, 9, 16 * 9 * 3));
        assert!(render_impl("no_such_key = 1\n", 0, false).is_err());
    }
}
