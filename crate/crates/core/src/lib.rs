//! Underwater imaging simulator and active-perception toolkit.
//!
//! The crate renders images of a textured target through scattering water,
//! derives calibration profiles from those renders, trains a small network
//! that predicts image contrast after a change of distance and light level,
//! and optimizes that change at run time.

pub mod calib;
pub mod config;
pub mod error;
pub mod guide;
pub mod image;
pub mod imstats;
pub mod harness;
pub mod learn;
pub mod optics;
pub mod phase;
pub mod render;
pub mod rgb;

pub use error::{Error, Result};
pub use image::ImageF;
pub use rgb::Rgb;
