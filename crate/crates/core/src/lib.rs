//! Differentiable wave-optics simulation of microscopes, built from per-element
//! blocks (propagation, lenses, phase masks, cameras), together with a
//! gradient-based calibration engine that recovers latent optical parameters
//! from images of known objects.

pub mod autodiff;
pub mod blocks;
pub mod error;
pub mod field;
pub mod io;
mod fft;
pub mod experiments;
pub mod optim;
pub mod psf;
pub mod spectral;
pub mod stack;

pub use error::{Error, Result};
