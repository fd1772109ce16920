//! Sensor: irradiance `H = |U|²`, optionally convolved with a known object.

use std::sync::Arc;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::field::{IntensityImage, SampledField};
use crate::spectral::SpectralFilter;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CameraBlock;

/// Convolution operand for a known object, reusable across forward passes.
pub fn prepare_object(o: &IntensityImage) -> Result<Arc<SpectralFilter>> {
    Ok(Arc::new(SpectralFilter::convolution(&o.values)?))
}

/// Without an object returns the raw PSF `|u|²`; with one, the PSF is first
/// scaled to unit sum and then convolved with the object.
pub fn camera_forward(u: &SampledField, o: Option<&IntensityImage>) -> Result<IntensityImage> {
    let mut tape = Tape::new();
    let field = tape.leaf_complex(&u.values);
    let h = tape.abs2(field)?;
    let out = match o {
        None => h,
        Some(obj) => {
            if obj.grid.n_side != u.grid.n_side {
                return Err(Error::dim(format!(
                    "object of side {} does not match field of side {}",
                    obj.grid.n_side, u.grid.n_side
                )));
            }
            let hn = tape.normalize_sum(h)?;
            tape.conv2_fft(hn, prepare_object(obj)?)?
        }
    };
    let mut values = tape.real_grid(out)?;
    // round-off in the FFT convolution can leave tiny negative values
    values.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    IntensityImage::new(u.grid, values)
}
