//! Linear (zero-padded) convolution by a fixed kernel, evaluated in the
//! Fourier domain. Shared by wave propagation and the camera's object
//! convolution.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{crop_center, pad_center, ComplexGrid, Grid, RealGrid};

/// A kernel spectrum on a `2n × 2n` grid acting on `n × n` inputs as
/// `crop(ifft(fft(pad(x)) · spectrum))`.
#[derive(Clone, Debug)]
pub struct SpectralFilter {
    side: usize,
    spectrum: Vec<Complex64>,
}

impl SpectralFilter {
    /// Wraps an already-computed spectrum of side `2·side`.
    pub fn from_spectrum(side: usize, spectrum: ComplexGrid) -> Result<Self> {
        if spectrum.side() != 2 * side {
            return Err(Error::dim(format!(
                "spectrum side {} must be twice the input side {side}",
                spectrum.side()
            )));
        }
        Ok(SpectralFilter {
            side,
            spectrum: spectrum.into_vec(),
        })
    }

    /// Filter realizing linear convolution with the centered kernel `k`
    /// (an `n × n` grid whose origin is sample `(n/2, n/2)`).
    pub fn convolution(kernel: &RealGrid) -> Result<Self> {
        let side = kernel.side();
        let mut padded = pad_center(&kernel.to_complex(), 2 * side)?;
        fft::fft2_centered_inplace(padded.as_mut_slice(), 2 * side);
        Ok(SpectralFilter {
            side,
            spectrum: padded.into_vec(),
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Applies the filter, or its adjoint when `adjoint` is set (the same
    /// pipeline with the conjugate spectrum).
    pub fn apply(&self, x: &[Complex64], adjoint: bool) -> Result<Vec<Complex64>> {
        let n = self.side;
        if x.len() != n * n {
            return Err(Error::dim(format!(
                "filter expects {n}×{n} input, got {} samples",
                x.len()
            )));
        }
        let grid = Grid::from_vec(n, x.to_vec())?;
        let mut padded = pad_center(&grid, 2 * n)?;
        let buf = padded.as_mut_slice();
        fft::fft2_centered_inplace(buf, 2 * n);
        if adjoint {
            for (v, s) in buf.iter_mut().zip(&self.spectrum) {
                *v *= s.conj();
            }
        } else {
            for (v, s) in buf.iter_mut().zip(&self.spectrum) {
                *v *= s;
            }
        }
        fft::ifft2_centered_inplace(buf, 2 * n);
        Ok(crop_center(&padded, n)?.into_vec())
    }

    pub fn apply_real(&self, x: &[f64], adjoint: bool) -> Result<Vec<f64>> {
        let cx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(self.apply(&cx, adjoint)?.into_iter().map(|v| v.re).collect())
    }
}
