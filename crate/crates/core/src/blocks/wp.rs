//! Free-space wave propagation by convolution with the sampled
//! Rayleigh–Sommerfeld impulse response
//! `h(x, y) = z/(jλ) · exp(jkr)/r²`, `r = √(z² + x² + y²)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::field::{ComplexGrid, Grid, GridSpec, SampledField};
use crate::spectral::SpectralFilter;

/// Shortest non-zero propagation distance the sampled impulse response
/// supports.
pub const MIN_PROPAGATION_UM: f64 = 200.0;

/// Fraction of the Nyquist-admissible kernel support that is tapered.
pub const KERNEL_TAPER: f64 = 0.3;

fn taper(nu: f64) -> f64 {
    let start = 1.0 - KERNEL_TAPER;
    if nu <= start {
        1.0
    } else if nu >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (nu - start) / KERNEL_TAPER).cos())
    }
}

/// Propagation over a signed axial distance; negative distances
/// back-propagate with the conjugate kernel. Zero is a pass-through.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePropagation {
    pub distance_um: f64,
}

pub fn check_distance(z_um: f64) -> Result<()> {
    if !z_um.is_finite() {
        return Err(Error::param(format!("propagation distance {z_um} is not finite")));
    }
    if z_um != 0.0 && z_um.abs() < MIN_PROPAGATION_UM {
        return Err(Error::Sampling(format!(
            "propagation distance {z_um} µm is below the minimum distance of \
             {MIN_PROPAGATION_UM} µm required for a valid sampled impulse response"
        )));
    }
    Ok(())
}

/// Builds the transfer function `F{h}·dx²` on the `2n` padded grid.
///
/// Kernel samples whose local chirp frequency `x/(λr)` exceeds the grid
/// Nyquist limit `1/(2·dx)` along either axis would alias into the
/// passband and are zeroed. A raised-cosine roll-off over the last
/// [`KERNEL_TAPER`] of the admissible range keeps the truncation from
/// rippling the transfer function.
pub fn propagation_kernel(grid: &GridSpec, z_um: f64) -> Result<SpectralFilter> {
    grid.validate()?;
    check_distance(z_um)?;
    if z_um == 0.0 {
        return Err(Error::param("zero-distance propagation has no kernel"));
    }
    let n = grid.n_side;
    let big = 2 * n;
    let dx = grid.pitch_um;
    let lambda = grid.wavelength_um;
    let k = grid.wavenumber();
    let z = z_um.abs();
    let nyquist = 1.0 / (2.0 * dx);
    let prefactor = Complex64::new(0.0, -z / lambda); // z / (jλ)
    let half = (big / 2) as f64;

    let mut h: ComplexGrid = Grid::from_fn(big, |r, c| {
        let x = (c as f64 - half) * dx;
        let y = (r as f64 - half) * dx;
        let r2 = z * z + x * x + y * y;
        let rr = r2.sqrt();
        let nu = x.abs().max(y.abs()) / (lambda * rr * nyquist);
        let w = taper(nu);
        if w == 0.0 {
            return Complex64::default();
        }
        prefactor * Complex64::from_polar(w / r2, k * rr)
    });
    if z_um < 0.0 {
        h.as_mut_slice().iter_mut().for_each(|v| *v = v.conj());
    }
    fft::fft2_centered_inplace(h.as_mut_slice(), big);
    let area = dx * dx;
    h.as_mut_slice().iter_mut().for_each(|v| *v *= area);
    SpectralFilter::from_spectrum(n, h)
}

/// Propagates `u1` by `z_um`.
pub fn wp_forward(u1: &SampledField, z_um: f64) -> Result<SampledField> {
    check_distance(z_um)?;
    if z_um == 0.0 {
        return Ok(u1.clone());
    }
    let kernel = propagation_kernel(&u1.grid, z_um)?;
    let out = kernel.apply(u1.values.as_slice(), false)?;
    SampledField::new(u1.grid, Grid::from_vec(u1.grid.n_side, out)?)
}

/// Shared, bounded memo of propagation kernels.
#[derive(Clone, Debug)]
pub struct KernelCache {
    inner: Arc<Mutex<HashMap<KernelKey, Arc<SpectralFilter>>>>,
    capacity: usize,
}

// (side, pitch bits, wavelength bits, distance bits)
type KernelKey = (usize, u64, u64, u64);

impl KernelCache {
    pub fn new(capacity: usize) -> Self {
        KernelCache {
            inner: Arc::new(Mutex::new(HashMap::new())),
            capacity,
        }
    }

    pub fn get(&self, grid: &GridSpec, z_um: f64) -> Result<Arc<SpectralFilter>> {
        let key = (
            grid.n_side,
            grid.pitch_um.to_bits(),
            grid.wavelength_um.to_bits(),
            z_um.to_bits(),
        );
        if let Some(k) = self.inner.lock().expect("kernel cache poisoned").get(&key) {
            return Ok(k.clone());
        }
        let kernel = Arc::new(propagation_kernel(grid, z_um)?);
        let mut map = self.inner.lock().expect("kernel cache poisoned");
        if map.len() < self.capacity {
            map.insert(key, kernel.clone());
        }
        Ok(kernel)
    }
}

impl Default for KernelCache {
    fn default() -> Self {
        KernelCache::new(16)
    }
}
