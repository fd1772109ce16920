//! Square 2D FFT kernels on row-major buffers.
//!
//! The centered transforms place the zero frequency (and the spatial origin)
//! at sample `(n/2, n/2)`. For even `n` the index shift is equivalent to a
//! `(-1)^(a+b)` checkerboard modulation applied before and after the plain
//! DFT, which is what [`fft2_centered_inplace`] does.
//!
//! Forward transforms are unnormalized; inverse transforms carry `1/n²`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

struct PlanCache {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
}

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(PlanCache {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
        scratch: Vec::new(),
        transpose: Vec::new(),
    });
}

fn transpose_into(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for rb in (0..n).step_by(BLOCK) {
        for cb in (0..n).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(n) {
                for c in cb..(cb + BLOCK).min(n) {
                    dst[c * n + r] = src[r * n + c];
                }
            }
        }
    }
}

fn checkerboard(data: &mut [Complex64], n: usize) {
    for (r, row) in data.chunks_exact_mut(n).enumerate() {
        let start = r & 1;
        for v in row.iter_mut().skip(start).step_by(2) {
            *v = -*v;
        }
    }
}

/// Plain (uncentered) 2D DFT of an `n × n` row-major buffer, in place.
pub(crate) fn fft2_plain_inplace(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    PLANS.with(|cell| {
        let mut cache = cell.borrow_mut();
        let cache = &mut *cache;
        let plan = if inverse {
            cache
                .inverse
                .entry(n)
                .or_insert_with(|| cache.planner.plan_fft_inverse(n))
                .clone()
        } else {
            cache
                .forward
                .entry(n)
                .or_insert_with(|| cache.planner.plan_fft_forward(n))
                .clone()
        };
        let scratch_len = plan.get_inplace_scratch_len();
        if cache.scratch.len() < scratch_len {
            cache.scratch.resize(scratch_len, Complex64::default());
        }
        if cache.transpose.len() < n * n {
            cache.transpose.resize(n * n, Complex64::default());
        }
        let scratch = &mut cache.scratch[..scratch_len];
        let tmp = &mut cache.transpose[..n * n];

        plan.process_with_scratch(data, scratch);
        transpose_into(data, tmp, n);
        plan.process_with_scratch(tmp, scratch);
        transpose_into(tmp, data, n);
    });
    if inverse {
        let norm = 1.0 / (n * n) as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }
}

/// Centered forward 2D DFT (zero frequency at `(n/2, n/2)`), unnormalized.
pub(crate) fn fft2_centered_inplace(data: &mut [Complex64], n: usize) {
    checkerboard(data, n);
    fft2_plain_inplace(data, n, false);
    checkerboard(data, n);
}

/// Centered inverse 2D DFT with `1/n²` normalization.
pub(crate) fn ifft2_centered_inplace(data: &mut [Complex64], n: usize) {
    checkerboard(data, n);
    fft2_plain_inplace(data, n, true);
    checkerboard(data, n);
}
