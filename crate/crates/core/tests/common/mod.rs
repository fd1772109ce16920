//! Oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

pub mod grad;

use std::f64::consts::PI;

use diffoptics::experiments::{ExperimentSetup, PerturbationSpec};
use diffoptics::field::{Grid, GridSpec, SampledField};
use num_complex::Complex64;

/// `exp(−r²/w0²)` field centered on the grid: 1/e² intensity radius `w0`.
pub fn gaussian(grid: &GridSpec, w0: f64, x0: f64, y0: f64) -> SampledField {
    let n = grid.n_side;
    let half = (n / 2) as f64;
    let values = Grid::from_fn(n, |r, c| {
        let x = (c as f64 - half) * grid.pitch_um - x0;
        let y = (r as f64 - half) * grid.pitch_um - y0;
        Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
    });
    SampledField::new(*grid, values).unwrap()
}

/// Gaussian-beam 1/e² radius after propagating `z`.
pub fn gaussian_radius(w0: f64, wavelength: f64, z: f64) -> f64 {
    w0 * (1.0 + (wavelength * z / (PI * w0 * w0)).powi(2)).sqrt()
}

/// 1/e² radius estimated as `2·σx` of the irradiance about its centroid.
pub fn measured_radius(u: &SampledField) -> f64 {
    let n = u.grid.n_side;
    let half = (n / 2) as f64;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            let i = u.values.get(r, c).norm_sqr();
            let x = (c as f64 - half) * u.grid.pitch_um;
            s0 += i;
            s1 += i * x;
            s2 += i * x * x;
        }
    }
    let mean = s1 / s0;
    2.0 * (s2 / s0 - mean * mean).sqrt()
}

pub fn power(u: &SampledField) -> f64 {
    u.values.as_slice().iter().map(|v| v.norm_sqr()).sum::<f64>() * u.grid.pitch_um * u.grid.pitch_um
}

pub fn rel_l2(a: &SampledField, b: &SampledField) -> f64 {
    let num: f64 = a
        .values
        .as_slice()
        .iter()
        .zip(b.values.as_slice())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let den: f64 = b.values.as_slice().iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Radius of the first minimum along the +x axis of a centered pattern,
/// refined by a parabola through the three samples around the minimum.
pub fn first_zero_radius(irr: &[f64], n: usize, pitch: f64) -> f64 {
    let c = n / 2;
    let row = &irr[c * n..(c + 1) * n];
    let mut k = c + 1;
    while k + 1 < n && row[k + 1] < row[k] {
        k += 1;
    }
    let (a, b, d) = (row[k - 1], row[k], row[k + 1]);
    let denom = a - 2.0 * b + d;
    let offset = if denom > 0.0 { 0.5 * (a - d) / denom } else { 0.0 };
    ((k - c) as f64 + offset) * pitch
}

/// Asymptotic Kolmogorov distribution tail: P(D_n > d) for `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-transformed series, fast for small λ
        let y = (-PI * PI / (8.0 * lambda * lambda)).exp();
        let cdf = (2.0 * PI).sqrt() / lambda * (y + y.powi(9) + y.powi(25) + y.powi(49));
        1.0 - cdf
    } else {
        let x = (-2.0 * lambda * lambda).exp();
        2.0 * (x - x.powi(4) + x.powi(9) - x.powi(16))
    };
    p.clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov statistic of `xs` against the uniform law on `[lo, hi]`.
pub fn ks_uniform(xs: &mut [f64], lo: f64, hi: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// The experiment defaults on a 64×64 grid with a short optimizer budget.
pub fn small_setup() -> ExperimentSetup {
    let mut s = ExperimentSetup::default();
    s.grid.n_side = 64;
    s.perturbation = PerturbationSpec {
        shift_px: 8.0,
        ..PerturbationSpec::default()
    };
    s.psf_optimizer.max_iters = 40;
    s.pm_optimizer.max_iters = 40;
    s
}

fn pfm_with(header: &str, samples: &[f32]) -> Vec<u8> {
    let mut b = header.as_bytes().to_vec();
    for s in samples {
        b.extend_from_slice(&s.to_le_bytes());
    }
    b
}

/// Byte strings every conforming reader must reject, with a description.
pub fn malformed_pfm_corpus() -> Vec<(&'static str, Vec<u8>)> {
    let ok = vec![1.0f32; 4];
    let mut nan = ok.clone();
    nan[2] = f32::NAN;
    let mut inf = ok.clone();
    inf[0] = f32::NEG_INFINITY;
    vec![
        ("color magic", pfm_with("PF\n2 2\n-1.0\n", &[1.0; 12])),
        ("unknown magic", pfm_with("P7\n2 2\n-1.0\n", &ok)),
        ("big-endian scale", pfm_with("Pf\n2 2\n1.0\n", &ok)),
        ("zero scale", pfm_with("Pf\n2 2\n0.0\n", &ok)),
        ("non-square", pfm_with("Pf\n2 3\n-1.0\n", &[1.0; 6])),
        ("zero width", pfm_with("Pf\n0 0\n-1.0\n", &[])),
        ("non-numeric height", pfm_with("Pf\n2 two\n-1.0\n", &ok)),
        ("missing scale", b"Pf\n2 2\n".to_vec()),
        ("truncated payload", pfm_with("Pf\n2 2\n-1.0\n", &ok[..3])),
        ("trailing bytes", pfm_with("Pf\n2 2\n-1.0\n", &[1.0; 5])),
        ("NaN sample", pfm_with("Pf\n2 2\n-1.0\n", &nan)),
        ("infinite sample", pfm_with("Pf\n2 2\n-1.0\n", &inf)),
        ("empty file", Vec::new()),
    ]
}
