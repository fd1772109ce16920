//! Central finite differences against the tape's analytic gradients.

use std::sync::Arc;

use diffoptics::autodiff::{ParamSet, Tape, TrainableParam, Var};
use diffoptics::blocks::{propagation_kernel, Block, LensBlock, MicroscopeModel, WavePropagation};
use diffoptics::field::{ComplexGrid, Grid, GridSpec, RealGrid};
use diffoptics::spectral::SpectralFilter;
use diffoptics::Result;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const COORDS: usize = 24;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_real(n: usize, seed: u64) -> RealGrid {
    let mut r = rng(seed);
    Grid::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

fn rand_positive(n: usize, seed: u64) -> RealGrid {
    let mut r = rng(seed);
    Grid::from_fn(n, |_, _| r.random_range(0.2..1.0))
}

fn rand_complex(n: usize, seed: u64) -> ComplexGrid {
    let mut r = rng(seed);
    Grid::from_fn(n, |_, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
}

fn rand_ref(len: usize, seed: u64) -> Arc<Vec<f64>> {
    let mut r = rng(seed);
    Arc::new((0..len).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Real scalar probe of a complex node: NMSE of `Re(c ⊙ x)` against a
/// random reference.
fn probe_complex(t: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let side = t.side(x)?;
    let c = Arc::new(rand_complex(side, seed).into_vec());
    let y = t.cmul_const(x, c)?;
    let re = t.real_part(y)?;
    t.nmse(rand_ref(side * side, seed + 1), re)
}

fn probe_real(t: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let len = t.value_real(x)?.len();
    t.nmse(rand_ref(len, seed), x)
}

/// Maximum relative error between the analytic gradient and central
/// differences over `COORDS` random coordinates of every trainable
/// parameter.
pub fn check<F>(params: &mut ParamSet, seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, params).unwrap();
    tape.backward_into(loss, params).unwrap();
    let eval = |ps: &ParamSet| {
        let mut t = Tape::new();
        let l = f(&mut t, ps).unwrap();
        t.scalar(l).unwrap()
    };
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    assert!(!names.is_empty());
    for name in names {
        let p = params.get(&name).unwrap();
        let grad = p.grad.clone();
        let len = p.values.len();
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        assert!(gmax > 0.0, "{name}: gradient identically zero");
        // coordinates with non-negligible gradient, sampled at random
        let live: Vec<usize> = (0..len).filter(|&i| grad[i].abs() > 1e-3 * gmax).collect();
        for _ in 0..COORDS.min(len) {
            let i = live[r.random_range(0..live.len())];
            let orig = params.get(&name).unwrap().values[i];
            params.get_mut(&name).unwrap().values[i] = orig + STEP;
            let up = eval(params);
            params.get_mut(&name).unwrap().values[i] = orig - STEP;
            let down = eval(params);
            params.get_mut(&name).unwrap().values[i] = orig;
            let fd = (up - down) / (2.0 * STEP);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
            worst = worst.max(rel);
        }
    }
    worst
}

fn field_params(n: usize, seed: u64) -> ParamSet {
    let mut ps = ParamSet::new();
    ps.insert(TrainableParam::field("u", &rand_complex(n, seed)).trainable(true))
        .unwrap();
    ps
}

fn real_params(n: usize, seed: u64) -> ParamSet {
    let mut ps = ParamSet::new();
    ps.insert(TrainableParam::real("x", &rand_real(n, seed)).trainable(true))
        .unwrap();
    ps
}

pub fn fft2_and_ifft2() -> f64 {
    let mut ps = field_params(16, 1);
    let a = check(&mut ps, 2, |t, ps| {
        let u = t.param(ps, "u")?;
        let f = t.fft2(u)?;
        probe_complex(t, f, 3)
    });
    let b = check(&mut ps, 4, |t, ps| {
        let u = t.param(ps, "u")?;
        let f = t.ifft2(u)?;
        probe_complex(t, f, 5)
    });
    a.max(b)
}

pub fn cmul_both_operands() -> f64 {
    let mut ps = field_params(16, 6);
    ps.insert(TrainableParam::field("v", &rand_complex(16, 7)).trainable(true))
        .unwrap();
    let e = check(&mut ps, 8, |t, ps| {
        let a = t.param(ps, "u")?;
        let b = t.param(ps, "v")?;
        let y = t.cmul(a, b)?;
        probe_complex(t, y, 9)
    });
    e
}

pub fn cmul_const_and_scale() -> f64 {
    let mut ps = field_params(16, 10);
    let c = Arc::new(rand_complex(16, 11).into_vec());
    let e = check(&mut ps, 12, |t, ps| {
        let a = t.param(ps, "u")?;
        let y = t.cmul_const(a, c.clone())?;
        let y = t.scale(y, -1.7)?;
        probe_complex(t, y, 13)
    });
    e
}

pub fn cexp_j() -> f64 {
    let mut ps = ParamSet::new();
    ps.insert(TrainableParam::phase("phi", &rand_real(16, 14)).trainable(true))
        .unwrap();
    let e = check(&mut ps, 15, |t, ps| {
        let phi = t.param(ps, "phi")?;
        let y = t.cexp_j(phi)?;
        probe_complex(t, y, 16)
    });
    e
}

pub fn abs2() -> f64 {
    let mut ps = field_params(16, 17);
    let e = check(&mut ps, 18, |t, ps| {
        let u = t.param(ps, "u")?;
        let h = t.abs2(u)?;
        probe_real(t, h, 19)
    });
    e
}

pub fn propagation_filter() -> f64 {
    let grid = GridSpec::new(32, 2.0, 0.5).unwrap();
    let k = Arc::new(propagation_kernel(&grid, 400.0).unwrap());
    let kneg = Arc::new(propagation_kernel(&grid, -300.0).unwrap());
    let mut ps = field_params(32, 20);
    let e = check(&mut ps, 21, |t, ps| {
        let u = t.param(ps, "u")?;
        let y = t.filter(u, k.clone())?;
        let y = t.filter(y, kneg.clone())?;
        probe_complex(t, y, 22)
    });
    e
}

pub fn conv2_fft() -> f64 {
    let obj = Arc::new(SpectralFilter::convolution(&rand_positive(16, 23)).unwrap());
    let mut ps = real_params(16, 24);
    let e = check(&mut ps, 25, |t, ps| {
        let x = t.param(ps, "x")?;
        let y = t.conv2_fft(x, obj.clone())?;
        probe_real(t, y, 26)
    });
    e
}

pub fn pad_crop_make_complex_real_part() -> f64 {
    let mut ps = real_params(16, 27);
    ps.insert(TrainableParam::real("y", &rand_real(16, 28)).trainable(true))
        .unwrap();
    let e = check(&mut ps, 29, |t, ps| {
        let x = t.param(ps, "x")?;
        let y = t.param(ps, "y")?;
        let z = t.make_complex(x, y)?;
        let z = t.pad(z, 24)?;
        let f = t.fft2(z)?;
        let f = t.crop(f, 16)?;
        let r = t.real_part(f)?;
        let r = t.pad(r, 20)?;
        let r = t.crop(r, 18)?;
        probe_real(t, r, 30)
    });
    e
}

pub fn normalize_sum_scale_exp_sum_add_mean() -> f64 {
    let mut ps = ParamSet::new();
    ps.insert(TrainableParam::real("x", &rand_positive(16, 31)).trainable(true))
        .unwrap();
    ps.insert(TrainableParam::log_gain("g", 1.3).trainable(true)).unwrap();
    let e = check(&mut ps, 32, |t, ps| {
        let x = t.param(ps, "x")?;
        let g = t.param(ps, "g")?;
        let n = t.normalize_sum(x)?;
        let s = t.scale_exp(n, g)?;
        let a = t.add(s, x)?;
        let l1 = probe_real(t, a, 33)?;
        let total = t.sum(x)?;
        let l2 = t.nmse(Arc::new(vec![40.0]), total)?;
        t.mean(&[l1, l2])
    });
    e
}

/// Source → propagation → lens → phase mask → lens → camera with a known
/// object and a gain, every parameter trainable.
fn four_f(n: usize) -> MicroscopeModel {
    let pitch = 4.0;
    let wavelength = 0.5;
    let f = n as f64 * pitch * pitch / wavelength;
    let lens = LensBlock::new(f, 0.45 * n as f64 * pitch).unwrap();
    let grid = GridSpec::new(n, pitch, wavelength).unwrap();
    let mut ps = ParamSet::new();
    let src = Grid::from_fn(n, |r, c| {
        let (x, y) = (c as f64 - n as f64 / 2.0, r as f64 - n as f64 / 2.0 + 1.0);
        Complex64::from_polar((-(x * x + y * y) / 8.0).exp(), 0.2 * x)
    });
    ps.insert(TrainableParam::field("src", &src).trainable(true)).unwrap();
    ps.insert(TrainableParam::phase("mask", &rand_real(n, 40)).trainable(true))
        .unwrap();
    ps.insert(TrainableParam::log_gain("gain", 0.8).trainable(true)).unwrap();
    let blocks = vec![
        Block::PsfSource { param: "src".into() },
        Block::Wp(WavePropagation { distance_um: 300.0 }),
        Block::Lens(lens),
        Block::PhaseMask { param: "mask".into() },
        Block::Lens(lens),
        Block::Camera { gain: Some("gain".into()) },
    ];
    MicroscopeModel::new(grid, blocks, ps).unwrap().with_axial_scale(4.0)
}

pub fn composed_four_f_pipeline(n: usize) -> f64 {
    let model = four_f(n);
    let object = Arc::new(SpectralFilter::convolution(&rand_positive(n, 41)).unwrap());
    let refs: Vec<_> = (0..3).map(|i| rand_ref(n * n, 50 + i)).collect();
    let depths = [-20.0, 0.0, 40.0];
    let mut ps = model.params.clone();
    check(&mut ps, 42, |t, ps| {
        let mut m = model.clone();
        m.params = ps.clone();
        let losses = depths
            .iter()
            .zip(&refs)
            .map(|(&d, r)| {
                let img = m.record(t, d, Some(&object))?;
                t.nmse(r.clone(), img)
            })
            .collect::<Result<Vec<_>>>()?;
        t.mean(&losses)
    })
}

/// Every check with its name, in a fixed order.
pub fn all() -> Vec<(&'static str, Box<dyn Fn() -> f64>)> {
    vec![
        ("fft2/ifft2", Box::new(fft2_and_ifft2)),
        ("cmul", Box::new(cmul_both_operands)),
        ("cmul_const/scale", Box::new(cmul_const_and_scale)),
        ("cexp_j", Box::new(cexp_j)),
        ("abs2", Box::new(abs2)),
        ("propagation filter", Box::new(propagation_filter)),
        ("conv2_fft", Box::new(conv2_fft)),
        ("pad/crop/make_complex/real_part", Box::new(pad_crop_make_complex_real_part)),
        ("normalize_sum/scale_exp/sum/add/mean", Box::new(normalize_sum_scale_exp_sum_add_mean)),
        ("4-f pipeline 16x16", Box::new(|| composed_four_f_pipeline(16))),
        ("4-f pipeline 32x32", Box::new(|| composed_four_f_pipeline(32))),
        ("4-f pipeline 64x64", Box::new(|| composed_four_f_pipeline(64))),
    ]
}
