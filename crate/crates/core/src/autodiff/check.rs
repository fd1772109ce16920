//! Finite-difference verification of the tape's analytic gradients.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ParamSet, Tape, TrainableParam, Var};
use crate::blocks::{propagation_kernel, MicroscopeModel};
use crate::error::{Error, Result};
use crate::field::{ComplexGrid, Grid, GridSpec, RealGrid};
use crate::spectral::SpectralFilter;

/// Central-difference step used by [`check_gradients`].
pub const FD_STEP: f64 = 1e-5;

/// Outcome of checking one primitive or pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// Compares the analytic gradient of `f` against central differences at
/// `coords` random coordinates of every trainable parameter. Coordinates
/// are drawn among those whose gradient exceeds 1e-3 of the largest, so
/// the relative error is meaningful.
pub fn check_gradients<F>(params: &mut ParamSet, coords: usize, seed: u64, f: F) -> Result<(f64, usize)>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, params)?;
    tape.backward_into(loss, params)?;
    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let l = f(&mut t, ps)?;
        t.scalar(l)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = params.iter().filter(|p| p.trainable).map(|p| p.name.clone()).collect();
    if names.is_empty() {
        return Err(Error::param("no trainable parameter to check"));
    }
    let mut worst = 0.0f64;
    let mut checked = 0;
    for name in names {
        let grad = params.get(&name).expect("listed").grad.clone();
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax == 0.0 {
            return Err(Error::Contract(format!("gradient of '{name}' is identically zero")));
        }
        let live: Vec<usize> = (0..grad.len()).filter(|&i| grad[i].abs() > 1e-3 * gmax).collect();
        for _ in 0..coords.min(grad.len()) {
            let i = live[rng.random_range(0..live.len())];
            let orig = params.get(&name).expect("listed").values[i];
            params.get_mut(&name).expect("listed").values[i] = orig + FD_STEP;
            let up = eval(params);
            params.get_mut(&name).expect("listed").values[i] = orig - FD_STEP;
            let down = eval(params);
            params.get_mut(&name).expect("listed").values[i] = orig;
            let fd = (up? - down?) / (2.0 * FD_STEP);
            worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()));
            checked += 1;
        }
    }
    Ok((worst, checked))
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn real(&mut self, n: usize, lo: f64, hi: f64) -> RealGrid {
        Grid::from_fn(n, |_, _| self.0.random_range(lo..hi))
    }

    fn complex(&mut self, n: usize) -> ComplexGrid {
        Grid::from_fn(n, |_, _| {
            Complex64::new(self.0.random_range(-1.0..1.0), self.0.random_range(-1.0..1.0))
        })
    }

    fn reference(&mut self, len: usize) -> Arc<Vec<f64>> {
        Arc::new((0..len).map(|_| self.0.random_range(-1.0..1.0)).collect())
    }
}

fn probe_complex(t: &mut Tape, x: Var, c: &Arc<Vec<Complex64>>, r: &Arc<Vec<f64>>) -> Result<Var> {
    let y = t.cmul_const(x, c.clone())?;
    let re = t.real_part(y)?;
    t.nmse(r.clone(), re)
}

/// Checks every tape primitive on `n`×`n` random inputs.
pub fn primitive_suite(n: usize, coords: usize, seed: u64) -> Result<Vec<GradCheck>> {
    if n < 8 {
        return Err(Error::param("gradient check needs a grid side of at least 8"));
    }
    let mut d = Draw(ChaCha8Rng::seed_from_u64(seed));
    let c = Arc::new(d.complex(n).into_vec());
    let r = d.reference(n * n);
    let mut out = Vec::new();
    let mut run = |name: &str, mut ps: ParamSet, f: &dyn Fn(&mut Tape, &ParamSet) -> Result<Var>| {
        let (e, k) = check_gradients(&mut ps, coords, seed ^ out.len() as u64, f)?;
        out.push(GradCheck {
            name: name.into(),
            max_rel_error: e,
            coordinates: k,
        });
        Result::Ok(())
    };
    let field = |name: &str, u: &ComplexGrid| {
        let mut ps = ParamSet::new();
        ps.insert(TrainableParam::field(name, u).trainable(true)).expect("fresh set");
        ps
    };
    let real = |name: &str, x: &RealGrid| {
        let mut ps = ParamSet::new();
        ps.insert(TrainableParam::real(name, x).trainable(true)).expect("fresh set");
        ps
    };

    let u = d.complex(n);
    run("fft2", field("u", &u), &|t, ps| {
        let x = t.param(ps, "u")?;
        let y = t.fft2(x)?;
        probe_complex(t, y, &c, &r)
    })?;
    run("ifft2", field("u", &u), &|t, ps| {
        let x = t.param(ps, "u")?;
        let y = t.ifft2(x)?;
        probe_complex(t, y, &c, &r)
    })?;
    let mut two = field("u", &u);
    two.insert(TrainableParam::field("v", &d.complex(n)).trainable(true))?;
    run("cmul", two, &|t, ps| {
        let a = t.param(ps, "u")?;
        let b = t.param(ps, "v")?;
        let y = t.cmul(a, b)?;
        probe_complex(t, y, &c, &r)
    })?;
    let c2 = Arc::new(d.complex(n).into_vec());
    run("cmul_const+scale", field("u", &u), &|t, ps| {
        let x = t.param(ps, "u")?;
        let y = t.cmul_const(x, c2.clone())?;
        let y = t.scale(y, -1.7)?;
        probe_complex(t, y, &c, &r)
    })?;
    let mut phase = ParamSet::new();
    phase.insert(TrainableParam::phase("phi", &d.real(n, -3.0, 3.0)).trainable(true))?;
    run("cexp_j", phase, &|t, ps| {
        let x = t.param(ps, "phi")?;
        let y = t.cexp_j(x)?;
        probe_complex(t, y, &c, &r)
    })?;
    run("abs2", field("u", &u), &|t, ps| {
        let x = t.param(ps, "u")?;
        let y = t.abs2(x)?;
        t.nmse(r.clone(), y)
    })?;
    let grid = GridSpec::new(n, 2.0, 0.5)?;
    let k = Arc::new(propagation_kernel(&grid, 400.0)?);
    let kneg = Arc::new(propagation_kernel(&grid, -300.0)?);
    run("wp_filter", field("u", &u), &|t, ps| {
        let x = t.param(ps, "u")?;
        let y = t.filter(x, k.clone())?;
        let y = t.filter(y, kneg.clone())?;
        probe_complex(t, y, &c, &r)
    })?;
    let obj = Arc::new(SpectralFilter::convolution(&d.real(n, 0.2, 1.0))?);
    run("conv2_fft", real("h", &d.real(n, -1.0, 1.0)), &|t, ps| {
        let x = t.param(ps, "h")?;
        let y = t.conv2_fft(x, obj.clone())?;
        t.nmse(r.clone(), y)
    })?;
    let mut parts = real("x", &d.real(n, -1.0, 1.0));
    parts.insert(TrainableParam::real("y", &d.real(n, -1.0, 1.0)).trainable(true))?;
    let r_small = Arc::new(r[..(n - 2) * (n - 2)].to_vec());
    run("pad+crop+make_complex+real_part", parts, &|t, ps| {
        let x = t.param(ps, "x")?;
        let y = t.param(ps, "y")?;
        let z = t.make_complex(x, y)?;
        let z = t.pad(z, n + 8)?;
        let f = t.fft2(z)?;
        let f = t.crop(f, n)?;
        let re = t.real_part(f)?;
        let re = t.pad(re, n + 4)?;
        let re = t.crop(re, n - 2)?;
        t.nmse(r_small.clone(), re)
    })?;
    let mut norm = real("x", &d.real(n, 0.2, 1.0));
    norm.insert(TrainableParam::log_gain("g", 1.3).trainable(true))?;
    run("normalize_sum+scale_exp+sum+add+mean", norm, &|t, ps| {
        let x = t.param(ps, "x")?;
        let g = t.param(ps, "g")?;
        let h = t.normalize_sum(x)?;
        let s = t.scale_exp(h, g)?;
        let a = t.add(s, x)?;
        let l1 = t.nmse(r.clone(), a)?;
        let total = t.sum(x)?;
        let l2 = t.nmse(Arc::new(vec![2.0 * (n * n) as f64]), total)?;
        t.mean(&[l1, l2])
    })?;
    Ok(out)
}

/// Checks the full model: mean NMSE over `depths_um` of the images of a
/// random positive object against random references. Parameters that are
/// not trainable are made trainable for the check.
pub fn check_model(model: &MicroscopeModel, depths_um: &[f64], coords: usize, seed: u64) -> Result<GradCheck> {
    let n = model.grid().n_side;
    let mut d = Draw(ChaCha8Rng::seed_from_u64(seed));
    let object = Arc::new(SpectralFilter::convolution(&d.real(n, 0.2, 1.0))?);
    let refs: Vec<_> = depths_um.iter().map(|_| d.reference(n * n)).collect();
    let mut params = model.params.clone();
    if !params.iter().any(|p| p.trainable) {
        params.iter_mut().for_each(|p| p.trainable = true);
    }
    // random phase so the mask gradient is not degenerate at zero
    for p in params.iter_mut().filter(|p| p.kind == super::ParamKind::Phase) {
        p.values.iter_mut().for_each(|v| *v += d.0.random_range(-1.0..1.0));
    }
    let (e, k) = check_gradients(&mut params, coords, seed, |t, ps| {
        let mut m = model.clone();
        m.params = ps.clone();
        let losses = depths_um
            .iter()
            .zip(&refs)
            .map(|(&z, r)| {
                let img = m.record(t, z, Some(&object))?;
                t.nmse(r.clone(), img)
            })
            .collect::<Result<Vec<_>>>()?;
        t.mean(&losses)
    })?;
    Ok(GradCheck {
        name: "model".into(),
        max_rel_error: e,
        coordinates: k,
    })
}
