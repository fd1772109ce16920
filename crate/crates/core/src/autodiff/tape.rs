//! Dynamic reverse-mode tape over real and complex grid operations.
//!
//! Gradient convention: for a real loss `L` and a complex node `z`, the
//! stored adjoint is `∂L/∂Re z + j·∂L/∂Im z`. With that convention a
//! complex-linear map `y = A x` back-propagates as `ḡ_x = Aᴴ ḡ_y`, and the
//! elementwise product `y = a·b` as `ḡ_a = ḡ_y·conj(b)`.

use std::sync::Arc;

use num_complex::Complex64;

use super::param::{ParamKind, ParamSet};
use crate::error::{Error, Result};
use crate::fft;
use crate::field::{crop_center, pad_center, ComplexGrid, Grid, RealGrid};
use crate::spectral::SpectralFilter;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Data {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Data {
    fn len(&self) -> usize {
        match self {
            Data::Real(v) => v.len(),
            Data::Complex(v) => v.len(),
        }
    }

    fn real(&self) -> &[f64] {
        match self {
            Data::Real(v) => v,
            Data::Complex(_) => unreachable!("real data expected"),
        }
    }

    fn complex(&self) -> &[Complex64] {
        match self {
            Data::Complex(v) => v,
            Data::Real(_) => unreachable!("complex data expected"),
        }
    }

    fn add_assign(&mut self, other: Data) {
        match (self, other) {
            (Data::Real(a), Data::Real(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (Data::Complex(a), Data::Complex(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y)
            }
            _ => unreachable!("adjoint kind mismatch"),
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<usize> },
    Fft2(usize),
    Ifft2(usize),
    Cmul(usize, usize),
    CmulConst(usize, Arc<Vec<Complex64>>),
    Scale(usize, f64),
    CexpJ(usize),
    Abs2(usize),
    Filter(usize, Arc<SpectralFilter>),
    Conv2(usize, Arc<SpectralFilter>),
    Pad { x: usize, from: usize },
    Crop { x: usize, from: usize },
    MakeComplex(usize, usize),
    RealPart(usize),
    NormalizeSum { x: usize, total: f64 },
    ScaleExp { x: usize, s: usize },
    Sum(usize),
    Nmse { k: usize, reference: Arc<Vec<f64>>, energy: f64 },
    Mean(Vec<usize>),
    Add(usize, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    side: usize,
    data: Data,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Adjoints of every node reached by a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Data>>,
    leaves: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn real(&self, v: Var) -> Option<&[f64]> {
        match self.adjoints.get(v.0)?.as_ref()? {
            Data::Real(d) => Some(d),
            Data::Complex(_) => None,
        }
    }

    pub fn complex(&self, v: Var) -> Option<&[Complex64]> {
        match self.adjoints.get(v.0)?.as_ref()? {
            Data::Complex(d) => Some(d),
            Data::Real(_) => None,
        }
    }

    /// Writes parameter gradients into the registry the tape leaves were
    /// created from. Parameters on the tape that the loss does not depend on
    /// receive zero gradients.
    pub fn write_params(&self, params: &mut ParamSet) -> Result<()> {
        if self.leaves.iter().any(|&(_, index)| index >= params.len()) {
            return Err(Error::State("gradient refers to unknown parameter".into()));
        }
        // a parameter read at several places on the tape sums its leaf adjoints
        for &(_, index) in &self.leaves {
            params.by_index_mut(index).grad.iter_mut().for_each(|g| *g = 0.0);
        }
        for &(node, index) in &self.leaves {
            let p = params.by_index_mut(index);
            let n2 = p.side() * p.side();
            match (&self.adjoints[node], p.kind) {
                (None, _) => {}
                (Some(Data::Complex(g)), ParamKind::Field) => {
                    for (i, v) in g.iter().enumerate() {
                        p.grad[i] += v.re;
                        p.grad[n2 + i] += v.im;
                    }
                }
                (Some(Data::Real(g)), _) => {
                    p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                (Some(Data::Complex(_)), _) => {
                    return Err(Error::State(format!(
                        "complex adjoint for real parameter '{}'",
                        p.name
                    )))
                }
            }
            p.grad_fresh = true;
        }
        Ok(())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, side: usize, data: Data) -> Var {
        self.nodes.push(Node { op, side, data });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::State(format!("variable {} is not on this tape", v.0)))
    }

    fn complex_input(&self, v: Var, what: &str) -> Result<(&[Complex64], usize)> {
        let n = self.node(v)?;
        match &n.data {
            Data::Complex(d) => Ok((d, n.side)),
            Data::Real(_) => Err(Error::dim(format!("{what} expects a complex grid"))),
        }
    }

    fn real_input(&self, v: Var, what: &str) -> Result<(&[f64], usize)> {
        let n = self.node(v)?;
        match &n.data {
            Data::Real(d) => Ok((d, n.side)),
            Data::Complex(_) => Err(Error::dim(format!("{what} expects a real grid"))),
        }
    }

    fn scalar_input(&self, v: Var, what: &str) -> Result<f64> {
        let (d, _) = self.real_input(v, what)?;
        if d.len() != 1 {
            return Err(Error::dim(format!("{what} expects a real scalar")));
        }
        Ok(d[0])
    }

    // ---- leaves -------------------------------------------------------

    pub fn leaf_real(&mut self, g: &RealGrid) -> Var {
        self.push(
            Op::Leaf { param: None },
            g.side(),
            Data::Real(g.as_slice().to_vec()),
        )
    }

    pub fn leaf_complex(&mut self, g: &ComplexGrid) -> Var {
        self.push(
            Op::Leaf { param: None },
            g.side(),
            Data::Complex(g.as_slice().to_vec()),
        )
    }

    pub fn leaf_scalar(&mut self, v: f64) -> Var {
        self.push(Op::Leaf { param: None }, 1, Data::Real(vec![v]))
    }

    /// Leaf holding the current value of a registered parameter. Frozen
    /// (non-trainable) parameters enter as constants.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        let index = params
            .index_of(name)
            .ok_or_else(|| Error::Configuration(format!("unknown parameter '{name}'")))?;
        let p = params.by_index(index);
        let link = p.trainable.then_some(index);
        let data = match p.kind {
            ParamKind::Field => Data::Complex(p.as_complex_grid().into_vec()),
            _ => Data::Real(p.values.clone()),
        };
        Ok(self.push(Op::Leaf { param: link }, p.side(), data))
    }

    // ---- accessors ----------------------------------------------------

    pub fn side(&self, v: Var) -> Result<usize> {
        Ok(self.node(v)?.side)
    }

    pub fn value_real(&self, v: Var) -> Result<&[f64]> {
        Ok(self.real_input(v, "value_real")?.0)
    }

    pub fn value_complex(&self, v: Var) -> Result<&[Complex64]> {
        Ok(self.complex_input(v, "value_complex")?.0)
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.scalar_input(v, "scalar")
    }

    pub fn real_grid(&self, v: Var) -> Result<RealGrid> {
        let (d, side) = self.real_input(v, "real_grid")?;
        Grid::from_vec(side, d.to_vec())
    }

    pub fn complex_grid(&self, v: Var) -> Result<ComplexGrid> {
        let (d, side) = self.complex_input(v, "complex_grid")?;
        Grid::from_vec(side, d.to_vec())
    }

    // ---- primitives ---------------------------------------------------

    /// Centered forward FFT.
    pub fn fft2(&mut self, x: Var) -> Result<Var> {
        let (d, side) = self.complex_input(x, "fft2")?;
        check_fft_side(side)?;
        let mut out = d.to_vec();
        fft::fft2_centered_inplace(&mut out, side);
        Ok(self.push(Op::Fft2(x.0), side, Data::Complex(out)))
    }

    /// Centered inverse FFT (with the `1/n²` factor).
    pub fn ifft2(&mut self, x: Var) -> Result<Var> {
        let (d, side) = self.complex_input(x, "ifft2")?;
        check_fft_side(side)?;
        let mut out = d.to_vec();
        fft::ifft2_centered_inplace(&mut out, side);
        Ok(self.push(Op::Ifft2(x.0), side, Data::Complex(out)))
    }

    /// Elementwise complex product.
    pub fn cmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, sa) = self.complex_input(a, "cmul")?;
        let (db, sb) = self.complex_input(b, "cmul")?;
        if sa != sb {
            return Err(Error::dim(format!("cmul of sides {sa} and {sb}")));
        }
        let out = da.iter().zip(db).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Cmul(a.0, b.0), sa, Data::Complex(out)))
    }

    /// Elementwise product with a constant complex grid.
    pub fn cmul_const(&mut self, a: Var, c: Arc<Vec<Complex64>>) -> Result<Var> {
        let (da, sa) = self.complex_input(a, "cmul_const")?;
        if c.len() != da.len() {
            return Err(Error::dim("cmul_const operand size mismatch"));
        }
        let out = da.iter().zip(c.iter()).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::CmulConst(a.0, c), sa, Data::Complex(out)))
    }

    /// Multiplication by a real constant (real or complex input).
    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let n = self.node(x)?;
        let side = n.side;
        let data = match &n.data {
            Data::Real(d) => Data::Real(d.iter().map(|v| v * factor).collect()),
            Data::Complex(d) => Data::Complex(d.iter().map(|v| v * factor).collect()),
        };
        Ok(self.push(Op::Scale(x.0, factor), side, data))
    }

    /// `exp(jφ)` of a real grid.
    pub fn cexp_j(&mut self, phi: Var) -> Result<Var> {
        let (d, side) = self.real_input(phi, "cexp_j")?;
        let out = d.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
        Ok(self.push(Op::CexpJ(phi.0), side, Data::Complex(out)))
    }

    /// `|u|²` of a complex grid.
    pub fn abs2(&mut self, u: Var) -> Result<Var> {
        let (d, side) = self.complex_input(u, "abs2")?;
        let out = d.iter().map(|v| v.norm_sqr()).collect();
        Ok(self.push(Op::Abs2(u.0), side, Data::Real(out)))
    }

    /// Linear filtering of a complex grid by a fixed spectrum.
    pub fn filter(&mut self, x: Var, f: Arc<SpectralFilter>) -> Result<Var> {
        let (d, side) = self.complex_input(x, "filter")?;
        if side != f.side() {
            return Err(Error::dim(format!(
                "filter built for side {} applied to side {side}",
                f.side()
            )));
        }
        let out = f.apply(d, false)?;
        Ok(self.push(Op::Filter(x.0, f), side, Data::Complex(out)))
    }

    /// Linear convolution of a real grid with a fixed real kernel (zero
    /// padded to `2n`, cropped back to `n`).
    pub fn conv2_fft(&mut self, h: Var, kernel: Arc<SpectralFilter>) -> Result<Var> {
        let (d, side) = self.real_input(h, "conv2_fft")?;
        if side != kernel.side() {
            return Err(Error::dim(format!(
                "convolution operand of side {} applied to side {side}",
                kernel.side()
            )));
        }
        let out = kernel.apply_real(d, false)?;
        Ok(self.push(Op::Conv2(h.0, kernel), side, Data::Real(out)))
    }

    pub fn pad(&mut self, x: Var, new_side: usize) -> Result<Var> {
        let n = self.node(x)?;
        let from = n.side;
        let data = match &n.data {
            Data::Real(d) => {
                Data::Real(pad_center(&Grid::from_vec(from, d.clone())?, new_side)?.into_vec())
            }
            Data::Complex(d) => {
                Data::Complex(pad_center(&Grid::from_vec(from, d.clone())?, new_side)?.into_vec())
            }
        };
        Ok(self.push(Op::Pad { x: x.0, from }, new_side, data))
    }

    pub fn crop(&mut self, x: Var, new_side: usize) -> Result<Var> {
        let n = self.node(x)?;
        let from = n.side;
        let data = match &n.data {
            Data::Real(d) => {
                Data::Real(crop_center(&Grid::from_vec(from, d.clone())?, new_side)?.into_vec())
            }
            Data::Complex(d) => {
                Data::Complex(crop_center(&Grid::from_vec(from, d.clone())?, new_side)?.into_vec())
            }
        };
        Ok(self.push(Op::Crop { x: x.0, from }, new_side, data))
    }

    pub fn make_complex(&mut self, re: Var, im: Var) -> Result<Var> {
        let (dr, sr) = self.real_input(re, "make_complex")?;
        let (di, si) = self.real_input(im, "make_complex")?;
        if sr != si {
            return Err(Error::dim("make_complex of mismatched sides"));
        }
        let out = dr
            .iter()
            .zip(di)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Ok(self.push(Op::MakeComplex(re.0, im.0), sr, Data::Complex(out)))
    }

    pub fn real_part(&mut self, x: Var) -> Result<Var> {
        let (d, side) = self.complex_input(x, "real_part")?;
        let out = d.iter().map(|v| v.re).collect();
        Ok(self.push(Op::RealPart(x.0), side, Data::Real(out)))
    }

    /// `h / Σh`.
    pub fn normalize_sum(&mut self, h: Var) -> Result<Var> {
        let (d, side) = self.real_input(h, "normalize_sum")?;
        let total: f64 = d.iter().sum();
        if !(total.is_finite() && total != 0.0) {
            return Err(Error::Contract(format!(
                "cannot normalize a grid whose sum is {total}"
            )));
        }
        let out = d.iter().map(|v| v / total).collect();
        Ok(self.push(Op::NormalizeSum { x: h.0, total }, side, Data::Real(out)))
    }

    /// `exp(s)·x` for a real scalar node `s`.
    pub fn scale_exp(&mut self, x: Var, s: Var) -> Result<Var> {
        let gain = self.scalar_input(s, "scale_exp")?.exp();
        let (d, side) = self.real_input(x, "scale_exp")?;
        let out = d.iter().map(|v| v * gain).collect();
        Ok(self.push(Op::ScaleExp { x: x.0, s: s.0 }, side, Data::Real(out)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let (d, _) = self.real_input(x, "sum")?;
        let total = d.iter().sum();
        Ok(self.push(Op::Sum(x.0), 1, Data::Real(vec![total])))
    }

    /// `‖reference − k‖² / ‖reference‖²`, differentiable in `k`.
    pub fn nmse(&mut self, reference: Arc<Vec<f64>>, k: Var) -> Result<Var> {
        let (d, _) = self.real_input(k, "nmse")?;
        if d.len() != reference.len() {
            return Err(Error::dim(format!(
                "nmse of {} samples against a {}-sample reference",
                d.len(),
                reference.len()
            )));
        }
        let energy: f64 = reference.iter().map(|v| v * v).sum();
        if energy == 0.0 {
            return Err(Error::DegenerateReference);
        }
        let err: f64 = reference
            .iter()
            .zip(d)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(
            Op::Nmse {
                k: k.0,
                reference,
                energy,
            },
            1,
            Data::Real(vec![err / energy]),
        ))
    }

    /// Arithmetic mean of real scalars.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::param("mean of no values"));
        }
        let mut total = 0.0;
        for &x in xs {
            total += self.scalar_input(x, "mean")?;
        }
        let ids = xs.iter().map(|v| v.0).collect();
        Ok(self.push(Op::Mean(ids), 1, Data::Real(vec![total / xs.len() as f64])))
    }

    /// Sum of two real grids (or scalars) of equal shape.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (da, sa) = self.real_input(a, "add")?;
        let (db, sb) = self.real_input(b, "add")?;
        if sa != sb || da.len() != db.len() {
            return Err(Error::dim("add of mismatched shapes"));
        }
        let out = da.iter().zip(db).map(|(x, y)| x + y).collect();
        Ok(self.push(Op::Add(a.0, b.0), sa, Data::Real(out)))
    }

    // ---- reverse sweep -----------------------------------------------

    /// Reverse sweep from a real scalar `loss`. Consumes the tape: a second
    /// call is a state error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State(
                "backward already ran on this tape; record a fresh forward pass".into(),
            ));
        }
        let node = self.node(loss)?;
        match &node.data {
            Data::Real(d) if d.len() == 1 => {}
            _ => {
                return Err(Error::Contract(
                    "backward requires a real scalar loss".into(),
                ))
            }
        }
        self.consumed = true;

        let mut adj: Vec<Option<Data>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Data::Real(vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { .. } => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::Fft2(x) => {
                    // adjoint of the unnormalized DFT is n²·IDFT
                    let side = node.side;
                    let mut d = g.complex().to_vec();
                    fft::ifft2_centered_inplace(&mut d, side);
                    let s = (side * side) as f64;
                    d.iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *x, Data::Complex(d));
                }
                Op::Ifft2(x) => {
                    let side = node.side;
                    let mut d = g.complex().to_vec();
                    fft::fft2_centered_inplace(&mut d, side);
                    let s = 1.0 / (side * side) as f64;
                    d.iter_mut().for_each(|v| *v *= s);
                    accumulate(&mut adj, *x, Data::Complex(d));
                }
                Op::Cmul(a, b) => {
                    let gc = g.complex();
                    let va = self.nodes[*a].data.complex();
                    let vb = self.nodes[*b].data.complex();
                    let ga = gc.iter().zip(vb).map(|(g, b)| g * b.conj()).collect();
                    let gb = gc.iter().zip(va).map(|(g, a)| g * a.conj()).collect();
                    accumulate(&mut adj, *a, Data::Complex(ga));
                    accumulate(&mut adj, *b, Data::Complex(gb));
                }
                Op::CmulConst(a, c) => {
                    let ga = g
                        .complex()
                        .iter()
                        .zip(c.iter())
                        .map(|(g, c)| g * c.conj())
                        .collect();
                    accumulate(&mut adj, *a, Data::Complex(ga));
                }
                Op::Scale(x, f) => {
                    let d = match g {
                        Data::Real(v) => Data::Real(v.iter().map(|v| v * f).collect()),
                        Data::Complex(v) => Data::Complex(v.iter().map(|v| v * f).collect()),
                    };
                    accumulate(&mut adj, *x, d);
                }
                Op::CexpJ(phi) => {
                    // dL/dφ = Re(conj(ḡ)·j·e^{jφ})
                    let e = node.data.complex();
                    let d = g
                        .complex()
                        .iter()
                        .zip(e)
                        .map(|(g, e)| (g.conj() * Complex64::i() * e).re)
                        .collect();
                    accumulate(&mut adj, *phi, Data::Real(d));
                }
                Op::Abs2(u) => {
                    let vu = self.nodes[*u].data.complex();
                    let d = g
                        .real()
                        .iter()
                        .zip(vu)
                        .map(|(g, u)| u * (2.0 * g))
                        .collect();
                    accumulate(&mut adj, *u, Data::Complex(d));
                }
                Op::Filter(x, f) => {
                    let d = f.apply(g.complex(), true)?;
                    accumulate(&mut adj, *x, Data::Complex(d));
                }
                Op::Conv2(h, k) => {
                    let d = k.apply_real(g.real(), true)?;
                    accumulate(&mut adj, *h, Data::Real(d));
                }
                Op::Pad { x, from } => {
                    let side = node.side;
                    let d = match g {
                        Data::Real(v) => {
                            Data::Real(crop_center(&Grid::from_vec(side, v)?, *from)?.into_vec())
                        }
                        Data::Complex(v) => Data::Complex(
                            crop_center(&Grid::from_vec(side, v)?, *from)?.into_vec(),
                        ),
                    };
                    accumulate(&mut adj, *x, d);
                }
                Op::Crop { x, from } => {
                    let side = node.side;
                    let d = match g {
                        Data::Real(v) => {
                            Data::Real(pad_center(&Grid::from_vec(side, v)?, *from)?.into_vec())
                        }
                        Data::Complex(v) => {
                            Data::Complex(pad_center(&Grid::from_vec(side, v)?, *from)?.into_vec())
                        }
                    };
                    accumulate(&mut adj, *x, d);
                }
                Op::MakeComplex(re, im) => {
                    let gc = g.complex();
                    accumulate(&mut adj, *re, Data::Real(gc.iter().map(|v| v.re).collect()));
                    accumulate(&mut adj, *im, Data::Real(gc.iter().map(|v| v.im).collect()));
                }
                Op::RealPart(x) => {
                    let d = g
                        .real()
                        .iter()
                        .map(|&v| Complex64::new(v, 0.0))
                        .collect();
                    accumulate(&mut adj, *x, Data::Complex(d));
                }
                Op::NormalizeSum { x, total } => {
                    let gr = g.real();
                    let y = node.data.real();
                    let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    let d = gr.iter().map(|v| (v - dot) / total).collect();
                    accumulate(&mut adj, *x, Data::Real(d));
                }
                Op::ScaleExp { x, s } => {
                    let gr = g.real();
                    let gain = self.nodes[*s].data.real()[0].exp();
                    let y = node.data.real();
                    let ds: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    accumulate(&mut adj, *x, Data::Real(gr.iter().map(|v| v * gain).collect()));
                    accumulate(&mut adj, *s, Data::Real(vec![ds]));
                }
                Op::Sum(x) => {
                    let s = g.real()[0];
                    let len = self.nodes[*x].data.len();
                    accumulate(&mut adj, *x, Data::Real(vec![s; len]));
                }
                Op::Nmse {
                    k,
                    reference,
                    energy,
                } => {
                    let s = g.real()[0] * 2.0 / energy;
                    let vk = self.nodes[*k].data.real();
                    let d = vk
                        .iter()
                        .zip(reference.iter())
                        .map(|(b, a)| s * (b - a))
                        .collect();
                    accumulate(&mut adj, *k, Data::Real(d));
                }
                Op::Mean(ids) => {
                    let s = g.real()[0] / ids.len() as f64;
                    for &id in ids {
                        accumulate(&mut adj, id, Data::Real(vec![s]));
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
            }
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .take(loss.0 + 1)
            .filter_map(|(i, n)| match n.op {
                Op::Leaf { param: Some(p) } => Some((i, p)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            adjoints: adj,
            leaves,
        })
    }

    /// Backward sweep that also writes parameter gradients.
    pub fn backward_into(&mut self, loss: Var, params: &mut ParamSet) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        grads.write_params(params)?;
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Data>], id: usize, d: Data) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(d),
        slot @ None => *slot = Some(d),
    }
}

fn check_fft_side(side: usize) -> Result<()> {
    if side < 8 || side % 2 != 0 {
        return Err(Error::dim(format!(
            "FFT requires an even side of at least 8, got {side}"
        )));
    }
    Ok(())
}
