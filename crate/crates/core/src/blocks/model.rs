//! Ordered block stack realizing the system PSF `H(Θ)` and the synthesized
//! image `H(Θ) ∗ o`, recorded on a tape so parameter gradients are available.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::camera::prepare_object;
use super::lens::{LensBlock, LensOperands};
use super::wp::{check_distance, KernelCache, WavePropagation};
use crate::autodiff::{ParamKind, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::field::{ComplexGrid, GridSpec, IntensityImage, RealGrid};
use crate::spectral::SpectralFilter;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Block {
    /// Source-plane field, read from a `Field` parameter.
    PsfSource { param: String },
    Wp(WavePropagation),
    Lens(LensBlock),
    /// Phase-only mask read from a `Phase` parameter.
    PhaseMask { param: String },
    /// Sensor; an optional `LogGain` parameter scales the synthesized image.
    Camera { gain: Option<String> },
}

impl Block {
    fn param_names(&self) -> Vec<&str> {
        match self {
            Block::PsfSource { param } | Block::PhaseMask { param } => vec![param.as_str()],
            Block::Camera { gain: Some(g) } => vec![g.as_str()],
            _ => vec![],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Block::PsfSource { .. } => "psf_source",
            Block::Wp(_) => "wp",
            Block::Lens(_) => "lens",
            Block::PhaseMask { .. } => "phase_mask",
            Block::Camera { .. } => "camera",
        }
    }
}

#[derive(Clone, Debug)]
struct Step {
    input: GridSpec,
    lens: Option<LensOperands>,
}

/// A microscope assembled from blocks, with its parameter registry.
#[derive(Clone, Debug)]
pub struct MicroscopeModel {
    grid: GridSpec,
    blocks: Vec<Block>,
    pub params: ParamSet,
    axial_scale: f64,
    plan: Vec<Step>,
    kernels: KernelCache,
}

/// Every structural problem with a block stack, in block order.
pub fn validate_blocks(grid: &GridSpec, blocks: &[Block], params: &ParamSet) -> Vec<String> {
    let mut errs = Vec::new();
    if let Err(e) = grid.validate() {
        errs.push(e.to_string());
        return errs;
    }
    if blocks.is_empty() {
        errs.push("model has no blocks".into());
        return errs;
    }
    if !matches!(blocks[0], Block::PsfSource { .. }) {
        errs.push("first block must be psf_source".into());
    }
    if !matches!(blocks[blocks.len() - 1], Block::Camera { .. }) {
        errs.push("last block must be camera".into());
    }

    let mut pitch = grid.pitch_um;
    for (i, b) in blocks.iter().enumerate() {
        let here = grid.with_pitch(pitch);
        match b {
            Block::PsfSource { param } => {
                if i != 0 {
                    errs.push(format!("block {i}: psf_source is only allowed first"));
                }
                expect_param(&mut errs, i, params, param, ParamKind::Field, grid.n_side);
            }
            Block::Wp(wp) => {
                if let Err(e) = check_distance(wp.distance_um) {
                    errs.push(format!("block {i} (wp): {e}"));
                }
            }
            Block::Lens(lens) => match lens.validate().and_then(|_| lens.output_pitch(&here)) {
                Ok(p) => pitch = p,
                Err(e) => errs.push(format!("block {i} (lens): {e}")),
            },
            Block::PhaseMask { param } => {
                expect_param(&mut errs, i, params, param, ParamKind::Phase, grid.n_side);
            }
            Block::Camera { gain } => {
                if i != blocks.len() - 1 {
                    errs.push(format!("block {i}: camera is only allowed last"));
                }
                if let Some(g) = gain {
                    expect_param(&mut errs, i, params, g, ParamKind::LogGain, 1);
                }
                if ((pitch - grid.pitch_um) / grid.pitch_um).abs() > 1e-9 {
                    errs.push(format!(
                        "block {i} (camera): sensor-plane pitch {pitch} µm differs from the \
                         grid pitch {} µm; cascaded lenses must have equal focal lengths",
                        grid.pitch_um
                    ));
                }
            }
        }
    }

    for p in params.iter() {
        let refs = blocks
            .iter()
            .filter(|b| b.param_names().contains(&p.name.as_str()))
            .count();
        if refs != 1 {
            errs.push(format!(
                "parameter '{}' is referenced by {refs} blocks (expected exactly one)",
                p.name
            ));
        }
    }
    errs
}

fn expect_param(
    errs: &mut Vec<String>,
    block: usize,
    params: &ParamSet,
    name: &str,
    kind: ParamKind,
    side: usize,
) {
    match params.get(name) {
        None => errs.push(format!("block {block}: unknown parameter '{name}'")),
        Some(p) if p.kind != kind => errs.push(format!(
            "block {block}: parameter '{name}' is {:?}, expected {kind:?}",
            p.kind
        )),
        Some(p) if p.side() != side => errs.push(format!(
            "block {block}: parameter '{name}' has side {}, expected {side}",
            p.side()
        )),
        Some(_) => {}
    }
}

impl MicroscopeModel {
    pub fn new(grid: GridSpec, blocks: Vec<Block>, params: ParamSet) -> Result<Self> {
        let errs = validate_blocks(&grid, &blocks, &params);
        if !errs.is_empty() {
            return Err(Error::Validation(errs));
        }
        let mut plan = Vec::with_capacity(blocks.len());
        let mut here = grid;
        for b in &blocks {
            let lens = match b {
                Block::Lens(l) => Some(l.operands(&here)?),
                _ => None,
            };
            plan.push(Step {
                input: here,
                lens: lens.clone(),
            });
            if let Some(ops) = lens {
                here = ops.output_grid;
            }
        }
        Ok(MicroscopeModel {
            grid,
            blocks,
            params,
            axial_scale: 1.0,
            plan,
            kernels: KernelCache::default(),
        })
    }

    /// Longitudinal magnification applied to object-space depths before they
    /// are added to the first propagation block's distance.
    pub fn with_axial_scale(mut self, scale: f64) -> Self {
        self.axial_scale = scale;
        self
    }

    pub fn axial_scale(&self) -> f64 {
        self.axial_scale
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    fn first_wp(&self) -> Option<usize> {
        self.blocks.iter().position(|b| matches!(b, Block::Wp(_)))
    }

    /// Image-space distance the first propagation block uses at
    /// object-space depth `depth_um`.
    pub fn propagation_distance(&self, depth_um: f64) -> Result<f64> {
        let Some(i) = self.first_wp() else {
            if depth_um != 0.0 {
                return Err(Error::Configuration(
                    "non-zero depth requested from a model without a wp block".into(),
                ));
            }
            return Ok(0.0);
        };
        let Block::Wp(wp) = &self.blocks[i] else { unreachable!() };
        let z = wp.distance_um + self.axial_scale * depth_um;
        check_distance(z)?;
        Ok(z)
    }

    /// Index of the first block whose output depends on a trainable
    /// parameter; everything before it is constant across iterations.
    pub fn first_trainable_block(&self) -> usize {
        self.blocks
            .iter()
            .position(|b| {
                b.param_names()
                    .iter()
                    .any(|n| self.params.get(n).is_some_and(|p| p.trainable))
            })
            .unwrap_or(self.blocks.len() - 1)
    }

    /// Records blocks `range` on `tape`, feeding `input` (the field entering
    /// `range.start`, or `None` when the range starts at the source).
    pub fn record_range(
        &self,
        tape: &mut Tape,
        range: Range<usize>,
        input: Option<Var>,
        depth_um: f64,
        object: Option<&Arc<SpectralFilter>>,
    ) -> Result<Var> {
        if range.end > self.blocks.len() || range.start >= range.end {
            return Err(Error::param(format!("invalid block range {range:?}")));
        }
        let first_wp = self.first_wp();
        let mut cur = input;
        for i in range {
            let step = &self.plan[i];
            cur = Some(match &self.blocks[i] {
                Block::PsfSource { param } => tape.param(&self.params, param)?,
                Block::Wp(wp) => {
                    let x = cur.ok_or_else(|| Error::State("wp has no input field".into()))?;
                    let z = if Some(i) == first_wp {
                        self.propagation_distance(depth_um)?
                    } else {
                        wp.distance_um
                    };
                    if z == 0.0 {
                        x
                    } else {
                        let k = self.kernels.get(&step.input, z)?;
                        tape.filter(x, k)?
                    }
                }
                Block::Lens(_) => {
                    let x = cur.ok_or_else(|| Error::State("lens has no input field".into()))?;
                    let ops = step.lens.as_ref().expect("lens operands planned");
                    let masked = tape.cmul_const(x, ops.pupil.clone())?;
                    let spec = tape.fft2(masked)?;
                    tape.cmul_const(spec, ops.output_factor.clone())?
                }
                Block::PhaseMask { param } => {
                    let x = cur.ok_or_else(|| Error::State("phase mask has no input".into()))?;
                    let phi = tape.param(&self.params, param)?;
                    let e = tape.cexp_j(phi)?;
                    tape.cmul(x, e)?
                }
                Block::Camera { gain } => {
                    let x = cur.ok_or_else(|| Error::State("camera has no input".into()))?;
                    let h = tape.abs2(x)?;
                    let Some(obj) = object else {
                        return Ok(h);
                    };
                    let hn = tape.normalize_sum(h)?;
                    let img = tape.conv2_fft(hn, obj.clone())?;
                    match gain {
                        Some(g) => {
                            let s = tape.param(&self.params, g)?;
                            tape.scale_exp(img, s)?
                        }
                        None => img,
                    }
                }
            });
        }
        cur.ok_or_else(|| Error::State("empty block range".into()))
    }

    /// Synthesized image at one depth, recorded on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape,
        depth_um: f64,
        object: Option<&Arc<SpectralFilter>>,
    ) -> Result<Var> {
        self.record_range(tape, 0..self.blocks.len(), None, depth_um, object)
    }

    /// Field entering block `end` at `depth_um` (blocks `0..end` evaluated).
    pub fn field_before(&self, end: usize, depth_um: f64) -> Result<ComplexGrid> {
        if end == 0 || end >= self.blocks.len() {
            return Err(Error::param(format!("no field precedes block {end}")));
        }
        let mut tape = Tape::new();
        let v = self.record_range(&mut tape, 0..end, None, depth_um, None)?;
        tape.complex_grid(v)
    }

    /// Forward model without gradients: one image per depth. `objects` holds
    /// either one object per depth or a single shared object.
    pub fn synthesize(
        &self,
        objects: &[IntensityImage],
        depths_um: &[f64],
    ) -> Result<Vec<IntensityImage>> {
        if objects.len() != 1 && objects.len() != depths_um.len() {
            return Err(Error::param(format!(
                "{} objects supplied for {} depths",
                objects.len(),
                depths_um.len()
            )));
        }
        let prepared = objects
            .iter()
            .map(|o| {
                if o.grid.n_side != self.grid.n_side {
                    return Err(Error::dim("object does not match the model grid"));
                }
                prepare_object(o)
            })
            .collect::<Result<Vec<_>>>()?;
        depths_um
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let obj = &prepared[if prepared.len() == 1 { 0 } else { i }];
                self.image_at(d, obj)
            })
            .collect()
    }

    /// Synthesized image for a prepared object.
    pub fn image_at(&self, depth_um: f64, object: &Arc<SpectralFilter>) -> Result<IntensityImage> {
        let mut tape = Tape::new();
        let v = self.record(&mut tape, depth_um, Some(object))?;
        to_image(&self.grid, tape.real_grid(v)?)
    }

    /// Raw sensor-plane PSF `|U|²` at `depth_um`.
    pub fn psf_at(&self, depth_um: f64) -> Result<IntensityImage> {
        let mut tape = Tape::new();
        let v = self.record(&mut tape, depth_um, None)?;
        to_image(&self.grid, tape.real_grid(v)?)
    }
}

fn to_image(grid: &GridSpec, mut values: RealGrid) -> Result<IntensityImage> {
    values.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    IntensityImage::new(*grid, values)
}
