//! Space-variant phase delay `U₂ = U₁ · exp(jφ)`.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::field::{RealGrid, SampledField};

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMaskBlock {
    pub phi: RealGrid,
    pub phase_only: bool,
}

impl PhaseMaskBlock {
    pub fn new(phi: RealGrid) -> Result<Self> {
        let pm = PhaseMaskBlock {
            phi,
            phase_only: true,
        };
        pm.validate()?;
        Ok(pm)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phase_only {
            return Err(Error::Configuration(
                "amplitude-modulating masks are not supported; phase_only must be true".into(),
            ));
        }
        if let Some(v) = self.phi.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("phase mask contains non-finite value {v}")));
        }
        Ok(())
    }
}

/// Runs the mask through the differentiable primitives
/// (`cmul(u, cexp_j(φ))`), so this path matches what the model records.
pub fn phase_mask_forward(u1: &SampledField, pm: &PhaseMaskBlock) -> Result<SampledField> {
    pm.validate()?;
    if pm.phi.side() != u1.grid.n_side {
        return Err(Error::dim(format!(
            "phase mask of side {} applied to field of side {}",
            pm.phi.side(),
            u1.grid.n_side
        )));
    }
    let mut tape = Tape::new();
    let u = tape.leaf_complex(&u1.values);
    let phi = tape.leaf_real(&pm.phi);
    let e = tape.cexp_j(phi)?;
    let out = tape.cmul(u, e)?;
    SampledField::new(u1.grid, tape.complex_grid(out)?)
}
