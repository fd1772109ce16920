use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexGrid, Grid, RealGrid};

/// What a parameter grid represents; selects the optimizer step size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Real phase grid in radians.
    Phase,
    /// Complex field stored as a real/imaginary pair of grids.
    Field,
    /// Scalar log-gain.
    LogGain,
    /// Generic real grid.
    Real,
}

/// Adam moment accumulators.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// A named, real-valued parameter with its gradient and optimizer state.
///
/// Complex fields are stored as `[re..., im...]` so the optimizer only ever
/// sees real vectors.
#[derive(Clone, Debug)]
pub struct TrainableParam {
    pub name: String,
    pub kind: ParamKind,
    side: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub adam: AdamState,
    pub trainable: bool,
    /// Optional clamp applied after every optimizer step.
    pub bounds: Option<(f64, f64)>,
    pub(crate) grad_fresh: bool,
}

impl TrainableParam {
    fn with_values(name: &str, kind: ParamKind, side: usize, values: Vec<f64>) -> Self {
        let len = values.len();
        TrainableParam {
            name: name.to_string(),
            kind,
            side,
            values,
            grad: vec![0.0; len],
            adam: AdamState {
                m: vec![0.0; len],
                v: vec![0.0; len],
                step: 0,
            },
            trainable: false,
            bounds: None,
            grad_fresh: false,
        }
    }

    pub fn phase(name: &str, phi: &RealGrid) -> Self {
        Self::with_values(name, ParamKind::Phase, phi.side(), phi.as_slice().to_vec())
    }

    pub fn real(name: &str, values: &RealGrid) -> Self {
        Self::with_values(name, ParamKind::Real, values.side(), values.as_slice().to_vec())
    }

    pub fn field(name: &str, u: &ComplexGrid) -> Self {
        let mut values = Vec::with_capacity(2 * u.len());
        values.extend(u.as_slice().iter().map(|v| v.re));
        values.extend(u.as_slice().iter().map(|v| v.im));
        Self::with_values(name, ParamKind::Field, u.side(), values)
    }

    /// Positive gain stored in log space.
    pub fn log_gain(name: &str, gain: f64) -> Self {
        Self::with_values(name, ParamKind::LogGain, 1, vec![gain.ln()])
    }

    pub fn trainable(mut self, on: bool) -> Self {
        self.trainable = on;
        self
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn as_real_grid(&self) -> RealGrid {
        match self.kind {
            ParamKind::Field => {
                Grid::from_vec(self.side, self.values[..self.side * self.side].to_vec())
                    .expect("field parameter layout")
            }
            _ => Grid::from_vec(self.side, self.values.clone()).expect("parameter layout"),
        }
    }

    pub fn as_complex_grid(&self) -> ComplexGrid {
        let n2 = self.side * self.side;
        match self.kind {
            ParamKind::Field => Grid::from_vec(
                self.side,
                (0..n2)
                    .map(|i| num_complex::Complex64::new(self.values[i], self.values[n2 + i]))
                    .collect(),
            )
            .expect("field parameter layout"),
            _ => self.as_real_grid().to_complex(),
        }
    }

    pub fn gain(&self) -> f64 {
        self.values[0].exp()
    }

    /// Overwrites the values, leaving optimizer state untouched.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::dim(format!(
                "parameter '{}' holds {} values, got {}",
                self.name,
                self.values.len(),
                values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn grad_is_fresh(&self) -> bool {
        self.grad_fresh
    }
}

/// Parameter registry addressed by name.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<TrainableParam>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: TrainableParam) -> Result<usize> {
        if self.index_of(&p.name).is_some() {
            return Err(Error::Configuration(format!(
                "duplicate parameter name '{}'",
                p.name
            )));
        }
        self.params.push(p);
        Ok(self.params.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&TrainableParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut TrainableParam> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn by_index(&self, i: usize) -> &TrainableParam {
        &self.params[i]
    }

    pub(crate) fn by_index_mut(&mut self, i: usize) -> &mut TrainableParam {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TrainableParam> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut TrainableParam> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Copies of the current values of every parameter, in registry order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.values.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::State("snapshot does not match registry".into()));
        }
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.set_values(v)?;
        }
        Ok(())
    }
}
