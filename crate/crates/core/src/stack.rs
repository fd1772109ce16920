use crate::error::{Error, Result};
use crate::field::IntensityImage;

/// Intensity images of a known object, labeled with object-space depth (µm).
#[derive(Clone, Debug)]
pub struct DepthStack {
    pub images: Vec<IntensityImage>,
    pub depths_um: Vec<f64>,
    pub object: IntensityImage,
}

impl DepthStack {
    pub fn new(images: Vec<IntensityImage>, depths_um: Vec<f64>, object: IntensityImage) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::param("depth stack needs at least one image"));
        }
        if images.len() != depths_um.len() {
            return Err(Error::param(format!(
                "{} images but {} depths",
                images.len(),
                depths_um.len()
            )));
        }
        if depths_um.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("depths must be strictly increasing"));
        }
        let n = object.grid.n_side;
        if images.iter().any(|i| i.grid.n_side != n) {
            return Err(Error::dim("stack images must share the object grid"));
        }
        Ok(DepthStack {
            images,
            depths_um,
            object,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}
