//! Differentiable optical elements and their composition into a microscope.

pub mod camera;
pub mod lens;
pub mod model;
pub mod phase_mask;
pub mod wp;

pub use camera::{camera_forward, prepare_object, CameraBlock};
pub use lens::{lens_forward, LensBlock, LensOperands};
pub use model::{validate_blocks, Block, MicroscopeModel};
pub use phase_mask::{phase_mask_forward, PhaseMaskBlock};
pub use wp::{
    check_distance, propagation_kernel, wp_forward, KernelCache, WavePropagation, KERNEL_TAPER,
    MIN_PROPAGATION_UM,
};
