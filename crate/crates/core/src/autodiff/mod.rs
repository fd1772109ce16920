//! Minimal reverse-mode differentiation over grid-valued optical operations.

mod check;
mod param;
mod tape;

pub use check::{check_gradients, check_model, primitive_suite, GradCheck, FD_STEP};
pub use param::{AdamState, ParamKind, ParamSet, TrainableParam};
pub use tape::{Data, Gradients, Tape, Var};
