//! Minimal layer stack for CPU training.
//!
//! Forward passes return an output plus a context holding whatever the
//! backward pass needs; backward passes accumulate parameter gradients into
//! the owning [`ParamSet`] and return the input gradient. There is no tape:
//! networks are static compositions and call their layers in reverse order
//! explicitly. All math is `f32`, single-threaded and deterministic.

mod conv;
mod linear;
mod norm;
mod param;
mod pool;
mod sgd;

pub mod init;

pub use conv::{Conv3d, Conv3dCtx};
pub use linear::{Linear, LinearCtx};
pub use norm::{BatchNorm, BatchNormCtx};
pub use param::{BufId, BufferSet, ParamId, ParamSet, TensorId, TensorStore};
pub use pool::{global_avg_pool, global_avg_pool_backward, relu, relu_backward, ReluCtx};
pub use sgd::SgdMomentum;
