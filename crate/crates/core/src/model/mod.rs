//! Correlation-volume flow network with recurrent refinement.
//!
//! Tensors are planar `[C, H, W]` and one tape holds one frame pair. Feature
//! cell `(x, y)` is centered on input pixel `(stride * x, stride * y)`.

mod checkpoint;
mod config;
mod lookup;
mod network;
mod params;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use lookup::lookup;
pub use network::{
    build_pyramid, coordinate_encode, correlation_volume, forward, instance_norm, predict, prepare_input, FlowOutput,
};
pub use params::{init_params, param_layout, ParamSpec, Params};
