//! Procedural layered scenes with exact flow, the synthetic-to-target
//! domain shift, and dataset split construction.

mod render;
mod scene;
mod shift;
mod splits;

pub use render::gen_pair;
pub use scene::{Layer, Motion, SceneParams, SceneSpec, Shape, Texture, CANVAS_ALIGN, MAX_LAYERS, MAX_SCALE, MIN_SCALE};
pub use shift::{apply_shift, DomainShift};
pub use splits::{build_splits, render_scene, DatasetSplits, SplitConfig, SplitRole, SplitSeeds, SplitSizes};

#[cfg(test)]
mod tests;
