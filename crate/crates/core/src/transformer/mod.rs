//! Encoder backbone: embeddings, multi-head attention, feed-forward blocks
//! and the hook sites that tuning modules attach to.

mod checkpoint;
mod config;
mod encoder;
mod hooks;

pub use checkpoint::Checkpoint;
pub use config::EncoderConfig;
pub use encoder::{EmbeddingWeights, Encoder, LayerWeights, Linear, Norm, DEFAULT_INIT_STD};
pub use hooks::{HiddenHook, HookSet, HookSite, LayerHooks, PrefixHook, Projection, ProjectionHook, Tower};
