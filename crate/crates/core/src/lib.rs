//! Hybrid-pruned skeleton GCN inference with runtime feature compression
//! and an accelerator performance model.

pub mod error;
pub mod fixed;
pub mod graph;
pub mod io;
pub mod model;
pub mod prune;
pub mod reference;
pub mod rfc;
pub mod sim;
pub mod sparse;
pub mod tensor;

pub use error::{CodecError, Error, OverflowError, Result};
pub use fixed::FixedQ8p8;
pub use graph::AdjacencyStack;
pub use model::{Block, BlockConfig, Model, ModelConfig, SpatialConvLayer, TemporalConvLayer};
pub use prune::{CavityAxis, CavityPattern, ChannelMask, PruneSpec, PruneStats, PrunedModel};
pub use sparse::{InputSkip, WorkCounters};
pub use tensor::FeatureTensor;
