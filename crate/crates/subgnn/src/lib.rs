//! Subgraph representation learning on a shared base graph.
//!
//! The toolkit covers the full loop: synthetic benchmark generation, node
//! embedding pretraining, anchor-patch sampling, similarity precomputation,
//! the channel-based subgraph encoder itself, and training/evaluation with
//! deterministic, seed-addressed artifacts.

pub mod anchors;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod pretrain;
pub mod rng;
pub mod similarity;
pub mod synth;
pub mod train;

pub use graph::{Graph, GraphError, Subgraph};
pub use synth::{Dataset, Split, SynthConfig, Task};
