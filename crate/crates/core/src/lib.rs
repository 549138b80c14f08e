//! Temporal network embeddings driven by a self-exciting edge process.
//!
//! The crate ingests timestamped edges, buckets them into snapshots, learns
//! per-snapshot vertex embeddings under a Hawkes-style intensity with
//! attention over each vertex's interaction history, and evaluates the result
//! on link prediction and recommendation tasks.

pub mod alias;
pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod hawkes;
pub mod synth;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use embedding::EmbeddingSequence;
pub use error::{DhprepError, Result};
pub use eval::{
    evaluate_link, evaluate_recommend, exact_softmax_score, EvalReport, Task,
};
pub use graph::{bucket_snapshots, ingest_edges, DynamicNetwork, Snapshot, TemporalEdge, VertexId};
pub use hawkes::{
    attention_weights, conditional_intensity, edge_probability, HawkesParams, IntensityBreakdown,
    KernelKind,
};
pub use synth::{generate, DecayMode, Planted, PlantedSpec};
pub use train::{
    gradient_check, loss_mix, train, GradCheckReport, TrainOutput, TrainingConfig,
};
