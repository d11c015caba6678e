//! Joint embedding of two-view knowledge bases: an instance graph of
//! entities, an ontology graph of concepts, and entity-to-concept links
//! between them.
//!
//! Nine model variants combine an intra-view scorer (TransE, Mult or HolE)
//! with a cross-view model: grouping (CG), transformation (CT), or CT plus
//! hierarchy-aware ontology training (HA).

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod kb;
pub mod model;
pub mod objectives;
pub mod scoring;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use dataset::PreparedData;
pub use error::{Error, Result};
pub use evaluation::EvalReport;
pub use kb::{Counts, KnowledgeBase, PairStore, SplitSpec, Triple, TripleStore, Vocab};
pub use model::{CrossKind, ModelConfig, ModelParams, Variant, View};
pub use objectives::{LossWeights, Margins};
pub use scoring::ScorerKind;
pub use training::{train, EpochReport, TrainConfig, TrainOutcome, Trainer};
