//! Embedding-based entity resolution.
//!
//! The pipeline turns every entity into a dense vector, generates candidate
//! pairs with k-nearest-neighbor search (exhaustive or HNSW), scores the
//! candidates with `1 / (1 + euclidean distance)` and resolves them with
//! greedy one-to-one clustering. Every stage can be evaluated against a
//! ground truth of known duplicates.

pub mod blocking;
pub mod config;
pub mod datagen;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod matching;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod sentence;

pub use blocking::{CandidateSet, IndexKind, QuerySide};
pub use embedding::{EmbeddedCollection, Embedder, NGramHashConfig, Vector, WordVectorTable};
pub use error::{Error, Result};
pub use matching::{MatchSet, ScoredPair};
pub use model::{Entity, EntityCollection, ErTask, GroundTruth, IdPair};
pub use nn::{HnswIndex, HnswParams, Neighbor};
