//! Word embeddings trained with skip-gram or CBOW and negative sampling,
//! evaluated on word analogies with 3CosAdd and 3CosMul.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases. Training and on-disk vectors
//! use `f32`, gradient checks use `f64`.

pub mod analogy;
pub mod analysis;
pub mod corpus;
pub mod embeddings;
pub mod matrix;
pub mod scalar;
pub mod sweep;
pub mod trainer;
pub mod vocab;

pub use analogy::{
    evaluate, parse_suite, AnalogyQuestion, AnalogySuite, Answer, ErrorRecord, EvalReport, Method,
    MethodConfig, RelationKind,
};
pub use corpus::{InMemoryCorpus, SentenceSource, TextCorpus, TokenizerConfig};
pub use embeddings::{EmbeddingError, EmbeddingSpace, Neighbor};
pub use matrix::Matrix;
pub use scalar::Real;
pub use trainer::{train, EmbeddingMatrices, ModelKind, TrainError, TrainedModel, TrainingConfig};
pub use vocab::{Vocabulary, WordId};

pub type MatrixF32 = Matrix<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type EmbeddingSpaceF32 = EmbeddingSpace<f32>;
pub type EmbeddingSpaceF64 = EmbeddingSpace<f64>;
pub type EmbeddingMatricesF32 = EmbeddingMatrices<f32>;
pub type EmbeddingMatricesF64 = EmbeddingMatrices<f64>;
pub type TrainedModelF32 = TrainedModel<f32>;
pub type TrainedModelF64 = TrainedModel<f64>;
