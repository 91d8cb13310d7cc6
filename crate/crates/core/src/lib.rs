//! Extractive summarization by generating summary sentence representations
//! with a conditional diffusion model and matching them back to document
//! sentences.

pub mod autograd;
pub mod config;
pub mod corpus;
pub mod diffusion;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod extract;
pub mod layers;
pub mod model;
pub mod rouge;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use config::{SummarySource, TrainConfig};
pub use corpus::{greedy_oracle, load_corpus, DocumentRecord, OracleLabels};
pub use embedding::{EmbeddingCache, EmbeddingProvider, HashingEmbedder};
pub use error::{Error, Result};
pub use extract::{infer, ExtractionResult};
pub use model::{Checkpoint, DiffuSumModel, ValidationMetrics};
pub use rouge::{corpus_rouge, RougeScore, RougeTriple};
pub use tensor::Matrix;
