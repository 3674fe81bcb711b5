//! Knowledge-graph recommendation with meta-preferences, a hashed content
//! model, and the training and evaluation machinery around both.
//!
//! Items are the first `N_i` entities of the knowledge graph. All numeric
//! work is in `f64`; embedding exchange files store `f32`.

pub mod content;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod sampling;
pub mod tensor;
pub mod train;

pub use content::{ContentDims, ContentEmbeddings, ContentParams, EmbeddingFormat, EmbeddingKind, EmbeddingMatrixFile};
pub use data::{make_synthetic_dataset, Dataset, DatasetSummary, InteractionStore, ItemCorpus, KnowledgeGraph, Split, SynthSpec};
pub use error::{Error, Result};
pub use eval::{evaluate_embeddings, evaluate_kmpn, MetricsReport, DEFAULT_KS};
pub use model::{KmpnParams, ModelDims};
pub use objectives::{LossWeights, Mode};
pub use sampling::ReciprocalSampler;
pub use tensor::Matrix;
pub use train::{grad_check, train_ckmpn, train_content, train_kmpn, EpochLog, GradCheckReport, ModelKind, TrainConfig};
