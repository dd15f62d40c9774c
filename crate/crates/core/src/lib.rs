//! Cross-architecture instruction embeddings.
//!
//! Disassembled instructions from several instruction sets are normalized
//! into tokens, and one embedding space is learned for all of them from
//! pairs of equivalent basic blocks. Inside a block, CBOW predicts each
//! instruction from its neighbours; across a pair, each instruction is
//! predicted from the neighbourhood of its linearly aligned position in the
//! other block. The [`eval`] module measures the result with cosine
//! similarity, nearest neighbours and ROC/AUC.
//!
//! ```no_run
//! use xarch_embed::{corpus, model, Model, Normalizer, TrainConfig, Vocabulary};
//!
//! let pairs = corpus::load_pairs("train.jsonl", &Normalizer::default())?;
//! let cfg = TrainConfig { min_count: 1, ..Default::default() };
//! let vocab = Vocabulary::build(&pairs, cfg.min_count)?;
//! let mut m = Model::init(vocab, cfg.dim, cfg.seed);
//! model::train(&mut m, &pairs, &cfg)?;
//! model::save(&m, "model.xaem")?;
//! # Ok::<(), xarch_embed::Error>(())
//! ```

pub mod cli;
pub mod corpus;
mod error;
pub mod eval;
pub mod model;
pub mod normalizer;
mod scalar;

pub use corpus::{
    Block, BlockPair, Label, LabeledBlockPair, LabeledPair, NegativeSampler, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::{BlockFeatureVector, RocCurve};
pub use model::{EmbeddingModel, TrainConfig, TrainReport, TrainingStep};
pub use normalizer::{
    Architecture, LexiconSet, NormalizedInstruction, Normalizer, OperandKind, ParsedInstruction,
};
pub use scalar::Scalar;

/// Random generator used for initialization, shuffling and sampling.
pub type TrainRng = rand_chacha::ChaCha8Rng;

/// Single-precision model, the precision of saved files.
pub type Model = EmbeddingModel<f32>;

/// Double-precision model for gradient checks and reference runs.
pub type Model64 = EmbeddingModel<f64>;
