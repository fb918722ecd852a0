//! Cross-domain food image-to-recipe retrieval with recipe mixup.
//!
//! A synthetic bilingual corpus, a small reverse-mode autodiff engine, the
//! retrieval model with its domain discriminator and auxiliary heads, and the
//! training and evaluation harness.

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod mixup;
pub mod model;
pub mod objective;

pub use autodiff::{Graph, Tensor, Var};
pub use corpus::{Corpus, CorpusConfig, Domain, RecipeFeatures, Section, Split};
pub use error::{Error, Result};
pub use harness::{diagnose, evaluate, train, DiagnosticsReport, EvalReport, TrainConfig};
pub use mixup::{mix, DistanceMode, MixedPair, MixupStrategy, MixupVariant};
pub use model::{Checkpoint, ModelDims, ModelParams};
pub use objective::{LossWeights, NegativePolicy};
