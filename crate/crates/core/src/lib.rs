//! Dataless intent classification over sentence embeddings.
//!
//! Utterances are classified by nearest-neighbour search against class
//! prototypes in embedding space: a prototype is the embedding of an
//! intent's tokenized label, of a short declarative description, or of
//! a pool of example utterances. At inference time the utterance
//! embedding can be augmented with a paraphrase embedding and with an
//! embedding of the utterance whose object spans were masked out of the
//! dependency parse, the latter gated by entity overlap among the top
//! candidate classes. No task-specific training is involved anywhere.
//!
//! The `examples/` directory contains one runnable program per major
//! capability; the `dataless-intent` binary exposes the same pipeline
//! as batch subcommands.
//!
//! ```
//! use dataless_intent::{
//!     build_prototypes, predict, AugmentedUtterance, EmbeddingCache, EmbeddingProvider,
//!     EmbeddingSource, HashedBowEmbedder, IntentClass, IntentSchema, PrototypeMode, RunConfig,
//! };
//!
//! # fn main() -> dataless_intent::Result<()> {
//! let schema = IntentSchema::new(vec![
//!     IntentClass::new("PlayMusic", "user wants to play a song", ["song"])?,
//!     IntentClass::new("GetWeather", "user wants to know about the weather", ["weather"])?,
//! ])?;
//!
//! let embedder = HashedBowEmbedder::new(64, 7)?;
//! let model = embedder.model_id().to_string();
//! let source = EmbeddingSource::new(
//!     EmbeddingCache::in_memory(),
//!     Some(Box::new(embedder)),
//!     model,
//!     16,
//! )?;
//! let prototypes = build_prototypes(&schema, PrototypeMode::Description, &source, None)?;
//!
//! let utterance = AugmentedUtterance::plain("will it rain on the weather front");
//! let prediction = predict(
//!     &utterance,
//!     "u1",
//!     Some("GetWeather"),
//!     &prototypes,
//!     &RunConfig::default(),
//!     &source,
//!     None,
//! )?;
//! assert_eq!(prediction.predicted_label, "GetWeather");
//! assert_eq!(prediction.rank_of_gold, Some(1));
//! # Ok(())
//! # }
//! ```

pub mod augment;
pub mod classifier;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod overlap;
pub mod runner;

pub use augment::{
    augment_dataset, mask_tree, masking_coverage, parse_conllu, AugmentedUtterance, DepToken,
    DepTree, MaskConfig, MaskOutcome, ParaphraseSource, DEFAULT_MASK_RELATIONS, MASK_TOKEN,
};
pub use classifier::{
    build_prototypes, combined_representation, load_synthetic_pool, predict, Prediction,
    PrototypeMode, PrototypeSet, RunConfig, SyntheticPool,
};
pub use corpus::{
    description_stats, load_dataset, load_schema, save_schema, tokenize_label,
    validate_description, DescriptionStats, DescriptionValidation, IntentClass, IntentSchema,
    LabeledUtterance,
};
pub use embedding::{
    cosine, Embedding, EmbeddingCache, EmbeddingProvider, EmbeddingSource, HashedBowEmbedder,
    HttpEmbeddingProvider, HttpProviderConfig,
};
pub use error::{Error, Result};
pub use evaluate::{
    class_similarity_stats, class_similarity_stats_sampled, classify_dataset, count_degraded,
    default_ablation_configs, run_ablation, score, topk_recall, AblationCell, AblationGrid,
    AblationRow, ClassifyInput, EvaluationReport, PredictionRecord, SimilarityStats,
    DEFAULT_TOPK,
};
pub use manifest::{file_sha256, RunManifest};
pub use overlap::{build_overlap_matrix, overlaps, top_k_classes, OverlapMatrix};
