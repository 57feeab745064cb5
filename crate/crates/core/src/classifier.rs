//! Class prototypes, the combined utterance representation, and
//! nearest-neighbour prediction under component toggles.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedUtterance;
use crate::corpus::IntentSchema;
use crate::embedding::{cosine, Embedding, EmbeddingSource};
use crate::error::{Error, Result};
use crate::overlap::{overlaps, OverlapMatrix};

/// How class prototypes are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeMode {
    /// Embed the tokenized intent label.
    Tokenized,
    /// Embed the intent description verbatim.
    Description,
    /// Embed a pool of example utterances per class and score against a
    /// sampled subset.
    Synthetic,
}

impl std::str::FromStr for PrototypeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "tokenized" => Ok(PrototypeMode::Tokenized),
            "description" => Ok(PrototypeMode::Description),
            "synthetic" => Ok(PrototypeMode::Synthetic),
            other => Err(Error::InvalidInput(format!(
                "unknown prototype mode {other:?} (expected tokenized, description or synthetic)"
            ))),
        }
    }
}

enum PrototypeEntries {
    /// One embedding per class.
    Single(Vec<Embedding>),
    /// A pool of example embeddings per class.
    Pools(Vec<Vec<Embedding>>),
}

/// Per-class prototype embeddings in schema order.
pub struct PrototypeSet {
    mode: PrototypeMode,
    labels: Vec<String>,
    model_id: String,
    entries: PrototypeEntries,
}

impl PrototypeSet {
    pub fn mode(&self) -> PrototypeMode {
        self.mode
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// The single prototype embedding of a class, when in a single-
    /// prototype mode.
    pub fn single(&self, class: usize) -> Option<&Embedding> {
        match &self.entries {
            PrototypeEntries::Single(embeddings) => embeddings.get(class),
            PrototypeEntries::Pools(_) => None,
        }
    }

    /// Similarity of a vector to one class: cosine against the class
    /// prototype, or the arithmetic mean of cosines against the class
    /// examples in synthetic mode.
    pub fn class_similarity(&self, vector: &Embedding, class: usize) -> Result<f64> {
        match &self.entries {
            PrototypeEntries::Single(embeddings) => cosine(vector, &embeddings[class]),
            PrototypeEntries::Pools(pools) => {
                let pool = &pools[class];
                let mut total = 0.0;
                for example in pool {
                    total += cosine(vector, example)?;
                }
                Ok(total / pool.len() as f64)
            }
        }
    }

    /// Per-class similarity vector in schema order.
    pub fn similarities(&self, vector: &Embedding) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|class| self.class_similarity(vector, class))
            .collect()
    }

    /// Samples `k` examples per class uniformly without replacement from
    /// one shared seeded generator. The repetition index selects an
    /// independent stream so repeated experiments resample. Sampled
    /// indices are sorted, so a full-pool sample is exactly the pool.
    pub fn sampled(&self, k: usize, seed: u64, repetition: u64) -> Result<PrototypeSet> {
        let pools = match &self.entries {
            PrototypeEntries::Pools(pools) => pools,
            PrototypeEntries::Single(_) => {
                return Err(Error::InvalidInput(
                    "sampling applies only to synthetic prototype pools".into(),
                ))
            }
        };
        if k == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(repetition);
        let mut sampled_pools = Vec::with_capacity(pools.len());
        for (class, pool) in pools.iter().enumerate() {
            if pool.len() < k {
                return Err(Error::InvalidInput(format!(
                    "class {:?} has a pool of {} examples, cannot sample {k}",
                    self.labels[class],
                    pool.len()
                )));
            }
            let mut indices = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
            indices.sort_unstable();
            sampled_pools.push(indices.into_iter().map(|i| pool[i].clone()).collect());
        }
        Ok(PrototypeSet {
            mode: self.mode,
            labels: self.labels.clone(),
            model_id: self.model_id.clone(),
            entries: PrototypeEntries::Pools(sampled_pools),
        })
    }
}

/// Per-class example pools loaded from a synthetic pool file.
#[derive(Debug, Clone)]
pub struct SyntheticPool {
    examples: HashMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct SyntheticPoolRecord {
    label: String,
    examples: Vec<String>,
}

/// Loads a synthetic pool file: JSONL of {"label", "examples": [...]}.
pub fn load_synthetic_pool(path: &Path) -> Result<SyntheticPool> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut examples = HashMap::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SyntheticPoolRecord =
            serde_json::from_str(&line).map_err(|e| Error::Record {
                path: display.clone(),
                line: line_no + 1,
                message: format!("malformed pool record: {e}"),
            })?;
        if record.examples.is_empty() {
            return Err(Error::Record {
                path: display.clone(),
                line: line_no + 1,
                message: format!("pool for {:?} is empty", record.label),
            });
        }
        if examples.insert(record.label.clone(), record.examples).is_some() {
            return Err(Error::Record {
                path: display.clone(),
                line: line_no + 1,
                message: format!("duplicate pool label {:?}", record.label),
            });
        }
    }
    Ok(SyntheticPool { examples })
}

impl SyntheticPool {
    pub fn new(examples: HashMap<String, Vec<String>>) -> Self {
        SyntheticPool { examples }
    }

    pub fn get(&self, label: &str) -> Option<&[String]> {
        self.examples.get(label).map(|v| v.as_slice())
    }
}

/// Builds the prototype set for a schema through the embedding source.
pub fn build_prototypes(
    schema: &IntentSchema,
    mode: PrototypeMode,
    source: &EmbeddingSource,
    synthetic_pool: Option<&SyntheticPool>,
) -> Result<PrototypeSet> {
    let labels: Vec<String> = schema.labels().map(str::to_string).collect();
    let entries = match mode {
        PrototypeMode::Tokenized => {
            let texts: Vec<&str> = schema.classes().iter().map(|c| c.tokenized.as_str()).collect();
            PrototypeEntries::Single(source.embed_all(&texts)?)
        }
        PrototypeMode::Description => {
            let texts: Vec<&str> = schema
                .classes()
                .iter()
                .map(|c| c.description.as_str())
                .collect();
            PrototypeEntries::Single(source.embed_all(&texts)?)
        }
        PrototypeMode::Synthetic => {
            let pool = synthetic_pool.ok_or_else(|| {
                Error::InvalidInput("synthetic mode needs a synthetic pool file".into())
            })?;
            let mut pools = Vec::with_capacity(schema.len());
            for class in schema.classes() {
                let texts = pool.get(&class.label).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "synthetic pool has no examples for class {:?}",
                        class.label
                    ))
                })?;
                pools.push(source.embed_all(texts)?);
            }
            PrototypeEntries::Pools(pools)
        }
    };
    Ok(PrototypeSet {
        mode,
        labels,
        model_id: source.model_id().to_string(),
        entries,
    })
}

/// Which components enter the combined representation, plus the knobs
/// they depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub use_utterance: bool,
    pub use_paraphrase: bool,
    pub use_mask: bool,
    pub use_overlap_gate: bool,
    pub overlap_top_k: usize,
    pub normalize_components: bool,
    pub synthetic_sample_size: Option<usize>,
    pub rng_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            use_utterance: true,
            use_paraphrase: false,
            use_mask: false,
            use_overlap_gate: false,
            overlap_top_k: 3,
            normalize_components: false,
            synthetic_sample_size: None,
            rng_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.use_utterance && !self.use_paraphrase && !self.use_mask {
            return Err(Error::InvalidInput(
                "at least one of the E, P, M components must be enabled".into(),
            ));
        }
        if self.use_overlap_gate && !self.use_mask {
            return Err(Error::InvalidInput(
                "the overlap gate (O) requires the mask component (M)".into(),
            ));
        }
        if self.overlap_top_k == 0 {
            return Err(Error::InvalidInput("overlap top-k must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses a component subset such as "E", "EPM" or "EPMO".
    pub fn from_components(spec: &str) -> Result<Self> {
        let mut config = RunConfig {
            use_utterance: false,
            ..RunConfig::default()
        };
        for ch in spec.chars() {
            match ch.to_ascii_uppercase() {
                'E' => config.use_utterance = true,
                'P' => config.use_paraphrase = true,
                'M' => config.use_mask = true,
                'O' => config.use_overlap_gate = true,
                '+' | ' ' | ',' => {}
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown component {other:?} in {spec:?} (expected letters from EPMO)"
                    )))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Compact component label, e.g. "EPM".
    pub fn components_label(&self) -> String {
        let mut label = String::new();
        if self.use_utterance {
            label.push('E');
        }
        if self.use_paraphrase {
            label.push('P');
        }
        if self.use_mask {
            label.push('M');
        }
        if self.use_overlap_gate {
            label.push('O');
        }
        label
    }
}

/// A scored prediction for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted_label: String,
    /// Per-class similarity vector in schema order.
    pub similarities: Vec<f64>,
    /// 1-based rank of the gold class under the prediction ordering.
    pub rank_of_gold: Option<usize>,
    /// Whether the mask component entered the combined representation.
    pub mask_gated: bool,
}

/// The combined representation and whether the mask component made it in.
pub struct CombinedRepresentation {
    pub vector: Embedding,
    pub mask_included: bool,
}

fn add_component(
    accumulator: &mut Embedding,
    component: &Embedding,
    normalize: bool,
) -> Result<()> {
    if normalize {
        // A zero component cannot be normalized; it contributes nothing
        // either way.
        if component.is_zero() {
            return Ok(());
        }
        accumulator.add_assign(&component.normalized()?)
    } else {
        accumulator.add_assign(component)
    }
}

/// Sums the enabled components for one utterance.
///
/// The mask component enters only when a masked variant exists and,
/// with the overlap gate enabled, only when two of the top-k candidate
/// classes (ranked by the non-mask components) share an entity.
pub fn combined_representation(
    utterance: &AugmentedUtterance,
    utterance_id: &str,
    prototypes: &PrototypeSet,
    config: &RunConfig,
    source: &EmbeddingSource,
    matrix: Option<&OverlapMatrix>,
) -> Result<CombinedRepresentation> {
    config.validate()?;
    let text_embedding = source.embed_one(&utterance.text)?;
    let paraphrase_embedding = match (&utterance.paraphrase, config.use_paraphrase) {
        (Some(paraphrase), true) => Some(source.embed_one(paraphrase)?),
        _ => None,
    };
    let mask_embedding = match (&utterance.masked, config.use_mask && utterance.was_masked) {
        (Some(masked), true) => Some(source.embed_one(masked)?),
        _ => None,
    };

    let mask_included = match &mask_embedding {
        None => false,
        Some(_) if !config.use_overlap_gate => true,
        Some(_) => {
            let matrix = matrix.ok_or_else(|| {
                Error::Internal("overlap gate enabled but no overlap matrix supplied".into())
            })?;
            // Candidate ranking uses the active non-mask components,
            // falling back to the utterance embedding when none apply.
            let mut ranking = Embedding::zeros(text_embedding.dim(), source.model_id());
            if config.use_utterance {
                add_component(&mut ranking, &text_embedding, config.normalize_components)?;
            }
            if let Some(paraphrase) = &paraphrase_embedding {
                add_component(&mut ranking, paraphrase, config.normalize_components)?;
            }
            if ranking.is_zero() {
                ranking = text_embedding.clone();
            }
            if ranking.is_zero() {
                return Err(Error::DegradedInput {
                    id: utterance_id.to_string(),
                });
            }
            let ranking_sims = prototypes.similarities(&ranking)?;
            overlaps(&ranking_sims, config.overlap_top_k, matrix)?
        }
    };

    let mut combined = Embedding::zeros(text_embedding.dim(), source.model_id());
    if config.use_utterance {
        add_component(&mut combined, &text_embedding, config.normalize_components)?;
    }
    if let Some(paraphrase) = &paraphrase_embedding {
        add_component(&mut combined, paraphrase, config.normalize_components)?;
    }
    if mask_included {
        let masked = mask_embedding.as_ref().expect("gate implies mask embedding");
        add_component(&mut combined, masked, config.normalize_components)?;
    }
    if combined.is_zero() {
        return Err(Error::DegradedInput {
            id: utterance_id.to_string(),
        });
    }
    Ok(CombinedRepresentation {
        vector: combined,
        mask_included,
    })
}

/// Argmax with ties broken by lowest class position.
pub(crate) fn argmax_class(similarities: &[f64]) -> Result<usize> {
    if similarities.is_empty() {
        return Err(Error::InvalidInput("empty similarity vector".into()));
    }
    let mut best = 0;
    for (class, score) in similarities.iter().enumerate().skip(1) {
        if score.total_cmp(&similarities[best]) == std::cmp::Ordering::Greater {
            best = class;
        }
    }
    Ok(best)
}

/// 1-based rank of a class under descending similarity with ties broken
/// by ascending class position.
pub(crate) fn rank_of_class(similarities: &[f64], class: usize) -> usize {
    let own = similarities[class];
    let mut rank = 1;
    for (other, score) in similarities.iter().enumerate() {
        if other == class {
            continue;
        }
        match score.total_cmp(&own) {
            std::cmp::Ordering::Greater => rank += 1,
            std::cmp::Ordering::Equal if other < class => rank += 1,
            _ => {}
        }
    }
    rank
}

/// Nearest-neighbour prediction over the combined representation.
pub fn predict(
    utterance: &AugmentedUtterance,
    utterance_id: &str,
    gold_label: Option<&str>,
    prototypes: &PrototypeSet,
    config: &RunConfig,
    source: &EmbeddingSource,
    matrix: Option<&OverlapMatrix>,
) -> Result<Prediction> {
    let combined =
        combined_representation(utterance, utterance_id, prototypes, config, source, matrix)?;
    let similarities = prototypes.similarities(&combined.vector)?;
    let best = argmax_class(&similarities)?;
    let rank_of_gold = match gold_label {
        Some(gold) => {
            let class = prototypes
                .labels()
                .iter()
                .position(|l| l == gold)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("gold label {gold:?} is not in the schema"))
                })?;
            Some(rank_of_class(&similarities, class))
        }
        None => None,
    };
    Ok(Prediction {
        predicted_label: prototypes.labels()[best].clone(),
        similarities,
        rank_of_gold,
        mask_gated: combined.mask_included,
    })
}
