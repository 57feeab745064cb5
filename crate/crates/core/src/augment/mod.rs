//! Inference-time utterance augmentation: paraphrases and masked
//! variants derived from dependency parses.

pub mod conllu;
pub mod mask;
pub mod paraphrase;

pub use conllu::{parse_conllu, DepToken, DepTree};
pub use mask::{mask_tree, MaskConfig, MaskOutcome, DEFAULT_MASK_RELATIONS, MASK_TOKEN};
pub use paraphrase::{
    load_paraphrase_cache, CompletionConfig, HttpCompletionProvider, ParaphraseSource,
    PARAPHRASE_PROMPT_TEMPLATE,
};

use std::collections::BTreeMap;

use crate::corpus::LabeledUtterance;

/// An utterance together with its optional paraphrase and masked form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedUtterance {
    pub text: String,
    pub paraphrase: Option<String>,
    pub masked: Option<String>,
    pub was_masked: bool,
}

impl AugmentedUtterance {
    /// An utterance with no augmentation at all.
    pub fn plain(text: impl Into<String>) -> Self {
        AugmentedUtterance {
            text: text.into(),
            paraphrase: None,
            masked: None,
            was_masked: false,
        }
    }

    pub fn with_paraphrase(mut self, paraphrase: Option<String>) -> Self {
        self.paraphrase = paraphrase;
        self
    }

    pub fn with_mask(mut self, outcome: MaskOutcome) -> Self {
        self.was_masked = outcome.was_masked;
        self.masked = outcome.masked;
        self
    }
}

/// Builds one augmented utterance per dataset row. Rows without a parse
/// tree or a cached paraphrase simply lack that component.
pub fn augment_dataset(
    dataset: &[LabeledUtterance],
    trees: &BTreeMap<String, DepTree>,
    paraphrases: &ParaphraseSource,
    mask_config: &MaskConfig,
) -> Vec<AugmentedUtterance> {
    dataset
        .iter()
        .map(|utterance| {
            let mut augmented = AugmentedUtterance::plain(utterance.text.clone())
                .with_paraphrase(paraphrases.paraphrase(&utterance.id, &utterance.text));
            if let Some(tree) = trees.get(&utterance.id) {
                augmented = augmented.with_mask(mask_tree(tree, mask_config));
            }
            augmented
        })
        .collect()
}

/// Fraction of dataset utterances for which masking produced a masked
/// variant. Utterances without a parse tree count as unmasked.
pub fn masking_coverage(
    dataset: &[LabeledUtterance],
    trees: &BTreeMap<String, DepTree>,
    mask_config: &MaskConfig,
) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let masked = dataset
        .iter()
        .filter(|u| {
            trees
                .get(&u.id)
                .map(|t| mask_tree(t, mask_config).was_masked)
                .unwrap_or(false)
        })
        .count();
    masked as f64 / dataset.len() as f64
}
