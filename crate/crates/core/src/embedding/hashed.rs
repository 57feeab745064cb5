//! Deterministic hashed bag-of-words embedder used as a stand-in for
//! neural encoders in tests and offline runs.

use crate::corpus::alphanumeric_words;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};

/// Embeds text by hashing each lowercase alphanumeric token to an index
/// and a sign, accumulating un-normalized counts. Fully determined by
/// (text, dim, seed) with a portable hand-rolled hash, so vectors are
/// bitwise reproducible across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
    seed: u64,
    model_id: String,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 8 {
            return Err(Error::InvalidInput(format!(
                "hashed embedder needs dim >= 8, got {dim}"
            )));
        }
        Ok(HashedBowEmbedder {
            dim,
            seed,
            model_id: format!("hashed-bow-d{dim}-s{seed}"),
        })
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.dim];
        for token in alphanumeric_words(text) {
            let hash = seeded_fnv1a(self.seed, token.as_bytes());
            let index = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            vector[index] += sign;
        }
        vector
    }
}

impl EmbeddingProvider for HashedBowEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

/// FNV-1a over the seed bytes followed by the input bytes.
fn seeded_fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in seed.to_le_bytes().iter().chain(bytes.iter()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, Embedding};

    #[test]
    fn same_text_gives_identical_vectors() {
        let embedder = HashedBowEmbedder::new(32, 7).unwrap();
        let a = embedder.embed_text("book a table for two");
        let b = embedder.embed_text("book a table for two");
        assert_eq!(a, b);
    }

    #[test]
    fn token_order_does_not_matter() {
        let embedder = HashedBowEmbedder::new(32, 7).unwrap();
        let a = embedder.embed_text("play some jazz music");
        let b = embedder.embed_text("music jazz some play");
        assert_eq!(a, b);
    }

    #[test]
    fn punctuation_and_case_are_ignored() {
        let embedder = HashedBowEmbedder::new(32, 7).unwrap();
        let a = embedder.embed_text("Play Jazz, please!");
        let b = embedder.embed_text("play jazz please");
        assert_eq!(a, b);
    }

    #[test]
    fn disjoint_vocabulary_cosine_is_reproducible() {
        // Regression pin: computed once with this embedder configuration.
        let embedder = HashedBowEmbedder::new(16, 42).unwrap();
        let a = Embedding::new(embedder.embed_text("add this song to my playlist"), "t").unwrap();
        let b = Embedding::new(embedder.embed_text("what is the weather in boston"), "t").unwrap();
        let got = cosine(&a, &b).unwrap();
        assert!((got - -0.17677669529663687).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn rejects_tiny_dimensions() {
        assert!(HashedBowEmbedder::new(7, 0).is_err());
        assert!(HashedBowEmbedder::new(8, 0).is_ok());
    }
}
